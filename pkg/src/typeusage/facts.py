"""Fact files, Jar deduplication and the aggregated ecosystem store."""
from __future__ import annotations

import hashlib
import io
import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, NamedTuple, Union

from .extractor import KINDS, TypeUsageInstance

__all__ = [
    "EcosystemStore",
    "MalformedRecord",
    "OverlapError",
    "TypeUsageKind",
    "aggregate",
    "dedup_jars",
    "instance_from_record",
    "load_store",
    "merge",
    "project_id_for",
    "read_facts",
    "save_store",
    "write_facts",
]

log = logging.getLogger(__name__)

STORE_FORMAT = "typeusage-store"
STORE_VERSION = 1
FACT_FIELDS = ("jar", "class", "method", "kind", "var", "type", "typeInferred", "calls")


class MalformedRecord(ValueError):
    pass


class OverlapError(ValueError):
    pass


# -- facts -------------------------------------------------------------------

def instance_from_record(record) -> TypeUsageInstance:
    """Validate one facts record (a dict or a JSON line) and build the instance."""
    if isinstance(record, (str, bytes)):
        try:
            record = json.loads(record)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(f"not JSON: {exc}") from None
    if not isinstance(record, dict) or set(record) != set(FACT_FIELDS):
        raise MalformedRecord(f"expected exactly the fields {FACT_FIELDS}")
    for key in ("jar", "class", "method", "var", "type"):
        if not isinstance(record[key], str) or not record[key]:
            raise MalformedRecord(f"field {key!r} must be a non-empty string")
    if record["kind"] not in KINDS:
        raise MalformedRecord(f"unknown kind {record['kind']!r}")
    if not isinstance(record["typeInferred"], bool):
        raise MalformedRecord("typeInferred must be a boolean")
    calls = record["calls"]
    if (
        not isinstance(calls, list)
        or not calls
        or not all(isinstance(c, str) and "(" in c for c in calls)
        or calls != sorted(set(calls))
    ):
        raise MalformedRecord("calls must be a non-empty, sorted, duplicate-free list of signatures")
    if (record["kind"] == "field") != (record["method"] == "<fields>"):
        raise MalformedRecord("field records and only field records use the <fields> scope")
    return TypeUsageInstance(
        record["jar"], record["class"], record["method"], record["kind"], record["var"],
        record["type"], record["typeInferred"], tuple(calls),
    )


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False)


def write_facts(instances: Iterable[TypeUsageInstance], out: Union[str, Path, io.TextIOBase]) -> int:
    """Write one JSON object per line. Returns the number of records."""
    if isinstance(out, (str, Path)):
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            return write_facts(instances, fh)
    n = 0
    for inst in instances:
        out.write(_dumps(inst.to_record()) + "\n")
        n += 1
    return n


def read_facts(path: Union[str, Path], errors: list | None = None) -> Iterator[TypeUsageInstance]:
    """Yield instances from a facts file, skipping malformed lines.

    Skipped lines are appended to ``errors`` as ``(line_number, reason)``.
    """
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield instance_from_record(line)
            except MalformedRecord as exc:
                log.warning("%s:%d: %s", path, lineno, exc)
                if errors is not None:
                    errors.append((lineno, str(exc)))


# -- jar identity ------------------------------------------------------------

def project_id_for(jar_path: Union[str, Path], digest_chars: int = 12) -> str:
    """Jar basename plus a short SHA-256 of its bytes, e.g. ``foo.jar@1a2b3c4d5e6f``."""
    h = hashlib.sha256()
    with open(jar_path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return f"{Path(jar_path).name}@{h.hexdigest()[:digest_chars]}"


def class_set_digest(class_names: Iterable[str]) -> str:
    return hashlib.sha256("\n".join(sorted(set(class_names))).encode("utf-8")).hexdigest()


def dedup_jars(jars: Mapping[str, Iterable[str]]) -> list[str]:
    """Collapse Jars containing the same set of classes.

    ``jars`` maps a Jar path to its class binary names. For each group of
    Jars with identical class sets, only the lexicographically smallest path
    is kept. Returns the retained paths, sorted.
    """
    keep: dict[str, str] = {}
    for path, names in jars.items():
        digest = class_set_digest(names)
        if digest not in keep or str(path) < keep[digest]:
            keep[digest] = str(path)
    return sorted(keep.values())


# -- store -------------------------------------------------------------------

class TypeUsageKind(NamedTuple):
    receiver_type: str
    calls: tuple[str, ...]

    @property
    def key(self) -> str:
        return self.receiver_type + "#" + ",".join(self.calls)

    @classmethod
    def of(cls, inst: TypeUsageInstance) -> TypeUsageKind:
        return cls(inst.receiver_type, tuple(inst.calls))


@dataclass
class EcosystemStore:
    """Kind counts per project and for the whole ecosystem.

    ``ecosystem_counts`` and ``class_index`` are derived from
    ``project_counts`` and kept in step by ``add``.
    """

    projects: set[str] = field(default_factory=set)
    project_counts: dict[tuple[str, TypeUsageKind], int] = field(default_factory=dict)
    ecosystem_counts: dict[TypeUsageKind, int] = field(default_factory=dict)
    class_index: dict[str, set[TypeUsageKind]] = field(default_factory=dict)
    skipped_records: int = 0

    def add(self, project: str, kind: TypeUsageKind, count: int = 1) -> None:
        if count <= 0:
            raise ValueError("counts must be positive")
        self.projects.add(project)
        pk = (project, kind)
        self.project_counts[pk] = self.project_counts.get(pk, 0) + count
        self.ecosystem_counts[kind] = self.ecosystem_counts.get(kind, 0) + count
        self.class_index.setdefault(kind.receiver_type, set()).add(kind)

    def kinds_of(self, receiver_type: str) -> list[TypeUsageKind]:
        return sorted(self.class_index.get(receiver_type, ()))

    def classes(self) -> list[str]:
        return sorted(self.class_index)

    def project_kind_counts(self, project: str, receiver_type: str) -> dict[TypeUsageKind, int]:
        return {
            kind: self.project_counts[(project, kind)]
            for kind in self.class_index.get(receiver_type, ())
            if (project, kind) in self.project_counts
        }

    def projects_using(self) -> dict[str, set[str]]:
        """Receiver type -> projects with at least one instance of it."""
        users: dict[str, set[str]] = defaultdict(set)
        for project, kind in self.project_counts:
            users[kind.receiver_type].add(project)
        return dict(users)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EcosystemStore):
            return NotImplemented
        return (
            self.projects == other.projects
            and self.project_counts == other.project_counts
            and self.ecosystem_counts == other.ecosystem_counts
            and self.class_index == other.class_index
        )


def aggregate(facts: Iterable) -> EcosystemStore:
    """Count instances per (project, kind).

    Accepts ``TypeUsageInstance`` objects, record dicts or JSON lines;
    malformed records are skipped and counted in ``skipped_records``.
    """
    store = EcosystemStore()
    for item in facts:
        if not isinstance(item, TypeUsageInstance):
            try:
                item = instance_from_record(item)
            except MalformedRecord as exc:
                log.warning("skipping record: %s", exc)
                store.skipped_records += 1
                continue
        store.add(item.project_id, TypeUsageKind.of(item))
    return store


def merge(a: EcosystemStore, b: EcosystemStore) -> EcosystemStore:
    """Sum two stores built from disjoint sets of projects."""
    shared = a.projects & b.projects
    if shared:
        raise OverlapError(f"stores share projects: {sorted(shared)[:5]}")
    out = EcosystemStore(skipped_records=a.skipped_records + b.skipped_records)
    for store in (a, b):
        out.projects |= store.projects
        for (project, kind), count in store.project_counts.items():
            out.add(project, kind, count)
    return out


def save_store(store: EcosystemStore, path: Union[str, Path]) -> None:
    """Write a sorted snapshot: a header line, then one line per (type, calls, project)."""
    header = {
        "format": STORE_FORMAT,
        "version": STORE_VERSION,
        "projects": sorted(store.projects),
    }
    rows = sorted(store.project_counts.items(), key=lambda kv: (kv[0][1], kv[0][0]))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_dumps(header) + "\n")
        for (project, kind), count in rows:
            fh.write(
                _dumps({"type": kind.receiver_type, "calls": list(kind.calls), "project": project, "count": count})
                + "\n"
            )


def load_store(path: Union[str, Path]) -> EcosystemStore:
    with open(path, encoding="utf-8") as fh:
        try:
            header = json.loads(fh.readline())
        except json.JSONDecodeError as exc:
            raise MalformedRecord(f"{path}: unreadable store header: {exc}") from None
        if not isinstance(header, dict) or header.get("format") != STORE_FORMAT:
            raise MalformedRecord(f"{path}: not a type-usage store")
        if header.get("version") != STORE_VERSION:
            raise MalformedRecord(f"{path}: unsupported store version {header.get('version')}")
        store = EcosystemStore(projects=set(header.get("projects", ())))
        for lineno, line in enumerate(fh, 2):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                kind = TypeUsageKind(row["type"], tuple(row["calls"]))
                store.add(row["project"], kind, int(row["count"]))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise MalformedRecord(f"{path}:{lineno}: {exc}") from None
    return store
