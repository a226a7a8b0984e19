"""Corpus extraction: collect Jars, drop duplicates, extract facts."""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable

from .classfile import UnreadableArchive, class_entry_names, parse_jar
from .extractor import ExtractConfig, ExtractStats, TypeUsageInstance, extract_class
from .facts import dedup_jars, project_id_for, write_facts

log = logging.getLogger(__name__)


@dataclass
class ExtractionSummary:
    jarsSeen: int = 0
    jarsUnreadable: int = 0
    projectsRetained: int = 0
    classesParsed: int = 0
    classesSkipped: int = 0
    methods: int = 0
    methodsSkipped: int = 0
    instances: int = 0

    def as_dict(self) -> dict:
        return asdict(self)


def collect_jars(inputs: Iterable[str | Path]) -> list[Path]:
    """Expand inputs into Jar paths; directories are searched recursively.

    Raises FileNotFoundError for an input that does not exist.
    """
    jars = set()
    for item in inputs:
        path = Path(item)
        if path.is_dir():
            jars.update(p for p in path.rglob("*.jar") if p.is_file())
        elif path.is_file():
            jars.add(path)
        else:
            raise FileNotFoundError(str(path))
    return sorted(jars)


def _extract_jar(path: Path, config: ExtractConfig) -> tuple[list[TypeUsageInstance], ExtractStats, int]:
    contents = parse_jar(path)
    project = project_id_for(path)
    stats = ExtractStats()
    instances: list[TypeUsageInstance] = []
    for _, cls in contents.classes:
        instances.extend(extract_class(cls, project, config, stats))
    return instances, stats, contents.skip_count


def run_extraction(
    inputs: Iterable[str | Path],
    facts_path: str | Path,
    config: ExtractConfig = ExtractConfig(),
    workers: int = 1,
) -> ExtractionSummary:
    """Extract type-usages of every retained Jar into a facts file.

    Results are written in sorted Jar order whatever the worker count.
    """
    summary = ExtractionSummary()
    class_sets: dict[str, list[str]] = {}
    for jar in collect_jars(inputs):
        summary.jarsSeen += 1
        try:
            names = class_entry_names(jar)
        except UnreadableArchive as exc:
            log.warning("unreadable archive %s", exc)
            summary.jarsUnreadable += 1
            continue
        class_sets[str(jar)] = [n[: -len(".class")] for n in names]
    retained = [Path(p) for p in dedup_jars(class_sets)]
    summary.projectsRetained = len(retained)

    if workers > 1 and len(retained) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_extract_jar, retained, [config] * len(retained)))
    else:
        results = [_extract_jar(path, config) for path in retained]

    def all_instances():
        for instances, stats, skipped in results:
            summary.classesParsed += stats.classes
            summary.classesSkipped += skipped
            summary.methods += stats.methods
            summary.methodsSkipped += stats.methods_skipped
            yield from instances

    summary.instances = write_facts(all_instances(), facts_path)
    return summary
