"""Acceptance criteria, one test each.

Every test carries an ``acceptance`` marker; the terminal summary prints one
PASS or FAIL line per criterion.
"""
from __future__ import annotations

import math
import os
import random
import subprocess
import sys
import time
from pathlib import Path

import pytest

from synth import (
    JARS,
    SB,
    SB_ABOVE,
    SB_APPEND,
    SB_BELOW,
    SB_INIT,
    SB_TOSTRING,
    brute_discordant,
    brute_metrics,
    brute_spearman,
    random_instances,
    seeded_instances,
)
from test_diversity_map import assert_hasse, store_of
from test_metrics import store_from_counts
from typeusage.cli import main
from typeusage.diversity_map import build_map
from typeusage.facts import TypeUsageKind, aggregate, read_facts
from typeusage.metrics import all_class_metrics, class_metrics, discordant_fraction, spearman
from typeusage.pipeline import run_extraction

SAVE_NAMES_CALLS = {
    ("java/util/ArrayList", ("<init>()V", "add(Ljava/lang/Object;)Z")),
    ("java/io/File", ("<init>(Ljava/lang/String;)V", "isDirectory()Z", "listFiles()[Ljava/io/File;")),
    ("java/io/File", ("getName()Ljava/lang/String;",)),
}


@pytest.mark.acceptance("saveNames end-to-end: 3 instances, exact calls, < 1 s")
def test_save_names_end_to_end(tmp_path):
    start = time.perf_counter()
    facts = tmp_path / "facts.jsonl"
    summary = run_extraction([JARS / "savenames.jar"], facts)
    found = list(read_facts(facts))
    elapsed = time.perf_counter() - start
    assert summary.instances == len(found) == 3
    assert {(i.receiver_type, i.calls) for i in found} == SAVE_NAMES_CALLS
    assert elapsed < 1.0


@pytest.mark.acceptance("metrics oracle: 1000 seeded facts, 1e-9 on reals, < 5 s")
def test_metrics_oracle_equivalence():
    start = time.perf_counter()
    facts = random_instances(2024, 1000)
    metrics = all_class_metrics(aggregate(facts))
    elapsed = time.perf_counter() - start
    oracle = brute_metrics(f.to_record() for f in facts)
    assert [m.receiver_type for m in metrics] == sorted(oracle)
    for m in metrics:
        want = oracle[m.receiver_type]
        for name in ("abundance", "diversity", "used_method_count", "tu_size_histogram"):
            assert getattr(m, name) == want[name]
        for name in ("dominance", "entropy", "max_entropy"):
            assert abs(getattr(m, name) - want[name]) <= 1e-9
    assert elapsed < 5.0


@pytest.mark.acceptance("entropy bound: H <= log2(D) + 1e-9, uniform 4 kinds gives 2.0 exactly")
def test_entropy_bound():
    for seed in range(20):
        for m in all_class_metrics(aggregate(random_instances(seed, 500))):
            assert m.entropy <= math.log2(m.diversity) + 1e-9
    assert class_metrics(store_from_counts({"T": [7, 7, 7, 7]}), "T").entropy == 2.0


@pytest.mark.acceptance("dominance: in [1/D, 1], 1 iff D == 1, scale invariant for k in {2, 10}")
def test_dominance_properties():
    rng = random.Random(7)
    for _ in range(300):
        values = [rng.randint(1, 400) for _ in range(rng.randint(1, 20))]
        m = class_metrics(store_from_counts({"T": values}), "T")
        assert 1 / m.diversity - 1e-12 <= m.dominance <= 1.0
        assert (m.dominance == 1.0) == (m.diversity == 1)
        for k in (2, 10):
            scaled = class_metrics(store_from_counts({"T": [v * k for v in values]}), "T")
            assert abs(scaled.dominance - m.dominance) <= 1e-12


@pytest.mark.acceptance("map correctness: Hasse edges on random families, threshold monotonicity")
def test_map_correctness():
    rng = random.Random(50)
    for _ in range(40):
        kinds = {}
        for _ in range(rng.randint(1, 50)):
            calls = tuple(sorted(rng.sample("abcdefg", rng.randint(1, 7))))
            kinds[calls] = rng.randint(1, 30)
        store = store_of(kinds)
        assert_hasse(build_map(store, "T", 1))
        previous = {n.key for n in build_map(store, "T", 1).nodes}
        for n in range(1, max(kinds.values()) + 1):
            current = {node.key for node in build_map(store, "T", n + 1).nodes}
            assert current <= previous
            previous = current


@pytest.mark.acceptance("StringBuilder map: 8 nodes at N=150, 2434 node above {init, append}")
def test_string_builder_structure():
    store = aggregate(seeded_instances(SB, {**SB_ABOVE, **SB_BELOW}))
    dmap = build_map(store, SB, 150)
    top = TypeUsageKind(SB, (SB_INIT, SB_APPEND, SB_TOSTRING)).key
    below = TypeUsageKind(SB, (SB_INIT, SB_APPEND)).key
    assert len(dmap.nodes) == 8
    assert dmap.node(top).abundance == 2434
    assert dmap.node(top).label.endswith("[2434]")
    assert dmap.layer_of(top) < dmap.layer_of(below)


@pytest.mark.acceptance("Spearman: +-1 exact, ties to 1e-12, discordant fraction on 50 points")
def test_spearman():
    assert spearman([1, 2, 3, 4, 5], [2, 4, 8, 16, 32]) == 1.0
    assert spearman([1, 2, 3, 4, 5], [9, 7, 5, 3, 1]) == -1.0
    x, y = [1, 2, 2, 3, 5, 5, 5], [4, 1, 1, 3, 2, 9, 9]
    assert abs(spearman(x, y) - brute_spearman(x, y)) <= 1e-12
    rng = random.Random(50)
    x = [rng.randint(0, 30) for _ in range(50)]
    y = [rng.randint(0, 30) for _ in range(50)]
    assert discordant_fraction(x, y) == brute_discordant(x, y)


@pytest.mark.acceptance("dedup: identical class sets collapse, one extra class breaks it")
def test_dedup(jar_copy, tmp_path):
    same = jar_copy("savenames.jar", "savenames-copy.jar")
    assert (same / "savenames.jar").read_bytes() != (same / "savenames-copy.jar").read_bytes()
    assert run_extraction([same], tmp_path / "a.jsonl").projectsRetained == 1
    (tmp_path / "plus").mkdir()
    for name in ("savenames.jar", "savenames-plus.jar"):
        (tmp_path / "plus" / name).write_bytes((JARS / name).read_bytes())
    assert run_extraction([tmp_path / "plus"], tmp_path / "b.jsonl").projectsRetained == 2


def _tree(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.mark.acceptance("determinism: extract, aggregate, report twice give byte-identical trees")
def test_determinism(tmp_path, capsys):
    trees = []
    for run in ("one", "two"):
        out = tmp_path / run
        out.mkdir()
        assert main(["extract", str(JARS), "-o", str(out / "facts.jsonl"), "--include-temps"]) == 0
        assert main(["aggregate", str(out / "facts.jsonl"), "-o", str(out / "store")]) == 0
        assert main(["report", str(out / "store"), "-o", str(out / "report")]) == 0
        trees.append(_tree(out))
    capsys.readouterr()
    assert len(trees[0]) > 3
    assert trees[0] == trees[1]


@pytest.mark.acceptance("whole suite runtime < 60 s")
@pytest.mark.skipif(os.environ.get("TYPEUSAGE_NESTED_RUN") == "1", reason="nested suite run")
def test_whole_suite_runtime():
    tests = Path(__file__).parent
    env = {**os.environ, "TYPEUSAGE_NESTED_RUN": "1"}
    start = time.perf_counter()
    done = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", str(tests)],
        capture_output=True, text=True, env=env, cwd=tests.parent, check=False,
    )
    elapsed = time.perf_counter() - start
    assert done.returncode == 0, done.stdout[-2000:]
    assert elapsed < 60.0
