"""Report tables: the per-size histogram table, distribution data for the
boxplots, dominance histograms and the per-class scatter series."""
from __future__ import annotations

import csv
import json
from pathlib import Path

from .facts import EcosystemStore
from .metrics import DOMINANCE_BINS, ClassMetrics, all_class_metrics, distribution_summary

TU_SIZE_CAP = 10

TABLE2_HEADER = (
    ["class", "diversity", "usedMethodCount"]
    + [f"|TU|={n}" for n in range(1, TU_SIZE_CAP + 1)]
    + [f"|TU|>{TU_SIZE_CAP}"]
)


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def table2_row(m: ClassMetrics) -> list:
    hist = m.tu_size_histogram
    overflow = sum(count for size, count in hist.items() if size > TU_SIZE_CAP)
    return (
        [m.receiver_type, m.diversity, m.used_method_count]
        + [hist.get(n, 0) for n in range(1, TU_SIZE_CAP + 1)]
        + [overflow]
    )


def top_classes_by_project_count(store: EcosystemStore, k: int) -> set[str]:
    users = store.projects_using()
    ranked = sorted(users, key=lambda c: (-len(users[c]), c))
    return set(ranked[:k])


def _five(values) -> dict | None:
    if not values:
        return None
    return dict(zip(("min", "q1", "median", "q3", "max"), distribution_summary(values)))


def write_report(
    store: EcosystemStore,
    out_dir: str | Path,
    min_diversity: int = 100,
    top_k_by_project_count: int | None = None,
) -> list[Path]:
    """Write every report file into ``out_dir``; rows are ordered by class name."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    metrics = all_class_metrics(store)

    table_rows = metrics
    if top_k_by_project_count is not None:
        chosen = top_classes_by_project_count(store, top_k_by_project_count)
        table_rows = [m for m in metrics if m.receiver_type in chosen]
    written = [out / "table2.csv"]
    _write_csv(written[-1], TABLE2_HEADER, (table2_row(m) for m in table_rows))

    stats = {
        "classes": len(metrics),
        "abundance": _five([m.abundance for m in metrics]),
        "diversity": _five([m.diversity for m in metrics]),
    }
    written.append(out / "boxplot_stats.json")
    written[-1].write_text(json.dumps(stats, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    all_bins = [0] * DOMINANCE_BINS
    diverse_bins = [0] * DOMINANCE_BINS
    for m in metrics:
        all_bins[m.dominance_bin] += 1
        if m.diversity > min_diversity:
            diverse_bins[m.dominance_bin] += 1
    written.append(out / "dominance_hist.csv")
    _write_csv(
        written[-1],
        ["binLow", "binHigh", "allClasses", f"diversityOver{min_diversity}"],
        (
            [f"{i / DOMINANCE_BINS:.1f}", f"{(i + 1) / DOMINANCE_BINS:.1f}", all_bins[i], diverse_bins[i]]
            for i in range(DOMINANCE_BINS)
        ),
    )

    written.append(out / "diversity_vs_dominance.csv")
    _write_csv(
        written[-1],
        ["class", "diversity", "dominance"],
        ([m.receiver_type, m.diversity, repr(m.dominance)] for m in metrics),
    )

    written.append(out / "entropy_vs_maxentropy.csv")
    _write_csv(
        written[-1],
        ["class", "entropy", "maxentropy"],
        ([m.receiver_type, repr(m.entropy), repr(m.max_entropy)] for m in metrics),
    )
    return written


METRICS_HEADER = ["class", "abundance", "diversity", "dominance", "entropy", "maxentropy", "usedMethodCount"]


def metrics_row(m: ClassMetrics) -> list:
    return [
        m.receiver_type, m.abundance, m.diversity, repr(m.dominance),
        repr(m.entropy), repr(m.max_entropy), m.used_method_count,
    ]
