"""Report generation from a result store.

Per dataset, methods are clustered into ranks over their per-trial minimum
distance distributions. Tier summaries count how often each method lands in
rank 1, splitting credit across ties so every dataset contributes exactly
one unit to its tier row. Cost and diversity tables plus the effort-curve
correlation for human-feedback sessions round out the outputs. Everything
is recomputed from the store alone.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import EmptyStore
from ..stat_rank import (
    RankTable,
    TreatmentSample,
    effort_correlation,
    rank_table_csv,
    rank_table_markdown,
    scott_knott,
)
from .config import derive_seed
from .experiment import read_store

logger = logging.getLogger(__name__)

TIER_ORDER = ("low", "medium", "high")


@dataclass
class ReportPaths:
    out_dir: Path
    rank_tables: dict[str, RankTable]
    tier_matrix: dict[str, dict[str, float]]
    files: list[Path]


def _collect(records: list[dict]):
    trials: dict[str, dict[str, list[float]]] = defaultdict(lambda: defaultdict(list))
    tiers: dict[str, str] = {}
    sessions: list[dict] = []
    costs: dict[str, dict[str, list[float]]] = defaultdict(lambda: defaultdict(list))
    for record in records:
        kind = record.get("kind")
        if kind == "trial":
            trials[record["dataset"]][record["method"]].append(record["min_chebyshev"])
            method_stats = costs[record["method"]]
            method_stats["tokens_in"].append(record["tokens_in"])
            method_stats["tokens_out"].append(record["tokens_out"])
            method_stats["diversity"].append(record["diversity"])
            method_stats["labels_used"].append(record.get("labels_used", 0))
            method_stats["wall_ms"].append(record.get("wall_ms", 0))
        elif kind == "dataset":
            tiers[record["name"]] = record["tier"]
        elif kind == "session":
            sessions.append(record)
    return trials, tiers, sessions, costs


def build_report(
    store_path: str | Path,
    out_dir: str | Path,
    seed: int = 0,
    baseline: str = "bs_llm",
) -> ReportPaths:
    records = read_store(store_path)
    trials, tiers, sessions, costs = _collect(records)
    if not trials:
        raise EmptyStore(f"{store_path} holds no trial records")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files: list[Path] = []

    rank_tables: dict[str, RankTable] = {}
    for dataset in sorted(trials):
        treatments = []
        for method in sorted(trials[dataset]):
            values = trials[dataset][method]
            if len(values) < 2:
                logger.warning(
                    "%s/%s has %d trial(s); skipped in ranking", dataset, method, len(values)
                )
                continue
            treatments.append(TreatmentSample(method, tuple(values)))
        if not treatments:
            continue
        rng = np.random.default_rng(derive_seed(seed, "report", dataset))
        table = scott_knott(treatments, rng=rng, baseline=baseline)
        rank_tables[dataset] = table
        md = out / f"rank_{dataset}.md"
        md.write_text(rank_table_markdown(table, title=f"Ranking on {dataset}"), encoding="utf-8")
        csv_file = out / f"rank_{dataset}.csv"
        csv_file.write_text(rank_table_csv(table), encoding="utf-8")
        files += [md, csv_file]

    # Tier matrix: fractional rank-1 credit so each dataset adds one unit.
    methods = sorted({m for per in trials.values() for m in per})
    tier_matrix: dict[str, dict[str, float]] = {
        tier: {m: 0.0 for m in methods} for tier in TIER_ORDER
    }
    for dataset, table in rank_tables.items():
        tier = tiers.get(dataset)
        if tier is None:
            logger.warning("no tier record for %s; skipped in tier matrix", dataset)
            continue
        winners = table.ranks[0]
        for method in winners:
            tier_matrix[tier][method] += 1.0 / len(winners)
    tier_lines = ["| tier | " + " | ".join(methods) + " | datasets |",
                  "| --- |" + " --- |" * (len(methods) + 1)]
    tier_csv = ["tier," + ",".join(methods) + ",datasets"]
    for tier in TIER_ORDER:
        ranked_in_tier = [d for d in rank_tables if tiers.get(d) == tier]
        row = tier_matrix[tier]
        tier_lines.append(
            f"| {tier} | "
            + " | ".join(f"{row[m]:.2f}" for m in methods)
            + f" | {len(ranked_in_tier)} |"
        )
        tier_csv.append(
            f"{tier},"
            + ",".join(f"{row[m]:.4f}" for m in methods)
            + f",{len(ranked_in_tier)}"
        )
    tier_md_path = out / "tier_matrix.md"
    tier_md_path.write_text(
        "## Rank-1 share per tier\n\n" + "\n".join(tier_lines) + "\n", encoding="utf-8"
    )
    tier_csv_path = out / "tier_matrix.csv"
    tier_csv_path.write_text("\n".join(tier_csv) + "\n", encoding="utf-8")
    files += [tier_md_path, tier_csv_path]

    # Cost and diversity summary (token cost and label cost side by side).
    cost_lines = [
        "| method | trials | mean tokens_in | mean tokens_out | mean labels | median diversity |",
        "| --- | --- | --- | --- | --- | --- |",
    ]
    cost_csv = ["method,trials,mean_tokens_in,mean_tokens_out,mean_labels,median_diversity"]
    for method in methods:
        stats = costs[method]
        n = len(stats["tokens_in"])
        mean_in = float(np.mean(stats["tokens_in"])) if n else 0.0
        mean_out = float(np.mean(stats["tokens_out"])) if n else 0.0
        mean_labels = float(np.mean(stats["labels_used"])) if n else 0.0
        med_div = float(np.median(stats["diversity"])) if n else 0.0
        cost_lines.append(
            f"| {method} | {n} | {mean_in:.1f} | {mean_out:.1f} | {mean_labels:.1f} | {med_div:.4f} |"
        )
        cost_csv.append(
            f"{method},{n},{mean_in:.2f},{mean_out:.2f},{mean_labels:.2f},{med_div:.6f}"
        )
    cost_md_path = out / "cost_diversity.md"
    cost_md_path.write_text(
        "## Cost and diversity\n\n" + "\n".join(cost_lines) + "\n", encoding="utf-8"
    )
    cost_csv_path = out / "cost_diversity.csv"
    cost_csv_path.write_text("\n".join(cost_csv) + "\n", encoding="utf-8")
    files += [cost_md_path, cost_csv_path]

    # Effort curve for human-feedback sessions.
    effort_md = ""
    usable = [
        s
        for s in sessions
        if s.get("improvement") is not None and s.get("completed_rounds", 0) > 0
    ]
    if len(usable) >= 2:
        corr = effort_correlation(
            [(s["completed_rounds"], s["improvement"]) for s in usable]
        )
        effort_md = (
            "## Expert effort curve\n\n"
            f"Spearman correlation between completed feedback rounds and final "
            f"improvement across {len(usable)} session(s): {corr:+.3f}\n"
        )
        effort_path = out / "hdkp_effort.md"
        effort_path.write_text(effort_md, encoding="utf-8")
        files.append(effort_path)

    summary = ["# Warm-start benchmark report", ""]
    for dataset in sorted(rank_tables):
        summary.append(rank_table_markdown(rank_tables[dataset], title=f"Ranking on {dataset}"))
    summary.append("## Rank-1 share per tier\n\n" + "\n".join(tier_lines) + "\n")
    summary.append("## Cost and diversity\n\n" + "\n".join(cost_lines) + "\n")
    if effort_md:
        summary.append(effort_md)
    summary_path = out / "report.md"
    summary_path.write_text("\n".join(summary), encoding="utf-8")
    files.append(summary_path)

    return ReportPaths(
        out_dir=out, rank_tables=rank_tables, tier_matrix=tier_matrix, files=files
    )
