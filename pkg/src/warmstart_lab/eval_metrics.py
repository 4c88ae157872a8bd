"""Warm-start scoring: Chebyshev distance, set diversity, and cost ledgers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from .data_core import (
    NUMERIC,
    Configuration,
    Dataset,
    ObjectiveSpec,
    Row,
    nearest_row_index,
    normalize_objective,
)
from .errors import (
    ArityMismatch,
    EmptyWarmStartSet,
    NegativeCount,
    PartialConfiguration,
)


def chebyshev(objectives: Sequence[float], specs: Sequence[ObjectiveSpec]) -> float:
    """Maximum normalized deviation from the ideal point.

    Every objective is normalized to [0, 1] with its ideal endpoint at 0, so
    the distance is simply the largest normalized component. Lower is better.
    """
    if len(objectives) != len(specs) or not specs:
        raise ArityMismatch(
            f"{len(objectives)} objective value(s) against {len(specs)} spec(s)"
        )
    return max(normalize_objective(v, s) for v, s in zip(objectives, specs))


def row_chebyshev(row: Row, dataset: Dataset) -> float:
    return chebyshev(row.objectives, dataset.objective_specs)


def pool_optimum(dataset: Dataset) -> tuple[int, float]:
    """Exhaustive scan for the best row; ties go to the lowest index."""
    best_i, best_v = 0, math.inf
    for i, row in enumerate(dataset.rows):
        v = row_chebyshev(row, dataset)
        if v < best_v:
            best_i, best_v = i, v
    return best_i, best_v


@dataclass
class ScoredWarmStarts:
    """Labels and scores for one warm-start set."""

    configs: list[Configuration]
    matched_indices: list[int]
    matched_rows: list[Row]
    chebyshev_values: list[float]
    min_chebyshev: float


def score_warm_starts(configs: Sequence[Configuration], dataset: Dataset) -> ScoredWarmStarts:
    """Label each configuration via its nearest pool row and score it."""
    if not configs:
        raise EmptyWarmStartSet("no warm starts to score")
    indices = [nearest_row_index(c, dataset) for c in configs]
    rows = [dataset.rows[i] for i in indices]
    values = [row_chebyshev(r, dataset) for r in rows]
    return ScoredWarmStarts(
        configs=list(configs),
        matched_indices=indices,
        matched_rows=rows,
        chebyshev_values=values,
        min_chebyshev=min(values),
    )


def _pair_distance(a: Configuration, b: Configuration, dataset: Dataset) -> float:
    total = 0.0
    for spec in dataset.feature_specs:
        va, vb = a.assignments[spec.name], b.assignments[spec.name]
        if spec.kind == NUMERIC:
            if spec.hi == spec.lo:
                continue
            d = (float(va) - float(vb)) / (spec.hi - spec.lo)
            total += d * d
        else:
            total += 0.0 if va == vb else 1.0
    return math.sqrt(total)


def diversity(configs: Sequence[Configuration], dataset: Dataset) -> float:
    """Average pairwise Euclidean distance in min-max normalized feature space.

    Symbolic features contribute a 0/1 mismatch inside the squared sum. A
    single configuration has diversity 0 by convention.
    """
    if not configs:
        raise EmptyWarmStartSet("no warm starts to measure")
    for c in configs:
        if not c.is_complete(dataset):
            raise PartialConfiguration(
                "diversity requires complete configurations"
            )
    if len(configs) == 1:
        return 0.0
    total, pairs = 0.0, 0
    for i in range(len(configs)):
        for j in range(i + 1, len(configs)):
            total += _pair_distance(configs[i], configs[j], dataset)
            pairs += 1
    return total / pairs


@dataclass(frozen=True)
class CostEntry:
    method: str
    dataset: str
    trial: int
    tag: str
    tokens_in: int
    tokens_out: int


@dataclass
class CostLedger:
    """Append-only token accounting, one entry per provider call."""

    entries: list[CostEntry] = field(default_factory=list)

    def record(self, entry: CostEntry) -> None:
        if entry.tokens_in < 0 or entry.tokens_out < 0:
            raise NegativeCount(f"negative token count in {entry}")
        self.entries.append(entry)

    def totals(self) -> tuple[int, int]:
        return (
            sum(e.tokens_in for e in self.entries),
            sum(e.tokens_out for e in self.entries),
        )

    def totals_for(self, method: str, dataset: str, trial: int) -> tuple[int, int]:
        picked = [
            e
            for e in self.entries
            if (e.method, e.dataset, e.trial) == (method, dataset, trial)
        ]
        return (
            sum(e.tokens_in for e in picked),
            sum(e.tokens_out for e in picked),
        )


@dataclass
class TrialResult:
    """One method x dataset x trial record."""

    method: str
    dataset: str
    trial_index: int
    warm_starts: list[dict[str, float | str]]
    matched_rows: list[dict[str, object]]
    chebyshev_values: list[float]
    min_chebyshev: float
    diversity: float
    tokens_in: int
    tokens_out: int
    wall_ms: int
    labels_used: int = 0

    def __post_init__(self) -> None:
        if len(self.warm_starts) != len(self.chebyshev_values):
            raise ArityMismatch("warm_starts and chebyshev_values differ in length")
        if self.chebyshev_values and not math.isclose(
            self.min_chebyshev, min(self.chebyshev_values), abs_tol=1e-12
        ):
            raise ArityMismatch("min_chebyshev is not the minimum")

    def to_json_dict(self) -> dict:
        return {
            "kind": "trial",
            "method": self.method,
            "dataset": self.dataset,
            "trial_index": self.trial_index,
            "warm_starts": self.warm_starts,
            "matched_rows": self.matched_rows,
            "chebyshev_values": self.chebyshev_values,
            "min_chebyshev": self.min_chebyshev,
            "diversity": self.diversity,
            "tokens_in": self.tokens_in,
            "tokens_out": self.tokens_out,
            "wall_ms": self.wall_ms,
            "labels_used": self.labels_used,
        }


def trial_result_from(
    method: str,
    dataset: Dataset,
    trial_index: int,
    scored: ScoredWarmStarts,
    diversity_value: float,
    tokens_in: int,
    tokens_out: int,
    wall_ms: int,
    labels_used: int = 0,
) -> TrialResult:
    matched = [
        {
            "features": dict(zip(dataset.feature_names, r.features)),
            "objectives": dict(zip(dataset.objective_names, r.objectives)),
        }
        for r in scored.matched_rows
    ]
    return TrialResult(
        method=method,
        dataset=dataset.name,
        trial_index=trial_index,
        warm_starts=[dict(c.assignments) for c in scored.configs],
        matched_rows=matched,
        chebyshev_values=scored.chebyshev_values,
        min_chebyshev=scored.min_chebyshev,
        diversity=diversity_value,
        tokens_in=tokens_in,
        tokens_out=tokens_out,
        wall_ms=wall_ms,
        labels_used=labels_used,
    )
