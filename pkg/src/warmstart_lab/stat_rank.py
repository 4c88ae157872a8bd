"""Treatment ranking: recursive median clustering with a bootstrap
significance gate and a Cliff's-delta effect-size gate, plus the shared
rank statistics (Spearman, effort curves).

Splits maximize the between-group sum of squares

    B0 = T1^2/N1 + T2^2/N2 - (T1 + T2)^2/(N1 + N2)

over treatment-level sums T and counts N, and are accepted only when the
pooled halves differ both significantly (bootstrap over the pooled null)
and non-negligibly (|delta| >= 0.147).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import LengthMismatch, TooFewSessions, TooFewTreatments

logger = logging.getLogger(__name__)

NEGLIGIBLE_DELTA = 0.147
DEFAULT_BOOTSTRAPS = 512
DEFAULT_ALPHA = 0.05

EFFECT_NEGLIGIBLE = "negligible"
EFFECT_SMALL = "small"
EFFECT_MEDIUM = "medium"
EFFECT_LARGE = "large"


@dataclass(frozen=True)
class TreatmentSample:
    label: str
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.values) < 2:
            raise ValueError(f"{self.label}: needs at least 2 values")
        if not all(np.isfinite(self.values)):
            raise ValueError(f"{self.label}: non-finite value")

    @property
    def median(self) -> float:
        return float(np.median(self.values))


@dataclass(frozen=True)
class GroupSummary:
    T: float
    N: int

    def __post_init__(self) -> None:
        if self.N < 1:
            raise ValueError("group needs at least one response")


@dataclass
class RankTable:
    """Treatments grouped into ranks; rank 1 holds the lowest medians."""

    ranks: list[list[str]]
    medians: dict[str, float]
    baseline: str | None = None
    deltas: dict[str, float] | None = None
    effect_labels: dict[str, str] | None = None

    def rank_of(self, label: str) -> int:
        for i, group in enumerate(self.ranks, start=1):
            if label in group:
                return i
        raise KeyError(label)


def b0(left: GroupSummary, right: GroupSummary) -> float:
    """Between-group sum of squares for a two-way partition."""
    total = left.T + right.T
    n = left.N + right.N
    value = left.T**2 / left.N + right.T**2 / right.N - total**2 / n
    return max(0.0, value)


def best_split(sorted_treatments: Sequence[TreatmentSample]) -> tuple[int, float]:
    """Cut index (into the sorted list) maximizing B0; leftmost on ties."""
    if len(sorted_treatments) < 2:
        raise TooFewTreatments("need at least 2 treatments to split")
    best_cut, best_value = 1, -1.0
    for cut in range(1, len(sorted_treatments)):
        left_vals = [v for t in sorted_treatments[:cut] for v in t.values]
        right_vals = [v for t in sorted_treatments[cut:] for v in t.values]
        value = b0(
            GroupSummary(sum(left_vals), len(left_vals)),
            GroupSummary(sum(right_vals), len(right_vals)),
        )
        if value > best_value:
            best_cut, best_value = cut, value
    return best_cut, best_value


def bootstrap_significant(
    left: Sequence[float],
    right: Sequence[float],
    B: int = DEFAULT_BOOTSTRAPS,
    alpha: float = DEFAULT_ALPHA,
    rng: np.random.Generator | None = None,
) -> bool:
    """Test |mean difference| against a pooled-null resampling distribution.

    True iff the observed statistic exceeds the (1 - alpha) quantile of the
    |mean difference| over B resamples drawn with replacement from the
    combined values into groups of the original sizes.
    """
    if B < 100:
        raise ValueError("B must be at least 100")
    rng = rng or np.random.default_rng(0)
    a = np.asarray(left, dtype=float)
    b = np.asarray(right, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("both groups must be non-empty")
    observed = abs(a.mean() - b.mean())
    pool = np.concatenate([a, b])
    left_means = rng.choice(pool, size=(B, a.size), replace=True).mean(axis=1)
    right_means = rng.choice(pool, size=(B, b.size), replace=True).mean(axis=1)
    threshold = np.quantile(np.abs(left_means - right_means), 1.0 - alpha)
    return bool(observed > threshold)


def cliffs_delta(a: Sequence[float], b: Sequence[float]) -> float:
    """Pairwise dominance effect size in [-1, 1]."""
    xs = np.asarray(a, dtype=float)
    ys = np.asarray(b, dtype=float)
    if xs.size == 0 or ys.size == 0:
        raise ValueError("both samples must be non-empty")
    gt = (xs[:, None] > ys[None, :]).sum()
    lt = (xs[:, None] < ys[None, :]).sum()
    return float(gt - lt) / (xs.size * ys.size)


def effect_label(delta: float) -> str:
    """Magnitude class per the 0.147 / 0.33 / 0.474 thresholds."""
    d = abs(delta)
    if d < NEGLIGIBLE_DELTA:
        return EFFECT_NEGLIGIBLE
    if d < 0.33:
        return EFFECT_SMALL
    if d < 0.474:
        return EFFECT_MEDIUM
    return EFFECT_LARGE


def _recurse(
    treatments: list[TreatmentSample],
    B: int,
    alpha: float,
    rng: np.random.Generator,
) -> list[list[str]]:
    if len(treatments) == 1:
        return [[treatments[0].label]]
    cut, _ = best_split(treatments)
    left, right = treatments[:cut], treatments[cut:]
    left_pool = [v for t in left for v in t.values]
    right_pool = [v for t in right for v in t.values]
    significant = bootstrap_significant(left_pool, right_pool, B, alpha, rng)
    meaningful = abs(cliffs_delta(left_pool, right_pool)) >= NEGLIGIBLE_DELTA
    if significant and meaningful:
        return _recurse(left, B, alpha, rng) + _recurse(right, B, alpha, rng)
    return [[t.label for t in treatments]]


def scott_knott(
    treatments: Sequence[TreatmentSample],
    B: int = DEFAULT_BOOTSTRAPS,
    alpha: float = DEFAULT_ALPHA,
    rng: np.random.Generator | None = None,
    baseline: str | None = None,
) -> RankTable:
    """Cluster treatments into statistically distinct ranks.

    Treatments are sorted by median, recursively split at the B0-maximizing
    cut, and a split survives only if it passes both the bootstrap and the
    effect-size gate. Input order does not matter.
    """
    if not treatments:
        raise TooFewTreatments("no treatments to rank")
    rng = rng or np.random.default_rng(0)
    ordered = sorted(treatments, key=lambda t: (t.median, t.label))
    ranks = _recurse(list(ordered), B, alpha, rng)
    medians = {t.label: t.median for t in ordered}

    deltas: dict[str, float] | None = None
    effects: dict[str, str] | None = None
    if baseline is not None and any(t.label == baseline for t in ordered):
        base_values = next(t.values for t in ordered if t.label == baseline)
        deltas = {t.label: cliffs_delta(t.values, base_values) for t in ordered}
        effects = {label: effect_label(d) for label, d in deltas.items()}
    return RankTable(
        ranks=ranks,
        medians=medians,
        baseline=baseline if deltas is not None else None,
        deltas=deltas,
        effect_labels=effects,
    )


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson correlation of average-tied ranks.

    A zero-variance input has no defined rank correlation; it is reported
    as 0 and logged rather than propagated as NaN.
    """
    if len(x) != len(y):
        raise LengthMismatch(f"{len(x)} vs {len(y)} values")
    if len(x) < 2:
        raise LengthMismatch("need at least 2 paired values")
    rx = rankdata(x)
    ry = rankdata(y)
    sx, sy = rx.std(), ry.std()
    if sx == 0.0 or sy == 0.0:
        logger.debug("spearman over a constant input; reporting 0")
        return 0.0
    cov = ((rx - rx.mean()) * (ry - ry.mean())).mean()
    return float(cov / (sx * sy))


def effort_correlation(sessions: Sequence[tuple[int, float]]) -> float:
    """Rank correlation between feedback rounds and final improvement."""
    if len(sessions) < 2:
        raise TooFewSessions("need at least 2 sessions")
    rounds = [float(t) for t, _ in sessions]
    improvements = [float(d) for _, d in sessions]
    return spearman(rounds, improvements)


def _baseline_header(baseline: str) -> str:
    return "delta_vs_" + ("BS_LLM" if baseline == "bs_llm" else baseline)


def rank_table_rows(table: RankTable) -> list[dict[str, object]]:
    rows = []
    for rank, group in enumerate(table.ranks, start=1):
        for label in group:
            rows.append(
                {
                    "rank": rank,
                    "method": label,
                    "median": table.medians[label],
                    "delta": None if table.deltas is None else table.deltas.get(label),
                    "effect_label": None
                    if table.effect_labels is None
                    else table.effect_labels.get(label),
                }
            )
    return rows


def rank_table_markdown(table: RankTable, title: str = "") -> str:
    delta_col = _baseline_header(table.baseline) if table.baseline else "delta"
    lines = []
    if title:
        lines.append(f"## {title}")
        lines.append("")
    lines.append(f"| rank | method | median | {delta_col} | effect_label |")
    lines.append("| --- | --- | --- | --- | --- |")
    for row in rank_table_rows(table):
        delta = "" if row["delta"] is None else f"{row['delta']:+.3f}"
        effect = row["effect_label"] or ""
        lines.append(
            f"| {row['rank']} | {row['method']} | {row['median']:.4f} | {delta} | {effect} |"
        )
    return "\n".join(lines) + "\n"


def rank_table_csv(table: RankTable) -> str:
    delta_col = _baseline_header(table.baseline) if table.baseline else "delta"
    lines = [f"rank,method,median,{delta_col},effect_label"]
    for row in rank_table_rows(table):
        delta = "" if row["delta"] is None else f"{row['delta']:.6f}"
        effect = row["effect_label"] or ""
        lines.append(f"{row['rank']},{row['method']},{row['median']:.6f},{delta},{effect}")
    return "\n".join(lines) + "\n"
