"""Subspace-growing search driven by an ensemble feature ranking.

Feature importance is the mean of three unit-normalized signals computed on
a small labeled sample: |rank correlation| against the per-row quality
score, a binned mutual-information estimate, and random-forest impurity
importance. The search then optimizes inside the top-k subspace, labels
each generated candidate through its nearest pool row, tracks the best
candidate seen, and widens the subspace by s ranked features per round,
anchoring newly added features to the best candidate's matched row (or the
column median when nothing has been found yet). A final full-space round
generates the returned warm starts with the best candidate's values pinned.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.ensemble import RandomForestRegressor

from .data_core import (
    NUMERIC,
    Configuration,
    Dataset,
    Row,
    nearest_row_index,
    project_rows,
)
from .eval_metrics import row_chebyshev
from .llm_gateway import (
    GENERATION_TEMPERATURE,
    ChatRequest,
    Gateway,
    anchors_block,
    examples_block,
    load_template,
    metadata_block,
    parse_configurations,
    render_prompt,
)
from .stat_rank import spearman

logger = logging.getLogger(__name__)

_SYSTEM = "You are a careful configuration optimization assistant."


@dataclass
class DaprConfig:
    k: int = 3
    s: int = 2
    n_importance: int = 4

    def __post_init__(self) -> None:
        if self.k < 1 or self.s < 1 or self.n_importance < 2:
            raise ValueError("need k >= 1, s >= 1, n_importance >= 2")


@dataclass
class ImportanceScores:
    features: list[str]
    spearman_scores: dict[str, float]
    mi_scores: dict[str, float]
    rf_scores: dict[str, float]
    ensemble: dict[str, float]
    ranking: list[str]
    degenerate: bool = False


@dataclass
class DaprOutcome:
    configs: list[Configuration]
    ranking: list[str]
    trace: list[dict] = field(default_factory=list)
    labels_used: int = 0


def _category_rank_encoding(values: list[str], target: np.ndarray) -> np.ndarray:
    """Replace categories by the rank of their mean target value."""
    means: dict[str, float] = {}
    for cat in set(values):
        mask = [v == cat for v in values]
        means[cat] = float(target[mask].mean())
    ordered = sorted(means, key=lambda c: (means[c], c))
    ranks = {cat: float(r) for r, cat in enumerate(ordered, start=1)}
    return np.asarray([ranks[v] for v in values])


def _binned_mi(x: np.ndarray, y: np.ndarray, bins: int) -> float:
    """Plug-in mutual information (nats) over equal-width bins."""
    if np.all(x == x[0]) or np.all(y == y[0]):
        return 0.0
    x_edges = np.linspace(x.min(), x.max(), bins + 1)
    y_edges = np.linspace(y.min(), y.max(), bins + 1)
    joint, _, _ = np.histogram2d(x, y, bins=[x_edges, y_edges])
    joint /= joint.sum()
    px = joint.sum(axis=1, keepdims=True)
    py = joint.sum(axis=0, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = joint * np.log(joint / (px @ py))
    return float(np.nansum(terms))


def _symbolic_mi(values: list[str], y: np.ndarray, bins: int) -> float:
    cats = sorted(set(values))
    codes = np.asarray([cats.index(v) for v in values], dtype=float)
    if len(cats) < 2:
        return 0.0
    y_edges = np.linspace(y.min(), y.max(), bins + 1) if y.min() < y.max() else None
    if y_edges is None:
        return 0.0
    joint = np.zeros((len(cats), bins))
    y_bin = np.clip(np.digitize(y, y_edges[1:-1]), 0, bins - 1)
    for c, b in zip(codes.astype(int), y_bin):
        joint[c, b] += 1
    joint /= joint.sum()
    px = joint.sum(axis=1, keepdims=True)
    py = joint.sum(axis=0, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = joint * np.log(joint / (px @ py))
    return float(np.nansum(terms))


def _minmax(scores: dict[str, float]) -> dict[str, float]:
    values = list(scores.values())
    lo, hi = min(values), max(values)
    if hi == lo:
        return {k: 0.0 for k in scores}
    return {k: (v - lo) / (hi - lo) for k, v in scores.items()}


def importance_scores(
    samples: list[tuple[Row, float]],
    dataset: Dataset,
    rng: np.random.Generator,
) -> ImportanceScores:
    """Ensemble feature ranking from a labeled sample.

    Small samples (below 8) are statistically shaky for the mutual
    information and forest signals; that is logged, not fatal. If every
    target is identical the scores are uniform and flagged degenerate.
    """
    if len(samples) < 2:
        raise ValueError("need at least 2 labeled samples")
    if len(samples) < 8:
        logger.warning(
            "importance over %d samples; MI and forest signals are noisy", len(samples)
        )
    names = list(dataset.feature_names)
    target = np.asarray([score for _, score in samples])

    if np.all(target == target[0]):
        logger.warning("degenerate importance sample: all targets equal")
        uniform = {n: 0.5 for n in names}
        return ImportanceScores(
            features=names,
            spearman_scores=dict(uniform),
            mi_scores=dict(uniform),
            rf_scores=dict(uniform),
            ensemble=dict(uniform),
            ranking=list(names),
            degenerate=True,
        )

    bins = max(1, min(4, math.isqrt(len(samples))))
    sp: dict[str, float] = {}
    mi: dict[str, float] = {}
    encoded_cols: list[np.ndarray] = []
    for pos, spec in enumerate(dataset.feature_specs):
        raw = [row.features[pos] for row, _ in samples]
        if spec.kind == NUMERIC:
            column = np.asarray(raw, dtype=float)
            mi[spec.name] = _binned_mi(column, target, bins)
        else:
            column = _category_rank_encoding([str(v) for v in raw], target)
            mi[spec.name] = _symbolic_mi([str(v) for v in raw], target, bins)
        sp[spec.name] = (
            0.0 if np.all(column == column[0]) else abs(spearman(column, target))
        )
        encoded_cols.append(column)

    forest = RandomForestRegressor(
        n_estimators=64,
        max_depth=6,
        max_features="sqrt",
        random_state=int(rng.integers(0, 2**31 - 1)),
    )
    forest.fit(np.column_stack(encoded_cols), target)
    rf = {name: float(v) for name, v in zip(names, forest.feature_importances_)}

    sp_n, mi_n, rf_n = _minmax(sp), _minmax(mi), _minmax(rf)
    ensemble = {n: (sp_n[n] + mi_n[n] + rf_n[n]) / 3.0 for n in names}
    ranking = sorted(names, key=lambda n: (-ensemble[n], names.index(n)))
    return ImportanceScores(
        features=names,
        spearman_scores=sp,
        mi_scores=mi,
        rf_scores=rf,
        ensemble=ensemble,
        ranking=ranking,
        degenerate=False,
    )


def _label_configs(
    configs: list[Configuration], dataset: Dataset
) -> list[tuple[Configuration, int, float]]:
    out = []
    for config in configs:
        idx = nearest_row_index(config, dataset)
        out.append((config, idx, row_chebyshev(dataset.rows[idx], dataset)))
    return out


def _subspace_prompt(
    dataset: Dataset,
    subspace: list[str],
    examples: list[tuple[Configuration, float, str]],
    anchors: dict[str, float | str],
    n: int,
    prompts_dir: str | None,
) -> str:
    template = load_template("dapr_subspace", prompts_dir)
    anchored = {k: v for k, v in anchors.items() if k in subspace}
    section = (
        "\nANCHORS (newly added features start from these values)\n"
        + anchors_block(anchored)
        + "\n"
        if anchored
        else ""
    )
    return render_prompt(
        template,
        {
            "subspace_names": ", ".join(subspace),
            "metadata_json": metadata_block(dataset, subset=subspace),
            "examples_json": examples_block(examples),
            "anchors_section": section,
            "n": n,
        },
    )


def run_dapr(
    dataset: Dataset,
    cfg: DaprConfig,
    rng: np.random.Generator,
    gateway: Gateway,
    n: int = 4,
    prompts_dir: str | None = None,
) -> DaprOutcome:
    """Progressive expansion from the top-k subspace to the full space."""
    from .baselines import draw_few_shot

    n_features = len(dataset.feature_names)
    k = min(cfg.k, n_features)

    importance_shot = draw_few_shot(dataset, rng, min(cfg.n_importance, len(dataset.rows)))
    labeled = [(dataset.rows[i], score) for i, score in importance_shot]
    ranking = importance_scores(labeled, dataset, rng).ranking

    current = ranking[:k]
    best: tuple[Configuration, Row, float] | None = None
    fresh_anchors: dict[str, float | str] = {}  # only the latest expansion
    trace: list[dict] = []
    labels_used = 0

    while len(current) < n_features:
        shot = draw_few_shot(dataset, rng, 4)
        projected = project_rows([dataset.rows[i] for i, _ in shot], current, dataset)
        examples = [
            (cfg_proj, score, f"example {j}")
            for j, (cfg_proj, (_, score)) in enumerate(zip(projected, shot))
        ]
        prompt = _subspace_prompt(dataset, current, examples, fresh_anchors, n, prompts_dir)
        response = gateway.complete(
            ChatRequest(
                system_text=_SYSTEM,
                user_text=prompt,
                temperature=GENERATION_TEMPERATURE,
                tag="dapr.iterate",
            )
        )
        try:
            parsed = parse_configurations(
                response.text, dataset, expected_arity="full", allowed=current
            )
            candidates = parsed.configs
        except Exception:
            logger.warning("iteration produced no parseable configs; keeping best")
            candidates = []
        scored = _label_configs(candidates, dataset)
        labels_used += len(scored)
        for config, idx, value in scored:
            if best is None or value < best[2]:
                best = (config, dataset.rows[idx], value)

        trace.append(
            {
                "iteration": len(trace),
                "subspace_size": len(current),
                "features": list(current),
                "generated": len(candidates),
                "best_chebyshev": None if best is None else best[2],
            }
        )

        incoming = ranking[len(current) : len(current) + cfg.s]
        fresh_anchors = {}
        for name in incoming:
            if best is not None:
                pos = dataset.feature_index[name]
                fresh_anchors[name] = best[1].features[pos]
            else:
                fresh_anchors[name] = dataset.feature(name).median_or_mode
        current = current + incoming

    # Final full-space round, pinned to the best subspace assignment found.
    pinned: dict[str, float | str] = dict(best[0].assignments) if best is not None else {}
    shot = draw_few_shot(dataset, rng, 4)
    examples = [
        (dataset.config_from_row(i), score, f"example {j}")
        for j, (i, score) in enumerate(shot)
    ]
    template = load_template("dapr_final", prompts_dir)
    prompt = render_prompt(
        template,
        {
            "metadata_json": metadata_block(dataset),
            "examples_json": examples_block(examples),
            "anchors_json": anchors_block(pinned) if pinned else "(none)",
            "n": n,
        },
    )
    response = gateway.complete(
        ChatRequest(
            system_text=_SYSTEM,
            user_text=prompt,
            temperature=GENERATION_TEMPERATURE,
            tag="dapr.final",
        )
    )
    parsed = parse_configurations(response.text, dataset, expected_arity="full")
    final_configs = []
    for config in parsed.configs:
        repaired = dict(config.assignments)
        repaired.update(pinned)  # anchored features cannot drift
        final_configs.append(Configuration({n_: repaired[n_] for n_ in dataset.feature_names}))

    final_scored = _label_configs(final_configs, dataset)
    final_min = min(v for _, _, v in final_scored) if final_scored else None
    trace.append(
        {
            "iteration": len(trace),
            "subspace_size": n_features,
            "features": list(dataset.feature_names),
            "generated": len(final_configs),
            "best_chebyshev": None if best is None else best[2],
            "final_min_chebyshev": final_min,
        }
    )
    return DaprOutcome(
        configs=final_configs,
        ranking=ranking,
        trace=trace,
        labels_used=labels_used,
    )
