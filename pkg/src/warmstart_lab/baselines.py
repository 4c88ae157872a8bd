"""Comparison methods: uniform random selection, a Gaussian-process scout
with an upper-confidence-bound acquisition rule, and the prior-art few-shot
prompt with Best/Rest labeled examples.

The GP is deliberately small: a squared-exponential kernel with fixed
hyperparameters (no marginal-likelihood optimization), the length scale
set by the median pairwise distance heuristic, and an escalating jitter on
the Gram diagonal. Labels exist only for pool rows, so acquisition is a
pool-restricted argmax. The GP regresses the negated quality score so the
upper confidence bound aligns with minimization.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.spatial.distance import pdist

from .data_core import NUMERIC, Configuration, Dataset
from .errors import PoolTooSmall, SingularKernel
from .eval_metrics import row_chebyshev
from .llm_gateway import (
    GENERATION_TEMPERATURE,
    ChatRequest,
    Gateway,
    examples_block,
    load_template,
    metadata_block,
    metadata_listing,
    parse_configurations,
    render_prompt,
)

logger = logging.getLogger(__name__)


@dataclass
class UcbConfig:
    kappa: float = 2.0
    seed_size: int = 4
    budget: int = 4
    signal_variance: float = 1.0
    noise_variance: float = 1e-6
    length_scale: float | None = None  # None: median pairwise distance

    def __post_init__(self) -> None:
        if not self.budget >= self.seed_size >= 1:
            raise ValueError("need budget >= seed_size >= 1")
        if self.kappa < 0:
            raise ValueError("kappa must be non-negative")


def encode_pool(dataset: Dataset) -> np.ndarray:
    """Rows as vectors: min-max scaled numerics plus one-of-K categories."""
    columns: list[np.ndarray] = []
    for i, spec in enumerate(dataset.feature_specs):
        raw = [row.features[i] for row in dataset.rows]
        if spec.kind == NUMERIC:
            values = np.asarray(raw, dtype=float)
            span = spec.hi - spec.lo
            columns.append((values - spec.lo) / span if span else np.zeros(len(values)))
        else:
            for cat in spec.categories:
                columns.append(np.asarray([1.0 if v == cat else 0.0 for v in raw]))
    return np.column_stack(columns)


class GpModel:
    """Exact GP regression with a squared-exponential kernel."""

    _JITTERS = (0.0, 1e-10, 1e-8, 1e-6, 1e-4, 1e-2)

    def __init__(
        self,
        length_scale: float,
        signal_variance: float = 1.0,
        noise_variance: float = 0.0,
    ):
        if length_scale <= 0 or signal_variance <= 0 or noise_variance < 0:
            raise ValueError("bad kernel hyperparameters")
        self.length_scale = length_scale
        self.signal_variance = signal_variance
        self.noise_variance = noise_variance
        self._X: np.ndarray | None = None
        self._factor = None
        self._alpha: np.ndarray | None = None

    def _kernel(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        sq = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
        return self.signal_variance * np.exp(-sq / (2.0 * self.length_scale**2))

    def fit(self, X: np.ndarray, y: np.ndarray) -> "GpModel":
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float)
        gram = self._kernel(X, X)
        eye = np.eye(len(X))
        for jitter in self._JITTERS:
            try:
                factor = cho_factor(
                    gram + (self.noise_variance + jitter) * eye, lower=True
                )
            except np.linalg.LinAlgError:
                continue
            self._X, self._factor = X, factor
            self._alpha = cho_solve(factor, y)
            if jitter:
                logger.debug("kernel needed jitter %.0e", jitter)
            return self
        raise SingularKernel("Gram matrix stayed indefinite through jitter escalation")

    def predict(self, Xq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if self._X is None or self._alpha is None:
            raise RuntimeError("predict before fit")
        Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
        cross = self._kernel(Xq, self._X)
        mean = cross @ self._alpha
        solved = cho_solve(self._factor, cross.T)
        var = self.signal_variance - np.einsum("ij,ji->i", cross, solved)
        return mean, np.sqrt(np.clip(var, 0.0, None))


def median_length_scale(X: np.ndarray) -> float:
    if len(X) < 2:
        return 1.0
    distances = pdist(X)
    positive = distances[distances > 0]
    return float(np.median(positive)) if positive.size else 1.0


def random_warm_start(
    dataset: Dataset, n: int, rng: np.random.Generator
) -> list[Configuration]:
    """Uniform selection of pool rows without replacement."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if n > len(dataset.rows):
        raise PoolTooSmall(f"asked for {n} of {len(dataset.rows)} rows")
    picks = rng.choice(len(dataset.rows), size=n, replace=False)
    return [dataset.config_from_row(int(i)) for i in picks]


def gp_ucb_warm_start(
    dataset: Dataset, cfg: UcbConfig, rng: np.random.Generator
) -> list[Configuration]:
    """Label a random seed set, then greedily acquire by mu + kappa * sigma.

    Targets are the negated per-row quality scores, so the acquisition's
    "upper" bound chases low distances. Every selected row (seed and
    acquired) is returned as a warm start.
    """
    if cfg.budget > len(dataset.rows):
        raise PoolTooSmall(f"budget {cfg.budget} exceeds pool of {len(dataset.rows)}")
    X = encode_pool(dataset)
    targets = np.asarray([-row_chebyshev(r, dataset) for r in dataset.rows])

    selected = [int(i) for i in rng.choice(len(dataset.rows), cfg.seed_size, replace=False)]
    while len(selected) < cfg.budget:
        length = cfg.length_scale or median_length_scale(X[selected])
        model = GpModel(length, cfg.signal_variance, cfg.noise_variance)
        model.fit(X[selected], targets[selected])
        remaining = [i for i in range(len(dataset.rows)) if i not in set(selected)]
        mean, sd = model.predict(X[remaining])
        acquisition = mean + cfg.kappa * sd
        best = remaining[int(np.argmax(acquisition))]  # argmax keeps lowest index on ties
        selected.append(best)
    return [dataset.config_from_row(i) for i in selected]


def draw_few_shot(
    dataset: Dataset, rng: np.random.Generator, n_examples: int = 4
) -> list[tuple[int, float]]:
    """Random labeled rows as (pool index, quality score) pairs."""
    if n_examples > len(dataset.rows):
        raise PoolTooSmall(f"asked for {n_examples} of {len(dataset.rows)} rows")
    picks = rng.choice(len(dataset.rows), size=n_examples, replace=False)
    return [(int(i), row_chebyshev(dataset.rows[int(i)], dataset)) for i in picks]


def best_rest_examples(
    dataset: Dataset, few_shot: list[tuple[int, float]]
) -> list[tuple[Configuration, float, str]]:
    """Split labeled examples into a Best top half and a Rest bottom half."""
    ordered = sorted(few_shot, key=lambda p: p[1])
    half = len(ordered) // 2
    out = []
    for pos, (idx, score) in enumerate(ordered):
        label = "Best" if pos < half else "Rest"
        out.append((dataset.config_from_row(idx), score, label))
    return out


def bs_llm_warm_start(
    dataset: Dataset,
    gateway: Gateway,
    rng: np.random.Generator,
    n: int = 4,
    n_examples: int = 4,
    prompts_dir: str | None = None,
) -> list[Configuration]:
    """Single-shot few-shot prompt with Best/Rest labels and feature metadata."""
    few_shot = draw_few_shot(dataset, rng, n_examples)
    examples = best_rest_examples(dataset, few_shot)
    template = load_template("bs_llm", prompts_dir)
    prompt = render_prompt(
        template,
        {
            "metadata_json": metadata_block(dataset),
            "metadata_listing": metadata_listing(dataset),
            "examples_json": examples_block(examples),
            "n": n,
        },
    )
    response = gateway.complete(
        ChatRequest(
            system_text="You are a careful configuration optimization assistant.",
            user_text=prompt,
            temperature=GENERATION_TEMPERATURE,
            tag="bs_llm.generate",
        )
    )
    return parse_configurations(response.text, dataset, expected_arity="full").configs
