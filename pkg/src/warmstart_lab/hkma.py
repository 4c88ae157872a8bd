"""Scout-then-synthesize pipeline: statistical scouting with a univariate
Parzen-density sampler, empirical-prior extraction from the scouted
good/bad split, lightweight lexical retrieval over per-dataset document
corpora, and the synthesis prompt that feeds both to the model.

The scout spends a small budget of pool labelings. The first four picks
are uniform; afterwards the observations are split at the gamma quantile
into good and bad sets, each feature gets one-dimensional density models
(Gaussian kernels for numerics, Laplace-smoothed frequencies for
categories), and the candidate maximizing the good/bad density ratio among
24 sampled configurations is labeled next.
"""

from __future__ import annotations

import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data_core import (
    NUMERIC,
    Configuration,
    Dataset,
    FeatureSpec,
    nearest_row_index,
)
from .errors import EmptyCorpus, PoolTooSmall
from .eval_metrics import row_chebyshev
from .llm_gateway import (
    GENERATION_TEMPERATURE,
    ChatRequest,
    Gateway,
    examples_block,
    load_template,
    metadata_block,
    parse_configurations,
    render_prompt,
)
from .stat_rank import NEGLIGIBLE_DELTA, cliffs_delta

logger = logging.getLogger(__name__)

_SYSTEM = "You are a careful configuration optimization assistant."

MODES = ("scout_only", "rag_only", "both")

CHUNK_WORDS = 512
CHUNK_OVERLAP = 128
TPE_CANDIDATES = 24
RANDOM_STARTUP = 4


@dataclass
class HkmaConfig:
    b_scout: int = 10
    gamma: float = 0.25
    top_k: int = 3
    mode: str = "both"

    def __post_init__(self) -> None:
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie strictly between 0 and 1")
        if self.b_scout < 2:
            raise ValueError("b_scout must be at least 2")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")


@dataclass
class ScoutResult:
    evaluated: list[tuple[Configuration, float]]
    s_best: list[tuple[Configuration, float]]
    s_rest: list[tuple[Configuration, float]]

    @property
    def labels_used(self) -> int:
        return len(self.evaluated)


@dataclass
class EmpiricalPrior:
    feature: str
    kind: str  # "directional" or "boundary"
    statement: str
    strength: float


# -- Parzen machinery ----------------------------------------------------------

def _bandwidth(
    values: np.ndarray, spec: FeatureSpec, fallback: np.ndarray | None = None
) -> float:
    """Silverman bandwidth floored at 1% of the feature range.

    A singleton has no scale of its own, so its sigma falls back to the
    spread of everything observed so far: kernels start wide and tighten
    as the good set grows.
    """
    span = spec.hi - spec.lo
    floor = max(1e-12, 0.01 * span) if span else 1e-12
    sigma = float(values.std()) if values.size >= 2 else 0.0
    if sigma == 0.0 and fallback is not None and fallback.size >= 2:
        sigma = float(fallback.std())
    bw = 1.06 * sigma * values.size ** (-1 / 5)
    return max(bw, floor)


def _gaussian_mixture_pdf(x: float, centers: np.ndarray, bw: float) -> float:
    z = (x - centers) / bw
    return float(np.exp(-0.5 * z * z).sum() / (centers.size * bw * math.sqrt(2 * math.pi)))


def _category_probs(values: list[str], spec: FeatureSpec) -> dict[str, float]:
    counts = Counter(values)
    k = len(spec.categories)
    n = len(values)
    return {c: (counts.get(c, 0) + 1) / (n + k) for c in spec.categories}


def _split_good_bad(
    observed: list[tuple[Configuration, float]], gamma: float
) -> tuple[list[tuple[Configuration, float]], list[tuple[Configuration, float]]]:
    n_good = max(1, math.floor(gamma * len(observed)))
    order = sorted(range(len(observed)), key=lambda i: (observed[i][1], i))
    good_idx = set(order[:n_good])
    good = [observed[i] for i in sorted(good_idx)]
    bad = [observed[i] for i in sorted(set(range(len(observed))) - good_idx)]
    return good, bad


def tpe_scout(
    dataset: Dataset, cfg: HkmaConfig, rng: np.random.Generator
) -> ScoutResult:
    """Spend exactly ``b_scout`` pool labelings, guided after a random start."""
    if len(dataset.rows) < cfg.b_scout:
        raise PoolTooSmall(
            f"pool of {len(dataset.rows)} cannot fund a budget of {cfg.b_scout}"
        )
    observed: list[tuple[Configuration, float]] = []
    seen_rows: set[int] = set()

    def evaluate(config: Configuration) -> None:
        idx = nearest_row_index(config, dataset)
        seen_rows.add(idx)
        observed.append((config, row_chebyshev(dataset.rows[idx], dataset)))

    startup = min(RANDOM_STARTUP, cfg.b_scout)
    for i in rng.choice(len(dataset.rows), size=startup, replace=False):
        evaluate(dataset.config_from_row(int(i)))

    while len(observed) < cfg.b_scout:
        good, bad = _split_good_bad(observed, cfg.gamma)
        candidates = [
            _sample_candidate(dataset, good, observed, rng) for _ in range(TPE_CANDIDATES)
        ]
        scores = np.asarray([_density_ratio(dataset, c, good, bad) for c in candidates])
        # Labels exist only for pool rows, so re-buying a known label wastes
        # budget: prefer the best-scoring candidate that maps to a new row.
        chosen = candidates[int(np.argmax(scores))]
        for pos in np.argsort(-scores, kind="stable"):
            if nearest_row_index(candidates[int(pos)], dataset) not in seen_rows:
                chosen = candidates[int(pos)]
                break
        evaluate(chosen)

    s_best, s_rest = _split_good_bad(observed, cfg.gamma)
    return ScoutResult(evaluated=observed, s_best=s_best, s_rest=s_rest)


def _sample_candidate(
    dataset: Dataset,
    good: list[tuple[Configuration, float]],
    all_observed: list[tuple[Configuration, float]],
    rng: np.random.Generator,
) -> Configuration:
    assignments: dict[str, float | str] = {}
    for spec in dataset.feature_specs:
        good_values = [cfg.assignments[spec.name] for cfg, _ in good]
        if spec.kind == NUMERIC:
            centers = np.asarray([float(v) for v in good_values])
            everything = np.asarray(
                [float(cfg.assignments[spec.name]) for cfg, _ in all_observed]
            )
            bw = _bandwidth(centers, spec, fallback=everything)
            center = centers[int(rng.integers(0, centers.size))]
            value = float(rng.normal(center, bw))
            assignments[spec.name] = min(spec.hi, max(spec.lo, value))
        else:
            probs = _category_probs([str(v) for v in good_values], spec)
            cats = list(spec.categories)
            weights = np.asarray([probs[c] for c in cats])
            weights /= weights.sum()
            assignments[spec.name] = cats[int(rng.choice(len(cats), p=weights))]
    return Configuration(assignments)


def _density_ratio(
    dataset: Dataset,
    candidate: Configuration,
    good: list[tuple[Configuration, float]],
    bad: list[tuple[Configuration, float]],
) -> float:
    """Sum of per-feature log density ratios l(x)/g(x)."""
    total = 0.0
    everything = good + bad
    for spec in dataset.feature_specs:
        x = candidate.assignments[spec.name]
        g_vals = [cfg.assignments[spec.name] for cfg, _ in good]
        b_vals = [cfg.assignments[spec.name] for cfg, _ in bad]
        if spec.kind == NUMERIC:
            all_c = np.asarray(
                [float(cfg.assignments[spec.name]) for cfg, _ in everything]
            )
            gc = np.asarray([float(v) for v in g_vals])
            bc = np.asarray([float(v) for v in b_vals])
            l_pdf = _gaussian_mixture_pdf(
                float(x), gc, _bandwidth(gc, spec, fallback=all_c)
            )
            g_pdf = (
                _gaussian_mixture_pdf(
                    float(x), bc, _bandwidth(bc, spec, fallback=all_c)
                )
                if bc.size
                else l_pdf
            )
        else:
            l_pdf = _category_probs([str(v) for v in g_vals], spec)[str(x)]
            g_pdf = (
                _category_probs([str(v) for v in b_vals], spec)[str(x)]
                if b_vals
                else l_pdf
            )
        total += math.log(max(l_pdf, 1e-300)) - math.log(max(g_pdf, 1e-300))
    return total


# -- empirical priors -----------------------------------------------------------

def extract_priors(scout: ScoutResult, dataset: Dataset) -> list[EmpiricalPrior]:
    """Directional and boundary statements comparing S_best against S_rest."""
    priors: list[EmpiricalPrior] = []
    for spec in dataset.feature_specs:
        best_vals = [c.assignments[spec.name] for c, _ in scout.s_best]
        rest_vals = [c.assignments[spec.name] for c, _ in scout.s_rest]
        if not best_vals or not rest_vals:
            continue
        if spec.kind == NUMERIC:
            delta = cliffs_delta(
                [float(v) for v in best_vals], [float(v) for v in rest_vals]
            )
            if abs(delta) >= NEGLIGIBLE_DELTA:
                word = "Higher" if delta > 0 else "Lower"
                priors.append(
                    EmpiricalPrior(
                        feature=spec.name,
                        kind="directional",
                        statement=(
                            f"{word} {spec.name} is associated with better outcomes."
                        ),
                        strength=abs(delta),
                    )
                )
            lo = min(float(v) for v in best_vals)
            hi = max(float(v) for v in best_vals)
            priors.append(
                EmpiricalPrior(
                    feature=spec.name,
                    kind="boundary",
                    statement=f"Keep {spec.name} between {lo:g} and {hi:g}.",
                    strength=abs(delta),
                )
            )
        else:
            best_freq = Counter(str(v) for v in best_vals)
            rest_freq = Counter(str(v) for v in rest_vals)
            for cat in spec.categories:
                diff = best_freq.get(cat, 0) / len(best_vals) - rest_freq.get(
                    cat, 0
                ) / len(rest_vals)
                if diff >= 0.5:
                    priors.append(
                        EmpiricalPrior(
                            feature=spec.name,
                            kind="directional",
                            statement=(
                                f"Setting {spec.name} equal to {cat} is associated"
                                " with better outcomes."
                            ),
                            strength=diff,
                        )
                    )
    return priors


# -- lexical retrieval ------------------------------------------------------------

_TOKEN = re.compile(r"[a-z0-9_]+")


def _tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


@dataclass(frozen=True)
class Chunk:
    doc_id: str
    offset: int  # word offset into the source document
    text: str


@dataclass
class DocIndex:
    chunks: list[Chunk]
    term_counts: list[Counter] = field(default_factory=list)
    idf: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.term_counts:
            self.term_counts = [Counter(_tokenize(c.text)) for c in self.chunks]
            df: Counter = Counter()
            for counts in self.term_counts:
                df.update(set(counts))
            n = max(1, len(self.chunks))
            self.idf = {t: math.log((1 + n) / (1 + c)) + 1.0 for t, c in df.items()}

    def _vector(self, counts: Counter) -> dict[str, float]:
        total = sum(counts.values()) or 1
        return {t: (c / total) * self.idf.get(t, 0.0) for t, c in counts.items()}

    def vector_for(self, i: int) -> dict[str, float]:
        return self._vector(self.term_counts[i])

    def query_vector(self, query: str) -> dict[str, float]:
        return self._vector(Counter(_tokenize(query)))


def _chunk_words(words: list[str]) -> list[tuple[int, str]]:
    """512-word windows with a 128-word overlap (stride 384)."""
    stride = CHUNK_WORDS - CHUNK_OVERLAP
    chunks = []
    start = 0
    while start < len(words):
        chunks.append((start, " ".join(words[start : start + CHUNK_WORDS])))
        if start + CHUNK_WORDS >= len(words):
            break
        start += stride
    return chunks


def build_index(corpus_dir: str | Path) -> DocIndex:
    """Deterministic chunked index over a directory of text documents."""
    corpus_dir = Path(corpus_dir)
    chunks: list[Chunk] = []
    files = sorted(
        p for p in corpus_dir.rglob("*") if p.suffix in (".md", ".txt") and p.is_file()
    )
    for path in files:
        words = path.read_text(encoding="utf-8").split()
        if not words:
            continue
        doc_id = path.relative_to(corpus_dir).as_posix()
        for offset, text in _chunk_words(words):
            chunks.append(Chunk(doc_id=doc_id, offset=offset, text=text))
    if not chunks:
        logger.warning("corpus %s is empty; retrieval will return nothing", corpus_dir)
    return DocIndex(chunks=chunks)


def _cosine(a: dict[str, float], b: dict[str, float]) -> float:
    if len(b) < len(a):
        a, b = b, a
    dot = sum(v * b.get(t, 0.0) for t, v in a.items())
    na = math.sqrt(sum(v * v for v in a.values()))
    nb = math.sqrt(sum(v * v for v in b.values()))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return dot / (na * nb)


def retrieve(index: DocIndex, query: str, k: int) -> list[tuple[Chunk, float]]:
    """Top-k chunks by cosine similarity; zero-score chunks never surface."""
    q = index.query_vector(query)
    scored = []
    for i, chunk in enumerate(index.chunks):
        score = _cosine(q, index.vector_for(i))
        if score > 0.0:
            scored.append((chunk, score))
    scored.sort(key=lambda pair: (-pair[1], pair[0].doc_id, pair[0].offset))
    return scored[:k]


def prior_query(prior: EmpiricalPrior, dataset: Dataset) -> str:
    """Turn a prior sentence into a retrieval question."""
    objectives = " and ".join(dataset.objective_names)
    if prior.kind == "boundary":
        return f"What explains the effective range of {prior.feature} for {objectives}?"
    return f"Why does {prior.feature} affect {objectives}? {prior.statement}"


@dataclass
class HkmaOutcome:
    configs: list[Configuration]
    priors: list[EmpiricalPrior]
    retrieved: list[tuple[Chunk, float]]
    labels_used: int


def run_hkma(
    dataset: Dataset,
    cfg: HkmaConfig,
    rng: np.random.Generator,
    gateway: Gateway,
    n: int = 4,
    index: DocIndex | None = None,
    prompts_dir: str | None = None,
) -> HkmaOutcome:
    """Scout, retrieve, and synthesize according to the ablation mode.

    Scouted rows are never returned as warm starts; the model must generate
    them from the evidence.
    """
    from .baselines import draw_few_shot

    priors: list[EmpiricalPrior] = []
    labels_used = 0
    if cfg.mode in ("scout_only", "both"):
        scout = tpe_scout(dataset, cfg, rng)
        priors = extract_priors(scout, dataset)
        labels_used = scout.labels_used

    retrieved: list[tuple[Chunk, float]] = []
    if cfg.mode in ("rag_only", "both"):
        if index is None:
            raise EmptyCorpus("retrieval requested but no index supplied")
        if cfg.mode == "both":
            queries = [prior_query(p, dataset) for p in priors]
        else:
            queries = [
                f"How does {feature} affect {objective}?"
                for objective in dataset.objective_names
                for feature in dataset.feature_names
            ]
        seen: set[tuple[str, int]] = set()
        for query in queries:
            for chunk, score in retrieve(index, query, cfg.top_k):
                key = (chunk.doc_id, chunk.offset)
                if key not in seen:
                    seen.add(key)
                    retrieved.append((chunk, score))
        retrieved.sort(key=lambda pair: (-pair[1], pair[0].doc_id, pair[0].offset))
        retrieved = retrieved[: cfg.top_k]

    evidence_section = ""
    if priors:
        evidence_section = "\nEMPIRICAL EVIDENCE (measured during scouting)\n" + "\n".join(
            f"- {p.statement}" for p in priors
        ) + "\n"
    context_section = ""
    if retrieved:
        context_section = "\nSEMANTIC EXPLANATION (documentation excerpts)\n" + "\n".join(
            f"[{c.doc_id}@{c.offset}] {c.text[:400]}" for c, _ in retrieved
        ) + "\n"

    few_shot = draw_few_shot(dataset, rng, 4)
    examples = [
        (dataset.config_from_row(i), score, f"example {j}")
        for j, (i, score) in enumerate(few_shot)
    ]
    template = load_template("hkma_synthesize", prompts_dir)
    prompt = render_prompt(
        template,
        {
            "metadata_json": metadata_block(dataset),
            "examples_json": examples_block(examples),
            "evidence_section": evidence_section,
            "context_section": context_section,
            "n": n,
        },
    )
    response = gateway.complete(
        ChatRequest(
            system_text=_SYSTEM,
            user_text=prompt,
            temperature=GENERATION_TEMPERATURE,
            tag="hkma.synthesize",
        )
    )
    configs = parse_configurations(response.text, dataset, expected_arity="full").configs
    return HkmaOutcome(
        configs=configs,
        priors=priors,
        retrieved=retrieved,
        labels_used=labels_used,
    )
