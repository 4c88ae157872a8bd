"""Expert feedback sessions with pluggable reply transports.

A session accumulates an append-only belief state of provenance-tagged
constraint statements. Day 1 bootstraps beliefs from documentation and has
the expert validate them; every later iteration generates candidates from
the current beliefs, surfaces the most confusing failure (high self-assessed
confidence times high measured distance), asks the expert a single question,
and appends the reply verbatim. When iterations are exhausted the belief
state is frozen and the final prompt is replayed to produce one scored
trial per generation. Sessions that complete fewer feedback rounds than the
minimum are marked excluded but still produce trials.

Feedback transports are pluggable: a scripted list of replies, a simulated
expert that inspects the pool, or an interactive mailbox fed by the HTTP
API and the browser console.
"""

from __future__ import annotations

import logging
import queue
import re
import threading
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from .data_core import NUMERIC, Configuration, Dataset
from .errors import FeedbackTimeout
from .eval_metrics import (
    ScoredWarmStarts,
    TrialResult,
    diversity,
    pool_optimum,
    score_warm_starts,
    trial_result_from,
)
from .llm_gateway import (
    ANALYSIS_TEMPERATURE,
    GENERATION_TEMPERATURE,
    ChatRequest,
    Gateway,
    load_template,
    metadata_block,
    parse_configurations,
    render_prompt,
)

logger = logging.getLogger(__name__)

_SYSTEM = "You are a careful configuration optimization assistant."

PROVENANCE_LLM = "llm"
PROVENANCE_EXPERT = "expert"

STATUS_RUNNING = "running"
STATUS_AWAITING = "awaiting_feedback"
STATUS_FINALIZED = "finalized"
STATUS_EXCLUDED = "excluded"


@dataclass
class BeliefStatement:
    text: str
    provenance: str
    iteration: int

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("belief statements must be non-empty")


@dataclass
class BeliefState:
    statements: list[BeliefStatement] = field(default_factory=list)

    def append(self, text: str, provenance: str, iteration: int) -> None:
        self.statements.append(BeliefStatement(text, provenance, iteration))

    def rules_text(self) -> str:
        if not self.statements:
            return "(no rules yet)"
        return "\n".join(
            f"{i + 1}. [{s.provenance}] {s.text}"
            for i, s in enumerate(self.statements)
        )


@dataclass
class HdkpConfig:
    T: int = 10
    T_min: int = 5
    n_candidates: int = 4
    final_generations: int = 20
    feedback_timeout_s: float = 0.0  # interactive only; 0 waits forever

    def __post_init__(self) -> None:
        if not self.T >= self.T_min >= 1:
            raise ValueError("need T >= T_min >= 1")
        if self.n_candidates < 1 or self.final_generations < 1:
            raise ValueError("need positive candidate and generation counts")


@dataclass
class IterationRecord:
    iteration: int
    candidates: list[dict[str, float | str]]
    failure: dict[str, float | str]
    failure_chebyshev: float
    failure_score: float
    query: str
    reply: str
    min_chebyshev: float


@dataclass
class PendingQuery:
    iteration: int
    rules: list[str]
    question: str
    failure: dict | None = None  # features, chebyshev, predicted_score


@dataclass
class Session:
    id: str
    dataset_name: str
    T: int = 10
    T_min: int = 5
    t: int = 0  # 0 = not bootstrapped; 1 = beliefs initialized
    belief: BeliefState = field(default_factory=BeliefState)
    history: list[IterationRecord] = field(default_factory=list)
    status: str = STATUS_RUNNING
    pending: PendingQuery | None = None
    excluded: bool | None = None

    @property
    def completed_rounds(self) -> int:
        return len(self.history)

    def to_json_dict(self) -> dict:
        return {
            "kind": "session",
            "id": self.id,
            "dataset": self.dataset_name,
            "t": self.t,
            "T": self.T,
            "T_min": self.T_min,
            "status": self.status,
            "excluded": self.excluded,
            "completed_rounds": self.completed_rounds,
            "belief": [
                {"text": s.text, "provenance": s.provenance, "iteration": s.iteration}
                for s in self.belief.statements
            ],
            "history": [
                {
                    "iteration": r.iteration,
                    "query": r.query,
                    "reply": r.reply,
                    "min_chebyshev": r.min_chebyshev,
                }
                for r in self.history
            ],
        }


# -- feedback sources -----------------------------------------------------------

class FeedbackSource(Protocol):
    def review_bootstrap(self, statements: list[str]) -> str: ...

    def answer(self, pending: PendingQuery) -> str: ...


class ScriptedFeedback:
    """Replies served in order; exhaustion raises a timeout."""

    def __init__(self, replies: list[str], bootstrap_reply: str = "Valid: all"):
        self.replies = list(replies)
        self.bootstrap_reply = bootstrap_reply
        self._cursor = 0

    def review_bootstrap(self, statements: list[str]) -> str:
        return self.bootstrap_reply

    def answer(self, pending: PendingQuery) -> str:
        if self._cursor >= len(self.replies):
            raise FeedbackTimeout("scripted replies exhausted")
        reply = self.replies[self._cursor]
        self._cursor += 1
        return reply


def simulated_expert_reply(e_fail: Configuration, dataset: Dataset) -> str:
    """Test oracle standing in for the human expert.

    Finds the feature of the failing configuration that deviates most, in
    normalized terms, from the pool-optimum row and states the corrective
    direction. Ties go to the earliest feature.
    """
    best_idx, _ = pool_optimum(dataset)
    optimum = dataset.rows[best_idx]
    worst_name: str | None = None
    worst_dev = 0.0
    for pos, spec in enumerate(dataset.feature_specs):
        if spec.name not in e_fail.assignments:
            continue
        mine = e_fail.assignments[spec.name]
        target = optimum.features[pos]
        if spec.kind == NUMERIC:
            span = spec.hi - spec.lo
            dev = abs(float(mine) - float(target)) / span if span else 0.0
        else:
            dev = 0.0 if mine == target else 1.0
        if dev > worst_dev:
            worst_dev, worst_name = dev, spec.name
    if worst_name is None or worst_dev == 0.0:
        return "Rule: configuration is near-optimal; no correction"
    spec = dataset.feature(worst_name)
    pos = dataset.feature_index[worst_name]
    target = optimum.features[pos]
    if spec.kind == NUMERIC:
        direction = "higher" if float(target) > float(e_fail.assignments[worst_name]) else "lower"
        return f"Rule: {worst_name} should be {direction}"
    return f"Rule: {worst_name} should be equal to {target}"


class SimulatedExpert:
    """Feedback source wrapping :func:`simulated_expert_reply`."""

    def __init__(self, dataset: Dataset):
        self.dataset = dataset

    def review_bootstrap(self, statements: list[str]) -> str:
        return "Valid: all"

    def answer(self, pending: PendingQuery) -> str:
        if pending.failure is None:
            return "Valid: all"
        config = Configuration(dict(pending.failure["features"]))
        return simulated_expert_reply(config, self.dataset)


class InteractiveFeedback:
    """Mailbox-backed source; the HTTP API posts replies into it."""

    def __init__(self, timeout_s: float = 0.0):
        self.mailbox: "queue.Queue[str]" = queue.Queue(maxsize=1)
        self.timeout_s = timeout_s
        self.stop_event = threading.Event()

    def _wait(self) -> str:
        waited = 0.0
        step = 0.05
        while True:
            try:
                return self.mailbox.get(timeout=step)
            except queue.Empty:
                waited += step
                if self.stop_event.is_set():
                    raise FeedbackTimeout("session stopped while waiting") from None
                if self.timeout_s and waited >= self.timeout_s:
                    raise FeedbackTimeout("no reply before timeout") from None

    def review_bootstrap(self, statements: list[str]) -> str:
        return self._wait()

    def answer(self, pending: PendingQuery) -> str:
        return self._wait()


# -- bootstrap reply grammar -------------------------------------------------------

_VALID_LINE = re.compile(r"^\s*Valid\s*:\s*(.+)$", re.IGNORECASE | re.MULTILINE)
_INVALID_LINE = re.compile(r"^\s*Invalid\s*:\s*(.+)$", re.IGNORECASE | re.MULTILINE)
_MODIFY_LINE = re.compile(r"^\s*Modify\s*:\s*(.+)$", re.IGNORECASE | re.MULTILINE)


def _indices(text: str, upper: int) -> set[int]:
    out: set[int] = set()
    for token in re.split(r"[\s,;]+", text.strip()):
        if token.isdigit():
            i = int(token)
            if 1 <= i <= upper:
                out.add(i - 1)
    return out


def apply_bootstrap_review(
    statements: list[str], reply: str
) -> tuple[list[str], list[str]]:
    """Apply a Valid/Invalid/Modify review to proposed statements.

    Returns (kept statements, expert modifications). Statements are kept
    unless explicitly marked invalid; ``Modify:`` lines append expert text.
    """
    invalid: set[int] = set()
    for m in _INVALID_LINE.finditer(reply):
        invalid |= _indices(m.group(1), len(statements))
    kept = [s for i, s in enumerate(statements) if i not in invalid]
    modifications = [m.group(1).strip() for m in _MODIFY_LINE.finditer(reply)]
    return kept, modifications


# -- the session engine --------------------------------------------------------------

def bootstrap_beliefs(
    session: Session,
    dataset: Dataset,
    gateway: Gateway,
    feedback: FeedbackSource,
    docs_excerpt: str = "",
    prompts_dir: str | None = None,
    on_transition: Callable[[Session], None] | None = None,
) -> Session:
    """Day 1: propose constraints, have the expert review them."""
    template = load_template("hdkp_bootstrap", prompts_dir)
    prompt = render_prompt(
        template,
        {
            "metadata_json": metadata_block(dataset),
            "docs_excerpt": docs_excerpt or "(no documentation available)",
        },
    )
    response = gateway.complete(
        ChatRequest(
            system_text=_SYSTEM,
            user_text=prompt,
            temperature=ANALYSIS_TEMPERATURE,
            tag="hdkp.bootstrap",
        )
    )
    statements: list[str] = []
    from .llm_gateway import json_blocks

    for payload in json_blocks(response.text):
        if isinstance(payload, list) and all(isinstance(s, str) for s in payload):
            statements = [s for s in payload if s.strip()]
            break

    session.pending = PendingQuery(
        iteration=1,
        rules=list(statements),
        question="Verify these baseline constraints: mark each Valid, Invalid, or Modify.",
    )
    session.status = STATUS_AWAITING
    if on_transition:
        on_transition(session)
    try:
        reply = feedback.review_bootstrap(statements)
    except FeedbackTimeout:
        logger.warning("%s: bootstrap review timed out; keeping proposals", session.id)
        reply = "Valid: all"
    kept, modifications = apply_bootstrap_review(statements, reply)
    for text in kept:
        session.belief.append(text, PROVENANCE_LLM, iteration=1)
    for text in modifications:
        session.belief.append(text, PROVENANCE_EXPERT, iteration=1)
    session.t = 1
    session.pending = None
    session.status = STATUS_RUNNING
    if on_transition:
        on_transition(session)
    return session


def _generate_candidates(
    session: Session,
    dataset: Dataset,
    gateway: Gateway,
    cfg: HdkpConfig,
    tag: str,
    context_line: str,
    prompts_dir: str | None = None,
) -> tuple[list[Configuration], list[float | None]]:
    template = load_template("hdkp_generate", prompts_dir)
    prompt = render_prompt(
        template,
        {
            "context_line": context_line,
            "metadata_json": metadata_block(dataset),
            "rules_text": session.belief.rules_text(),
            "n": cfg.n_candidates,
        },
    )
    response = gateway.complete(
        ChatRequest(
            system_text=_SYSTEM,
            user_text=prompt,
            temperature=GENERATION_TEMPERATURE,
            tag=tag,
        )
    )
    parsed = parse_configurations(
        response.text, dataset, expected_arity="full", score_key="self_score"
    )
    return parsed.configs, parsed.scores


def select_confusing_failure(
    scored: ScoredWarmStarts, self_scores: list[float | None]
) -> int:
    """Index of the candidate maximizing self-confidence times distance.

    Missing self-assessments fall back to a uniform score, which reduces
    the product to an argmax over the measured distance.
    """
    if any(s is None for s in self_scores) or not self_scores:
        weights = [1.0] * len(scored.configs)
    else:
        weights = [min(1.0, max(0.0, float(s))) for s in self_scores]  # type: ignore[arg-type]
    products = [w * d for w, d in zip(weights, scored.chebyshev_values)]
    return max(range(len(products)), key=lambda i: (products[i], -i))


def run_iteration(
    session: Session,
    dataset: Dataset,
    gateway: Gateway,
    feedback: FeedbackSource,
    cfg: HdkpConfig,
    prompts_dir: str | None = None,
    on_transition: Callable[[Session], None] | None = None,
) -> Session:
    """One feedback round: generate, score, query the expert, append."""
    if session.status == STATUS_FINALIZED:
        raise ValueError("session is already finalized")
    iteration = session.t + 1
    configs, self_scores = _generate_candidates(
        session,
        dataset,
        gateway,
        cfg,
        tag="hdkp.generate",
        context_line=f"Session {session.id}, day {iteration} of {session.T}.",
        prompts_dir=prompts_dir,
    )
    scored = score_warm_starts(configs, dataset)
    fail_idx = select_confusing_failure(scored, self_scores)
    e_fail = scored.configs[fail_idx]
    fail_cheby = scored.chebyshev_values[fail_idx]
    fail_score = (
        float(self_scores[fail_idx]) if self_scores[fail_idx] is not None else 1.0
    )

    failure_lines = "\n".join(
        f"  {name} = {value}" for name, value in e_fail.assignments.items()
    )
    failure_text = (
        f"{failure_lines}\n  measured chebyshev distance: {fail_cheby:.4f}\n"
        f"  model's predicted quality: {fail_score:.2f}"
    )
    template = load_template("hdkp_query", prompts_dir)
    query = render_prompt(
        template,
        {"rules_text": session.belief.rules_text(), "failure_text": failure_text},
    )

    session.pending = PendingQuery(
        iteration=iteration,
        rules=[s.text for s in session.belief.statements],
        question="What domain rule is the model missing that explains this failure?",
        failure={
            "features": dict(e_fail.assignments),
            "chebyshev": fail_cheby,
            "predicted_score": fail_score,
        },
    )
    session.status = STATUS_AWAITING
    if on_transition:
        on_transition(session)

    try:
        reply = feedback.answer(session.pending)
    except FeedbackTimeout:
        # Frozen state: no belief change, no advance; the session can resume.
        logger.info("%s: no reply for iteration %d; state frozen", session.id, iteration)
        if on_transition:
            on_transition(session)
        raise

    session.belief.append(reply, PROVENANCE_EXPERT, iteration=iteration)
    session.history.append(
        IterationRecord(
            iteration=iteration,
            candidates=[dict(c.assignments) for c in scored.configs],
            failure=dict(e_fail.assignments),
            failure_chebyshev=fail_cheby,
            failure_score=fail_score,
            query=query,
            reply=reply,
            min_chebyshev=scored.min_chebyshev,
        )
    )
    session.t = iteration
    session.pending = None
    session.status = STATUS_RUNNING
    if on_transition:
        on_transition(session)
    return session


def finalize(
    session: Session,
    dataset: Dataset,
    gateway: Gateway,
    cfg: HdkpConfig,
    prompts_dir: str | None = None,
    on_transition: Callable[[Session], None] | None = None,
) -> tuple[list[TrialResult], bool]:
    """Freeze beliefs and replay the final prompt into scored trials."""
    excluded = session.completed_rounds < session.T_min
    trials: list[TrialResult] = []
    for trial_index in range(cfg.final_generations):
        elapsed_before = gateway.elapsed_ms
        configs, _ = _generate_candidates(
            session,
            dataset,
            gateway,
            cfg,
            tag="hdkp.final",
            context_line=(
                f"Session {session.id}, frozen knowledge, sampling attempt "
                f"{trial_index + 1} of {cfg.final_generations}."
            ),
            prompts_dir=prompts_dir,
        )
        scored = score_warm_starts(configs, dataset)
        trials.append(
            trial_result_from(
                method="hdkp",
                dataset=dataset,
                trial_index=trial_index,
                scored=scored,
                diversity_value=diversity(configs, dataset),
                tokens_in=0,  # filled by the runner from its ledger slice
                tokens_out=0,
                wall_ms=gateway.elapsed_ms - elapsed_before,
                labels_used=0,
            )
        )
    session.status = STATUS_EXCLUDED if excluded else STATUS_FINALIZED
    session.excluded = excluded
    if on_transition:
        on_transition(session)
    return trials, excluded


@dataclass
class SessionOutcome:
    session: Session
    trials: list[TrialResult]
    excluded: bool
    first_round_min: float | None

    @property
    def improvement(self) -> float | None:
        """First-round minimum minus the median of the finalize minimums."""
        if self.first_round_min is None or not self.trials:
            return None
        final_median = float(np.median([t.min_chebyshev for t in self.trials]))
        return self.first_round_min - final_median


def run_session(
    session: Session,
    dataset: Dataset,
    gateway: Gateway,
    feedback: FeedbackSource,
    cfg: HdkpConfig,
    docs_excerpt: str = "",
    prompts_dir: str | None = None,
    on_transition: Callable[[Session], None] | None = None,
) -> SessionOutcome:
    """Drive a session from bootstrap to finalization.

    A feedback timeout freezes the loop and proceeds to finalization with
    however many rounds completed; exclusion flagging handles the rest.
    """
    if session.t == 0:
        bootstrap_beliefs(
            session, dataset, gateway, feedback, docs_excerpt, prompts_dir, on_transition
        )
    while session.t < session.T:
        try:
            run_iteration(
                session, dataset, gateway, feedback, cfg, prompts_dir, on_transition
            )
        except FeedbackTimeout:
            break
    trials, excluded = finalize(
        session, dataset, gateway, cfg, prompts_dir, on_transition
    )
    first_round = session.history[0].min_chebyshev if session.history else None
    return SessionOutcome(
        session=session, trials=trials, excluded=excluded, first_round_min=first_round
    )
