"""Staged prompting pipeline: analysis, constraint discovery, constrained
generation, and self-validation, with three ablation conditions (2-, 3-,
and 4-stage).

Hard constraints live in a machine-checkable comparator grammar so the
final guarantee does not depend on model behavior: whatever the model does,
outputs of the 3- and 4-stage conditions are mechanically projected onto
the hard-constraint set before they leave this module.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .data_core import (
    NUMERIC,
    Configuration,
    Dataset,
    make_configuration,
)
from .errors import UnparsableAnalysis
from .llm_gateway import (
    ANALYSIS_TEMPERATURE,
    GENERATION_TEMPERATURE,
    ChatRequest,
    Gateway,
    ParseResult,
    examples_block,
    fenced_json,
    find_block,
    load_template,
    metadata_block,
    parse_configurations,
    render_prompt,
)

logger = logging.getLogger(__name__)

CONDITIONS = ("amp2", "amp3", "amp4")
_OPS = ("<", "<=", "=", ">=", ">", "in")

_SYSTEM = "You are a careful configuration optimization assistant."


@dataclass
class AnalysisReport:
    ranked_features: list[str]
    tradeoffs: list[str]
    directionality: dict[str, str]


@dataclass
class HardConstraint:
    feature: str
    op: str
    value: float | str | None = None
    ref: str | None = None
    values: tuple[str, ...] = ()

    def render(self) -> str:
        if self.op == "in":
            return f"{self.feature} in [{', '.join(self.values)}]"
        bound = self.ref if self.ref is not None else self.value
        if isinstance(bound, float):
            bound = f"{bound:g}"
        return f"{self.feature} {self.op} {bound}"


@dataclass
class ConstraintSet:
    hard: list[HardConstraint] = field(default_factory=list)
    soft: list[str] = field(default_factory=list)
    demoted: int = 0

    def rulebook(self) -> str:
        if not self.hard:
            return "(no hard constraints)"
        return "\n".join(f"- {c.render()}" for c in self.hard)


@dataclass
class AmpOutcome:
    configs: list[Configuration]
    report: AnalysisReport
    constraints: ConstraintSet | None
    completions: int
    repairs: int


def _match_feature(dataset: Dataset, name: object) -> str | None:
    text = str(name)
    if text in dataset.feature_index:
        return text
    lowered = {n.lower(): n for n in dataset.feature_names}
    return lowered.get(text.lower())


def _parse_analysis(text: str, dataset: Dataset) -> AnalysisReport | None:
    ranked_raw = find_block(text, "ranked_features")
    if not isinstance(ranked_raw, list):
        return None
    ranked: list[str] = []
    for item in ranked_raw:
        name = _match_feature(dataset, item)
        if name is not None and name not in ranked:
            ranked.append(name)
    ranked = ranked[:5]
    minimum = min(3, len(dataset.feature_names))
    if len(ranked) < minimum:
        return None
    tradeoffs_raw = find_block(text, "tradeoffs")
    tradeoffs = [str(t) for t in tradeoffs_raw] if isinstance(tradeoffs_raw, list) else []
    direction_raw = find_block(text, "directionality")
    directionality: dict[str, str] = {}
    if isinstance(direction_raw, dict):
        for key, val in direction_raw.items():
            name = _match_feature(dataset, key)
            if name is None:
                continue
            value = str(val)
            directionality[name] = (
                value if value in ("increase", "decrease", "nonmonotone", "unknown") else "unknown"
            )
    for name in ranked:
        directionality.setdefault(name, "unknown")
    return AnalysisReport(ranked, tradeoffs, directionality)


def stage_analysis(
    dataset: Dataset,
    few_shot: list[tuple[Configuration, float, str]],
    gateway: Gateway,
    prompts_dir: str | None = None,
) -> AnalysisReport:
    """One analysis completion at temperature 0, with a single retry."""
    template = load_template("amp_stage1", prompts_dir)
    prompt = render_prompt(
        template,
        {
            "metadata_json": metadata_block(dataset),
            "examples_json": examples_block(few_shot),
        },
    )
    request = ChatRequest(
        system_text=_SYSTEM,
        user_text=prompt,
        temperature=ANALYSIS_TEMPERATURE,
        tag="amp.stage1",
    )
    for _ in range(2):
        response = gateway.complete(request)
        report = _parse_analysis(response.text, dataset)
        if report is not None:
            return report
    raise UnparsableAnalysis("analysis reply unusable after one retry")


def _parse_hard(item: object, dataset: Dataset) -> HardConstraint | None:
    if not isinstance(item, dict):
        return None
    feature = _match_feature(dataset, item.get("feature"))
    op = str(item.get("op", ""))
    if feature is None or op not in _OPS:
        return None
    spec = dataset.feature(feature)
    if op == "in":
        raw = item.get("values")
        if not isinstance(raw, list) or spec.kind == NUMERIC:
            return None
        kept = tuple(str(v) for v in raw if str(v) in spec.categories)
        return HardConstraint(feature, "in", values=kept) if kept else None
    if "ref" in item and item.get("ref") is not None:
        ref = _match_feature(dataset, item.get("ref"))
        if ref is None or dataset.feature(ref).kind != NUMERIC or spec.kind != NUMERIC:
            return None
        return HardConstraint(feature, op, ref=ref)
    value = item.get("value")
    if spec.kind == NUMERIC:
        try:
            bound = float(value)  # type: ignore[arg-type]
        except (TypeError, ValueError):
            return None
        if not math.isfinite(bound):
            return None
        return HardConstraint(feature, op, value=min(spec.hi, max(spec.lo, bound)))
    if op == "=" and str(value) in spec.categories:
        return HardConstraint(feature, "=", value=str(value))
    return None


def stage_constraints(
    report: AnalysisReport,
    dataset: Dataset,
    gateway: Gateway,
    prompts_dir: str | None = None,
) -> ConstraintSet:
    """Parse the rulebook; anything outside the grammar is demoted to soft."""
    template = load_template("amp_stage2", prompts_dir)
    prompt = render_prompt(
        template,
        {
            "metadata_json": metadata_block(dataset),
            "analysis_json": fenced_json(
                {
                    "ranked_features": report.ranked_features,
                    "tradeoffs": report.tradeoffs,
                    "directionality": report.directionality,
                }
            ),
        },
    )
    response = gateway.complete(
        ChatRequest(
            system_text=_SYSTEM,
            user_text=prompt,
            temperature=ANALYSIS_TEMPERATURE,
            tag="amp.stage2",
        )
    )
    out = ConstraintSet()
    hard_raw = find_block(response.text, "hard")
    soft_raw = find_block(response.text, "soft")
    if isinstance(soft_raw, list):
        out.soft.extend(str(s) for s in soft_raw)
    if isinstance(hard_raw, list):
        for item in hard_raw:
            parsed = _parse_hard(item, dataset)
            if parsed is None:
                out.soft.append(f"(unenforceable) {json.dumps(item, default=str)}")
                out.demoted += 1
                logger.warning("demoted unparseable hard rule: %r", item)
            else:
                out.hard.append(parsed)
    return out


def check_hard(config: Configuration, constraints: ConstraintSet) -> list[HardConstraint]:
    """Hard predicates the configuration currently violates."""
    violated = []
    for c in constraints.hard:
        value = config.assignments.get(c.feature)
        if value is None:
            continue
        if c.op == "in":
            ok = str(value) in c.values
        elif c.ref is not None:
            other = config.assignments.get(c.ref)
            if other is None:
                continue
            ok = _compare(float(value), c.op, float(other))
        elif isinstance(c.value, str):
            ok = str(value) == c.value
        else:
            ok = _compare(float(value), c.op, float(c.value))  # type: ignore[arg-type]
        if not ok:
            violated.append(c)
    return violated


def _compare(a: float, op: str, b: float) -> bool:
    return {
        "<": a < b,
        "<=": a <= b,
        "=": a == b,
        ">=": a >= b,
        ">": a > b,
    }[op]


def _project_value(spec_lo: float, spec_hi: float, op: str, bound: float) -> float:
    eps = max(1e-9, 1e-9 * (spec_hi - spec_lo))
    if op == "<":
        return max(spec_lo, bound - eps)
    if op == "<=":
        return bound
    if op == "=":
        return bound
    if op == ">=":
        return bound
    return min(spec_hi, bound + eps)  # ">"


def enforce_hard(
    config: Configuration, constraints: ConstraintSet, dataset: Dataset
) -> tuple[Configuration, int]:
    """Mechanically project a configuration onto the hard-constraint set.

    Iterates to a fixpoint so reference chains settle; contradictory rule
    sets (which only a hostile model can produce) are demoted rather than
    looped on forever. Returns the repaired configuration plus the number
    of values changed.
    """
    assignments = dict(config.assignments)
    changed = 0
    for _ in range(5):
        violations = check_hard(Configuration(assignments), constraints)
        if not violations:
            return make_configuration(dataset, assignments), changed
        for c in violations:
            if c.feature not in assignments:
                continue
            spec = dataset.feature(c.feature)
            if c.op == "in":
                assignments[c.feature] = c.values[0]
            elif isinstance(c.value, str):
                assignments[c.feature] = c.value
            else:
                bound = (
                    float(assignments[c.ref])
                    if c.ref is not None
                    else float(c.value)  # type: ignore[arg-type]
                )
                projected = _project_value(spec.lo, spec.hi, c.op, bound)
                assignments[c.feature] = min(spec.hi, max(spec.lo, projected))
            changed += 1
    leftovers = check_hard(Configuration(assignments), constraints)
    if leftovers:
        logger.warning("demoting %d contradictory hard rule(s)", len(leftovers))
        constraints.hard = [c for c in constraints.hard if c not in leftovers]
        constraints.demoted += len(leftovers)
        constraints.soft.extend(f"(contradictory) {c.render()}" for c in leftovers)
    return make_configuration(dataset, assignments), changed


def stage_generate(
    dataset: Dataset,
    few_shot: list[tuple[Configuration, float, str]],
    gateway: Gateway,
    n: int,
    report: AnalysisReport,
    constraints: ConstraintSet | None = None,
    prompts_dir: str | None = None,
) -> ParseResult:
    template = load_template("amp_stage3", prompts_dir)
    if constraints is not None:
        section = (
            "\nHARD CONSTRAINTS (strict, never violate)\n"
            + constraints.rulebook()
            + "\n"
        )
        if constraints.soft:
            section += "\nSOFT PREFERENCES\n" + "\n".join(f"- {s}" for s in constraints.soft) + "\n"
        adherence = " while strictly adhering to every hard constraint"
    else:
        section = ""
        adherence = ""
    prompt = render_prompt(
        template,
        {
            "metadata_json": metadata_block(dataset),
            "examples_json": examples_block(few_shot),
            "ranked_features": "\n".join(f"- {f}" for f in report.ranked_features),
            "constraints_section": section,
            "adherence_clause": adherence,
            "n": n,
        },
    )
    response = gateway.complete(
        ChatRequest(
            system_text=_SYSTEM,
            user_text=prompt,
            temperature=GENERATION_TEMPERATURE,
            tag="amp.stage3",
        )
    )
    return parse_configurations(response.text, dataset, expected_arity="full")


def stage_validate(
    configs: list[Configuration],
    constraints: ConstraintSet,
    dataset: Dataset,
    gateway: Gateway,
    prompts_dir: str | None = None,
) -> list[Configuration]:
    """Critic pass plus mechanical cleanup; the result always satisfies the
    hard predicates regardless of what the model replies."""
    violations: list[str] = []
    for i, config in enumerate(configs):
        for c in check_hard(config, constraints):
            violations.append(f"candidate {i}: violates {c.render()}")
    template = load_template("amp_stage4", prompts_dir)
    violations_section = (
        "DETECTED VIOLATIONS\n" + "\n".join(f"- {v}" for v in violations) + "\n"
        if violations
        else "No violations were detected mechanically; double-check anyway.\n"
    )
    prompt = render_prompt(
        template,
        {
            "configs_json": fenced_json([dict(c.assignments) for c in configs]),
            "rulebook": constraints.rulebook(),
            "violations_section": violations_section,
        },
    )
    response = gateway.complete(
        ChatRequest(
            system_text=_SYSTEM,
            user_text=prompt,
            temperature=ANALYSIS_TEMPERATURE,
            tag="amp.stage4",
        )
    )
    revised = configs
    try:
        parsed = parse_configurations(response.text, dataset, expected_arity="full")
        if len(parsed.configs) == len(configs):
            revised = parsed.configs
    except Exception:  # keep originals when the critic rambles
        logger.warning("critic reply unusable; falling back to mechanical repair")
    return [enforce_hard(c, constraints, dataset)[0] for c in revised]


def run_amp(
    dataset: Dataset,
    condition: str,
    rng: np.random.Generator,
    gateway: Gateway,
    n: int = 4,
    n_examples: int = 4,
    prompts_dir: str | None = None,
) -> AmpOutcome:
    """Execute exactly the stages of the requested ablation condition."""
    if condition not in CONDITIONS:
        raise ValueError(f"unknown condition {condition!r}")
    from .baselines import draw_few_shot

    few_shot_idx = draw_few_shot(dataset, rng, n_examples)
    few_shot = [
        (dataset.config_from_row(i), score, f"example {k}")
        for k, (i, score) in enumerate(few_shot_idx)
    ]
    completions_before = gateway.call_count

    report = stage_analysis(dataset, few_shot, gateway, prompts_dir)
    constraints: ConstraintSet | None = None
    if condition in ("amp3", "amp4"):
        constraints = stage_constraints(report, dataset, gateway, prompts_dir)
    parsed = stage_generate(
        dataset, few_shot, gateway, n, report, constraints, prompts_dir
    )
    configs = parsed.configs
    if condition == "amp4":
        assert constraints is not None
        configs = stage_validate(configs, constraints, dataset, gateway, prompts_dir)
    elif condition == "amp3":
        assert constraints is not None
        configs = [enforce_hard(c, constraints, dataset)[0] for c in configs]
    return AmpOutcome(
        configs=configs,
        report=report,
        constraints=constraints,
        completions=gateway.call_count - completions_before,
        repairs=parsed.repairs,
    )
