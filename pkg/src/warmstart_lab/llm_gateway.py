"""Uniform LLM access: prompt templates, providers, response parsing.

Two providers ship with the lab. ``HttpProvider`` talks to any chat
completion endpoint over HTTPS. ``MockProvider`` replays a deterministic
script so every experiment is runnable offline; script entries match on the
call tag or a prompt substring and may carry canned text, synthetic token
counts, or (when built in Python) a callable that synthesizes the reply from
the request. ``default_mock_script`` wires up a stateless responder that
reads the machine-readable blocks embedded in every prompt and emits valid
configurations, which is what `provider: mock` uses when no script file is
given.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Protocol, Sequence

from .data_core import (
    NUMERIC,
    Configuration,
    Dataset,
    feature_metadata_summary,
)
from .errors import (
    AllCandidatesInvalid,
    EmptyResponse,
    GatewayError,
    MissingSlot,
    NoParsableBlock,
    ProviderUnreachable,
    RateLimited,
)
from .eval_metrics import CostEntry, CostLedger

logger = logging.getLogger(__name__)

API_KEY_ENV = "WSLAB_LLM_API_KEY"

GENERATION_TEMPERATURE = 0.7
ANALYSIS_TEMPERATURE = 0.0


@dataclass
class ChatRequest:
    system_text: str
    user_text: str
    temperature: float = GENERATION_TEMPERATURE
    max_output_tokens: int = 2048
    tag: str = ""

    def __post_init__(self) -> None:
        if not self.user_text:
            raise GatewayError("user_text must be non-empty")
        if not 0.0 <= self.temperature <= 2.0:
            raise GatewayError("temperature must lie in [0, 2]")


@dataclass
class ChatResponse:
    text: str
    tokens_in: int
    tokens_out: int
    provider: str
    latency_ms: int


class Provider(Protocol):
    name: str

    def complete(self, request: ChatRequest) -> ChatResponse: ...


# -- prompt templates ---------------------------------------------------------

_SLOT = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")
_PROMPTS_PKG_DIR = Path(__file__).parent / "prompts"


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    body: str


def load_template(name: str, prompts_dir: str | Path | None = None) -> PromptTemplate:
    """Load a template file, preferring an override directory when given."""
    filename = f"{name}.txt"
    if prompts_dir is not None:
        override = Path(prompts_dir) / filename
        if override.exists():
            return PromptTemplate(name, override.read_text(encoding="utf-8"))
    packaged = _PROMPTS_PKG_DIR / filename
    if not packaged.exists():
        raise GatewayError(f"no prompt template named {name!r}")
    return PromptTemplate(name, packaged.read_text(encoding="utf-8"))


def render_prompt(template: PromptTemplate, slots: Mapping[str, object]) -> str:
    """Substitute every ``{slot}`` marker; unknown slots are an error."""
    missing = sorted(
        {m for m in _SLOT.findall(template.body) if m not in slots}
    )
    if missing:
        raise MissingSlot(f"{template.name}: missing slot(s) {missing}")
    return _SLOT.sub(lambda m: str(slots[m.group(1)]), template.body)


# -- machine-readable prompt blocks -------------------------------------------

def fenced_json(payload: object) -> str:
    return "```json\n" + json.dumps(payload, indent=2) + "\n```"


def metadata_block(dataset: Dataset, subset: Sequence[str] | None = None) -> str:
    """Dataset schema as a fenced JSON object (features and objectives)."""
    names = list(subset) if subset is not None else list(dataset.feature_names)
    features = []
    for name in names:
        spec = dataset.feature(name)
        entry: dict[str, object] = {
            "name": spec.name,
            "kind": spec.kind,
            "median_or_mode": spec.median_or_mode,
        }
        if spec.kind == NUMERIC:
            entry["lo"], entry["hi"] = spec.lo, spec.hi
        else:
            entry["categories"] = list(spec.categories)
        features.append(entry)
    objectives = [
        {"name": s.name, "direction": s.direction, "lo": s.lo, "hi": s.hi}
        for s in dataset.objective_specs
    ]
    return fenced_json(
        {"dataset": dataset.name, "features": features, "objectives": objectives}
    )


def examples_block(
    examples: Sequence[tuple[Configuration, float, str]],
) -> str:
    """Labeled few-shot examples as a fenced JSON object."""
    payload = [
        {"label": label, "score": round(score, 6), "config": dict(cfg.assignments)}
        for cfg, score, label in examples
    ]
    return fenced_json({"examples": payload})


def anchors_block(anchors: Mapping[str, float | str]) -> str:
    return fenced_json({"anchors": dict(anchors)})


_FENCE = re.compile(r"```[a-zA-Z0-9_-]*\n(.*?)```", re.DOTALL)


def fenced_blocks(text: str) -> list[str]:
    return [m.group(1) for m in _FENCE.finditer(text)]


def json_blocks(text: str) -> list[object]:
    out = []
    for block in fenced_blocks(text):
        try:
            out.append(json.loads(block))
        except json.JSONDecodeError:
            continue
    return out


def find_block(text: str, key: str) -> object | None:
    """First fenced JSON object exposing ``key`` (metadata, examples, ...)."""
    for payload in json_blocks(text):
        if isinstance(payload, dict) and key in payload:
            return payload[key]
    return None


def first_array_block(text: str) -> list | None:
    for payload in json_blocks(text):
        if isinstance(payload, list):
            return payload
    return None


# -- structured response parsing ----------------------------------------------

@dataclass
class ParseResult:
    """Configurations recovered from a reply, plus repair accounting."""

    configs: list[Configuration]
    repairs: int = 0
    dropped: int = 0
    scores: list[float | None] = field(default_factory=list)


def _coerce_numeric(value: object) -> float | None:
    if isinstance(value, bool):
        return None
    if isinstance(value, (int, float)):
        v = float(value)
    else:
        try:
            v = float(str(value))
        except ValueError:
            return None
    return v if math.isfinite(v) else None


def parse_configurations(
    text: str,
    dataset: Dataset,
    expected_arity: str = "full",
    allowed: Sequence[str] | None = None,
    score_key: str | None = None,
) -> ParseResult:
    """Extract configurations from the first fenced JSON array in a reply.

    Objects are keyed by feature name (case-insensitive repairs allowed).
    Numeric values are clamped into the observed range; objects carrying an
    unknown symbolic category or an unparseable number are dropped. With
    ``expected_arity="full"`` any missing feature is filled from the column
    median or mode so downstream scoring stays total; ``"subset"`` leaves
    partial assignments alone. ``allowed`` restricts the admissible feature
    set (used by subspace prompting).
    """
    candidates = None
    for payload in json_blocks(text):
        if isinstance(payload, list) and all(isinstance(o, dict) for o in payload):
            candidates = payload
            break
    if candidates is None:
        raise NoParsableBlock("no fenced JSON array of objects in reply")

    allowed_names = list(allowed) if allowed is not None else list(dataset.feature_names)
    for name in allowed_names:
        dataset.feature(name)  # validates
    lower_map = {n.lower(): n for n in allowed_names}

    result = ParseResult(configs=[])
    for obj in candidates:
        score: float | None = None
        assignments: dict[str, float | str] = {}
        valid = True
        for key, value in obj.items():
            if score_key is not None and key == score_key:
                score = _coerce_numeric(value)
                continue
            name = key if key in lower_map.values() else lower_map.get(str(key).lower())
            if name is None:
                result.repairs += 1  # unknown key dropped
                continue
            if name != key:
                result.repairs += 1  # case repair
            spec = dataset.feature(name)
            if spec.kind == NUMERIC:
                v = _coerce_numeric(value)
                if v is None:
                    valid = False
                    break
                clamped = min(spec.hi, max(spec.lo, v))
                if clamped != v:
                    result.repairs += 1
                assignments.setdefault(name, clamped)
            else:
                sval = str(value)
                if sval not in spec.categories:
                    lowered = {c.lower(): c for c in spec.categories}
                    if sval.lower() in lowered:
                        sval = lowered[sval.lower()]
                        result.repairs += 1
                    else:
                        valid = False
                        break
                assignments.setdefault(name, sval)
        if not valid or not assignments:
            result.dropped += 1
            continue
        if expected_arity == "full":
            for name in allowed_names:
                if name not in assignments:
                    assignments[name] = dataset.feature(name).median_or_mode
                    result.repairs += 1
            ordered = {n: assignments[n] for n in allowed_names}
        else:
            ordered = {n: assignments[n] for n in allowed_names if n in assignments}
        result.configs.append(Configuration(ordered))
        result.scores.append(score)

    if not result.configs:
        raise AllCandidatesInvalid(
            f"none of {len(candidates)} candidate object(s) survived validation"
        )
    return result


# -- token estimation ----------------------------------------------------------

def estimate_tokens(text: str) -> int:
    """Cheap deterministic proxy: about four characters per token."""
    return max(1, (len(text) + 3) // 4)


# -- the scripted mock provider -------------------------------------------------

Behavior = Callable[[ChatRequest], str]


@dataclass
class MockEntry:
    tag: str | None = None
    contains: str | None = None
    text: str | None = None
    behavior: Behavior | None = None
    tokens_in: int | None = None
    tokens_out: int | None = None
    once: bool = False

    def matches(self, request: ChatRequest) -> bool:
        if self.tag is not None:
            if not (request.tag == self.tag or request.tag.startswith(self.tag + ".")):
                return False
        if self.contains is not None and self.contains not in request.user_text:
            return False
        return True


@dataclass
class MockScript:
    entries: list[MockEntry]

    @classmethod
    def from_file(cls, path: str | Path) -> "MockScript":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        entries = [
            MockEntry(
                tag=e.get("tag"),
                contains=e.get("contains"),
                text=e.get("text", ""),
                tokens_in=e.get("tokens_in"),
                tokens_out=e.get("tokens_out"),
                once=bool(e.get("once", False)),
            )
            for e in payload.get("entries", [])
        ]
        return cls(entries)

    def has_once_entries(self) -> bool:
        return any(e.once for e in self.entries)


class MockProvider:
    """Deterministic scripted provider; replaying a request sequence
    reproduces byte-identical responses and token counts."""

    name = "mock"

    def __init__(self, script: MockScript):
        self.script = script
        self.calls: list[tuple[ChatRequest, ChatResponse]] = []
        self._lock = threading.Lock()
        self._spent: set[int] = set()

    def complete(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            entry = None
            for i, candidate in enumerate(self.script.entries):
                if i in self._spent:
                    continue
                if candidate.matches(request):
                    entry = candidate
                    if candidate.once:
                        self._spent.add(i)
                    break
            if entry is None:
                raise EmptyResponse(f"mock script has no entry for tag {request.tag!r}")
            text = entry.behavior(request) if entry.behavior is not None else (entry.text or "")
            tokens_in = entry.tokens_in if entry.tokens_in is not None else estimate_tokens(
                request.system_text + request.user_text
            )
            tokens_out = (
                entry.tokens_out if entry.tokens_out is not None else estimate_tokens(text)
            )
            response = ChatResponse(
                text=text,
                tokens_in=tokens_in,
                tokens_out=tokens_out,
                provider=self.name,
                latency_ms=tokens_out,  # synthetic clock: one token per ms
            )
            self.calls.append((request, response))
            return response


# -- deterministic synthetic behaviors ------------------------------------------

_RULE = re.compile(
    r"Rule:\s*([A-Za-z_][A-Za-z0-9_]*)\s+should be\s+"
    r"(higher|lower|equal to\s+(\S+))",
    re.IGNORECASE,
)
_TREND = re.compile(
    r"\b(Higher|Lower)\s+([A-Za-z_][A-Za-z0-9_]*)\s+is associated", re.IGNORECASE
)
_SETTING = re.compile(
    r"\bSetting\s+([A-Za-z_][A-Za-z0-9_]*)\s+equal to\s+(\S+?)\s+is associated",
    re.IGNORECASE,
)
_NUM = r"-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?"
_BOUND = re.compile(
    rf"Keep\s+([A-Za-z_][A-Za-z0-9_]*)\s+between\s+({_NUM})\s+and\s+({_NUM})"
)
_COUNT = re.compile(r"exactly\s+(\d+)\s+configuration")


def _unit_hash(*parts: object) -> float:
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


def _directives(text: str) -> dict[str, tuple[str, str | None]]:
    """Feature directives recovered from rule and trend sentences.

    Later sentences win so corrected advice overrides stale advice.
    """
    found: dict[str, tuple[str, str | None]] = {}
    events: list[tuple[int, str, tuple[str, str | None]]] = []
    for m in _RULE.finditer(text):
        action = m.group(2).lower()
        if action.startswith("equal to"):
            events.append((m.start(), m.group(1), ("equal", m.group(3))))
        else:
            events.append((m.start(), m.group(1), (action, None)))
    for m in _TREND.finditer(text):
        events.append((m.start(), m.group(2), (m.group(1).lower(), None)))
    for m in _SETTING.finditer(text):
        events.append((m.start(), m.group(1), ("equal", m.group(2))))
    for m in _BOUND.finditer(text):
        events.append((m.start(), m.group(1), ("between", f"{m.group(2)},{m.group(3)}")))
    for _, name, directive in sorted(events, key=lambda e: e[0]):
        found[name] = directive
    return found


def _apply_directive(
    feature: dict, directive: tuple[str, str | None]
) -> float | str | None:
    action, arg = directive
    if feature["kind"] == NUMERIC:
        lo, hi = float(feature["lo"]), float(feature["hi"])
        if action == "higher":
            return hi
        if action == "lower":
            return lo
        if action == "equal" and arg is not None:
            try:
                return min(hi, max(lo, float(arg)))
            except ValueError:
                return None
        if action == "between" and arg is not None:
            a, b = (float(p) for p in arg.split(","))
            return min(hi, max(lo, (a + b) / 2.0))
        return None
    if action == "equal" and arg is not None:
        return arg if arg in feature.get("categories", []) else None
    return None


def _requested_count(text: str) -> int:
    m = _COUNT.search(text)
    return int(m.group(1)) if m else 4


def _best_example_config(text: str) -> dict | None:
    examples = find_block(text, "examples")
    if not isinstance(examples, list) or not examples:
        return None
    scored = [e for e in examples if isinstance(e, dict) and "config" in e]
    if not scored:
        return None
    best = min(scored, key=lambda e: (e.get("score", math.inf)))
    config = best.get("config")
    return dict(config) if isinstance(config, dict) else None


def generation_behavior(request: ChatRequest) -> str:
    """Synthesize a fenced JSON array of candidate configurations.

    Reads the metadata block for the admissible schema, starts from the best
    labeled example (or the medians), honors anchor pins and any directive
    sentences found in the prompt, and perturbs the remaining features with
    a hash of the prompt so distinct prompts yield distinct candidates.
    """
    features = find_block(request.user_text, "features")
    if not isinstance(features, list) or not features:
        return "I cannot see a dataset schema here."
    anchors = find_block(request.user_text, "anchors")
    anchors = dict(anchors) if isinstance(anchors, dict) else {}
    directives = _directives(request.user_text)
    base = _best_example_config(request.user_text) or {}
    n = _requested_count(request.user_text)
    want_score = "self_score" in request.user_text
    seed = hashlib.sha256(request.user_text.encode("utf-8")).hexdigest()

    candidates = []
    for j in range(n):
        obj: dict[str, object] = {}
        for feat in features:
            name = feat["name"]
            directed = None
            if name in directives:
                directed = _apply_directive(feat, directives[name])
            if directed is not None:
                obj[name] = directed
                continue
            if name in anchors:
                obj[name] = anchors[name]
                continue
            u = _unit_hash(seed, j, name)
            if feat["kind"] == NUMERIC:
                lo, hi = float(feat["lo"]), float(feat["hi"])
                start = base.get(name, feat.get("median_or_mode", (lo + hi) / 2.0))
                try:
                    start = float(start)
                except (TypeError, ValueError):
                    start = (lo + hi) / 2.0
                if j == 0:
                    value = start
                else:
                    value = start + (u - 0.5) * 0.7 * (hi - lo)
                obj[name] = round(min(hi, max(lo, value)), 6)
            else:
                cats = list(feat.get("categories", []))
                start = base.get(name, feat.get("median_or_mode"))
                if j > 0 and cats and u < 0.4:
                    obj[name] = cats[int(_unit_hash(seed, j, name, "cat") * len(cats)) % len(cats)]
                else:
                    obj[name] = start if start in cats else (cats[0] if cats else "")
        if want_score:
            obj["self_score"] = round(0.3 + 0.6 * _unit_hash(seed, j, "score"), 3)
        candidates.append(obj)
    return "Proposed configurations:\n" + fenced_json(candidates)


def analysis_behavior(request: ChatRequest) -> str:
    features = find_block(request.user_text, "features")
    names = [f["name"] for f in features] if isinstance(features, list) else []
    ranked = names[: min(4, len(names))]
    payload = {
        "ranked_features": ranked,
        "tradeoffs": ["The objectives pull in different directions near the extremes."],
        "directionality": {name: "unknown" for name in ranked},
    }
    return "Analysis:\n" + fenced_json(payload)


def constraints_behavior(request: ChatRequest) -> str:
    features = find_block(request.user_text, "features")
    hard: list[dict[str, object]] = []
    soft = ["Favor settings close to the best labeled example."]
    if isinstance(features, list):
        numeric = next((f for f in features if f.get("kind") == NUMERIC), None)
        symbolic = next((f for f in features if f.get("kind") != NUMERIC), None)
        if numeric is not None:
            hard.append(
                {"feature": numeric["name"], "op": "<=", "value": numeric["hi"]}
            )
        if symbolic is not None:
            hard.append(
                {
                    "feature": symbolic["name"],
                    "op": "in",
                    "values": list(symbolic.get("categories", [])),
                }
            )
    return "Constraints:\n" + fenced_json({"hard": hard, "soft": soft})


def echo_configs_behavior(request: ChatRequest) -> str:
    """Critic that returns the candidate list unchanged."""
    payload = first_array_block(request.user_text)
    return "Reviewed configurations:\n" + fenced_json(payload if payload is not None else [])


def bootstrap_behavior(request: ChatRequest) -> str:
    features = find_block(request.user_text, "features")
    objectives = find_block(request.user_text, "objectives")
    names = [f["name"] for f in features][:3] if isinstance(features, list) else []
    objective = objectives[0]["name"] if isinstance(objectives, list) and objectives else "the objective"
    statements = [
        f"{objective} depends strongly on {name}; tune {name} before the rest."
        for name in names
    ]
    return "Hypothesized constraints:\n" + fenced_json(statements)


def default_mock_script() -> MockScript:
    """Stateless responder covering every call tag the lab emits."""
    return MockScript(
        entries=[
            MockEntry(tag="amp.stage1", behavior=analysis_behavior),
            MockEntry(tag="amp.stage2", behavior=constraints_behavior),
            MockEntry(tag="amp.stage4", behavior=echo_configs_behavior),
            MockEntry(tag="hdkp.bootstrap", behavior=bootstrap_behavior),
            MockEntry(behavior=generation_behavior),
        ]
    )


# -- HTTP provider ---------------------------------------------------------------

class HttpProvider:
    """Chat-completion client for an OpenAI-style endpoint."""

    name = "http"

    def __init__(
        self,
        base_url: str,
        model: str,
        timeout_ms: int = 60_000,
        max_retries: int = 3,
        api_key: str | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.timeout_s = timeout_ms / 1000.0
        self.max_retries = max_retries
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")

    def complete(self, request: ChatRequest) -> ChatResponse:
        import requests

        payload = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": request.system_text},
                {"role": "user", "content": request.user_text},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"

        last_error: Exception | None = None
        rate_limited = False
        for attempt in range(self.max_retries):
            if attempt:
                time.sleep(0.5 * 2 ** (attempt - 1))
            started = time.monotonic()
            try:
                resp = requests.post(
                    f"{self.base_url}/chat/completions",
                    json=payload,
                    headers=headers,
                    timeout=self.timeout_s,
                )
            except requests.RequestException as exc:
                last_error = exc
                continue
            if resp.status_code == 429:
                rate_limited = True
                last_error = GatewayError("rate limited")
                continue
            if resp.status_code >= 500:
                last_error = GatewayError(f"server error {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise ProviderUnreachable(
                    f"{resp.status_code}: {resp.text[:200]}"
                )
            body = resp.json()
            text = body["choices"][0]["message"]["content"] or ""
            if not text.strip():
                raise EmptyResponse(f"empty completion for tag {request.tag!r}")
            usage = body.get("usage", {})
            return ChatResponse(
                text=text,
                tokens_in=int(usage.get("prompt_tokens", estimate_tokens(request.user_text))),
                tokens_out=int(usage.get("completion_tokens", estimate_tokens(text))),
                provider=self.name,
                latency_ms=int((time.monotonic() - started) * 1000),
            )
        if rate_limited:
            raise RateLimited(f"gave up after {self.max_retries} attempts") from last_error
        raise ProviderUnreachable(
            f"gave up after {self.max_retries} attempts"
        ) from last_error


def provider_from_config(config: Mapping[str, object]) -> Provider:
    """Build a provider from the JSON config surface.

    ``{"provider": "mock", "script": null}`` yields the default synthetic
    responder; a script path yields a file-driven mock. ``"http"`` requires
    ``base_url`` and ``model``.
    """
    kind = str(config.get("provider", "mock"))
    if kind == "mock":
        script_path = config.get("script")
        script = (
            MockScript.from_file(str(script_path)) if script_path else default_mock_script()
        )
        return MockProvider(script)
    if kind == "http":
        base_url = config.get("base_url")
        model = config.get("model")
        if not base_url or not model:
            raise GatewayError("http provider needs base_url and model")
        return HttpProvider(
            base_url=str(base_url),
            model=str(model),
            timeout_ms=int(config.get("timeout_ms", 60_000)),
        )
    raise GatewayError(f"unknown provider kind {kind!r}")


# -- the gateway -------------------------------------------------------------------

class Gateway:
    """Provider wrapper that funnels token counts into a cost ledger."""

    def __init__(
        self,
        provider: Provider,
        ledger: CostLedger | None = None,
        context: tuple[str, str, int] = ("", "", 0),
    ):
        self.provider = provider
        self.ledger = ledger
        self.context = context
        self.elapsed_ms = 0
        self.call_count = 0

    def complete(self, request: ChatRequest) -> ChatResponse:
        response = self.provider.complete(request)
        if not response.text.strip():
            raise EmptyResponse(f"empty completion for tag {request.tag!r}")
        self.call_count += 1
        self.elapsed_ms += response.latency_ms
        if self.ledger is not None:
            method, dataset, trial = self.context
            self.ledger.record(
                CostEntry(
                    method=method,
                    dataset=dataset,
                    trial=trial,
                    tag=request.tag,
                    tokens_in=response.tokens_in,
                    tokens_out=response.tokens_out,
                )
            )
        return response


def metadata_listing(dataset: Dataset) -> str:
    """Human-readable (name, kind, median) lines for prompt bodies."""
    lines = []
    for name, kind, med in feature_metadata_summary(dataset):
        med_text = f"{med}" if isinstance(med, str) else f"{med:g}"
        lines.append(f"- {name} ({kind}), median/mode: {med_text}")
    return "\n".join(lines)
