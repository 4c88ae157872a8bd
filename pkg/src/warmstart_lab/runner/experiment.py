"""Trial scheduling and the append-only JSONL result store.

Every (method, dataset, trial) gets its own seed derived from the master
seed, so results do not depend on execution order or parallelism. Records
are written sorted by (dataset, method, trial); rerunning an identical
config against the mock provider reproduces the store byte for byte.
Failures become error records instead of aborting the sweep.

Wall time per trial is the sum of provider-reported latencies, which the
mock derives deterministically from its synthetic token counts; real
providers report measured latency.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..amp import run_amp
from ..baselines import UcbConfig, bs_llm_warm_start, gp_ucb_warm_start, random_warm_start
from ..data_core import Configuration, Dataset
from ..errors import ConfigInvalid
from ..eval_metrics import CostLedger, diversity, score_warm_starts, trial_result_from
from ..dapr import DaprConfig, run_dapr
from ..hdkp import HdkpConfig, ScriptedFeedback, Session, SimulatedExpert, run_session
from ..hkma import DocIndex, HkmaConfig, build_index, run_hkma
from ..llm_gateway import Gateway, MockProvider, Provider, provider_from_config
from .config import ExperimentConfig, derive_seed, resolve_output_dir

logger = logging.getLogger(__name__)


@dataclass
class RunSummary:
    store_path: Path
    trial_count: int
    error_count: int
    tokens_in: int
    tokens_out: int


def _trial_outcome(
    method: str,
    dataset: Dataset,
    rng: np.random.Generator,
    gateway: Gateway,
    config: ExperimentConfig,
    index: DocIndex | None,
) -> tuple[list[Configuration], int, list[dict]]:
    """Dispatch one method; returns (configs, labels_used, extra records)."""
    n = config.n_warm_starts
    if method == "random":
        return random_warm_start(dataset, n, rng), 0, []
    if method == "ucb_gpm":
        ucb = UcbConfig(**config.ucb) if config.ucb else UcbConfig()
        return gp_ucb_warm_start(dataset, ucb, rng), ucb.budget, []
    if method == "bs_llm":
        configs = bs_llm_warm_start(
            dataset, gateway, rng, n=n, prompts_dir=config.prompts_dir
        )
        return configs, 0, []
    if method in ("amp2", "amp3", "amp4"):
        outcome = run_amp(
            dataset, method, rng, gateway, n=n, prompts_dir=config.prompts_dir
        )
        return outcome.configs, 0, []
    if method == "dapr":
        dapr_cfg = DaprConfig(**config.dapr) if config.dapr else DaprConfig()
        outcome = run_dapr(
            dataset, dapr_cfg, rng, gateway, n=n, prompts_dir=config.prompts_dir
        )
        extra = [
            {
                "kind": "dapr_trace",
                "method": method,
                "dataset": dataset.name,
                "trial_index": gateway.context[2],
                "trace": outcome.trace,
            }
        ]
        return outcome.configs, outcome.labels_used, extra
    if method in ("hkma_scout", "hkma_rag", "hkma_both"):
        mode = {"hkma_scout": "scout_only", "hkma_rag": "rag_only", "hkma_both": "both"}[
            method
        ]
        hkma_cfg = HkmaConfig(mode=mode, **config.hkma) if config.hkma else HkmaConfig(mode=mode)
        outcome = run_hkma(
            dataset,
            hkma_cfg,
            rng,
            gateway,
            n=n,
            index=index,
            prompts_dir=config.prompts_dir,
        )
        return outcome.configs, outcome.labels_used, []
    raise ConfigInvalid(f"unknown method {method!r}")


def _run_one_trial(
    method: str,
    dataset: Dataset,
    trial: int,
    config: ExperimentConfig,
    provider: Provider,
    index: DocIndex | None,
) -> list[dict]:
    seed = derive_seed(config.master_seed, method, dataset.name, trial)
    rng = np.random.default_rng(seed)
    ledger = CostLedger()
    gateway = Gateway(provider, ledger, context=(method, dataset.name, trial))
    try:
        configs, labels_used, extra = _trial_outcome(
            method, dataset, rng, gateway, config, index
        )
        scored = score_warm_starts(configs, dataset)
        tokens_in, tokens_out = ledger.totals()
        result = trial_result_from(
            method=method,
            dataset=dataset,
            trial_index=trial,
            scored=scored,
            diversity_value=diversity(configs, dataset),
            tokens_in=tokens_in,
            tokens_out=tokens_out,
            wall_ms=gateway.elapsed_ms,
            labels_used=labels_used,
        )
        records = [result.to_json_dict()] + extra
    except Exception as exc:  # error record, sweep continues
        logger.warning("%s/%s trial %d failed: %s", method, dataset.name, trial, exc)
        records = [
            {
                "kind": "error",
                "method": method,
                "dataset": dataset.name,
                "trial_index": trial,
                "error": type(exc).__name__,
                "message": str(exc),
            }
        ]
    for entry in ledger.entries:
        records.append(
            {
                "kind": "cost",
                "method": entry.method,
                "dataset": entry.dataset,
                "trial_index": entry.trial,
                "tag": entry.tag,
                "tokens_in": entry.tokens_in,
                "tokens_out": entry.tokens_out,
            }
        )
    return records


def _run_hdkp(
    dataset: Dataset,
    config: ExperimentConfig,
    provider: Provider,
    docs_excerpt: str,
    state_dir: Path | None = None,
) -> list[dict]:
    params = dict(config.hdkp)
    feedback_kind = params.pop("feedback", "simulated")
    replies_file = params.pop("replies", None)
    hdkp_cfg = HdkpConfig(**params) if params else HdkpConfig()
    if feedback_kind == "scripted":
        if not replies_file:
            raise ConfigInvalid("scripted hdkp feedback needs a replies file")
        replies_path = Path(replies_file)
        if not replies_path.is_absolute():
            replies_path = config.config_dir / replies_path
        replies = [
            line for line in replies_path.read_text(encoding="utf-8").splitlines() if line
        ]
        feedback = ScriptedFeedback(replies)
    elif feedback_kind == "simulated":
        feedback = SimulatedExpert(dataset)
    else:
        raise ConfigInvalid(
            f"hdkp feedback must be scripted or simulated in batch runs, not {feedback_kind!r}"
        )

    ledger = CostLedger()
    gateway = Gateway(provider, ledger, context=("hdkp", dataset.name, 0))
    nonce = derive_seed(config.master_seed, "hdkp", dataset.name) % 100_000
    session = Session(
        id=f"hdkp-{dataset.name}-{nonce}",
        dataset_name=dataset.name,
        T=hdkp_cfg.T,
        T_min=hdkp_cfg.T_min,
    )
    persist = None
    if state_dir is not None:
        state_dir.mkdir(parents=True, exist_ok=True)

        def persist(s):  # crash-resumable snapshot after each transition
            (state_dir / f"{s.id}.json").write_text(
                json.dumps(s.to_json_dict(), indent=2) + "\n", encoding="utf-8"
            )

    outcome = run_session(
        session,
        dataset,
        gateway,
        feedback,
        hdkp_cfg,
        docs_excerpt=docs_excerpt,
        prompts_dir=config.prompts_dir,
        on_transition=persist,
    )
    records: list[dict] = []
    session_record = outcome.session.to_json_dict()
    session_record["improvement"] = outcome.improvement
    records.append(session_record)
    tokens_in, tokens_out = ledger.totals()
    for trial in outcome.trials:
        # Token cost for the whole session is attributed to trial 0 so the
        # ledger cross-check stays exact.
        if trial.trial_index == 0:
            trial.tokens_in, trial.tokens_out = tokens_in, tokens_out
        records.append(trial.to_json_dict())
    for entry in ledger.entries:
        records.append(
            {
                "kind": "cost",
                "method": entry.method,
                "dataset": entry.dataset,
                "trial_index": entry.trial,
                "tag": entry.tag,
                "tokens_in": entry.tokens_in,
                "tokens_out": entry.tokens_out,
            }
        )
    return records


def _corpus_excerpt(corpus_root: Path | None, dataset: Dataset) -> str:
    if corpus_root is None:
        return ""
    docs_dir = corpus_root / dataset.name
    if not docs_dir.is_dir():
        return ""
    pieces = []
    for path in sorted(docs_dir.rglob("*")):
        if path.suffix in (".md", ".txt") and path.is_file():
            pieces.append(path.read_text(encoding="utf-8"))
    text = "\n\n".join(pieces)
    words = text.split()
    return " ".join(words[:800])


def run_experiment(config: ExperimentConfig) -> RunSummary:
    """Execute the full sweep and write the result store."""
    config.validate()
    datasets = config.load_datasets()
    if not datasets:
        raise ConfigInvalid("dataset manifest resolved to zero datasets")
    provider = provider_from_config(config.provider)
    workers = config.workers
    if isinstance(provider, MockProvider) and provider.script.has_once_entries() and workers > 1:
        logger.warning("mock script has once-entries; forcing workers=1 for determinism")
        workers = 1

    corpus_root = config.corpus_path()
    needs_corpus = any(m in ("hkma_rag", "hkma_both") for m in config.methods)
    indexes: dict[str, DocIndex | None] = {}
    if needs_corpus:
        for dataset in datasets:
            if corpus_root is not None and (corpus_root / dataset.name).is_dir():
                indexes[dataset.name] = build_index(corpus_root / dataset.name)
            else:
                logger.warning("no corpus for %s; retrieval will be empty", dataset.name)
                indexes[dataset.name] = DocIndex(chunks=[])

    out_dir = resolve_output_dir(config)
    jobs: list[tuple[int, int, int]] = []  # (dataset idx, method idx, trial)
    for d_idx, dataset in enumerate(datasets):
        for m_idx, method in enumerate(config.methods):
            if method == "hdkp":
                jobs.append((d_idx, m_idx, -1))
            else:
                jobs.extend((d_idx, m_idx, t) for t in range(config.trials))

    def execute(job: tuple[int, int, int]) -> list[dict]:
        d_idx, m_idx, trial = job
        dataset = datasets[d_idx]
        method = config.methods[m_idx]
        if trial < 0:
            try:
                return _run_hdkp(
                    dataset,
                    config,
                    provider,
                    _corpus_excerpt(corpus_root, dataset),
                    state_dir=out_dir / "sessions",
                )
            except Exception as exc:
                logger.warning("hdkp session on %s failed: %s", dataset.name, exc)
                return [
                    {
                        "kind": "error",
                        "method": method,
                        "dataset": dataset.name,
                        "trial_index": 0,
                        "error": type(exc).__name__,
                        "message": str(exc),
                    }
                ]
        return _run_one_trial(
            method, dataset, trial, config, provider, indexes.get(dataset.name)
        )

    results: dict[tuple[int, int, int], list[dict]] = {}
    if workers == 1:
        for job in jobs:
            results[job] = execute(job)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for job, records in zip(jobs, pool.map(execute, jobs)):
                results[job] = records

    store_path = out_dir / "results.jsonl"
    trial_count = error_count = 0
    tokens_in = tokens_out = 0
    dataset_lines = [
        {
            "kind": "dataset",
            "name": d.name,
            "tier": d.tier,
            "n_features": len(d.feature_specs),
            "n_objectives": len(d.objective_specs),
            "n_rows": len(d.rows),
            "warnings": list(d.warnings),
        }
        for d in datasets
    ]
    with store_path.open("w", encoding="utf-8") as fh:
        for line in dataset_lines:
            fh.write(json.dumps(line) + "\n")
        for job in sorted(results):
            for record in results[job]:
                if record["kind"] == "trial":
                    trial_count += 1
                    tokens_in += record["tokens_in"]
                    tokens_out += record["tokens_out"]
                elif record["kind"] == "error":
                    error_count += 1
                fh.write(json.dumps(record) + "\n")

    (out_dir / "run_config.json").write_text(
        json.dumps(config.to_json_dict(), indent=2) + "\n", encoding="utf-8"
    )
    logger.info(
        "wrote %d trial record(s), %d error(s) to %s", trial_count, error_count, store_path
    )
    return RunSummary(
        store_path=store_path,
        trial_count=trial_count,
        error_count=error_count,
        tokens_in=tokens_in,
        tokens_out=tokens_out,
    )


def read_store(path: str | Path) -> list[dict]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [json.loads(line) for line in lines if line.strip()]
