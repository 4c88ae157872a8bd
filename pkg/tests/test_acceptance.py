"""Acceptance gate: one test per release criterion, each printing a
PASS/FAIL line at its stated tolerance and runtime budget. Run with
``pytest tests/test_acceptance.py -v -s`` to see the per-criterion lines.
"""

from __future__ import annotations

import contextlib
import time

import numpy as np
import pytest

from warmstart_lab.amp import check_hard, run_amp
from warmstart_lab.baselines import GpModel
from warmstart_lab.dapr import DaprConfig, run_dapr
from warmstart_lab.data_core import load_dataset, load_manifest
from warmstart_lab.eval_metrics import pool_optimum, row_chebyshev, score_warm_starts
from warmstart_lab.hdkp import HdkpConfig, Session, SimulatedExpert, run_session
from warmstart_lab.hkma import HkmaConfig, tpe_scout
from warmstart_lab.llm_gateway import (
    Gateway,
    MockEntry,
    MockProvider,
    MockScript,
    fenced_json,
)
from warmstart_lab.runner.config import BUILTIN_MANIFEST, ExperimentConfig
from warmstart_lab.runner.experiment import read_store, run_experiment
from warmstart_lab.runner.report import build_report
from warmstart_lab.stat_rank import (
    GroupSummary,
    TreatmentSample,
    b0,
    best_split,
    cliffs_delta,
    effect_label,
    scott_knott,
)

from conftest import default_provider, grid_pool, synthetic_wide
from test_amp import random_constraints
from test_dapr import pool_best_provider
from test_eval_metrics import brute_force_chebyshev
from test_stat_rank import brute_delta, exhaustive_best_cut


@contextlib.contextmanager
def criterion(name: str):
    started = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {name}: FAIL ({time.perf_counter() - started:.2f}s)")
        raise
    print(f"ACCEPTANCE {name}: PASS ({time.perf_counter() - started:.2f}s)")


def bundled_datasets():
    return [load_dataset(path, name) for path, name in load_manifest(BUILTIN_MANIFEST)]


def test_metric_oracle():
    with criterion("metric-oracle"):
        started = time.perf_counter()
        for ds in bundled_datasets():
            assert len(ds.rows) <= 200
            for row in ds.rows:
                assert abs(row_chebyshev(row, ds) - brute_force_chebyshev(row, ds)) <= 1e-12
            best_idx, best_val = pool_optimum(ds)
            provider = MockProvider(
                MockScript(
                    [
                        MockEntry(
                            text=fenced_json(
                                [dict(ds.config_from_row(best_idx).assignments)]
                            )
                        )
                    ]
                )
            )
            from warmstart_lab.baselines import bs_llm_warm_start

            configs = bs_llm_warm_start(ds, Gateway(provider), np.random.default_rng(0))
            scored = score_warm_starts(configs, ds)
            assert abs(scored.min_chebyshev - best_val) <= 1e-12
        assert time.perf_counter() - started < 1.0


def test_between_group_sum_of_squares():
    with criterion("b0-and-best-split"):
        left = GroupSummary(T=4 + 6, N=2)
        right = GroupSummary(T=9 + 11, N=2)
        assert abs(b0(left, right) - 25.0) <= 1e-9
        rng = np.random.default_rng(17)
        for _ in range(50):
            treatments = sorted(
                (
                    TreatmentSample(
                        f"t{k}",
                        tuple(rng.uniform(0, 1, size=int(rng.integers(2, 9)))),
                    )
                    for k in range(4)
                ),
                key=lambda t: t.median,
            )
            cut, value = best_split(treatments)
            oracle_cut, oracle_value = exhaustive_best_cut(treatments)
            assert cut == oracle_cut
            assert abs(value - oracle_value) <= 1e-9


def test_scott_knott_behavior():
    with criterion("scott-knott"):
        started = time.perf_counter()
        for seed in range(20):
            rng = np.random.default_rng(seed)
            shared = tuple(rng.uniform(0, 1, size=20))
            merged = scott_knott(
                [TreatmentSample("a", shared), TreatmentSample("b", shared)],
                rng=np.random.default_rng(seed + 100),
            )
            assert merged.ranks == [["a", "b"]]

            clusters = [
                TreatmentSample("low", tuple(rng.normal(0.1, 0.01, 20))),
                TreatmentSample("mid", tuple(rng.normal(0.5, 0.01, 20))),
                TreatmentSample("high", tuple(rng.normal(0.9, 0.01, 20))),
            ]
            table = scott_knott(clusters, rng=np.random.default_rng(seed + 200))
            assert table.ranks == [["low"], ["mid"], ["high"]]
            flat = [lbl for group in table.ranks for lbl in group]
            medians = [table.medians[lbl] for lbl in flat]
            assert medians == sorted(medians)
        assert time.perf_counter() - started < 10.0


def test_cliffs_delta_and_effect_labels():
    with criterion("cliffs-delta"):
        rng = np.random.default_rng(23)
        for _ in range(100):
            a = rng.integers(0, 8, size=int(rng.integers(1, 9))).tolist()
            b = rng.integers(0, 8, size=int(rng.integers(1, 9))).tolist()
            assert cliffs_delta(a, b) == brute_delta(a, b)
        for delta, expected in (
            (0.10, "negligible"),
            (0.146, "negligible"),
            (0.147, "small"),
            (0.329, "small"),
            (0.33, "medium"),
            (0.473, "medium"),
            (0.474, "large"),
            (-0.5, "large"),
        ):
            assert effect_label(delta) == expected


def test_dapr_monotonicity():
    with criterion("dapr-monotonicity"):
        ds = synthetic_wide(n_features=10)
        _, best_val = pool_optimum(ds)
        for seed in range(20):
            gateway = Gateway(pool_best_provider(ds))
            outcome = run_dapr(
                ds, DaprConfig(k=3, s=2), np.random.default_rng(seed), gateway
            )
            sizes = [t["subspace_size"] for t in outcome.trace]
            assert sizes == [3, 5, 7, 9, 10]
            bests = [
                t["best_chebyshev"]
                for t in outcome.trace
                if t["best_chebyshev"] is not None
            ]
            assert all(a >= b - 1e-12 for a, b in zip(bests, bests[1:]))
            assert abs(outcome.trace[-1]["final_min_chebyshev"] - best_val) <= 1e-12


def test_tpe_efficacy():
    with criterion("tpe-efficacy"):
        started = time.perf_counter()
        pool = grid_pool(side=12)
        values = np.asarray([row_chebyshev(r, pool) for r in pool.rows])
        tpe_mins, random_mins, strict_wins = [], [], 0
        for seed in range(20):
            scout = tpe_scout(pool, HkmaConfig(b_scout=10), np.random.default_rng(seed))
            tpe_min = min(v for _, v in scout.evaluated)
            rng = np.random.default_rng(10_000 + seed)
            picks = rng.choice(len(pool.rows), size=10, replace=False)
            rand_min = float(values[picks].min())
            tpe_mins.append(tpe_min)
            random_mins.append(rand_min)
            strict_wins += tpe_min < rand_min
        assert np.median(tpe_mins) <= np.median(random_mins)
        assert strict_wins >= 15
        assert time.perf_counter() - started < 5.0


def test_gp_sanity():
    with criterion("gp-sanity"):
        X = np.asarray([[0.0], [0.2], [0.45], [0.7], [1.0]])
        y = np.asarray([0.1, 0.4, -0.2, 0.9, 0.3])
        model = GpModel(length_scale=0.3, noise_variance=0.0).fit(X, y)
        mean, _ = model.predict(X)
        assert np.max(np.abs(mean - y)) < 1e-3
        candidates = np.asarray([[0.1], [0.3], [0.55], [0.8], [0.95]])
        mean, sd = model.predict(candidates)
        assert int(np.argmax(mean + 0.0 * sd)) == int(np.argmax(mean))


def test_amp_constraint_guarantee(toy_gear):
    with criterion("amp-constraint-guarantee"):
        from warmstart_lab.llm_gateway import default_mock_script

        rng = np.random.default_rng(31337)
        for trial in range(50):
            constraints = random_constraints(toy_gear, rng)
            hostile = [
                {
                    "threads": float(rng.choice([-50, 1e6, 64, 2])),
                    "cache_mb": float(rng.choice([-1, 9e9, 16])),
                    "buffer_kb": float(rng.choice([0, 1e7])),
                    "prefetch": float(rng.uniform(-2, 3)),
                    "compiler": str(rng.choice(["gcc", "clang", "icc"])),
                    "opt_level": str(rng.choice(["O0", "O1", "O2", "O3"])),
                }
                for _ in range(4)
            ]
            entries = [
                MockEntry(
                    tag="amp.stage1", behavior=default_mock_script().entries[0].behavior
                ),
                MockEntry(
                    tag="amp.stage2",
                    text=fenced_json(
                        {
                            "hard": [
                                {
                                    "feature": c.feature,
                                    "op": c.op,
                                    **(
                                        {"values": list(c.values)}
                                        if c.op == "in"
                                        else {"value": c.value}
                                    ),
                                }
                                for c in constraints.hard
                            ],
                            "soft": [],
                        }
                    ),
                ),
                MockEntry(tag="amp.stage3", text=fenced_json(hostile)),
                MockEntry(tag="amp.stage4", text=fenced_json(hostile)),
            ]
            gateway = Gateway(MockProvider(MockScript(entries)))
            condition = "amp3" if trial % 2 else "amp4"
            outcome = run_amp(toy_gear, condition, np.random.default_rng(trial), gateway)
            assert outcome.constraints is not None
            violations = [
                check_hard(config, outcome.constraints) for config in outcome.configs
            ]
            assert all(v == [] for v in violations)


def test_hdkp_learning(toy_gear):
    with criterion("hdkp-learning"):
        def median_final(seed, T, T_min):
            session = Session(
                id=f"acc-{seed}-T{T}", dataset_name=toy_gear.name, T=T, T_min=T_min
            )
            outcome = run_session(
                session,
                toy_gear,
                Gateway(default_provider()),
                SimulatedExpert(toy_gear),
                HdkpConfig(T=T, T_min=T_min),
            )
            audit = outcome.session.belief.statements
            assert all(
                earlier.iteration <= later.iteration
                for earlier, later in zip(audit, audit[1:])
            )
            assert outcome.excluded == (outcome.session.completed_rounds < T_min)
            return float(np.median([t.min_chebyshev for t in outcome.trials]))

        long_medians = [median_final(s, T=10, T_min=5) for s in range(20)]
        short_medians = [median_final(s, T=1, T_min=1) for s in range(20)]
        assert np.median(long_medians) <= np.median(short_medians)


@pytest.fixture(scope="module")
def end_to_end(tmp_path_factory):
    out = tmp_path_factory.mktemp("e2e")
    config = ExperimentConfig(
        datasets="builtin",
        methods=["random", "bs_llm", "amp4", "dapr", "hkma_both"],
        trials=20,
        master_seed=42,
        output_dir=str(out),
        provider={"provider": "mock"},
    )
    started = time.perf_counter()
    summary = run_experiment(config)
    elapsed = time.perf_counter() - started
    return config, summary, elapsed


def test_end_to_end_determinism(end_to_end, tmp_path):
    with criterion("end-to-end-determinism"):
        config, summary, elapsed = end_to_end
        assert elapsed < 60.0
        assert summary.trial_count == 200
        assert summary.error_count == 0
        first = summary.store_path.read_bytes()
        second = run_experiment(config).store_path.read_bytes()
        assert first == second

        report = build_report(summary.store_path, tmp_path / "report", seed=0)
        assert set(report.rank_tables) == {"toy_sphere", "toy_gear"}
        tier_counts = {"low": 1, "medium": 1}  # datasets per tier
        for tier, expected in tier_counts.items():
            assert sum(report.tier_matrix[tier].values()) == pytest.approx(expected)


def test_cost_accounting(end_to_end):
    with criterion("cost-accounting"):
        _, summary, _ = end_to_end
        records = read_store(summary.store_path)
        per_trial_cost: dict[tuple, list[tuple[int, int]]] = {}
        for record in records:
            if record["kind"] == "cost":
                key = (record["method"], record["dataset"], record["trial_index"])
                per_trial_cost.setdefault(key, []).append(
                    (record["tokens_in"], record["tokens_out"])
                )
        for record in records:
            if record["kind"] != "trial":
                continue
            key = (record["method"], record["dataset"], record["trial_index"])
            calls = per_trial_cost.get(key, [])
            expected_in = sum(t for t, _ in calls)
            expected_out = sum(t for _, t in calls)
            assert record["tokens_in"] == expected_in
            assert record["tokens_out"] == expected_out
        cost_in = sum(r["tokens_in"] for r in records if r["kind"] == "cost")
        cost_out = sum(r["tokens_out"] for r in records if r["kind"] == "cost")
        assert (cost_in, cost_out) == (summary.tokens_in, summary.tokens_out)
