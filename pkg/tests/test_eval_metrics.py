from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from warmstart_lab.data_core import Configuration, ObjectiveSpec
from warmstart_lab.errors import (
    ArityMismatch,
    EmptyWarmStartSet,
    NegativeCount,
    PartialConfiguration,
)
from warmstart_lab.eval_metrics import (
    CostEntry,
    CostLedger,
    chebyshev,
    diversity,
    pool_optimum,
    row_chebyshev,
    score_warm_starts,
)

from conftest import dataset_from_columns


def brute_force_chebyshev(row, dataset):
    """Independent recomputation: max normalized component."""
    best = 0.0
    for value, spec in zip(row.objectives, dataset.objective_specs):
        if spec.hi == spec.lo:
            unit = 0.0
        else:
            unit = (value - spec.lo) / (spec.hi - spec.lo)
            if spec.direction == "maximize":
                unit = 1.0 - unit
            unit = min(1.0, max(0.0, unit))
        best = max(best, unit)
    return best


def test_chebyshev_ideal_point():
    specs = [
        ObjectiveSpec("a", "minimize", 0.0, 10.0),
        ObjectiveSpec("b", "maximize", 0.0, 10.0),
    ]
    assert chebyshev([0.0, 10.0], specs) == 0.0


def test_chebyshev_max_of_components():
    specs = [
        ObjectiveSpec("a", "minimize", 0.0, 1.0),
        ObjectiveSpec("b", "minimize", 0.0, 1.0),
    ]
    assert chebyshev([0.2, 0.7], specs) == pytest.approx(0.7)


def test_chebyshev_arity_mismatch():
    specs = [ObjectiveSpec("a", "minimize", 0.0, 1.0)]
    with pytest.raises(ArityMismatch):
        chebyshev([0.1, 0.2], specs)
    with pytest.raises(ArityMismatch):
        chebyshev([], [])


def test_chebyshev_brute_force_over_pools(toy_sphere, toy_gear):
    for ds in (toy_sphere, toy_gear):
        for row in ds.rows:
            assert row_chebyshev(row, ds) == pytest.approx(
                brute_force_chebyshev(row, ds), abs=1e-12
            )


@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=6), st.randoms())
@settings(max_examples=100, deadline=None)
def test_chebyshev_permutation_invariant(units, rnd):
    specs = [ObjectiveSpec(f"o{i}", "minimize", 0.0, 1.0) for i in range(len(units))]
    base = chebyshev(units, specs)
    shuffled = list(units)
    rnd.shuffle(shuffled)
    assert chebyshev(shuffled, specs) == pytest.approx(base)


def test_chebyshev_monotone_in_components():
    specs = [ObjectiveSpec(f"o{i}", "minimize", 0.0, 1.0) for i in range(3)]
    base = chebyshev([0.2, 0.5, 0.4], specs)
    worse = chebyshev([0.2, 0.9, 0.4], specs)
    assert worse >= base


# -- score_warm_starts -----------------------------------------------------------

def test_score_best_row_hits_pool_optimum(toy_gear):
    best_idx, best_val = pool_optimum(toy_gear)
    config = toy_gear.config_from_row(best_idx)
    scored = score_warm_starts([config], toy_gear)
    assert scored.min_chebyshev == pytest.approx(best_val, abs=1e-12)


def test_score_min_semantics(toy_gear):
    best_idx, best_val = pool_optimum(toy_gear)
    configs = [toy_gear.config_from_row(i) for i in (3, 9, best_idx, 20)]
    scored = score_warm_starts(configs, toy_gear)
    assert scored.min_chebyshev == pytest.approx(best_val, abs=1e-12)


def test_score_random_configs_matches_recompute(toy_sphere):
    rng = np.random.default_rng(4)
    picks = rng.choice(len(toy_sphere.rows), size=4, replace=False)
    configs = [toy_sphere.config_from_row(int(i)) for i in picks]
    scored = score_warm_starts(configs, toy_sphere)
    expected = [brute_force_chebyshev(toy_sphere.rows[int(i)], toy_sphere) for i in picks]
    assert scored.chebyshev_values == pytest.approx(expected, abs=1e-12)
    assert scored.min_chebyshev == pytest.approx(min(expected), abs=1e-12)


def test_score_empty_raises(toy_sphere):
    with pytest.raises(EmptyWarmStartSet):
        score_warm_starts([], toy_sphere)


def test_min_leq_mean_invariant(toy_sphere):
    rng = np.random.default_rng(11)
    for _ in range(10):
        picks = rng.choice(len(toy_sphere.rows), size=4, replace=False)
        scored = score_warm_starts(
            [toy_sphere.config_from_row(int(i)) for i in picks], toy_sphere
        )
        assert scored.min_chebyshev <= np.mean(scored.chebyshev_values) + 1e-12


# -- diversity --------------------------------------------------------------------

def pair_ds():
    return dataset_from_columns(
        "pair",
        {"a": [0.0, 10.0], "b": [0.0, 10.0]},
        {"L": ("minimize", [1.0, 2.0])},
    )


def test_diversity_identical_zero():
    ds = pair_ds()
    c = Configuration({"a": 3.0, "b": 3.0})
    assert diversity([c, Configuration(dict(c.assignments))], ds) == 0.0


def test_diversity_pythagorean():
    # normalized deltas 0.6 and 0.8 give distance exactly 1.0
    ds = pair_ds()
    a = Configuration({"a": 0.0, "b": 0.0})
    b = Configuration({"a": 6.0, "b": 8.0})
    assert diversity([a, b], ds) == pytest.approx(1.0)


def test_diversity_three_config_mean_of_pairs():
    ds = pair_ds()
    points = [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)]
    configs = [Configuration({"a": x, "b": y}) for x, y in points]

    def dist(p, q):  # independent pair enumeration
        return math.sqrt(((p[0] - q[0]) / 10) ** 2 + ((p[1] - q[1]) / 10) ** 2)

    expected = (
        dist(points[0], points[1]) + dist(points[0], points[2]) + dist(points[1], points[2])
    ) / 3
    assert diversity(configs, ds) == pytest.approx(expected)


def test_diversity_symbolic_mismatch_term():
    ds = dataset_from_columns(
        "mix",
        {"a": [0.0, 10.0], "c": ["x", "y"]},
        {"L": ("minimize", [1.0, 2.0])},
    )
    c1 = Configuration({"a": 0.0, "c": "x"})
    c2 = Configuration({"a": 0.0, "c": "y"})
    assert diversity([c1, c2], ds) == pytest.approx(1.0)


def test_diversity_single_config_zero(toy_gear):
    assert diversity([toy_gear.config_from_row(0)], toy_gear) == 0.0


def test_diversity_partial_raises(toy_gear):
    with pytest.raises(PartialConfiguration):
        diversity([Configuration({"threads": 2.0})], toy_gear)


def test_diversity_duplicate_never_increases_max_pair(toy_sphere):
    rng = np.random.default_rng(2)
    picks = [int(i) for i in rng.choice(len(toy_sphere.rows), size=3, replace=False)]
    configs = [toy_sphere.config_from_row(i) for i in picks]
    base = diversity(configs, toy_sphere)
    withdup = diversity(configs + [toy_sphere.config_from_row(picks[0])], toy_sphere)
    assert withdup >= 0.0
    assert withdup <= base + 1e-12  # duplicates add zero-distance pairs


# -- cost ledger ---------------------------------------------------------------------

def test_ledger_totals():
    ledger = CostLedger()
    ledger.record(CostEntry("m", "d", 0, "t", 100, 50))
    ledger.record(CostEntry("m", "d", 0, "t", 200, 75))
    assert ledger.totals() == (300, 125)


def test_ledger_empty():
    assert CostLedger().totals() == (0, 0)


def test_ledger_negative_count():
    with pytest.raises(NegativeCount):
        CostLedger().record(CostEntry("m", "d", 0, "t", -1, 0))


def test_ledger_totals_for():
    ledger = CostLedger()
    ledger.record(CostEntry("m1", "d", 0, "t", 10, 1))
    ledger.record(CostEntry("m2", "d", 0, "t", 20, 2))
    assert ledger.totals_for("m1", "d", 0) == (10, 1)


def test_diversity_permutation_invariant(toy_sphere):
    import itertools

    configs = [toy_sphere.config_from_row(i) for i in (1, 5, 9)]
    base = diversity(configs, toy_sphere)
    for perm in itertools.permutations(configs):
        assert diversity(list(perm), toy_sphere) == pytest.approx(base)
