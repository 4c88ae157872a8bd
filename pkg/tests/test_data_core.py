from __future__ import annotations

import statistics

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from warmstart_lab.data_core import (
    Configuration,
    EmptyConfiguration,
    dimensional_tier,
    feature_metadata_summary,
    load_dataset,
    load_manifest,
    make_configuration,
    nearest_row_index,
    normalize_objective,
    project_rows,
    save_dataset,
)
from warmstart_lab.errors import (
    EmptySubset,
    InvalidValue,
    MissingHeader,
    NoObjectiveColumns,
    NonNumericInNumericColumn,
    RaggedRow,
    UnknownFeature,
)

from conftest import dataset_from_columns


def write_csv(tmp_path, text, name="pool.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_suffix_convention(tmp_path):
    path = write_csv(tmp_path, "threads,cache,Latency-\n1,2,30\n2,4,20\n4,8,10\n")
    ds = load_dataset(path)
    assert [s.name for s in ds.feature_specs] == ["threads", "cache"]
    assert ds.objective_specs[0].name == "Latency"
    assert ds.objective_specs[0].direction == "minimize"


def test_maximize_suffix(tmp_path):
    path = write_csv(tmp_path, "a,Throughput+\n1,5\n2,9\n")
    ds = load_dataset(path)
    assert ds.objective_specs[0].direction == "maximize"


def test_no_objective_columns(tmp_path):
    path = write_csv(tmp_path, "a,b\n1,2\n3,4\n")
    with pytest.raises(NoObjectiveColumns):
        load_dataset(path)


def test_missing_header(tmp_path):
    with pytest.raises(MissingHeader):
        load_dataset(write_csv(tmp_path, ""))


def test_ragged_row(tmp_path):
    path = write_csv(tmp_path, "a,L-\n1,2\n3\n")
    with pytest.raises(RaggedRow):
        load_dataset(path)


def test_non_numeric_objective(tmp_path):
    path = write_csv(tmp_path, "a,L-\n1,fast\n2,3\n")
    with pytest.raises(NonNumericInNumericColumn):
        load_dataset(path)


def test_toy_sphere_schema(toy_sphere):
    assert len(toy_sphere.feature_specs) == 5
    assert len(toy_sphere.objective_specs) == 2
    assert len(toy_sphere.rows) == 64
    assert toy_sphere.tier == "low"
    assert all(s.direction == "minimize" for s in toy_sphere.objective_specs)


def test_symbolic_column_detection(tmp_path):
    path = write_csv(tmp_path, "comp,n,L-\ngcc,1,9\nclang,2,7\ngcc,3,5\n")
    ds = load_dataset(path)
    comp = ds.feature_specs[0]
    assert comp.kind == "symbolic"
    assert comp.categories == ("clang", "gcc")
    assert comp.median_or_mode == "gcc"
    assert ds.feature_specs[1].kind == "numeric"


def test_imputation(tmp_path):
    path = write_csv(tmp_path, "n,comp,L-\n1,gcc,5\n,clang,6\n3,,7\n4,gcc,8\n")
    ds = load_dataset(path)
    # numeric missing cell takes the median of the present values
    assert ds.rows[1].features[0] == statistics.median([1.0, 3.0, 4.0])
    # symbolic missing cell takes the mode
    assert ds.rows[2].features[1] == "gcc"
    assert any("imputed" in w for w in ds.warnings)


# -- normalize_objective ---------------------------------------------------------

def test_normalize_ideal_points(toy_sphere):
    spec = toy_sphere.objective_specs[0]
    assert normalize_objective(spec.lo, spec) == 0.0
    assert normalize_objective(spec.hi, spec) == 1.0


def test_normalize_midpoint_minimize():
    from warmstart_lab.data_core import ObjectiveSpec

    spec = ObjectiveSpec("m", "minimize", 10.0, 20.0)
    assert normalize_objective(15.0, spec) == pytest.approx(0.5)


def test_normalize_maximize_ideal():
    from warmstart_lab.data_core import ObjectiveSpec

    spec = ObjectiveSpec("m", "maximize", 10.0, 20.0)
    assert normalize_objective(20.0, spec) == 0.0
    assert normalize_objective(10.0, spec) == 1.0


def test_normalize_degenerate_range():
    from warmstart_lab.data_core import ObjectiveSpec

    spec = ObjectiveSpec("m", "minimize", 3.0, 3.0)
    assert normalize_objective(3.0, spec) == 0.0


@given(
    lo=st.floats(-1e6, 1e6),
    span=st.floats(1e-6, 1e6),
    frac=st.floats(0.0, 1.0),
)
@settings(max_examples=200, deadline=None)
def test_normalize_bounds_and_duality(lo, span, frac):
    from warmstart_lab.data_core import ObjectiveSpec

    hi = lo + span
    raw = lo + frac * span
    mini = ObjectiveSpec("m", "minimize", lo, hi)
    maxi = ObjectiveSpec("m", "maximize", lo, hi)
    a = normalize_objective(raw, mini)
    b = normalize_objective(raw, maxi)
    assert 0.0 <= a <= 1.0 and 0.0 <= b <= 1.0
    assert b == pytest.approx(1.0 - a, abs=1e-9)


# -- dimensional_tier -------------------------------------------------------------

@pytest.mark.parametrize(
    "n,expected",
    [(1, "low"), (5, "low"), (6, "medium"), (11, "medium"), (12, "high"), (40, "high")],
)
def test_tier_boundaries(n, expected):
    assert dimensional_tier(n) == expected


def test_tier_monotone_step():
    order = {"low": 0, "medium": 1, "high": 2}
    levels = [order[dimensional_tier(n)] for n in range(1, 60)]
    assert levels == sorted(levels)


# -- nearest_row -------------------------------------------------------------------

def test_nearest_row_identity(toy_gear):
    for i in (0, 7, 47):
        config = toy_gear.config_from_row(i)
        j = nearest_row_index(config, toy_gear)
        assert toy_gear.rows[j].features == toy_gear.rows[i].features


def test_nearest_row_tie_breaks_low_index():
    ds = dataset_from_columns(
        "tie",
        {"a": [0.0, 10.0, 10.0]},
        {"L": ("minimize", [1.0, 2.0, 3.0])},
    )
    config = Configuration({"a": 5.0})  # equidistant from rows 0 and 1
    assert nearest_row_index(config, ds) == 0


def test_nearest_row_brute_force_oracle():
    ds = dataset_from_columns(
        "mix",
        {"n": [0.0, 5.0, 10.0], "c": ["red", "blue", "red"]},
        {"L": ("minimize", [1.0, 2.0, 3.0])},
    )
    config = Configuration({"n": 4.0, "c": "red"})

    def gower(row):  # independent recomputation
        dn = abs(float(row.features[0]) - 4.0) / 10.0
        dc = 0.0 if row.features[1] == "red" else 1.0
        return (dn + dc) / 2

    distances = [gower(r) for r in ds.rows]
    expected = distances.index(min(distances))
    assert nearest_row_index(config, ds) == expected


def test_nearest_row_partial_config(toy_gear):
    config = Configuration({"threads": 64.0})
    idx = nearest_row_index(config, toy_gear)
    assert toy_gear.rows[idx].features[0] == 64.0


def test_nearest_row_empty_configuration(toy_gear):
    with pytest.raises(EmptyConfiguration):
        nearest_row_index(Configuration({}), toy_gear)


def test_projection_roundtrip_self_nearest(toy_sphere):
    names = list(toy_sphere.feature_names)
    for i in range(0, len(toy_sphere.rows), 7):
        config = project_rows([toy_sphere.rows[i]], names, toy_sphere)[0]
        j = nearest_row_index(config, toy_sphere)
        assert toy_sphere.rows[j].features == toy_sphere.rows[i].features


# -- metadata summary ---------------------------------------------------------------

def test_metadata_median_odd():
    ds = dataset_from_columns("s", {"a": [1, 2, 3]}, {"L": ("minimize", [1, 2, 3])})
    assert feature_metadata_summary(ds)[0] == ("a", "numeric", 2.0)


def test_metadata_mode():
    ds = dataset_from_columns(
        "s", {"c": ["a", "a", "b"]}, {"L": ("minimize", [1, 2, 3])}
    )
    assert feature_metadata_summary(ds)[0] == ("c", "symbolic", "a")


def test_metadata_median_even_matches_sort_oracle():
    values = [1.0, 2.0, 3.0, 4.0]
    ordered = sorted(values)
    oracle = (ordered[1] + ordered[2]) / 2
    ds = dataset_from_columns("s", {"a": values}, {"L": ("minimize", values)})
    assert feature_metadata_summary(ds)[0][2] == oracle == 2.5


# -- project_rows ---------------------------------------------------------------------

def test_project_identity(toy_gear):
    configs = project_rows(toy_gear.rows[:3], list(toy_gear.feature_names), toy_gear)
    assert all(c.is_complete(toy_gear) for c in configs)


def test_project_empty_subset(toy_gear):
    with pytest.raises(EmptySubset):
        project_rows(toy_gear.rows[:2], [], toy_gear)


def test_project_unknown_feature(toy_gear):
    with pytest.raises(UnknownFeature):
        project_rows(toy_gear.rows[:2], ["nope"], toy_gear)


def test_project_arity(toy_sphere):
    subset = ["x1", "x3", "x5"]
    configs = project_rows(toy_sphere.rows[:4], subset, toy_sphere)
    assert len(configs) == 4
    assert all(set(c.assignments) == set(subset) for c in configs)


# -- admission -------------------------------------------------------------------------

def test_make_configuration_clamps(toy_gear):
    config = make_configuration(toy_gear, {"threads": 10_000})
    spec = toy_gear.feature("threads")
    assert config.assignments["threads"] == spec.hi


def test_make_configuration_rejects_unknown_category(toy_gear):
    with pytest.raises(InvalidValue):
        make_configuration(toy_gear, {"compiler": "tcc"})


def test_make_configuration_unknown_feature(toy_gear):
    with pytest.raises(UnknownFeature):
        make_configuration(toy_gear, {"nope": 1})


# -- round trip --------------------------------------------------------------------------

def test_save_load_roundtrip(tmp_path, toy_sphere, toy_gear):
    for ds in (toy_sphere, toy_gear):
        out = tmp_path / f"{ds.name}.csv"
        save_dataset(ds, out)
        again = load_dataset(out, ds.name)
        assert again == ds


def test_roundtrip_after_imputation(tmp_path):
    path = write_csv(tmp_path, "n,comp,L-\n1,gcc,5\n,clang,6\n3,,7\n")
    ds = load_dataset(path)
    out = tmp_path / "again.csv"
    save_dataset(ds, out)
    assert load_dataset(out, ds.name) == ds


def test_manifest(tmp_path):
    write_csv(tmp_path, "a,L-\n1,2\n3,4\n", name="d1.csv")
    manifest = tmp_path / "manifest.txt"
    manifest.write_text("# comment\nd1.csv,display\n", encoding="utf-8")
    entries = load_manifest(manifest)
    assert entries == [(tmp_path / "d1.csv", "display")]
    assert load_dataset(*entries[0]).name == "display"
