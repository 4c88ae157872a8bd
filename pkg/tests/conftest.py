from __future__ import annotations

import statistics
from collections import Counter

import numpy as np
import pytest

from warmstart_lab.data_core import (
    MINIMIZE,
    NUMERIC,
    SYMBOLIC,
    Dataset,
    FeatureSpec,
    ObjectiveSpec,
    Row,
    dimensional_tier,
    load_dataset,
)
from warmstart_lab.llm_gateway import (
    ChatRequest,
    ChatResponse,
    Gateway,
    MockEntry,
    MockProvider,
    MockScript,
    default_mock_script,
)
from warmstart_lab.runner.config import BUILTIN_MANIFEST

DATA_DIR = BUILTIN_MANIFEST.parent


@pytest.fixture(scope="session")
def toy_sphere() -> Dataset:
    return load_dataset(DATA_DIR / "toy_sphere.csv", "toy_sphere")


@pytest.fixture(scope="session")
def toy_gear() -> Dataset:
    return load_dataset(DATA_DIR / "toy_gear.csv", "toy_gear")


def dataset_from_columns(
    name: str,
    features: dict[str, list],
    objectives: dict[str, tuple[str, list]],
) -> Dataset:
    """Build a Dataset in memory, deriving specs from the column values."""
    feature_specs = []
    for fname, values in features.items():
        if all(isinstance(v, (int, float)) for v in values):
            vals = [float(v) for v in values]
            feature_specs.append(
                FeatureSpec(
                    fname,
                    NUMERIC,
                    min(vals),
                    max(vals),
                    (),
                    float(statistics.median(vals)),
                )
            )
        else:
            svals = [str(v) for v in values]
            counts = Counter(svals)
            top = max(counts.values())
            mode = min(v for v, c in counts.items() if c == top)
            feature_specs.append(
                FeatureSpec(fname, SYMBOLIC, 0.0, 0.0, tuple(sorted(set(svals))), mode)
            )
    objective_specs = []
    for oname, (direction, values) in objectives.items():
        vals = [float(v) for v in values]
        objective_specs.append(ObjectiveSpec(oname, direction, min(vals), max(vals)))

    n_rows = len(next(iter(features.values())))
    rows = []
    for i in range(n_rows):
        feats = tuple(
            float(features[s.name][i]) if s.kind == NUMERIC else str(features[s.name][i])
            for s in feature_specs
        )
        objs = tuple(float(objectives[s.name][1][i]) for s in objective_specs)
        rows.append(Row(feats, objs))
    return Dataset(
        name=name,
        feature_specs=tuple(feature_specs),
        objective_specs=tuple(objective_specs),
        rows=tuple(rows),
        tier=dimensional_tier(len(feature_specs)),
    )


def grid_pool(side: int = 30, optimum: tuple[float, float] = (0.73, 0.31)) -> Dataset:
    """Two numeric features on a grid with a single sharp distance optimum."""
    xs, ys, fs = [], [], []
    for i in range(side):
        for j in range(side):
            x = i / (side - 1)
            y = j / (side - 1)
            xs.append(round(x, 6))
            ys.append(round(y, 6))
            fs.append(round(((x - optimum[0]) ** 2 + (y - optimum[1]) ** 2) ** 0.5, 6))
    return dataset_from_columns(
        "grid_pool", {"x": xs, "y": ys}, {"f": (MINIMIZE, fs)}
    )


def synthetic_wide(n_features: int = 10, n_rows: int = 40, seed: int = 5) -> Dataset:
    """All-numeric pool with a planted optimum, for subspace expansion tests."""
    rng = np.random.default_rng(seed)
    features = {
        f"f{i + 1}": [round(float(v), 4) for v in rng.uniform(0.0, 1.0, size=n_rows - 1)]
        for i in range(n_features)
    }
    target = [0.9] * n_features  # planted optimum at the high end
    for i in range(n_features):
        features[f"f{i + 1}"].append(target[i])
    obj = []
    for r in range(n_rows):
        vec = np.array([features[f"f{i + 1}"][r] for i in range(n_features)])
        obj.append(round(float(np.abs(vec - 0.9).sum()), 6))
    return dataset_from_columns("wide", features, {"gap": (MINIMIZE, obj)})


def scripted_provider(entries: list[MockEntry]) -> MockProvider:
    return MockProvider(MockScript(entries=entries))


def default_provider() -> MockProvider:
    return MockProvider(default_mock_script())


class RecordingProvider:
    """Wraps a provider and keeps every request for containment checks."""

    name = "recording"

    def __init__(self, inner):
        self.inner = inner
        self.requests: list[ChatRequest] = []

    def complete(self, request: ChatRequest) -> ChatResponse:
        self.requests.append(request)
        return self.inner.complete(request)


def recording_gateway(inner=None) -> tuple[Gateway, RecordingProvider]:
    provider = RecordingProvider(inner or default_provider())
    return Gateway(provider), provider
