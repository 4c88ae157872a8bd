"""Experiment configuration: JSON surface, validation, seed derivation."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path


def default_workers() -> int:
    """Logical cores, capped at 4 (provider rate limits bite beyond that)."""
    return max(1, min(4, os.cpu_count() or 1))

from ..data_core import Dataset, load_dataset, load_manifest
from ..errors import ConfigInvalid

METHODS = (
    "random",
    "ucb_gpm",
    "bs_llm",
    "amp2",
    "amp3",
    "amp4",
    "dapr",
    "hkma_scout",
    "hkma_rag",
    "hkma_both",
    "hdkp",
)

_DATA_DIR = Path(__file__).parent.parent / "data"
BUILTIN_MANIFEST = _DATA_DIR / "datasets" / "manifest.txt"
BUILTIN_CORPUS = _DATA_DIR / "corpus"


def derive_seed(master_seed: int, *parts: object) -> int:
    """Stable 63-bit seed from the master seed and any context parts."""
    text = f"{master_seed}|" + "|".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


@dataclass
class ExperimentConfig:
    datasets: str = "builtin"
    methods: list[str] = field(default_factory=lambda: ["random", "bs_llm"])
    trials: int = 20
    master_seed: int = 42
    n_warm_starts: int = 4
    output_dir: str = "out"
    workers: int = field(default_factory=default_workers)
    provider: dict = field(default_factory=lambda: {"provider": "mock"})
    ucb: dict = field(default_factory=dict)  # kappa, seed_size, budget
    dapr: dict = field(default_factory=dict)  # k, s, n_importance
    hkma: dict = field(default_factory=dict)  # b_scout, gamma, top_k
    hdkp: dict = field(default_factory=dict)  # T, T_min, n_candidates, ...
    corpus_dir: str | None = "builtin"
    prompts_dir: str | None = None
    report_seed: int = 0
    baseline: str = "bs_llm"
    config_dir: Path = field(default_factory=Path, compare=False)

    def validate(self) -> None:
        if self.trials < 1:
            raise ConfigInvalid("trials must be at least 1")
        if not self.methods:
            raise ConfigInvalid("methods must be non-empty")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ConfigInvalid(f"unknown method(s): {unknown}; pick from {METHODS}")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigInvalid("duplicate methods in list")
        if self.n_warm_starts < 1:
            raise ConfigInvalid("n_warm_starts must be at least 1")
        if self.workers < 1:
            raise ConfigInvalid("workers must be at least 1")
        manifest = self.manifest_path()
        if not manifest.exists():
            raise ConfigInvalid(f"dataset manifest not found: {manifest}")

    def manifest_path(self) -> Path:
        if self.datasets == "builtin":
            return BUILTIN_MANIFEST
        path = Path(self.datasets)
        return path if path.is_absolute() else self.config_dir / path

    def corpus_path(self) -> Path | None:
        if self.corpus_dir is None:
            return None
        if self.corpus_dir == "builtin":
            return BUILTIN_CORPUS
        path = Path(self.corpus_dir)
        return path if path.is_absolute() else self.config_dir / path

    def load_datasets(self) -> list[Dataset]:
        return [
            load_dataset(path, name)
            for path, name in load_manifest(self.manifest_path())
        ]

    def to_json_dict(self) -> dict:
        return {
            "datasets": self.datasets,
            "methods": self.methods,
            "trials": self.trials,
            "master_seed": self.master_seed,
            "n_warm_starts": self.n_warm_starts,
            "output_dir": self.output_dir,
            "workers": self.workers,
            "provider": self.provider,
            "ucb": self.ucb,
            "dapr": self.dapr,
            "hkma": self.hkma,
            "hdkp": self.hdkp,
            "corpus_dir": self.corpus_dir,
            "prompts_dir": self.prompts_dir,
            "report_seed": self.report_seed,
            "baseline": self.baseline,
        }


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigInvalid(f"{path}: top level must be a JSON object")
    known = {
        "datasets",
        "methods",
        "trials",
        "master_seed",
        "n_warm_starts",
        "output_dir",
        "workers",
        "provider",
        "ucb",
        "dapr",
        "hkma",
        "hdkp",
        "corpus_dir",
        "prompts_dir",
        "report_seed",
        "baseline",
    }
    unknown = set(payload) - known
    if unknown:
        raise ConfigInvalid(f"{path}: unknown key(s) {sorted(unknown)}")
    config = ExperimentConfig(config_dir=path.parent.resolve(), **payload)
    config.validate()
    return config


def resolve_output_dir(config: ExperimentConfig) -> Path:
    out = Path(config.output_dir)
    if not out.is_absolute():
        out = Path(os.getcwd()) / out
    out.mkdir(parents=True, exist_ok=True)
    return out
