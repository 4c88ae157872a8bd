"""Benchmark laboratory for domain-knowledge warm starts in multi-objective
configuration optimization."""

from .data_core import (
    Configuration,
    Dataset,
    FeatureSpec,
    ObjectiveSpec,
    Row,
    dimensional_tier,
    feature_metadata_summary,
    load_dataset,
    load_manifest,
    nearest_row,
    nearest_row_index,
    normalize_objective,
    project_rows,
    save_dataset,
)
from .eval_metrics import (
    CostEntry,
    CostLedger,
    TrialResult,
    chebyshev,
    diversity,
    pool_optimum,
    row_chebyshev,
    score_warm_starts,
)
from .stat_rank import (
    GroupSummary,
    RankTable,
    TreatmentSample,
    b0,
    best_split,
    bootstrap_significant,
    cliffs_delta,
    effect_label,
    effort_correlation,
    scott_knott,
    spearman,
)

__version__ = "0.1.0"

__all__ = [
    "Configuration",
    "Dataset",
    "FeatureSpec",
    "ObjectiveSpec",
    "Row",
    "dimensional_tier",
    "feature_metadata_summary",
    "load_dataset",
    "load_manifest",
    "nearest_row",
    "nearest_row_index",
    "normalize_objective",
    "project_rows",
    "save_dataset",
    "CostEntry",
    "CostLedger",
    "TrialResult",
    "chebyshev",
    "diversity",
    "pool_optimum",
    "row_chebyshev",
    "score_warm_starts",
    "GroupSummary",
    "RankTable",
    "TreatmentSample",
    "b0",
    "best_split",
    "bootstrap_significant",
    "cliffs_delta",
    "effect_label",
    "effort_correlation",
    "scott_knott",
    "spearman",
    "__version__",
]
