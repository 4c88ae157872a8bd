"""Tabular optimization datasets and the row-pool labeling oracle.

A dataset is an immutable, fully enumerated pool of configurations with
measured objective values. Column roles come from the CSV header: a trailing
``+`` marks a maximized objective, a trailing ``-`` a minimized one, and every
other column is an independent feature. A feature column is numeric iff every
non-empty cell parses as a finite real; otherwise it is symbolic. Missing
cells are imputed (median for numeric, mode for symbolic) so the labeling
oracle stays total.
"""

from __future__ import annotations

import csv
import logging
import math
import statistics
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import (
    DatasetError,
    EmptyConfiguration,
    EmptySubset,
    InvalidValue,
    MissingHeader,
    NoObjectiveColumns,
    NonNumericInNumericColumn,
    RaggedRow,
    UnknownFeature,
)

logger = logging.getLogger(__name__)

NUMERIC = "numeric"
SYMBOLIC = "symbolic"
MINIMIZE = "minimize"
MAXIMIZE = "maximize"

TIER_LOW = "low"
TIER_MEDIUM = "medium"
TIER_HIGH = "high"


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str  # NUMERIC or SYMBOLIC
    lo: float = 0.0
    hi: float = 0.0
    categories: tuple[str, ...] = ()
    median_or_mode: float | str = 0.0

    def __post_init__(self) -> None:
        if self.kind == NUMERIC:
            if self.lo > self.hi:
                raise DatasetError(f"feature {self.name}: lo > hi")
        elif self.kind == SYMBOLIC:
            if not self.categories:
                raise DatasetError(f"feature {self.name}: no categories")
        else:
            raise DatasetError(f"feature {self.name}: unknown kind {self.kind!r}")


@dataclass(frozen=True)
class ObjectiveSpec:
    name: str
    direction: str  # MINIMIZE or MAXIMIZE
    lo: float
    hi: float

    def __post_init__(self) -> None:
        if self.direction not in (MINIMIZE, MAXIMIZE):
            raise DatasetError(f"objective {self.name}: bad direction")
        if self.lo > self.hi:
            raise DatasetError(f"objective {self.name}: lo > hi")


@dataclass(frozen=True)
class Row:
    features: tuple[float | str, ...]
    objectives: tuple[float, ...]


@dataclass(frozen=True)
class Dataset:
    name: str
    feature_specs: tuple[FeatureSpec, ...]
    objective_specs: tuple[ObjectiveSpec, ...]
    rows: tuple[Row, ...]
    tier: str
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        if not self.feature_specs:
            raise DatasetError(f"{self.name}: needs at least one feature")
        if not self.objective_specs:
            raise NoObjectiveColumns(f"{self.name}: needs at least one objective")
        if len(self.rows) < 2:
            raise DatasetError(f"{self.name}: needs at least two rows")
        if self.tier != dimensional_tier(len(self.feature_specs)):
            raise DatasetError(f"{self.name}: tier does not match feature count")

    @cached_property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.feature_specs)

    @cached_property
    def objective_names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.objective_specs)

    @cached_property
    def feature_index(self) -> dict[str, int]:
        return {s.name: i for i, s in enumerate(self.feature_specs)}

    def feature(self, name: str) -> FeatureSpec:
        try:
            return self.feature_specs[self.feature_index[name]]
        except KeyError:
            raise UnknownFeature(f"{self.name}: no feature named {name!r}") from None

    def config_from_row(self, index: int) -> "Configuration":
        row = self.rows[index]
        return Configuration(dict(zip(self.feature_names, row.features)))

    def median_config(self) -> "Configuration":
        return Configuration({s.name: s.median_or_mode for s in self.feature_specs})


@dataclass
class Configuration:
    """A (possibly partial) assignment of values to named features.

    Instances built through :func:`make_configuration` are admissible by
    construction: names exist, numeric values are clamped into the observed
    range, symbolic values belong to the category set.
    """

    assignments: dict[str, float | str]

    def assigned(self) -> tuple[str, ...]:
        return tuple(self.assignments)

    def is_complete(self, dataset: Dataset) -> bool:
        return set(self.assignments) == set(dataset.feature_names)


def dimensional_tier(n_features: int) -> str:
    """Stratify by feature count: <6 low, 6 to 11 medium, >11 high."""
    if n_features < 1:
        raise DatasetError("a dataset needs at least one feature")
    if n_features < 6:
        return TIER_LOW
    if n_features <= 11:
        return TIER_MEDIUM
    return TIER_HIGH


def _parse_real(cell: str) -> float | None:
    try:
        value = float(cell)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


def _median(values: Sequence[float]) -> float:
    # statistics.median uses the mean-of-middle-two convention for even counts
    return float(statistics.median(values))


def _mode(values: Sequence[str]) -> str:
    counts: dict[str, int] = {}
    for v in values:
        counts[v] = counts.get(v, 0) + 1
    best = max(counts.values())
    return min(v for v, c in counts.items() if c == best)


def load_dataset(path: str | Path, name: str | None = None) -> Dataset:
    """Load a CSV pool file into an immutable :class:`Dataset`.

    Header suffixes assign column roles; per-column statistics (lo/hi,
    median or mode) are computed from the observed values after imputation
    of empty cells.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MissingHeader(f"{path}: empty file") from None
        raw_rows = [row for row in reader if row and any(c.strip() for c in row)]

    header = [h.strip() for h in header]
    if not header or all(not h for h in header):
        raise MissingHeader(f"{path}: header row is empty")
    if any(not h for h in header):
        raise MissingHeader(f"{path}: blank column name in header")

    roles: list[tuple[str, str | None]] = []  # (clean name, direction or None)
    for col in header:
        if col.endswith("+"):
            roles.append((col[:-1].strip(), MAXIMIZE))
        elif col.endswith("-"):
            roles.append((col[:-1].strip(), MINIMIZE))
        else:
            roles.append((col, None))
    if not any(direction for _, direction in roles):
        raise NoObjectiveColumns(f"{path}: no column ends in '+' or '-'")

    for lineno, row in enumerate(raw_rows, start=2):
        if len(row) != len(header):
            raise RaggedRow(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")

    columns = [[cell.strip() for cell in col] for col in zip(*raw_rows)] if raw_rows else []
    if len(raw_rows) < 2:
        raise DatasetError(f"{path}: needs at least two data rows")

    warnings: list[str] = []
    feature_specs: list[FeatureSpec] = []
    objective_specs: list[ObjectiveSpec] = []
    feature_cols: list[list[float | str]] = []
    objective_cols: list[list[float]] = []

    for (colname, direction), cells in zip(roles, columns):
        present = [c for c in cells if c != ""]
        missing = len(cells) - len(present)
        if not present:
            raise DatasetError(f"{path}: column {colname!r} has no values")
        parsed = [_parse_real(c) for c in present]
        all_numeric = all(v is not None for v in parsed)

        if direction is not None:
            if not all_numeric:
                bad = next(c for c, v in zip(present, parsed) if v is None)
                raise NonNumericInNumericColumn(
                    f"{path}: objective {colname!r} has non-numeric cell {bad!r}"
                )
            med = _median([v for v in parsed if v is not None])
            values = [(_parse_real(c) if c != "" else med) for c in cells]
            filled = [v for v in values if v is not None]
            if missing:
                warnings.append(f"objective {colname}: imputed {missing} missing cell(s)")
            lo, hi = min(filled), max(filled)
            if lo == hi:
                warnings.append(f"objective {colname}: degenerate range (lo == hi)")
            objective_specs.append(ObjectiveSpec(colname, direction, lo, hi))
            objective_cols.append([float(v) for v in filled])
        elif all_numeric:
            med = _median([v for v in parsed if v is not None])
            values = [(_parse_real(c) if c != "" else med) for c in cells]
            filled = [float(v) for v in values if v is not None]
            if missing:
                warnings.append(f"feature {colname}: imputed {missing} missing cell(s)")
            lo, hi = min(filled), max(filled)
            feature_specs.append(FeatureSpec(colname, NUMERIC, lo, hi, (), med))
            feature_cols.append(list(filled))
        else:
            mode = _mode(present)
            filled_syms = [c if c != "" else mode for c in cells]
            if missing:
                warnings.append(f"feature {colname}: imputed {missing} missing cell(s)")
            cats = tuple(sorted(set(filled_syms)))
            feature_specs.append(FeatureSpec(colname, SYMBOLIC, 0.0, 0.0, cats, mode))
            feature_cols.append(list(filled_syms))

    if not feature_specs:
        raise DatasetError(f"{path}: no independent feature columns")

    rows = tuple(
        Row(
            features=tuple(col[i] for col in feature_cols),
            objectives=tuple(col[i] for col in objective_cols),
        )
        for i in range(len(raw_rows))
    )
    if warnings:
        for note in warnings:
            logger.warning("%s: %s", path.name, note)

    return Dataset(
        name=name or path.stem,
        feature_specs=tuple(feature_specs),
        objective_specs=tuple(objective_specs),
        rows=rows,
        tier=dimensional_tier(len(feature_specs)),
        warnings=tuple(warnings),
    )


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    """Write a dataset back to the CSV pool convention (round-trip safe)."""
    path = Path(path)
    suffix = {MAXIMIZE: "+", MINIMIZE: "-"}
    header = list(dataset.feature_names) + [
        s.name + suffix[s.direction] for s in dataset.objective_specs
    ]
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in dataset.rows:
            cells = [repr(v) if isinstance(v, float) else str(v) for v in row.features]
            cells += [repr(v) for v in row.objectives]
            writer.writerow(cells)


def load_manifest(path: str | Path) -> list[tuple[Path, str]]:
    """Read a dataset manifest: one ``path[,display name]`` per line.

    Relative paths resolve against the manifest's directory. Blank lines and
    ``#`` comments are skipped.
    """
    path = Path(path)
    entries: list[tuple[Path, str]] = []
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "," in line:
            file_part, display = line.split(",", 1)
            file_part, display = file_part.strip(), display.strip()
        else:
            file_part, display = line, ""
        target = Path(file_part)
        if not target.is_absolute():
            target = path.parent / target
        entries.append((target, display or target.stem))
    return entries


def normalize_objective(raw: float, spec: ObjectiveSpec) -> float:
    """Map a raw objective value to a unit score with the ideal at 0.

    Minimized objectives map lo to 0 and hi to 1; maximized objectives are
    flipped so their ideal endpoint also lands on 0. Values outside the
    observed range clip to [0, 1]. A degenerate range scores 0.
    """
    if spec.hi == spec.lo:
        return 0.0
    unit = (raw - spec.lo) / (spec.hi - spec.lo)
    if spec.direction == MAXIMIZE:
        unit = 1.0 - unit
    return min(1.0, max(0.0, unit))


def make_configuration(
    dataset: Dataset,
    mapping: Mapping[str, object],
    clamp: bool = True,
) -> Configuration:
    """Admit a raw name/value mapping as a Configuration.

    Unknown names raise :class:`UnknownFeature`. Numeric values are coerced
    to float and (by default) clamped into the observed range; symbolic
    values must match a known category (case-insensitive repairs allowed).
    """
    assignments: dict[str, float | str] = {}
    for name in dataset.feature_names:
        if name not in mapping:
            continue
        spec = dataset.feature(name)
        value = mapping[name]
        if spec.kind == NUMERIC:
            parsed = _parse_real(str(value)) if not isinstance(value, (int, float)) else (
                float(value) if math.isfinite(float(value)) else None
            )
            if parsed is None:
                raise InvalidValue(f"{name}: {value!r} is not a finite number")
            if clamp:
                parsed = min(spec.hi, max(spec.lo, parsed))
            assignments[name] = parsed
        else:
            text = str(value)
            if text not in spec.categories:
                lowered = {c.lower(): c for c in spec.categories}
                if text.lower() in lowered:
                    text = lowered[text.lower()]
                else:
                    raise InvalidValue(f"{name}: unknown category {text!r}")
            assignments[name] = text
    extra = set(mapping) - set(assignments)
    if extra:
        raise UnknownFeature(f"unknown feature(s): {sorted(extra)}")
    return Configuration(assignments)


def _feature_distance(spec: FeatureSpec, a: float | str, b: float | str) -> float:
    if spec.kind == NUMERIC:
        if spec.hi == spec.lo:
            return 0.0
        return abs(float(a) - float(b)) / (spec.hi - spec.lo)
    return 0.0 if a == b else 1.0


def nearest_row_index(config: Configuration, dataset: Dataset) -> int:
    """Index of the pool row nearest to ``config`` in Gower distance.

    Only assigned features participate: numeric differences are scaled by
    the observed range, symbolic features contribute a 0/1 mismatch, and the
    per-feature terms are averaged. Ties go to the lowest row index.
    """
    if not config.assignments:
        raise EmptyConfiguration("configuration assigns no features")
    specs = []
    for name, value in config.assignments.items():
        spec = dataset.feature(name)
        specs.append((dataset.feature_index[name], spec, value))
    best_i, best_d = 0, math.inf
    for i, row in enumerate(dataset.rows):
        total = 0.0
        for pos, spec, value in specs:
            total += _feature_distance(spec, value, row.features[pos])
        d = total / len(specs)
        if d < best_d:
            best_i, best_d = i, d
    return best_i


def nearest_row(config: Configuration, dataset: Dataset) -> Row:
    return dataset.rows[nearest_row_index(config, dataset)]


def feature_metadata_summary(dataset: Dataset) -> list[tuple[str, str, float | str]]:
    """Per-feature (name, kind, median or mode) in declaration order."""
    return [(s.name, s.kind, s.median_or_mode) for s in dataset.feature_specs]


def project_rows(
    rows: Iterable[Row], subset: Sequence[str], dataset: Dataset
) -> list[Configuration]:
    """Project full rows onto an ordered feature subset."""
    if not subset:
        raise EmptySubset("projection subset is empty")
    positions = []
    for name in subset:
        if name not in dataset.feature_index:
            raise UnknownFeature(f"{dataset.name}: no feature named {name!r}")
        positions.append((name, dataset.feature_index[name]))
    return [
        Configuration({name: row.features[pos] for name, pos in positions})
        for row in rows
    ]
