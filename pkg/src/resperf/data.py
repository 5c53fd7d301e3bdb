"""Micro-benchmark datasets and their CSV persistence.

One file holds samples of a single layer kind. Layout: '#'-prefixed metadata
lines (kind, schema version, provenance), then a header of the schema's
feature names plus t_pre,t_exe,t_post, then one comma-separated row per
sample. Times are written with full float precision so a save/load round
trip is exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, SchemaMismatchError
from .layers import (
    SCHEMA_VERSION,
    FeatureSchema,
    LayerConfig,
    LayerKind,
    PhaseKind,
    PhaseTimes,
    config_from_features,
    encode_features,
    schema_for,
    validate_config,
)

TIME_COLUMNS = ("t_pre", "t_exe", "t_post")

_PHASE_COLUMN = {
    PhaseKind.PREPROCESS: "t_pre",
    PhaseKind.EXECUTION: "t_exe",
    PhaseKind.POSTPROCESS: "t_post",
}


@dataclass(frozen=True)
class Sample:
    config: LayerConfig
    times: PhaseTimes


@dataclass
class Dataset:
    kind: LayerKind
    schema: FeatureSchema
    samples: list[Sample]
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.samples:
            raise DataError("dataset must contain at least one row")
        for i, s in enumerate(self.samples):
            if s.config.kind is not self.kind:
                raise DataError(f"row {i + 1}: kind {s.config.kind.value} "
                                f"in a {self.kind.value} dataset")

    def __len__(self) -> int:
        return len(self.samples)

    def __eq__(self, other) -> bool:
        return (isinstance(other, Dataset)
                and self.kind is other.kind
                and self.schema == other.schema
                and self.samples == other.samples
                and self.provenance == other.provenance)

    def features(self) -> np.ndarray:
        """Feature matrix, one encoded config per row."""
        return np.stack([encode_features(s.config) for s in self.samples])

    def targets(self, phase: PhaseKind) -> np.ndarray:
        column = _PHASE_COLUMN[phase]
        return np.array([getattr(s.times, column) for s in self.samples], dtype=np.float64)

    def phase_matrix(self) -> np.ndarray:
        return np.array(
            [[s.times.t_pre, s.times.t_exe, s.times.t_post] for s in self.samples],
            dtype=np.float64,
        )

    def subset(self, indices) -> "Dataset":
        rows = [self.samples[i] for i in indices]
        return Dataset(kind=self.kind, schema=self.schema, samples=rows,
                       provenance=dict(self.provenance))


def phase_column(phase: PhaseKind) -> str:
    return _PHASE_COLUMN[phase]


def save_dataset(ds: Dataset, path) -> None:
    schema = ds.schema
    lines = [
        f"# kind={ds.kind.value}",
        f"# schema_version={schema.version}",
        f"# provenance={json.dumps(ds.provenance, sort_keys=True)}",
        ",".join(schema.feature_names + TIME_COLUMNS),
    ]
    for s in ds.samples:
        feats = [str(s.config.feature(n)) for n in schema.feature_names]
        times = [repr(getattr(s.times, c)) for c in TIME_COLUMNS]
        lines.append(",".join(feats + times))
    Path(path).write_text("\n".join(lines) + "\n")


def load_dataset(path) -> Dataset:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc

    meta = {}
    body = []
    for raw in text.splitlines():
        if raw.startswith("#"):
            key, _, value = raw[1:].strip().partition("=")
            meta[key.strip()] = value.strip()
        elif raw.strip():
            body.append(raw)
    if not body:
        raise DataError(f"{path}: no header row")

    version = meta.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaMismatchError(
            f"{path}: schema version {version!r}, expected {SCHEMA_VERSION!r}"
        )
    try:
        kind = LayerKind.parse(meta.get("kind", ""))
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc
    schema = schema_for(kind)

    header = [c.strip() for c in body[0].split(",")]
    expected = list(schema.feature_names + TIME_COLUMNS)
    missing = [c for c in expected if c not in header]
    if missing:
        raise DataError(f"{path}: missing column {missing[0]}")
    extra = [c for c in header if c not in expected]
    if extra:
        raise DataError(f"{path}: unexpected column {extra[0]}")
    col_index = {c: header.index(c) for c in expected}

    try:
        provenance = json.loads(meta.get("provenance", "{}"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: bad provenance line: {exc}") from exc

    samples = []
    for rownum, line in enumerate(body[1:], start=1):
        cells = [c.strip() for c in line.split(",")]
        if len(cells) != len(header):
            raise DataError(
                f"{path}: row {rownum}: expected {len(header)} cells, got {len(cells)}"
            )

        def cell(column):
            value = cells[col_index[column]]
            try:
                return float(value)
            except ValueError:
                raise DataError(
                    f"{path}: row {rownum}: {column} is not numeric: {value!r}"
                ) from None

        feats = [cell(n) for n in schema.feature_names]
        for name, value in zip(schema.feature_names, feats):
            if value != int(value):
                raise DataError(f"{path}: row {rownum}: {name} is not an integer")
        config = config_from_features(kind, feats)
        violations = validate_config(config)
        if violations:
            raise DataError(f"{path}: row {rownum}: {violations[0]}")
        times = PhaseTimes(*(cell(c) for c in TIME_COLUMNS))
        try:
            times.validate()
        except ValueError as exc:
            raise DataError(f"{path}: row {rownum}: {exc}") from exc
        samples.append(Sample(config=config, times=times))

    return Dataset(kind=kind, schema=schema, samples=samples, provenance=provenance)
