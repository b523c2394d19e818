"""Core domain types: embedding records, clustering configuration, labelings.

Everything in this module is an immutable value; the streaming session and
router copy or replace these objects instead of mutating them.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import (
    BoundOrderingError,
    ConfigFileError,
    DimensionMismatchError,
    EmptyGridError,
    EmptyInputError,
    InvalidRecordError,
    MalformedLineError,
)

MAX_SEGMENT_SECONDS = 6.0
MIN_VECTOR_NORM = 1e-9


@dataclass(frozen=True)
class EmbeddingRecord:
    """One speaker embedding with its time span and turn flag.

    The vector is renormalized to unit L2 norm at construction; inputs with
    norm below ``MIN_VECTOR_NORM`` are rejected.
    """

    vector: np.ndarray
    start_time: float
    end_time: float
    turn_initiated: bool

    def __post_init__(self):
        vec = np.asarray(self.vector, dtype=np.float64).reshape(-1)
        norm = float(np.linalg.norm(vec))
        if norm < MIN_VECTOR_NORM:
            raise InvalidRecordError(f"vector norm {norm:g} below {MIN_VECTOR_NORM:g}")
        vec = vec / norm
        vec.flags.writeable = False
        object.__setattr__(self, "vector", vec)
        if not self.end_time > self.start_time:
            raise InvalidRecordError(
                f"end_time {self.end_time} must exceed start_time {self.start_time}"
            )
        if self.end_time - self.start_time > MAX_SEGMENT_SECONDS + 1e-9:
            raise InvalidRecordError(
                f"segment of {self.end_time - self.start_time:.3f}s exceeds "
                f"{MAX_SEGMENT_SECONDS}s maximum"
            )

    @property
    def dim(self) -> int:
        return self.vector.shape[0]


@dataclass(frozen=True)
class ClusteringConfig:
    """Stage bounds and clusterer hyperparameters.

    ``main_upper_bound`` / ``pre_upper_bound`` use ``None`` for "unbounded"
    (the stage is disabled); they are never encoded as a large sentinel int.
    """

    fallback_lower_bound: int = 50
    main_upper_bound: Optional[int] = 300
    pre_upper_bound: Optional[int] = 600
    fallback_threshold: float = 0.5
    max_speakers: int = 8
    autotune_grid: tuple = tuple(float(p) for p in range(40, 100, 5))
    kmeans_restarts: int = 10
    kmeans_max_iters: int = 300
    rng_seed: int = 0


def _bound_value(bound: Optional[int]) -> float:
    return math.inf if bound is None else float(bound)


def validate_config(config: ClusteringConfig) -> ClusteringConfig:
    """Check all ClusteringConfig invariants; return the config unchanged.

    Raises BoundOrderingError unless 0 <= L <= U1 < U2 (None compares as
    infinity; U1 = U2 = None is the joint "no pre-clusterer" case).
    """
    lo = config.fallback_lower_bound
    u1 = _bound_value(config.main_upper_bound)
    u2 = _bound_value(config.pre_upper_bound)
    if lo < 0:
        raise BoundOrderingError(f"fallback_lower_bound {lo} must be >= 0")
    if u1 != math.inf and u1 < 1:
        raise BoundOrderingError(f"main_upper_bound {config.main_upper_bound} must be >= 1")
    if u2 != math.inf and u2 < 1:
        raise BoundOrderingError(f"pre_upper_bound {config.pre_upper_bound} must be >= 1")
    if math.isinf(u1) and math.isinf(u2):
        pass  # jointly unbounded: pre-clusterer disabled
    elif not (lo <= u1 < u2):
        raise BoundOrderingError(
            f"bounds must satisfy L <= U1 < U2, got L={lo}, U1={config.main_upper_bound}, "
            f"U2={config.pre_upper_bound}"
        )
    if not 0.0 <= config.fallback_threshold <= 2.0:
        raise BoundOrderingError(
            f"fallback_threshold {config.fallback_threshold} outside [0, 2]"
        )
    if config.max_speakers < 1:
        raise BoundOrderingError(f"max_speakers {config.max_speakers} must be >= 1")
    grid = tuple(config.autotune_grid)
    if len(grid) == 0:
        raise EmptyGridError("autotune_grid is empty")
    if any(not 0.0 < p < 100.0 for p in grid):
        raise EmptyGridError(f"autotune_grid percentiles must lie in (0, 100): {grid}")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise EmptyGridError(f"autotune_grid must be strictly increasing: {grid}")
    if config.kmeans_restarts < 1 or config.kmeans_max_iters < 1:
        raise BoundOrderingError("kmeans_restarts and kmeans_max_iters must be >= 1")
    return config


@dataclass(frozen=True)
class SpeakerLabeling:
    """A partition of input indices into canonical integer speaker labels.

    Labels are contiguous 0..num_speakers-1 in order of first appearance and
    always cover every original input, never the compressed count.
    """

    labels: tuple
    num_speakers: int

    def __len__(self) -> int:
        return len(self.labels)


def canonicalize_labels(raw: Sequence[int]) -> SpeakerLabeling:
    """Renumber labels by first appearance: [3,3,7,3,1] -> [0,0,1,0,2]."""
    if len(raw) == 0:
        raise EmptyInputError("cannot canonicalize an empty labeling")
    mapping: dict = {}
    out = []
    for lab in raw:
        lab = int(lab)
        if lab not in mapping:
            mapping[lab] = len(mapping)
        out.append(mapping[lab])
    return SpeakerLabeling(labels=tuple(out), num_speakers=len(mapping))


def records_to_matrix(records: Sequence[EmbeddingRecord]) -> np.ndarray:
    """Stack record vectors into an (n, d) float64 matrix, checking dims."""
    if len(records) == 0:
        raise EmptyInputError("no records")
    dim = records[0].dim
    for i, rec in enumerate(records):
        if rec.dim != dim:
            raise DimensionMismatchError(
                f"record {i} has dimension {rec.dim}, expected {dim}"
            )
    return np.stack([rec.vector for rec in records])


# ---------------------------------------------------------------------------
# Embedding stream file format (JSON Lines)
# ---------------------------------------------------------------------------

def parse_record_line(line: str, line_number: int = 0) -> EmbeddingRecord:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedLineError(line_number, f"invalid JSON: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise MalformedLineError(line_number, "expected a JSON object")
    for key in ("start", "end", "turn", "vec"):
        if key not in obj:
            raise MalformedLineError(line_number, f"missing field '{key}'")
    try:
        return EmbeddingRecord(
            vector=np.asarray(obj["vec"], dtype=np.float64),
            start_time=float(obj["start"]),
            end_time=float(obj["end"]),
            turn_initiated=bool(obj["turn"]),
        )
    except (TypeError, ValueError, InvalidRecordError) as exc:
        raise MalformedLineError(line_number, str(exc)) from exc


def read_jsonl_stream(path) -> list:
    """Read an embedding stream file; all records must share one dimension."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            rec = parse_record_line(line, line_number)
            if records and rec.dim != records[0].dim:
                raise MalformedLineError(
                    line_number,
                    f"dimension {rec.dim} differs from stream dimension {records[0].dim}",
                )
            records.append(rec)
    return records


def write_jsonl_stream(records: Iterable[EmbeddingRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            obj = {
                "start": rec.start_time,
                "end": rec.end_time,
                "turn": rec.turn_initiated,
                "vec": [float(x) for x in rec.vector],
            }
            fh.write(json.dumps(obj) + "\n")


# ---------------------------------------------------------------------------
# Config file format: flat "key = value" lines mirroring ClusteringConfig
# ---------------------------------------------------------------------------

_INT_FIELDS = ("fallback_lower_bound", "max_speakers", "kmeans_restarts",
               "kmeans_max_iters", "rng_seed")
_BOUND_FIELDS = ("main_upper_bound", "pre_upper_bound")


def load_config_file(path) -> ClusteringConfig:
    """Parse a flat key = value config file into a validated ClusteringConfig.

    Unknown keys are rejected; unset keys keep their defaults. The bounds
    accept "inf" (case-insensitive) for unbounded.
    """
    overrides = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigFileError(f"{path}: line {line_number}: expected key = value")
            key, _, value = text.partition("=")
            key, value = key.strip(), value.strip()
            try:
                overrides[key] = _parse_config_value(key, value)
            except ValueError as exc:
                raise ConfigFileError(f"{path}: line {line_number}: {exc}") from exc
    return validate_config(replace(ClusteringConfig(), **overrides))


def _parse_config_value(key: str, value: str):
    if key in _BOUND_FIELDS:
        if value.lower() in ("inf", "infinity", "none"):
            return None
        return int(value)
    if key in _INT_FIELDS:
        return int(value)
    if key == "fallback_threshold":
        return float(value)
    if key == "autotune_grid":
        return tuple(float(tok) for tok in value.split(",") if tok.strip())
    raise ValueError(f"unknown config key '{key}'")
