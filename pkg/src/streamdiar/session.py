"""Streaming driver: one embedding in, a fresh full labeling out.

Every push re-clusters the entire effective sequence, so labels assigned to
earlier inputs may change in later steps. The session owns the compression
cache and enforces the U2 vector-storage bound after every push.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .costmodel import CostLedger
from .errors import DimensionMismatchError, EmptySessionError
from .router import CompressionCache, Stage, cluster_step, effective_input_count
from .spectral import SpectralParams
from .types import (
    ClusteringConfig,
    EmbeddingRecord,
    SpeakerLabeling,
    canonicalize_labels,
    validate_config,
)


@dataclass
class StepTrace:
    step: int
    stage: Stage
    num_speakers: int
    ledger: CostLedger


class DiarizationSession:
    """Single-threaded streaming diarization over one embedding stream."""

    def __init__(self, config: ClusteringConfig,
                 spectral_params: Optional[SpectralParams] = None):
        self.config = validate_config(config)
        self.spectral_params = spectral_params or SpectralParams.from_config(config)
        self.cache = CompressionCache.empty()
        self.tail: List[EmbeddingRecord] = []
        self.turn_flags: List[bool] = []
        self.dim: Optional[int] = None
        self.last_labeling: Optional[SpeakerLabeling] = None
        self.trace: List[StepTrace] = []

    @property
    def step_count(self) -> int:
        return len(self.turn_flags)

    @property
    def turn_seen(self) -> bool:
        return any(self.turn_flags)

    def stored_vector_count(self) -> int:
        return self.cache.num_cached + len(self.tail)

    def _ingest(self, record: EmbeddingRecord) -> None:
        if self.dim is None:
            self.dim = record.dim
        elif record.dim != self.dim:
            raise DimensionMismatchError(
                f"record dimension {record.dim} != session dimension {self.dim}"
            )
        self.tail.append(record)
        self.turn_flags.append(bool(record.turn_initiated))

    def _effective_matrix(self) -> np.ndarray:
        tail_mat = np.stack([r.vector for r in self.tail]) if self.tail else \
            np.empty((0, self.dim))
        if self.cache.num_cached == 0:
            return tail_mat
        return np.vstack([self.cache.centroids, tail_mat])

    def push(self, record: EmbeddingRecord) -> SpeakerLabeling:
        """Append a record, re-cluster, and return the labeling of all N inputs."""
        self._ingest(record)
        ledger = CostLedger()
        result = cluster_step(self.turn_flags, self._effective_matrix(),
                              self.cache, self.config, self.spectral_params, ledger)
        if result.cache is not self.cache:  # compression ran; tail is now covered
            self.cache = result.cache
            self.tail = []
        self.last_labeling = result.labeling
        self.trace.append(StepTrace(self.step_count, result.stage,
                                    result.labeling.num_speakers, ledger))
        self._audit_storage()
        return result.labeling

    def fast_forward(self, record: EmbeddingRecord) -> None:
        """Advance stream state without producing labels.

        Compression is applied exactly when a clustering push would apply it,
        so per-step costs measured later are identical to a fully clustered
        session. Used by the cost sweep; not part of the streaming API.
        """
        from .router import compress, route  # local to keep the hot path obvious

        self._ingest(record)
        stage = route(self.step_count, self.turn_seen, self.config, self.cache)
        u2 = self.config.pre_upper_bound
        if u2 is not None and effective_input_count(self.step_count, self.cache) == u2:
            self.cache, _ = compress(self._effective_matrix(), self.cache, self.config)
            self.tail = []
        self.trace.append(StepTrace(self.step_count, stage, 0, CostLedger()))
        self._audit_storage()

    def _audit_storage(self) -> None:
        u2 = self.config.pre_upper_bound
        if u2 is not None:
            stored = self.stored_vector_count()
            assert stored <= u2, f"stored {stored} vectors, bound U2={u2}"

    def finalize(self) -> Tuple[SpeakerLabeling, List[StepTrace]]:
        """Return the last labeling and the per-step stage/cost trace."""
        if self.step_count == 0:
            raise EmptySessionError("no records were pushed")
        return self.last_labeling, list(self.trace)


def stable_display_labels(previous: SpeakerLabeling,
                          current: SpeakerLabeling) -> SpeakerLabeling:
    """Rename current's labels to minimize churn against the previous step.

    Maximum-overlap matching (Hungarian assignment on the label-confusion
    matrix over the shared indices); the partition is unchanged, only names
    move. Display-side convenience: never feeds back into clustering.
    """
    shared = min(len(previous.labels), len(current.labels))
    overlap = np.zeros((previous.num_speakers, current.num_speakers), dtype=np.int64)
    for prev_lab, cur_lab in zip(previous.labels[:shared], current.labels[:shared]):
        overlap[prev_lab, cur_lab] += 1
    rows, cols = linear_sum_assignment(overlap, maximize=True)
    rename = {}
    for r, c in zip(rows, cols):
        if overlap[r, c] > 0:
            rename[int(c)] = int(r)
    used = set(rename.values())
    next_fresh = 0
    for lab in current.labels:  # first-appearance order for unmatched labels
        lab = int(lab)
        if lab in rename:
            continue
        while next_fresh in used:
            next_fresh += 1
        rename[lab] = next_fresh
        used.add(next_fresh)
    relabeled = tuple(rename[int(lab)] for lab in current.labels)
    return SpeakerLabeling(labels=relabeled, num_speakers=current.num_speakers)
