"""Agglomerative hierarchical clustering over unit-norm embeddings.

Cosine distance, average (UPGMA) or complete linkage, stopping either at a
distance threshold or at a target cluster count. Merging is deterministic:
ties in the minimum linkage distance are broken by the lexicographically
smallest cluster-index pair, where a cluster's index is the smallest
original input index among its members.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .costmodel import CostLedger
from .errors import (
    DimensionMismatchError,
    EmptyClusterError,
    EmptyInputError,
    TargetTooLargeError,
)
from .types import SpeakerLabeling, canonicalize_labels


class Linkage(Enum):
    AVERAGE = "average"
    COMPLETE = "complete"


@dataclass(frozen=True)
class StopRule:
    """Either Threshold(t) on cosine distance or TargetCount(k) clusters."""

    threshold: Optional[float] = None
    target_count: Optional[int] = None

    def __post_init__(self):
        if (self.threshold is None) == (self.target_count is None):
            raise ValueError("exactly one of threshold / target_count must be set")
        if self.threshold is not None and not 0.0 <= self.threshold <= 2.0:
            raise ValueError(f"threshold {self.threshold} outside [0, 2]")
        if self.target_count is not None and self.target_count < 1:
            raise ValueError(f"target_count {self.target_count} must be >= 1")

    @classmethod
    def at_threshold(cls, t: float) -> "StopRule":
        return cls(threshold=t)

    @classmethod
    def at_count(cls, k: int) -> "StopRule":
        return cls(target_count=k)


def _as_matrix(vectors) -> np.ndarray:
    if isinstance(vectors, np.ndarray) and vectors.ndim == 2:
        return np.asarray(vectors, dtype=np.float64)
    rows = [np.asarray(v, dtype=np.float64).reshape(-1) for v in vectors]
    if not rows:
        raise EmptyInputError("no vectors")
    dim = rows[0].shape[0]
    for i, row in enumerate(rows):
        if row.shape[0] != dim:
            raise DimensionMismatchError(f"vector {i} has dim {row.shape[0]}, expected {dim}")
    return np.stack(rows)


def pairwise_cosine_distance(vectors, ledger: Optional[CostLedger] = None) -> np.ndarray:
    """D[i][j] = 1 - <v_i, v_j> for unit-norm rows; exact 0 diagonal."""
    mat = _as_matrix(vectors)
    n, d = mat.shape
    sims = mat @ mat.T
    sims = 0.5 * (sims + sims.T)  # force exact symmetry regardless of BLAS path
    dist = 1.0 - sims
    np.fill_diagonal(dist, 0.0)
    if ledger is not None:
        ledger.count_gemm(n, n, d)
        ledger.adds += 2 * n * n  # symmetrization add + the 1-minus
        ledger.muls += n * n      # symmetrization halving
    return dist


def ahc_cluster(vectors, linkage: Linkage, stop: StopRule,
                ledger: Optional[CostLedger] = None) -> SpeakerLabeling:
    """Cluster embeddings bottom-up until the stop rule halts merging.

    Threshold mode merges while the minimum linkage distance is <= t and
    halts once it exceeds t; TargetCount mode halts at exactly k clusters.
    """
    mat = _as_matrix(vectors)
    n = mat.shape[0]
    if n == 0:
        raise EmptyInputError("ahc_cluster needs at least one embedding")
    if stop.target_count is not None and stop.target_count > n:
        raise TargetTooLargeError(f"target_count {stop.target_count} > {n} inputs")
    if n == 1:
        return SpeakerLabeling(labels=(0,), num_speakers=1)

    work = pairwise_cosine_distance(mat, ledger).copy()
    np.fill_diagonal(work, np.inf)
    sizes = np.ones(n, dtype=np.int64)
    slot_of = np.arange(n)  # input -> cluster slot; slot == smallest member index
    n_active = n
    target = stop.target_count if stop.target_count is not None else 1

    while n_active > target:
        flat = int(np.argmin(work))
        i, j = divmod(flat, n)
        if i > j:
            i, j = j, i
        dmin = work[i, j]
        if ledger is not None:
            ledger.comparisons += n_active * n_active  # argmin scan model
        if stop.threshold is not None and dmin > stop.threshold:
            break
        if linkage is Linkage.COMPLETE:
            merged = np.maximum(work[i], work[j])
        else:
            merged = (sizes[i] * work[i] + sizes[j] * work[j]) / (sizes[i] + sizes[j])
        if ledger is not None:
            if linkage is Linkage.COMPLETE:
                ledger.comparisons += n_active
            else:
                ledger.muls += 2 * n_active
                ledger.adds += n_active
                ledger.divs += n_active
        work[i, :] = merged
        work[:, i] = merged
        work[i, i] = np.inf
        work[j, :] = np.inf
        work[:, j] = np.inf
        sizes[i] += sizes[j]
        slot_of[slot_of == j] = i
        n_active -= 1

    return canonicalize_labels(slot_of.tolist())


def cluster_centroids(vectors, labeling: SpeakerLabeling,
                      ledger: Optional[CostLedger] = None) -> np.ndarray:
    """Per-label arithmetic mean of member vectors, renormalized to unit norm.

    Centroids are returned in label order. A zero-norm mean (antipodal
    cancellation) falls back to the cluster's first member, deterministically.
    """
    mat = _as_matrix(vectors)
    if mat.shape[0] != len(labeling.labels):
        raise DimensionMismatchError(
            f"{mat.shape[0]} vectors but labeling covers {len(labeling.labels)}"
        )
    return weighted_label_centroids(mat, labeling, np.ones(mat.shape[0]), ledger)


def weighted_label_centroids(mat: np.ndarray, labeling: SpeakerLabeling,
                             weights: np.ndarray,
                             ledger: Optional[CostLedger] = None) -> np.ndarray:
    """Weighted mean per label (weights = represented original-input counts)."""
    labels = np.asarray(labeling.labels)
    n, d = mat.shape
    out = np.empty((labeling.num_speakers, d))
    for lab in range(labeling.num_speakers):
        members = labels == lab
        if not members.any():
            raise EmptyClusterError(f"label {lab} has no members")
        w = weights[members]
        mean = (w[:, None] * mat[members]).sum(axis=0) / w.sum()
        norm = float(np.linalg.norm(mean))
        out[lab] = mean / norm if norm > 1e-12 else mat[members][0]
    if ledger is not None:
        ledger.muls += 2 * n * d              # weighting + renormalize scale
        ledger.adds += n * d + n              # accumulate sums + weight sums
        ledger.divs += labeling.num_speakers * (d + 1) + labeling.num_speakers  # mean + norm
        ledger.adds += labeling.num_speakers * d  # norm accumulation
    return out
