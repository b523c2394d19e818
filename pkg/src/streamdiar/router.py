"""Multi-stage dispatch: stage selection, pre-clustering, dynamic compression.

Stage intervals are half-open: fallback AHC for N < L, spectral directly for
L <= N < U1, complete-linkage pre-clustering down to U1 centroids for
U1 <= N while the effective input size stays below U2, and a compression
step (cache the U1 centroids and their input mapping) exactly when the
effective size reaches U2. After K compressions the cache covers
U2 + (K-1)*(U2-U1) original inputs and the AHC input size never exceeds U2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np

from .ahc import Linkage, StopRule, ahc_cluster, weighted_label_centroids
from .costmodel import CostLedger
from .errors import IncompleteMappingError, SizeMismatchError
from .spectral import SpectralParams, spectral_cluster
from .types import ClusteringConfig, SpeakerLabeling, canonicalize_labels


class Stage(Enum):
    SINGLE_SPEAKER = "single_speaker"
    FALLBACK = "fallback"
    MAIN = "main"
    PRE_CLUSTER = "pre_cluster"
    COMPRESSED_PRE_CLUSTER = "compressed_pre_cluster"


@dataclass(frozen=True)
class CompressionCache:
    """Cached pre-cluster centroids and their mapping to original inputs.

    ``assignment[i]`` lists the original input indices centroid i represents;
    the lists partition [0, covered_prefix_len). ``compressions_applied`` is
    the K of the coverage formula.
    """

    centroids: np.ndarray            # (num_cached, d); empty (0, 0) when K = 0
    assignment: tuple                # tuple of sorted tuples of input indices
    compressions_applied: int
    covered_prefix_len: int

    @classmethod
    def empty(cls) -> "CompressionCache":
        return cls(centroids=np.empty((0, 0)), assignment=(),
                   compressions_applied=0, covered_prefix_len=0)

    @property
    def num_cached(self) -> int:
        return len(self.assignment)

    def represented_counts(self) -> np.ndarray:
        return np.array([len(ix) for ix in self.assignment], dtype=np.int64)


def effective_input_count(n: int, cache: CompressionCache) -> int:
    """Cached centroids plus the uncompressed tail length."""
    return cache.num_cached + (n - cache.covered_prefix_len)


def route(n: int, turn_seen: bool, config: ClusteringConfig,
          cache: CompressionCache) -> Stage:
    """Pick the clustering stage for a step with N original inputs."""
    if not turn_seen:
        return Stage.SINGLE_SPEAKER
    if n < config.fallback_lower_bound:
        return Stage.FALLBACK
    u1 = math.inf if config.main_upper_bound is None else config.main_upper_bound
    u2 = math.inf if config.pre_upper_bound is None else config.pre_upper_bound
    if n < u1:
        return Stage.MAIN
    n_eff = effective_input_count(n, cache)
    if n_eff < u2:
        return Stage.PRE_CLUSTER
    assert n_eff == u2, f"effective size {n_eff} overran U2={u2}"
    return Stage.COMPRESSED_PRE_CLUSTER


def compress(effective_vectors: np.ndarray, cache: CompressionCache,
             config: ClusteringConfig,
             ledger: Optional[CostLedger] = None
             ) -> Tuple[CompressionCache, SpeakerLabeling]:
    """Compress exactly U2 effective inputs down to U1 cached centroids.

    New centroids are means weighted by the number of original inputs each
    effective item represents, renormalized; the new assignment composes the
    old centroid-to-input mapping with the fresh clustering. Returns the new
    cache together with the pre-cluster labeling of the effective inputs so
    the caller can reuse the AHC result for this step's spectral stage.
    """
    u1, u2 = config.main_upper_bound, config.pre_upper_bound
    n_eff = effective_vectors.shape[0]
    if n_eff != u2:
        raise SizeMismatchError(f"compress needs exactly U2={u2} inputs, got {n_eff}")
    pre = ahc_cluster(effective_vectors, Linkage.COMPLETE, StopRule.at_count(u1), ledger)
    weights = _effective_weights(cache, n_eff)
    centroids = weighted_label_centroids(effective_vectors, pre, weights.astype(np.float64),
                                         ledger)
    groups: list = [[] for _ in range(pre.num_speakers)]
    tail_start = cache.covered_prefix_len
    for eff_idx, label in enumerate(pre.labels):
        if eff_idx < cache.num_cached:
            groups[label].extend(cache.assignment[eff_idx])
        else:
            groups[label].append(tail_start + (eff_idx - cache.num_cached))
    new_cache = CompressionCache(
        centroids=centroids,
        assignment=tuple(tuple(sorted(g)) for g in groups),
        compressions_applied=cache.compressions_applied + 1,
        covered_prefix_len=cache.covered_prefix_len + (n_eff - cache.num_cached),
    )
    return new_cache, pre


def _effective_weights(cache: CompressionCache, n_eff: int) -> np.ndarray:
    weights = np.ones(n_eff, dtype=np.int64)
    if cache.num_cached:
        weights[: cache.num_cached] = cache.represented_counts()
    return weights


def expand_labels(centroid_labels: Sequence[int],
                  pre_cluster_membership: Sequence[int],
                  cache: CompressionCache) -> SpeakerLabeling:
    """Propagate pre-cluster speaker labels back to every original input.

    ``pre_cluster_membership[e]`` is the pre-cluster of effective item e; the
    first ``cache.num_cached`` effective items expand through the cache
    assignment, the rest map one-to-one onto the uncompressed tail.
    """
    n_eff = len(pre_cluster_membership)
    n_total = cache.covered_prefix_len + (n_eff - cache.num_cached)
    out = np.full(n_total, -1, dtype=np.int64)
    for eff_idx, pre_label in enumerate(pre_cluster_membership):
        speaker = int(centroid_labels[pre_label])
        if eff_idx < cache.num_cached:
            out[list(cache.assignment[eff_idx])] = speaker
        else:
            out[cache.covered_prefix_len + (eff_idx - cache.num_cached)] = speaker
    if (out < 0).any():
        missing = int(np.flatnonzero(out < 0)[0])
        raise IncompleteMappingError(f"original input {missing} received no label")
    return canonicalize_labels(out.tolist())


@dataclass
class StepResult:
    labeling: SpeakerLabeling
    stage: Stage
    cache: CompressionCache


def cluster_step(all_turn_flags: Sequence[bool], effective_vectors: np.ndarray,
                 cache: CompressionCache, config: ClusteringConfig,
                 spectral_params: SpectralParams,
                 ledger: Optional[CostLedger] = None) -> StepResult:
    """Run one full clustering step over the current stream state.

    The labeling always covers all N original inputs. A compression step
    reuses its own AHC result as this step's pre-clustering, so no extra
    clustering work happens when the cache updates.
    """
    n = len(all_turn_flags)
    turn_seen = any(bool(f) for f in all_turn_flags)
    stage = route(n, turn_seen, config, cache)
    u2 = config.pre_upper_bound

    if stage is Stage.SINGLE_SPEAKER:
        # Still honor the U2 storage bound: cache centroids when the buffer
        # fills, but emit the single-speaker labeling without spectral work.
        if u2 is not None and effective_vectors.shape[0] == u2:
            cache, _ = compress(effective_vectors, cache, config, ledger)
        labeling = SpeakerLabeling(labels=(0,) * n, num_speakers=1)
        return StepResult(labeling, stage, cache)

    if stage is Stage.FALLBACK:
        # N < L <= U1 < U2 implies the cache is empty here.
        labeling = ahc_cluster(effective_vectors, Linkage.AVERAGE,
                               StopRule.at_threshold(config.fallback_threshold), ledger)
        return StepResult(labeling, stage, cache)

    if stage is Stage.MAIN:
        if n == 1:  # degenerate first-record turn flag: no clustering needed
            return StepResult(SpeakerLabeling(labels=(0,), num_speakers=1), stage, cache)
        labeling = spectral_cluster(effective_vectors, spectral_params, ledger)
        return StepResult(labeling, stage, cache)

    if stage is Stage.COMPRESSED_PRE_CLUSTER:
        cache, _ = compress(effective_vectors, cache, config, ledger)
        centroids = cache.centroids
        membership = tuple(range(cache.num_cached))
    else:  # PRE_CLUSTER
        pre = ahc_cluster(effective_vectors, Linkage.COMPLETE,
                          StopRule.at_count(config.main_upper_bound), ledger)
        weights = _effective_weights(cache, effective_vectors.shape[0])
        centroids = weighted_label_centroids(effective_vectors, pre,
                                             weights.astype(np.float64), ledger)
        membership = pre.labels

    if centroids.shape[0] < 2:
        centroid_labels: Sequence[int] = (0,) * centroids.shape[0]
    else:
        centroid_labels = spectral_cluster(centroids, spectral_params, ledger).labels
    labeling = expand_labels(centroid_labels, membership, cache)
    return StepResult(labeling, stage, cache)
