"""Spectral clustering with affinity refinement and eigen-gap count estimation.

Pipeline: cosine affinity (1+cos)/2 -> percentile refinement -> unnormalized
Laplacian -> eigen-gap speaker count -> k-means over row-normalized
eigenvectors. The pruning percentile is auto-tuned over a grid by minimizing
p / (normalized maximum eigen-gap).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np

from .costmodel import CostLedger
from .errors import (
    KTooLargeError,
    NumericalError,
    TooFewEigenvaluesError,
    TooFewInputsError,
)
from .types import ClusteringConfig, SpeakerLabeling, canonicalize_labels
from .ahc import _as_matrix


class RefinementStep(Enum):
    ROW_THRESHOLD_PERCENTILE = "row_threshold_percentile"
    SYMMETRIZE_MAX = "symmetrize_max"
    ROW_MAX_NORMALIZE = "row_max_normalize"


class LaplacianKind(Enum):
    UNNORMALIZED = "unnormalized"


CANONICAL_REFINEMENT = (
    RefinementStep.ROW_THRESHOLD_PERCENTILE,
    RefinementStep.SYMMETRIZE_MAX,
    RefinementStep.ROW_MAX_NORMALIZE,
)

SOFT_THRESHOLD_MULTIPLIER = 0.01  # keeps pruned rows weakly connected


@dataclass(frozen=True)
class SpectralParams:
    max_speakers: int = 8
    autotune_grid: tuple = tuple(float(p) for p in range(40, 100, 5))
    refinement: tuple = CANONICAL_REFINEMENT
    laplacian_kind: LaplacianKind = LaplacianKind.UNNORMALIZED
    kmeans_restarts: int = 10
    kmeans_max_iters: int = 300
    rng_seed: int = 0

    @classmethod
    def from_config(cls, config: ClusteringConfig) -> "SpectralParams":
        return cls(
            max_speakers=config.max_speakers,
            autotune_grid=tuple(config.autotune_grid),
            kmeans_restarts=config.kmeans_restarts,
            kmeans_max_iters=config.kmeans_max_iters,
            rng_seed=config.rng_seed,
        )


def affinity_matrix(vectors, ledger: Optional[CostLedger] = None) -> np.ndarray:
    """A[i][j] = (1 + <v_i, v_j>) / 2 in [0, 1], with an exact unit diagonal."""
    mat = _as_matrix(vectors)
    n, d = mat.shape
    if n < 2:
        raise TooFewInputsError(f"affinity needs >= 2 embeddings, got {n}")
    sims = mat @ mat.T
    sims = 0.5 * (sims + sims.T)
    aff = 0.5 * (1.0 + sims)
    np.clip(aff, 0.0, 1.0, out=aff)
    np.fill_diagonal(aff, 1.0)
    if ledger is not None:
        ledger.count_gemm(n, n, d)
        ledger.adds += 2 * n * n   # symmetrization add + the 1-plus
        ledger.muls += 2 * n * n   # two halvings
    return aff


def refine_affinity(aff: np.ndarray, percentile: float,
                    steps: Sequence[RefinementStep] = CANONICAL_REFINEMENT,
                    ledger: Optional[CostLedger] = None) -> np.ndarray:
    """Apply the refinement steps in order and return a new matrix.

    Row-threshold scales entries strictly below the row's p-th percentile by
    ``SOFT_THRESHOLD_MULTIPLIER``; symmetrization takes elementwise max with
    the transpose; row-max normalization divides each row by its maximum.
    """
    out = np.array(aff, dtype=np.float64, copy=True)
    n = out.shape[0]
    for step in steps:
        if step is RefinementStep.ROW_THRESHOLD_PERCENTILE:
            thresh = np.percentile(out, percentile, axis=1, keepdims=True)
            out = np.where(out < thresh, out * SOFT_THRESHOLD_MULTIPLIER, out)
            if ledger is not None:
                ledger.count_selection(n, rows=n)
                ledger.comparisons += n * n
                ledger.muls += n * n
        elif step is RefinementStep.SYMMETRIZE_MAX:
            out = np.maximum(out, out.T)
            if ledger is not None:
                ledger.comparisons += n * n
        elif step is RefinementStep.ROW_MAX_NORMALIZE:
            row_max = out.max(axis=1, keepdims=True)
            row_max[row_max <= 0.0] = 1.0
            out = out / row_max
            if ledger is not None:
                ledger.comparisons += n * n
                ledger.divs += n * n
    return out


def laplacian(aff: np.ndarray, kind: LaplacianKind = LaplacianKind.UNNORMALIZED,
              ledger: Optional[CostLedger] = None) -> np.ndarray:
    """Unnormalized graph Laplacian L = D - A."""
    degrees = aff.sum(axis=1)
    lap = -aff.copy()
    np.fill_diagonal(lap, degrees - aff.diagonal())
    n = aff.shape[0]
    if ledger is not None:
        ledger.adds += n * n + n  # degree sums + diagonal fix-up
    return lap


def sym_eigh(matrix: np.ndarray,
             ledger: Optional[CostLedger] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Full symmetric eigendecomposition, eigenvalues ascending.

    Cost is recorded under eig_sweep_ops with the 9*n^3 dense-solver model.
    """
    try:
        eigenvalues, eigenvectors = np.linalg.eigh(matrix)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    if ledger is not None:
        ledger.count_eigh(matrix.shape[0])
    return eigenvalues, eigenvectors


def eigen_gap_count(eigenvalues: Sequence[float], max_speakers: int,
                    ledger: Optional[CostLedger] = None) -> int:
    """Estimate the cluster count from ascending Laplacian eigenvalues.

    Returns argmax over k in [1, min(max_speakers, N-1)] of
    lambda_{k+1} - lambda_k, ties broken toward the smaller k.
    """
    lam = np.asarray(eigenvalues, dtype=np.float64)
    if lam.ndim != 1 or lam.shape[0] < 2:
        raise TooFewEigenvaluesError("need at least two eigenvalues")
    kmax = min(max_speakers, lam.shape[0] - 1)
    gaps = lam[1 : kmax + 1] - lam[:kmax]
    if ledger is not None:
        ledger.adds += kmax
        ledger.comparisons += max(kmax - 1, 0)
    return int(np.argmax(gaps)) + 1  # first occurrence -> smallest k on ties


def auto_tune(aff: np.ndarray, params: SpectralParams,
              ledger: Optional[CostLedger] = None):
    """Search the percentile grid; return (p_best, k_best, first k eigenvectors).

    Each grid point refines the affinity, eigendecomposes the Laplacian and
    scores r(p) = p / ((lambda_{k+1} - lambda_k) / lambda_max); the smallest
    ratio wins, ties resolved by grid order. Counted work is the same for
    every grid point, so totals scale linearly with grid length.
    """
    best = None
    for p in params.autotune_grid:
        refined = refine_affinity(aff, p, params.refinement, ledger)
        lap = laplacian(refined, params.laplacian_kind, ledger)
        lam, vecs = sym_eigh(lap, ledger)
        k = eigen_gap_count(lam, params.max_speakers, ledger)
        lam_max = float(lam[-1])
        gap = float(lam[k] - lam[k - 1])
        if lam_max > 1e-12 and gap > 1e-12:
            ratio = p / (gap / lam_max)
        else:
            ratio = math.inf
        if ledger is not None:
            ledger.adds += 1
            ledger.divs += 2
            ledger.comparisons += 1
        if best is None or ratio < best[0]:
            best = (ratio, float(p), k, vecs[:, :k].copy())
    _, p_best, k_best, eigenvectors = best
    return p_best, k_best, eigenvectors


def kmeans(points: np.ndarray, k: int, seed: int, restarts: int = 10,
           max_iters: int = 300, ledger: Optional[CostLedger] = None) -> np.ndarray:
    """Seeded k-means with k-means++ init; best inertia over restarts wins.

    Deterministic given the seed: restart r uses rng(seed + r), ties in
    inertia keep the earliest restart, empty clusters are reseeded to the
    point farthest from its assigned center.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    n = pts.shape[0]
    if k > n:
        raise KTooLargeError(f"k={k} exceeds {n} points")
    if k <= 0:
        raise KTooLargeError(f"k={k} must be >= 1")
    best_labels, best_inertia = None, math.inf
    for r in range(restarts):
        rng = np.random.default_rng(seed + r)
        centers = _kmeans_pp_init(pts, k, rng, ledger)
        labels, inertia = _lloyd(pts, centers, max_iters, ledger)
        if inertia < best_inertia:
            best_labels, best_inertia = labels, inertia
    return best_labels


def _kmeans_pp_init(pts: np.ndarray, k: int, rng, ledger) -> np.ndarray:
    n, d = pts.shape
    centers = np.empty((k, d))
    chosen = np.zeros(n, dtype=bool)
    first = int(rng.integers(n))
    centers[0] = pts[first]
    chosen[first] = True
    d2 = ((pts - centers[0]) ** 2).sum(axis=1)
    if ledger is not None:
        ledger.adds += 2 * n * d
        ledger.muls += n * d
    for c in range(1, k):
        total = float(d2.sum())
        if total <= 1e-24:
            idx = int(np.flatnonzero(~chosen)[0])  # all residuals zero: first unchosen
        else:
            target = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(d2), target, side="right"))
            idx = min(idx, n - 1)
        centers[c] = pts[idx]
        chosen[idx] = True
        nd2 = ((pts - centers[c]) ** 2).sum(axis=1)
        d2 = np.minimum(d2, nd2)
        if ledger is not None:
            ledger.adds += 3 * n * d  # distance accum + cumsum model
            ledger.muls += n * d + 1
            ledger.comparisons += n + int(math.ceil(math.log2(n))) if n > 1 else n
    return centers


def _lloyd(pts: np.ndarray, centers: np.ndarray, max_iters: int, ledger):
    n, d = pts.shape
    k = centers.shape[0]
    labels = np.full(n, -1, dtype=np.int64)
    for _ in range(max_iters):
        dists = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = dists.argmin(axis=1)
        if ledger is not None:
            ledger.adds += 2 * n * k * d
            ledger.muls += n * k * d
            ledger.comparisons += n * k
        # reseed empty clusters with the points farthest from their centers
        counts = np.bincount(new_labels, minlength=k)
        empties = np.flatnonzero(counts == 0)
        if empties.size:
            residuals = dists[np.arange(n), new_labels]
            order = np.argsort(-residuals, kind="stable")
            for slot, cluster in enumerate(empties):
                new_labels[order[slot]] = cluster
            if ledger is not None:
                ledger.count_selection(n)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            members = labels == c
            if members.any():  # reseeding can empty another cluster; keep its center
                centers[c] = pts[members].mean(axis=0)
        if ledger is not None:
            ledger.adds += n * d
            ledger.divs += k * d
            ledger.comparisons += n
    dists = ((pts - centers[labels]) ** 2).sum(axis=1)
    inertia = float(dists.sum())
    if ledger is not None:
        ledger.adds += 2 * n * d + n
        ledger.muls += n * d
    return labels, inertia


def _row_normalize(vectors: np.ndarray, ledger: Optional[CostLedger]) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    safe = np.where(norms > 1e-12, norms, 1.0)
    n, k = vectors.shape
    if ledger is not None:
        ledger.muls += n * k
        ledger.adds += n * max(k - 1, 0)
        ledger.divs += n * k + n  # scaling + sqrt-as-div
        ledger.comparisons += n
    return vectors / safe


def spectral_cluster(vectors, params: SpectralParams,
                     ledger: Optional[CostLedger] = None) -> SpeakerLabeling:
    """Full spectral pipeline over unit-norm embeddings.

    For exactly two inputs the eigen-gap is uninformative (k is capped at
    N-1 = 1), so the pair is split iff its affinity is below 0.5, i.e. the
    cosine similarity is negative.
    """
    mat = _as_matrix(vectors)
    n = mat.shape[0]
    if n < 2:
        raise TooFewInputsError(f"spectral clustering needs >= 2 inputs, got {n}")
    aff = affinity_matrix(mat, ledger)
    if n == 2:
        if ledger is not None:
            ledger.comparisons += 1
        raw = (0, 1) if aff[0, 1] < 0.5 else (0, 0)
        return canonicalize_labels(raw)
    _, k, eigenvectors = auto_tune(aff, params, ledger)
    if k == 1:
        return SpeakerLabeling(labels=(0,) * n, num_speakers=1)
    embedding = _row_normalize(eigenvectors, ledger)
    labels = kmeans(embedding, k, params.rng_seed, params.kmeans_restarts,
                    params.kmeans_max_iters, ledger)
    return canonicalize_labels(labels.tolist())
