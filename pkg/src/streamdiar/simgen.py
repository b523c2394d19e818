"""Synthetic embedding-stream generator with ground truth for verification.

Speaker directions are unit vectors with a minimum pairwise angle; turns
alternate between speakers (no self-transitions) with clipped-exponential
lengths; each turn is segmented every MAX_SEGMENT_SECONDS and each segment
yields one embedding: the speaker direction tilted by Gaussian tangent noise
and renormalized.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .errors import ConfigFileError, InfeasibleAngleError
from .metrics import RttmSegment
from .types import MAX_SEGMENT_SECONDS, EmbeddingRecord

SYNTH_FILE_ID = "synth"
_DIRECTION_ATTEMPTS = 10_000


@dataclass(frozen=True)
class TurnLengthDistribution:
    mean_seconds: float = 5.0
    min_seconds: float = 1.0
    max_seconds: float = 15.0

    def __post_init__(self):
        if not 0 < self.min_seconds <= self.mean_seconds <= self.max_seconds:
            raise ValueError(
                f"need 0 < min <= mean <= max, got {self.min_seconds}, "
                f"{self.mean_seconds}, {self.max_seconds}"
            )


@dataclass(frozen=True)
class SimSpec:
    num_speakers: int
    dim: int
    intra_speaker_angle_deg: float = 5.0
    min_inter_speaker_angle_deg: float = 60.0
    turn_length: TurnLengthDistribution = TurnLengthDistribution()
    total_duration_seconds: float = 600.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.num_speakers < 1:
            raise ValueError("num_speakers must be >= 1")
        if self.dim < 2:
            raise ValueError("dim must be >= 2")
        if self.total_duration_seconds <= 0:
            raise ValueError("total_duration_seconds must be positive")
        if self.intra_speaker_angle_deg <= 0 or self.min_inter_speaker_angle_deg <= 0:
            raise ValueError("angles must be positive")


def load_sim_spec(path) -> SimSpec:
    """Read a SimSpec from a JSON object file (fields mirror SimSpec)."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigFileError(f"{path}: invalid JSON: {exc.msg}") from exc
    if not isinstance(obj, dict) or "num_speakers" not in obj:
        raise ConfigFileError(f"{path}: expected a JSON object with num_speakers")
    turn = obj.pop("turn_length", None)
    try:
        kwargs = dict(obj)
        if turn is not None:
            kwargs["turn_length"] = TurnLengthDistribution(**turn)
        return SimSpec(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigFileError(f"{path}: {exc}") from exc


def _sample_directions(rng: np.random.Generator, k: int, dim: int,
                       min_angle_deg: float) -> np.ndarray:
    min_cos = math.cos(math.radians(min_angle_deg))
    dirs: List[np.ndarray] = []
    attempts = 0
    while len(dirs) < k:
        if attempts >= _DIRECTION_ATTEMPTS:
            raise InfeasibleAngleError(
                f"could not place {k} directions in dim {dim} with pairwise "
                f"angle >= {min_angle_deg} deg after {attempts} attempts"
            )
        attempts += 1
        cand = rng.standard_normal(dim)
        cand /= np.linalg.norm(cand)
        if all(float(np.dot(cand, d)) <= min_cos for d in dirs):
            dirs.append(cand)
    return np.stack(dirs)


def _noisy_embedding(rng: np.random.Generator, direction: np.ndarray,
                     intra_deg: float) -> np.ndarray:
    angle = abs(rng.normal(0.0, math.radians(intra_deg)))
    tangent = rng.standard_normal(direction.shape[0])
    tangent -= float(np.dot(tangent, direction)) * direction
    norm = float(np.linalg.norm(tangent))
    if norm < 1e-12:
        return direction.copy()
    tangent /= norm
    vec = math.cos(angle) * direction + math.sin(angle) * tangent
    return vec / np.linalg.norm(vec)


def generate(spec: SimSpec) -> Tuple[List[EmbeddingRecord], List[int], List[RttmSegment]]:
    """Generate (records, ground-truth labels, reference RTTM) for a spec.

    Multi-speaker streams flag the first embedding of every turn as
    turn-initiated; single-speaker streams set the flag false on every record
    so the single-speaker shortcut path is exercised.
    """
    rng = np.random.default_rng(spec.rng_seed)
    directions = _sample_directions(rng, spec.num_speakers, spec.dim,
                                    spec.min_inter_speaker_angle_deg)
    multi = spec.num_speakers > 1

    turns: List[Tuple[int, float, float]] = []
    t = 0.0
    speaker = int(rng.integers(spec.num_speakers))
    while t < spec.total_duration_seconds - 1e-9:
        length = float(np.clip(rng.exponential(spec.turn_length.mean_seconds),
                               spec.turn_length.min_seconds,
                               spec.turn_length.max_seconds))
        end = min(t + length, spec.total_duration_seconds)
        if spec.total_duration_seconds - end < spec.turn_length.min_seconds:
            end = spec.total_duration_seconds  # absorb a sub-minimum remainder
        turns.append((speaker, t, end))
        t = end
        if multi:
            step = int(rng.integers(1, spec.num_speakers))
            speaker = (speaker + step) % spec.num_speakers  # uniform over others
        # single speaker: one long stretch, still segmented every 6 s below

    records: List[EmbeddingRecord] = []
    labels: List[int] = []
    rttm: List[RttmSegment] = []
    for speaker, start, end in turns:
        rttm.append(RttmSegment(SYNTH_FILE_ID, 1, start, end - start, f"spk{speaker}"))
        seg_start = start
        first = True
        while seg_start < end - 1e-9:
            seg_end = min(seg_start + MAX_SEGMENT_SECONDS, end)
            records.append(EmbeddingRecord(
                vector=_noisy_embedding(rng, directions[speaker],
                                        spec.intra_speaker_angle_deg),
                start_time=seg_start,
                end_time=seg_end,
                turn_initiated=first and multi,
            ))
            labels.append(speaker)
            seg_start = seg_end
            first = False
    return records, labels, rttm
