"""Diarization scoring: RTTM/UEM ingestion, collar-based DER, count stats.

Conventions (kept self-consistent; other scorers may differ):
  * same-speaker segments whose gap is strictly smaller than the merge gap
    are coalesced before scoring;
  * the scored region is the UEM (given, or the non-overlapping union of the
    reference segments) minus a +-collar neighborhood around every merged
    reference segment boundary, with collar intervals subtracted after
    intersecting with the UEM;
  * the reference-hypothesis speaker mapping is global per file, chosen by
    maximum scored-region overlap (Hungarian assignment);
  * the denominator is reference speaker time inside the scored region, so
    overlapping reference speech one-label systems cannot attribute scores
    as missed speech.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import EmptyInputError, MalformedLineError, NoScoredTimeError

Interval = Tuple[float, float]


@dataclass(frozen=True)
class RttmSegment:
    file_id: str
    channel: int
    onset: float
    duration: float
    speaker: str

    @property
    def end(self) -> float:
        return self.onset + self.duration


@dataclass(frozen=True)
class ScoringOptions:
    collar: float = 0.25
    merge_gap: float = 0.01
    uem: Optional[Dict[str, List[Interval]]] = None

    def __post_init__(self):
        if self.collar < 0 or self.merge_gap < 0:
            raise ValueError("collar and merge_gap must be >= 0")


@dataclass(frozen=True)
class DerReport:
    scored_time: float
    missed_time: float
    false_alarm_time: float
    confusion_time: float

    @property
    def der(self) -> float:
        return (self.missed_time + self.false_alarm_time + self.confusion_time) \
            / self.scored_time


@dataclass(frozen=True)
class SpeakerCountStats:
    mae: float
    pct_correct: float
    pct_over: float
    pct_under: float


# ---------------------------------------------------------------------------
# RTTM / UEM parsing
# ---------------------------------------------------------------------------

def parse_rttm(text: str) -> List[RttmSegment]:
    """Parse SPEAKER lines of an RTTM document; other line types are ignored."""
    segments = []
    for line_number, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith(";;"):
            continue
        fields = line.split()
        if fields[0] != "SPEAKER":
            continue
        if len(fields) < 9:
            raise MalformedLineError(line_number, f"expected 10 RTTM fields, got {len(fields)}")
        try:
            channel = int(fields[2])
            onset = float(fields[3])
            duration = float(fields[4])
        except ValueError as exc:
            raise MalformedLineError(line_number, f"bad numeric field: {exc}") from exc
        if duration <= 0:
            raise MalformedLineError(line_number, f"non-positive duration {duration}")
        if onset < 0:
            raise MalformedLineError(line_number, f"negative onset {onset}")
        segments.append(RttmSegment(file_id=fields[1], channel=channel,
                                    onset=onset, duration=duration, speaker=fields[7]))
    return segments


def write_rttm(segments: Iterable[RttmSegment]) -> str:
    lines = []
    for seg in segments:
        lines.append(
            f"SPEAKER {seg.file_id} {seg.channel} {seg.onset!r} {seg.duration!r} "
            f"<NA> <NA> {seg.speaker} <NA> <NA>"
        )
    return "\n".join(lines) + ("\n" if lines else "")


def parse_uem(text: str) -> Dict[str, List[Interval]]:
    """Parse UEM lines "file_id channel start end" into per-file intervals."""
    out: Dict[str, List[Interval]] = defaultdict(list)
    for line_number, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith(";;"):
            continue
        fields = line.split()
        if len(fields) != 4:
            raise MalformedLineError(line_number, f"expected 4 UEM fields, got {len(fields)}")
        try:
            start, end = float(fields[2]), float(fields[3])
        except ValueError as exc:
            raise MalformedLineError(line_number, f"bad numeric field: {exc}") from exc
        if end <= start:
            raise MalformedLineError(line_number, f"empty UEM interval [{start}, {end}]")
        out[fields[0]].append((start, end))
    return {fid: union_intervals(iv) for fid, iv in out.items()}


# ---------------------------------------------------------------------------
# Interval algebra
# ---------------------------------------------------------------------------

def union_intervals(intervals: Sequence[Interval]) -> List[Interval]:
    """Flatten to disjoint sorted intervals; zero-length input intervals drop out."""
    pending = sorted((a, b) for a, b in intervals if b > a)
    merged: List[Interval] = []
    for a, b in pending:
        if merged and a <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], b))
        else:
            merged.append((a, b))
    return merged


def subtract_intervals(base: Sequence[Interval], cut: Sequence[Interval]) -> List[Interval]:
    cut = union_intervals(cut)
    out: List[Interval] = []
    for a, b in union_intervals(base):
        lo = a
        for c, d in cut:
            if d <= lo or c >= b:
                continue
            if c > lo:
                out.append((lo, c))
            lo = max(lo, d)
            if lo >= b:
                break
        if lo < b:
            out.append((lo, b))
    return out


def intersect_intervals(xs: Sequence[Interval], ys: Sequence[Interval]) -> List[Interval]:
    xs, ys = union_intervals(xs), union_intervals(ys)
    out: List[Interval] = []
    i = j = 0
    while i < len(xs) and j < len(ys):
        lo = max(xs[i][0], ys[j][0])
        hi = min(xs[i][1], ys[j][1])
        if hi > lo:
            out.append((lo, hi))
        if xs[i][1] <= ys[j][1]:
            i += 1
        else:
            j += 1
    return out


def total_length(intervals: Sequence[Interval]) -> float:
    return float(sum(b - a for a, b in intervals))


# ---------------------------------------------------------------------------
# Segment hygiene and UEM derivation
# ---------------------------------------------------------------------------

def merge_same_speaker(segments: Sequence[RttmSegment], merge_gap: float = 0.01
                       ) -> List[RttmSegment]:
    """Coalesce same-speaker neighbors whose gap is strictly below merge_gap.

    Segments must belong to one file. A gap of exactly merge_gap stays split;
    different speakers are never merged. Output is sorted by onset.
    """
    by_speaker: Dict[str, List[RttmSegment]] = defaultdict(list)
    for seg in segments:
        by_speaker[seg.speaker].append(seg)
    merged: List[RttmSegment] = []
    for speaker, segs in by_speaker.items():
        segs = sorted(segs, key=lambda s: (s.onset, s.duration))
        current = segs[0]
        for seg in segs[1:]:
            if seg.onset - current.end < merge_gap:
                new_end = max(current.end, seg.end)
                current = RttmSegment(current.file_id, current.channel,
                                      current.onset, new_end - current.onset, speaker)
            else:
                merged.append(current)
                current = seg
        merged.append(current)
    return sorted(merged, key=lambda s: (s.onset, s.speaker))


def derive_uem(reference_segments: Sequence[RttmSegment]) -> List[Interval]:
    """Non-overlapping union of the reference segments of one file."""
    return union_intervals([(s.onset, s.end) for s in reference_segments])


# ---------------------------------------------------------------------------
# DER
# ---------------------------------------------------------------------------

def compute_der(reference: Sequence[RttmSegment], hypothesis: Sequence[RttmSegment],
                options: ScoringOptions = ScoringOptions()) -> DerReport:
    """Collar-based DER over one or more files with optimal speaker mapping.

    Inputs are merged per ``options.merge_gap`` (idempotent if the caller
    already did). Components are summed across files; raises
    NoScoredTimeError when no reference speaker time survives the collars.
    """
    ref_by_file: Dict[str, List[RttmSegment]] = defaultdict(list)
    hyp_by_file: Dict[str, List[RttmSegment]] = defaultdict(list)
    for seg in reference:
        ref_by_file[seg.file_id].append(seg)
    for seg in hypothesis:
        hyp_by_file[seg.file_id].append(seg)

    scored = missed = false_alarm = confusion = 0.0
    for file_id in sorted(ref_by_file):
        part = _score_file(ref_by_file[file_id], hyp_by_file.get(file_id, []), options)
        scored += part[0]
        missed += part[1]
        false_alarm += part[2]
        confusion += part[3]
    if scored <= 0.0:
        raise NoScoredTimeError("no reference speaker time inside the scored region")
    return DerReport(scored_time=scored, missed_time=missed,
                     false_alarm_time=false_alarm, confusion_time=confusion)


def _score_file(reference: Sequence[RttmSegment], hypothesis: Sequence[RttmSegment],
                options: ScoringOptions) -> Tuple[float, float, float, float]:
    ref = merge_same_speaker(reference, options.merge_gap)
    hyp = merge_same_speaker(hypothesis, options.merge_gap) if hypothesis else []
    file_id = ref[0].file_id

    if options.uem is not None and file_id in options.uem:
        uem = union_intervals(options.uem[file_id])
    else:
        uem = derive_uem(ref)
    collars = [(b - options.collar, b + options.collar)
               for seg in ref for b in (seg.onset, seg.end)]
    scored_region = subtract_intervals(uem, collars)
    if not scored_region:
        return 0.0, 0.0, 0.0, 0.0

    ref_turns = {spk: [(s.onset, s.end) for s in ref if s.speaker == spk]
                 for spk in sorted({s.speaker for s in ref})}
    hyp_turns = {spk: [(s.onset, s.end) for s in hyp if s.speaker == spk]
                 for spk in sorted({s.speaker for s in hyp})}
    ref_names = list(ref_turns)
    hyp_names = list(hyp_turns)

    # Clip everything to the scored region once, then score on a shared timeline.
    ref_clipped = {spk: intersect_intervals(iv, scored_region)
                   for spk, iv in ref_turns.items()}
    hyp_clipped = {spk: intersect_intervals(iv, scored_region)
                   for spk, iv in hyp_turns.items()}

    mapping = _optimal_mapping(ref_names, hyp_names, ref_clipped, hyp_clipped)

    cuts = sorted({t for iv in scored_region for t in iv}
                  | {t for iv_list in ref_clipped.values() for iv in iv_list for t in iv}
                  | {t for iv_list in hyp_clipped.values() for iv in iv_list for t in iv})
    scored_time = missed = false_alarm = confusion = 0.0
    for lo, hi in zip(cuts, cuts[1:]):
        dt = hi - lo
        if dt <= 0 or not _covered(lo, hi, scored_region):
            continue
        active_ref = [spk for spk, iv in ref_clipped.items() if _covered(lo, hi, iv)]
        active_hyp = {spk for spk, iv in hyp_clipped.items() if _covered(lo, hi, iv)}
        n_ref, n_hyp = len(active_ref), len(active_hyp)
        correct = sum(1 for spk in active_ref if mapping.get(spk) in active_hyp)
        scored_time += n_ref * dt
        missed += max(0, n_ref - n_hyp) * dt
        false_alarm += max(0, n_hyp - n_ref) * dt
        confusion += (min(n_ref, n_hyp) - correct) * dt
    return scored_time, missed, false_alarm, confusion


def _covered(lo: float, hi: float, intervals: Sequence[Interval]) -> bool:
    mid = 0.5 * (lo + hi)
    return any(a <= mid < b for a, b in intervals)


def _optimal_mapping(ref_names: List[str], hyp_names: List[str],
                     ref_clipped: Dict[str, List[Interval]],
                     hyp_clipped: Dict[str, List[Interval]]) -> Dict[str, str]:
    if not ref_names or not hyp_names:
        return {}
    overlap = np.zeros((len(ref_names), len(hyp_names)))
    for i, r in enumerate(ref_names):
        for j, h in enumerate(hyp_names):
            overlap[i, j] = total_length(
                intersect_intervals(ref_clipped[r], hyp_clipped[h]))
    rows, cols = linear_sum_assignment(overlap, maximize=True)
    return {ref_names[i]: hyp_names[j] for i, j in zip(rows, cols)
            if overlap[i, j] > 0}


# ---------------------------------------------------------------------------
# Speaker count statistics
# ---------------------------------------------------------------------------

def speaker_count_stats(pairs: Sequence[Tuple[int, int]]) -> SpeakerCountStats:
    """Mean absolute error of speaker counts plus correct/over/under percentages."""
    if len(pairs) == 0:
        raise EmptyInputError("no (reference, hypothesis) count pairs")
    n = len(pairs)
    abs_err = sum(abs(hyp - ref) for ref, hyp in pairs)
    n_correct = sum(1 for ref, hyp in pairs if hyp == ref)
    n_over = sum(1 for ref, hyp in pairs if hyp > ref)
    n_under = n - n_correct - n_over
    return SpeakerCountStats(
        mae=abs_err / n,
        pct_correct=100.0 * n_correct / n,
        pct_over=100.0 * n_over / n,
        pct_under=100.0 * n_under / n,
    )


def der_report_lines(report: DerReport, stats: Optional[SpeakerCountStats] = None
                     ) -> List[str]:
    """Render a report as key=value lines (the structured-text output format)."""
    lines = [
        f"scored_time={report.scored_time:.4f}",
        f"missed_time={report.missed_time:.4f}",
        f"false_alarm_time={report.false_alarm_time:.4f}",
        f"confusion_time={report.confusion_time:.4f}",
        f"der={report.der:.4f}",
    ]
    if stats is not None:
        lines += [
            f"speaker_count_mae={stats.mae:.4f}",
            f"pct_correct={stats.pct_correct:.1f}",
            f"pct_over={stats.pct_over:.1f}",
            f"pct_under={stats.pct_under:.1f}",
        ]
    return lines


def der_report_json(report: DerReport) -> Dict[str, float]:
    """Machine-readable summary with the DerReport fields."""
    return {
        "scored_time": report.scored_time,
        "missed_time": report.missed_time,
        "false_alarm_time": report.false_alarm_time,
        "confusion_time": report.confusion_time,
        "der": report.der,
    }
