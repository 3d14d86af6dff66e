"""Segment-based evaluation of polyphonic sound event annotations.

A clip is cut into half-open segments ``[k*L, (k+1)*L)``. For each segment
and class the reference and the estimate are either active or not, and the
scores follow the usual segment-based definitions::

    F1_micro = 2*TP / (2*TP + FP + FN)            (pooled over classes)
    F1_macro = mean_c 2*TP_c / (2*TP_c + FP_c + FN_c)
    ER       = (S + D + I) / N

with, per segment, ``S = min(FN, FP)``, ``D = max(0, FN - FP)``,
``I = max(0, FP - FN)`` and ``N`` the number of active reference classes.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import reduce
from operator import add
from typing import Iterable, Sequence

import numpy as np

from .annotations import AnnotationSet, EventInstance

DEFAULT_SEGMENT_LENGTH = 1.0

# relative slack when mapping times onto segment indices, so that e.g. an
# event starting at 0.6 with 0.2 s segments lands in segment 3, not 2
_GRID_EPS = 1e-9


class UndefinedMetricError(ArithmeticError):
    """Raised when the reference has no active segment (ER has no denominator)."""


def num_segments(duration: float, segment_length: float) -> int:
    return max(1, math.ceil(duration / segment_length - _GRID_EPS))


@dataclass(frozen=True, eq=False)
class FrameActivityGrid:
    """Binary class activity of one clip on fixed-length segments."""

    clip_id: str
    frame_length: float
    vocabulary: tuple[str, ...]
    active: np.ndarray
    duration: float | None = None

    def __post_init__(self):
        active = np.array(self.active, dtype=bool)
        if active.ndim != 2 or active.shape[1] != len(self.vocabulary):
            raise ValueError(
                f"activity must have shape [segments, {len(self.vocabulary)}], got {active.shape}")
        if not self.frame_length > 0:
            raise ValueError("frame_length must be positive")
        active.setflags(write=False)
        object.__setattr__(self, "active", active)
        object.__setattr__(self, "vocabulary", tuple(self.vocabulary))
        if self.duration is None:
            object.__setattr__(self, "duration", active.shape[0] * self.frame_length)

    @property
    def num_segments(self) -> int:
        return self.active.shape[0]

    def __eq__(self, other):
        if not isinstance(other, FrameActivityGrid):
            return NotImplemented
        return (self.clip_id == other.clip_id and self.frame_length == other.frame_length
                and self.vocabulary == other.vocabulary and self.duration == other.duration
                and np.array_equal(self.active, other.active))

    def __repr__(self):
        return (f"FrameActivityGrid(clip_id={self.clip_id!r}, frame_length={self.frame_length}, "
                f"vocabulary={self.vocabulary}, active=<{self.num_segments}x{len(self.vocabulary)}>)")


def rasterize(events: Iterable[EventInstance], clip_id: str, duration: float,
              vocabulary: Sequence[str], frame_length: float) -> FrameActivityGrid:
    n = num_segments(duration, frame_length)
    col = {label: i for i, label in enumerate(vocabulary)}
    active = np.zeros((n, len(vocabulary)), dtype=bool)
    for ev in events:
        first = math.floor(ev.onset / frame_length + _GRID_EPS)
        stop = math.ceil(ev.offset / frame_length - _GRID_EPS)
        if stop > first:
            active[max(first, 0):min(stop, n), col[ev.label]] = True
    return FrameActivityGrid(clip_id, frame_length, tuple(vocabulary), active, duration)


def events_to_grid(aset: AnnotationSet, clip_id: str,
                   frame_length: float = DEFAULT_SEGMENT_LENGTH) -> FrameActivityGrid:
    """Mark segment ``k`` of class ``c`` active when an event of ``c`` overlaps
    ``[k*L, (k+1)*L)`` for a strictly positive time."""
    if clip_id not in aset.clips:
        raise KeyError(f"unknown clip_id {clip_id!r}")
    if not frame_length > 0:
        raise ValueError("frame_length must be positive")
    return rasterize(aset.events_for(clip_id), clip_id, aset.clips[clip_id],
                     aset.vocabulary, frame_length)


@dataclass(frozen=True, eq=False)
class SegmentStats:
    """Additive segment-based counts. ``a + b`` pools two sets of clips."""

    vocabulary: tuple[str, ...]
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    substitutions: int = 0
    deletions: int = 0
    insertions: int = 0
    reference_active: int = 0

    def __post_init__(self):
        for name in ("tp", "fp", "fn"):
            arr = np.array(getattr(self, name), dtype=np.int64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "vocabulary", tuple(self.vocabulary))

    @classmethod
    def empty(cls, vocabulary: Sequence[str]) -> "SegmentStats":
        zeros = np.zeros(len(vocabulary), dtype=np.int64)
        return cls(tuple(vocabulary), zeros, zeros, zeros)

    def __add__(self, other: "SegmentStats") -> "SegmentStats":
        if self.vocabulary != other.vocabulary:
            raise ValueError("cannot add stats over different vocabularies")
        return SegmentStats(self.vocabulary, self.tp + other.tp, self.fp + other.fp,
                            self.fn + other.fn, self.substitutions + other.substitutions,
                            self.deletions + other.deletions, self.insertions + other.insertions,
                            self.reference_active + other.reference_active)

    def __eq__(self, other):
        if not isinstance(other, SegmentStats):
            return NotImplemented
        return (self.vocabulary == other.vocabulary and np.array_equal(self.tp, other.tp)
                and np.array_equal(self.fp, other.fp) and np.array_equal(self.fn, other.fn)
                and (self.substitutions, self.deletions, self.insertions, self.reference_active)
                == (other.substitutions, other.deletions, other.insertions, other.reference_active))

    def __repr__(self):
        return (f"SegmentStats(tp={self.tp.tolist()}, fp={self.fp.tolist()}, fn={self.fn.tolist()}, "
                f"S={self.substitutions}, D={self.deletions}, I={self.insertions}, "
                f"N={self.reference_active})")


def accumulate_stats(reference: FrameActivityGrid, estimate: FrameActivityGrid) -> SegmentStats:
    if reference.vocabulary != estimate.vocabulary:
        raise ValueError("reference and estimate use different vocabularies")
    if reference.active.shape != estimate.active.shape:
        raise ValueError(f"shape mismatch: {reference.active.shape} vs {estimate.active.shape}")
    if not math.isclose(reference.frame_length, estimate.frame_length):
        raise ValueError("reference and estimate use different segment lengths")
    ref, est = reference.active, estimate.active
    tp = (ref & est).sum(axis=0)
    fp = (~ref & est).sum(axis=0)
    fn = (ref & ~est).sum(axis=0)
    fn_seg = (ref & ~est).sum(axis=1)
    fp_seg = (~ref & est).sum(axis=1)
    return SegmentStats(
        reference.vocabulary, tp, fp, fn,
        substitutions=int(np.minimum(fn_seg, fp_seg).sum()),
        deletions=int(np.maximum(0, fn_seg - fp_seg).sum()),
        insertions=int(np.maximum(0, fp_seg - fn_seg).sum()),
        reference_active=int(ref.sum()),
    )


def _f1(tp, fp, fn) -> float:
    denom = 2 * tp + fp + fn
    return 0.0 if denom == 0 else 2 * tp / denom


def class_f1(stats: SegmentStats) -> dict[str, float]:
    return {label: _f1(int(stats.tp[c]), int(stats.fp[c]), int(stats.fn[c]))
            for c, label in enumerate(stats.vocabulary)}


def micro_f1(stats: SegmentStats) -> float:
    return _f1(int(stats.tp.sum()), int(stats.fp.sum()), int(stats.fn.sum()))


def macro_f1(stats: SegmentStats) -> float:
    scores = list(class_f1(stats).values())
    return sum(scores) / len(scores) if scores else 0.0


def error_rate(stats: SegmentStats) -> float:
    if stats.reference_active == 0:
        raise UndefinedMetricError("error rate is undefined: the reference has no active segment")
    return (stats.substitutions + stats.deletions + stats.insertions) / stats.reference_active


def evaluate(reference: AnnotationSet, estimate: AnnotationSet,
             segment_length: float = DEFAULT_SEGMENT_LENGTH, workers: int = 1) -> SegmentStats:
    """Pool segment stats over every clip of the reference clip table.

    The class vocabulary is the union of both sets' vocabularies, in sorted
    order when they differ.
    """
    if reference.vocabulary == estimate.vocabulary:
        vocabulary = reference.vocabulary
    else:
        vocabulary = tuple(sorted(set(reference.vocabulary) | set(estimate.vocabulary)))
    clips = dict(reference.clips)
    for clip_id, dur in estimate.clips.items():
        clips.setdefault(clip_id, dur)

    def one(clip_id):
        dur = clips[clip_id]
        ref = rasterize(reference.events_for(clip_id), clip_id, dur, vocabulary, segment_length)
        est = rasterize(estimate.events_for(clip_id), clip_id, dur, vocabulary, segment_length)
        return accumulate_stats(ref, est)

    clip_ids = sorted(clips)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(one, clip_ids))
    else:
        parts = [one(c) for c in clip_ids]
    return reduce(add, parts, SegmentStats.empty(vocabulary))


def metrics_report(stats: SegmentStats, percent: bool = False) -> dict:
    """Flat report ``{er, f1_micro, f1_macro, per_class}``.

    With ``percent`` the F1 fields are scaled to 0-100 and rounded to 3 decimals.
    """
    def show(f1):
        return round(100.0 * f1, 3) if percent else f1

    per_class = {}
    for c, (label, f1) in enumerate(class_f1(stats).items()):
        per_class[label] = {"tp": int(stats.tp[c]), "fp": int(stats.fp[c]),
                            "fn": int(stats.fn[c]), "f1": show(f1)}
    return {
        "er": error_rate(stats),
        "f1_micro": show(micro_f1(stats)),
        "f1_macro": show(macro_f1(stats)),
        "per_class": per_class,
    }
