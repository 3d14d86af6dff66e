"""Closed-form scores of an ideal model trained on noisy annotations.

If a model reproduces the annotations exactly, its scores against the true
labels depend only on how many active frames were dropped or added. With
``r_del = T_del / T_act`` (insertions absent)::

    recall = 1 - r_del, precision = 1, F1 = 2 (1 - r_del) / (2 - r_del), ER = r_del

and with ``r_ins = T_insert / T_act`` (deletions absent)::

    recall = 1, precision = 1 / (1 + r_ins), F1 = 2 / (2 + r_ins), ER = r_ins

These hold at frame resolution, i.e. with the segment length equal to the
frame length; coarser segments merge frames and break the equalities.
"""

from __future__ import annotations

import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import reduce
from operator import add
from typing import Iterable, Sequence

import numpy as np

from .annotations import SoftLabelGrid
from .metrics import FrameActivityGrid, SegmentStats, accumulate_stats, error_rate, micro_f1
from .soft import GROUND_TRUTH_THRESHOLD, binarize_fixed


class MixedNoiseError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseRatioProfile:
    t_act: int
    t_inact: int
    t_del: int
    t_insert: int

    def __post_init__(self):
        if self.t_act <= 0:
            raise ValueError("the ground truth needs at least one active frame")
        if not 0 <= self.t_del <= self.t_act:
            raise ValueError("deleted frames must be between 0 and the active count")
        if not 0 <= self.t_insert <= self.t_inact:
            raise ValueError("inserted frames must be between 0 and the inactive count")

    @property
    def r_del(self) -> float:
        return self.t_del / self.t_act

    @property
    def r_insert(self) -> float:
        return self.t_insert / self.t_act

    def __add__(self, other: "NoiseRatioProfile") -> "NoiseRatioProfile":
        return NoiseRatioProfile(self.t_act + other.t_act, self.t_inact + other.t_inact,
                                 self.t_del + other.t_del, self.t_insert + other.t_insert)


@dataclass(frozen=True)
class TheoryMetrics:
    precision: float
    recall: float
    f1: float
    er: float


def deletion_theory(r_del: float) -> TheoryMetrics:
    if not 0.0 <= r_del <= 1.0:
        raise ValueError(f"deletion ratio must lie in [0, 1], got {r_del}")
    return TheoryMetrics(precision=1.0, recall=1.0 - r_del,
                         f1=2.0 * (1.0 - r_del) / (2.0 - r_del), er=float(r_del))


def insertion_theory(r_insert: float) -> TheoryMetrics:
    if not r_insert >= 0.0:
        raise ValueError(f"insertion ratio must be >= 0, got {r_insert}")
    return TheoryMetrics(precision=1.0 / (1.0 + r_insert), recall=1.0,
                         f1=2.0 / (2.0 + r_insert), er=float(r_insert))


def _check_pair(gt: FrameActivityGrid, anno: FrameActivityGrid):
    if gt.vocabulary != anno.vocabulary or gt.active.shape != anno.active.shape:
        raise ValueError("ground truth and annotation grids differ in shape or vocabulary")


def profile_from_grids(gt: FrameActivityGrid, anno: FrameActivityGrid) -> NoiseRatioProfile:
    _check_pair(gt, anno)
    g, a = gt.active, anno.active
    return NoiseRatioProfile(t_act=int(g.sum()), t_inact=int((~g).sum()),
                             t_del=int((g & ~a).sum()), t_insert=int((a & ~g).sum()))


def theory_for(profile: NoiseRatioProfile) -> TheoryMetrics:
    if profile.t_del and profile.t_insert:
        raise MixedNoiseError("profile is neither pure deletion nor pure insertion")
    if profile.t_insert:
        return insertion_theory(profile.r_insert)
    return deletion_theory(profile.r_del)


@dataclass(frozen=True)
class IdealModelCheck:
    profile: NoiseRatioProfile
    theory: TheoryMetrics
    measured_f1: float
    measured_er: float

    @property
    def max_gap(self) -> float:
        return max(abs(self.theory.f1 - self.measured_f1), abs(self.theory.er - self.measured_er))


def verify_ideal_model(gt: FrameActivityGrid | Sequence[FrameActivityGrid],
                       anno: FrameActivityGrid | Sequence[FrameActivityGrid]) -> IdealModelCheck:
    """Score ``anno`` against ``gt`` both by the closed forms and by the metrics.

    Accepts one grid pair or aligned sequences of pairs (pooled). Mixed
    deletion and insertion raises :class:`MixedNoiseError`.
    """
    gts = [gt] if isinstance(gt, FrameActivityGrid) else list(gt)
    annos = [anno] if isinstance(anno, FrameActivityGrid) else list(anno)
    if len(gts) != len(annos) or not gts:
        raise ValueError("need equally many ground-truth and annotation grids")
    profile = reduce(add, (profile_from_grids(g, a) for g, a in zip(gts, annos)))
    theory = theory_for(profile)
    stats = reduce(add, (accumulate_stats(g, a) for g, a in zip(gts, annos)))
    return IdealModelCheck(profile, theory, micro_f1(stats), error_rate(stats))


def threshold_er_curve(grids: Iterable[SoftLabelGrid], thresholds: Iterable[float],
                       workers: int = 1) -> list[tuple[float, float]]:
    """ER of the hard labels at each threshold against the 0.5 ground truth.

    Segments are the soft-label frames themselves.
    """
    grids = list(grids)
    truth = [binarize_fixed(g, GROUND_TRUTH_THRESHOLD) for g in grids]
    vocabulary = grids[0].vocabulary if grids else ()

    def point(tau):
        stats = reduce(add, (accumulate_stats(t, binarize_fixed(g, tau))
                             for t, g in zip(truth, grids)), SegmentStats.empty(vocabulary))
        return (tau, error_rate(stats))

    thresholds = list(thresholds)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(point, thresholds))
    return [point(tau) for tau in thresholds]


def deletion_f1_curve(ratios: Iterable[float]) -> list[tuple[float, float]]:
    return [(r, deletion_theory(r).f1) for r in ratios]


def insertion_f1_curve(ratios: Iterable[float]) -> list[tuple[float, float]]:
    return [(r, insertion_theory(r).f1) for r in ratios]


def format_curve(rows: Iterable[tuple[float, float]], header: tuple[str, str]) -> str:
    out = io.StringIO()
    out.write(f"{header[0]}\t{header[1]}\n")
    for x, y in rows:
        out.write(f"{x:.6f}\t{y:.6f}\n")
    return out.getvalue()


def is_u_shaped(curve: Sequence[tuple[float, float]], centre: float = GROUND_TRUTH_THRESHOLD) -> bool:
    """Non-increasing up to ``centre`` and non-decreasing after it."""
    xs = np.array([x for x, _ in curve])
    ys = np.array([y for _, y in curve])
    order = np.argsort(xs)
    xs, ys = xs[order], ys[order]
    left, right = ys[xs <= centre], ys[xs >= centre]
    return bool(np.all(np.diff(left) <= 0) and np.all(np.diff(right) >= 0))
