"""Turning soft (probabilistic) labels into hard labels.

A fixed threshold below 0.5 adds insertion noise relative to the 0.5 ground
truth, one above 0.5 adds deletion noise. The relaxed mode draws one
threshold per clip from ``[0.5 - omega, 0.5 + omega]`` to mimic annotator
disagreement.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .annotations import AnnotationSet, EventInstance, SoftLabelGrid
from .metrics import FrameActivityGrid
from .rng import substream

GROUND_TRUTH_THRESHOLD = 0.5
MAX_RELAXATION = 0.45

THRESHOLD_SWEEP = tuple(round(0.1 + 0.05 * i, 2) for i in range(17))
RELAXATION_SWEEP = tuple(round(0.05 * i, 2) for i in range(10))


@dataclass(frozen=True)
class BinarizationConfig:
    """Either a fixed ``threshold`` or a relaxation ``omega`` with its ``seed``."""

    threshold: float | None = None
    omega: float | None = None
    seed: int = 0

    def __post_init__(self):
        if (self.threshold is None) == (self.omega is None):
            raise ValueError("give exactly one of threshold or omega")
        if self.threshold is not None:
            check_threshold(self.threshold)
        else:
            check_omega(self.omega)

    def apply(self, grid: SoftLabelGrid) -> FrameActivityGrid:
        if self.threshold is not None:
            return binarize_fixed(grid, self.threshold)
        return binarize_relaxed(grid, self.omega, self.seed)


def check_threshold(tau: float) -> float:
    if not 0.0 < tau < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {tau}")
    return tau


def check_omega(omega: float) -> float:
    if not 0.0 <= omega <= MAX_RELAXATION:
        raise ValueError(f"relaxation factor must lie in [0, {MAX_RELAXATION}], got {omega}")
    return omega


def binarize_fixed(grid: SoftLabelGrid, tau: float) -> FrameActivityGrid:
    """Cells with probability ``>= tau`` become active."""
    check_threshold(tau)
    return FrameActivityGrid(grid.clip_id, grid.frame_length, grid.vocabulary,
                             grid.values >= tau, grid.duration)


def relaxed_threshold(clip_id: str, omega: float, seed: int) -> float:
    """The per-clip threshold used by :func:`binarize_relaxed`."""
    check_omega(omega)
    return substream(seed, "relax", clip_id).uniform(GROUND_TRUTH_THRESHOLD - omega,
                                                     GROUND_TRUTH_THRESHOLD + omega)


def binarize_relaxed(grid: SoftLabelGrid, omega: float, seed: int) -> FrameActivityGrid:
    tau = relaxed_threshold(grid.clip_id, omega, seed)
    return FrameActivityGrid(grid.clip_id, grid.frame_length, grid.vocabulary,
                             grid.values >= tau, grid.duration)


def grid_to_events(grid: FrameActivityGrid) -> list[EventInstance]:
    """Run-length decode each class column into events.

    A run of active frames ``k..j`` becomes ``(k*L, (j+1)*L)``, with the
    offset capped at the clip duration when the last frame is truncated.
    """
    events = []
    length = grid.frame_length
    for c, label in enumerate(grid.vocabulary):
        col = np.concatenate(([False], grid.active[:, c], [False])).astype(np.int8)
        edges = np.flatnonzero(np.diff(col))
        for start, stop in zip(edges[::2], edges[1::2]):
            offset = min(stop * length, grid.duration)
            events.append(EventInstance(grid.clip_id, float(start * length), float(offset), label))
    return events


def grids_to_annotations(grids: Iterable[FrameActivityGrid]) -> AnnotationSet:
    grids = list(grids)
    vocabulary = grids[0].vocabulary if grids else ()
    clips = {g.clip_id: g.duration for g in grids}
    events = [ev for g in grids for ev in grid_to_events(g)]
    return AnnotationSet(clips, vocabulary, events)
