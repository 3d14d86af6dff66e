"""Synthetic label noise on strong annotations.

Each injector works class by class and touches ``floor(rate * N)``
instances of a class holding ``N``. All randomness comes from per-class
streams keyed by ``(seed, kind, class index)``, so results do not depend on
event order or on how the classes are scheduled across ``workers`` threads.
Inputs are never modified.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, TypeVar

from .annotations import AnnotationSet, EventInstance, NoiseKind, class_duration_stats
from .rng import Stream, check_seed, substream

MIN_INSERTED_DURATION = 0.1
MAX_DURATION_DRAWS = 10_000

# rate grids swept per kind: (start, stop, step)
RATE_SWEEPS = {
    NoiseKind.DELETION: (0.0, 0.5, 0.05),
    NoiseKind.INSERTION: (0.0, 1.0, 0.1),
    NoiseKind.SUBSTITUTION: (0.0, 0.5, 0.05),
    NoiseKind.SUBJECTIVE: (0.5, 1.0, 0.1),
}

T = TypeVar("T")


def noise_count(rate: float, n: int) -> int:
    """``floor(rate * n)`` evaluated on the decimal value of ``rate``.

    Going through the shortest decimal repr keeps e.g. ``0.29 * 100`` at 29
    instead of the binary-float 28.999...
    """
    return math.floor(Fraction(repr(float(rate))) * n)


def check_rate(kind: NoiseKind, rate: float) -> float:
    rate = float(rate)
    if not math.isfinite(rate):
        raise ValueError(f"{kind.value} rate must be finite")
    if kind in (NoiseKind.DELETION, NoiseKind.SUBSTITUTION) and not 0.0 <= rate <= 1.0:
        raise ValueError(f"{kind.value} rate must lie in [0, 1], got {rate}")
    if kind is NoiseKind.INSERTION and rate < 0.0:
        raise ValueError(f"insertion rate must be >= 0, got {rate}")
    if kind is NoiseKind.SUBJECTIVE and not 0.0 < rate <= 1.0:
        raise ValueError(f"overlap rate must lie in (0, 1], got {rate}")
    return rate


@dataclass(frozen=True)
class NoiseConfig:
    kind: NoiseKind
    rate: float
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", NoiseKind(self.kind))
        object.__setattr__(self, "rate", check_rate(self.kind, self.rate))
        object.__setattr__(self, "seed", check_seed(self.seed))

    def apply(self, aset: AnnotationSet, workers: int = 1) -> AnnotationSet:
        return INJECTORS[self.kind](aset, self.rate, self.seed, workers=workers)


def _per_class(aset: AnnotationSet, kind: NoiseKind, seed: int,
               fn: Callable[[int, list[EventInstance], Stream], T], workers: int) -> list[T]:
    groups = aset.by_label()

    def run(c):
        label = aset.vocabulary[c]
        return fn(c, groups[label], substream(seed, kind.value, c))

    indices = range(aset.num_classes)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(run, indices))
    return [run(c) for c in indices]


def inject_deletion(aset: AnnotationSet, rate: float, seed: int, workers: int = 1) -> AnnotationSet:
    """Remove ``floor(rate * N)`` uniformly chosen instances from every class."""
    rate = check_rate(NoiseKind.DELETION, rate)

    def keep(c, events, rng):
        drop = set(rng.sample(len(events), noise_count(rate, len(events))))
        return [ev for i, ev in enumerate(events) if i not in drop]

    kept = _per_class(aset, NoiseKind.DELETION, seed, keep, workers)
    return aset.with_events(ev for part in kept for ev in part)


def _draw_duration(rng: Stream, mean: float, std: float) -> float:
    if std == 0.0:
        if mean < MIN_INSERTED_DURATION:
            raise ValueError(
                f"class mean duration {mean} is below {MIN_INSERTED_DURATION}s with zero spread")
        return mean
    for _ in range(MAX_DURATION_DRAWS):
        d = rng.normal(mean, std)
        if d >= MIN_INSERTED_DURATION:
            return d
    raise ValueError(f"could not draw a duration >= {MIN_INSERTED_DURATION}s "
                     f"from N({mean}, {std}**2)")


def inject_insertion(aset: AnnotationSet, rate: float, seed: int, workers: int = 1) -> AnnotationSet:
    """Add ``floor(rate * N)`` synthetic instances to every class.

    A new instance goes to a uniformly drawn clip, starts at a uniformly drawn
    millisecond in ``[0, duration)``, and lasts a Gaussian draw with the
    class's duration mean and std (redrawn below 0.1 s), cut at the clip end.
    """
    rate = check_rate(NoiseKind.INSERTION, rate)
    clip_ids = sorted(aset.clips)
    stats = class_duration_stats(aset) if rate > 0 else {}

    def add(c, events, rng):
        label = aset.vocabulary[c]
        mean, std = stats.get(label, (0.0, 0.0))
        count = noise_count(rate, len(events))
        new = []
        for _ in range(count):
            clip_id = clip_ids[rng.randbelow(len(clip_ids))]
            clip_dur = aset.clips[clip_id]
            slots = max(1, math.ceil(clip_dur * 1000 - 1e-6))
            onset = rng.randbelow(slots) / 1000
            dur = _draw_duration(rng, mean, std)
            offset = min(round(onset + dur, 3), clip_dur)
            new.append(EventInstance(clip_id, onset, offset, label))
        return new

    added = _per_class(aset, NoiseKind.INSERTION, seed, add, workers)
    return aset.with_events(list(aset.events) + [ev for part in added for ev in part])


def inject_substitution(aset: AnnotationSet, rate: float, seed: int,
                        workers: int = 1) -> AnnotationSet:
    """Relabel ``floor(rate * N)`` instances per class to one of the other classes."""
    rate = check_rate(NoiseKind.SUBSTITUTION, rate)
    if aset.num_classes < 2:
        raise ValueError("substitution needs >= 2 classes")

    def relabel(c, events, rng):
        others = [label for i, label in enumerate(aset.vocabulary) if i != c]
        chosen = set(rng.sample(len(events), noise_count(rate, len(events))))
        out = []
        for i, ev in enumerate(events):
            if i in chosen:
                ev = EventInstance(ev.clip_id, ev.onset, ev.offset,
                                   others[rng.randbelow(len(others))])
            out.append(ev)
        return out

    parts = _per_class(aset, NoiseKind.SUBSTITUTION, seed, relabel, workers)
    return aset.with_events(ev for part in parts for ev in part)


def inject_subjective(aset: AnnotationSet, overlap_rate: float, seed: int,
                      workers: int = 1) -> AnnotationSet:
    """Shift every event by ``(1 - overlap_rate) * duration`` in a random direction.

    Without clamping at the clip edges the shifted event overlaps the
    original for exactly ``overlap_rate`` of its duration.
    """
    overlap_rate = check_rate(NoiseKind.SUBJECTIVE, overlap_rate)

    def shift(c, events, rng):
        out = []
        for ev in events:
            delta = rng.sign() * (1.0 - overlap_rate) * ev.duration
            dur = aset.clips[ev.clip_id]
            onset = min(max(ev.onset + delta, 0.0), dur)
            offset = min(max(ev.offset + delta, 0.0), dur)
            out.append(EventInstance(ev.clip_id, onset, offset, ev.label))
        return out

    parts = _per_class(aset, NoiseKind.SUBJECTIVE, seed, shift, workers)
    return aset.with_events(ev for part in parts for ev in part)


INJECTORS = {
    NoiseKind.DELETION: inject_deletion,
    NoiseKind.INSERTION: inject_insertion,
    NoiseKind.SUBSTITUTION: inject_substitution,
    NoiseKind.SUBJECTIVE: inject_subjective,
}


def inject(aset: AnnotationSet, kind: NoiseKind | str, rate: float, seed: int,
           workers: int = 1) -> AnnotationSet:
    return NoiseConfig(NoiseKind(kind), rate, seed).apply(aset, workers=workers)


def overlap_ratio(original: EventInstance, perturbed: EventInstance) -> float:
    overlap = min(original.offset, perturbed.offset) - max(original.onset, perturbed.onset)
    return max(0.0, overlap) / original.duration


def sweep(start: float, stop: float, step: float) -> list[float]:
    """Inclusive decimal grid ``start, start+step, ..., stop``."""
    if step <= 0 or start > stop:
        raise ValueError("a sweep needs start <= stop and step > 0")
    a, b, s = (Fraction(repr(float(v))) for v in (start, stop, step))
    n = math.floor((b - a) / s)
    return [float(a + i * s) for i in range(n + 1)]


def rate_grid(kind: NoiseKind) -> list[float]:
    return sweep(*RATE_SWEEPS[kind])


def parse_grid(spec: str) -> list[float]:
    """Parse ``start:stop:step`` into an inclusive grid."""
    parts = spec.split(":")
    if len(parts) != 3:
        raise ValueError(f"grid must be start:stop:step, got {spec!r}")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise ValueError(f"grid must be start:stop:step, got {spec!r}") from None
    return sweep(start, stop, step)

