"""Strong and soft SED annotations: types, TSV parsing and serialization.

Strong labels are headerless tab-separated rows::

    clip_id <TAB> onset <TAB> offset <TAB> label

with clip durations supplied separately as ``clip_id <TAB> duration`` rows.
Soft labels are rows of ``clip_id, frame_start, frame_end, label, probability``.
"""

from __future__ import annotations

import enum
import io
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, TextIO

import numpy as np

# slack for comparing parsed decimal times against frame/clip boundaries
TIME_EPS = 1e-9


class AnnotationError(ValueError):
    """Base class for malformed or invalid annotation input."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        self.reason = message
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ParseError(AnnotationError):
    pass


class ValidationError(AnnotationError):
    pass


class NoiseKind(enum.Enum):
    DELETION = "deletion"
    INSERTION = "insertion"
    SUBSTITUTION = "substitution"
    SUBJECTIVE = "subjective"


@dataclass(frozen=True, order=True)
class EventInstance:
    # field order doubles as the canonical sort key
    clip_id: str
    onset: float
    offset: float
    label: str

    @property
    def duration(self) -> float:
        return self.offset - self.onset


@dataclass(frozen=True)
class AnnotationSet:
    """Events over a set of clips, with clip durations and a class vocabulary.

    Events are stored in canonical ``(clip_id, onset, offset, label)`` order,
    so two sets holding the same multiset of events compare equal.
    """

    clips: Mapping[str, float]
    vocabulary: tuple[str, ...]
    events: tuple[EventInstance, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "clips", dict(self.clips))
        object.__setattr__(self, "vocabulary", tuple(self.vocabulary))
        object.__setattr__(self, "events", tuple(sorted(self.events)))
        self._validate()

    def _validate(self):
        if len(set(self.vocabulary)) != len(self.vocabulary):
            raise ValidationError("vocabulary contains duplicate labels")
        for clip_id, duration in self.clips.items():
            if not duration > 0 or not math.isfinite(duration):
                raise ValidationError(f"clip {clip_id!r} has non-positive duration {duration}")
        known = set(self.vocabulary)
        for ev in self.events:
            check_event(ev, self.clips, known)

    @property
    def num_classes(self) -> int:
        return len(self.vocabulary)

    def class_index(self, label: str) -> int:
        return self.vocabulary.index(label)

    def events_for(self, clip_id: str) -> list[EventInstance]:
        return [ev for ev in self.events if ev.clip_id == clip_id]

    def by_label(self) -> dict[str, list[EventInstance]]:
        """Events grouped per vocabulary label; classes without events map to ``[]``."""
        groups: dict[str, list[EventInstance]] = {label: [] for label in self.vocabulary}
        for ev in self.events:
            groups[ev.label].append(ev)
        return groups

    def with_events(self, events: Iterable[EventInstance]) -> "AnnotationSet":
        return AnnotationSet(self.clips, self.vocabulary, tuple(events))


def check_event(ev: EventInstance, clips: Mapping[str, float], vocabulary: set[str] | None = None,
                line: int | None = None) -> None:
    if ev.clip_id not in clips:
        raise ValidationError(f"unknown clip_id {ev.clip_id!r}", line)
    if vocabulary is not None and ev.label not in vocabulary:
        raise ValidationError(f"label {ev.label!r} is not in the vocabulary", line)
    if ev.onset < 0:
        raise ValidationError(f"negative onset {ev.onset}", line)
    if not ev.offset > ev.onset:
        raise ValidationError("offset <= onset", line)
    if ev.offset > clips[ev.clip_id] + TIME_EPS:
        raise ValidationError(
            f"offset {ev.offset} exceeds duration {clips[ev.clip_id]} of clip {ev.clip_id!r}", line)


def _read(source: str | TextIO) -> str:
    return source if isinstance(source, str) else source.read()


def _rows(text: str, ncols: int):
    for lineno, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) != ncols:
            raise ParseError(f"expected {ncols} tab-separated columns, found {len(cols)}", lineno)
        yield lineno, cols


def _number(token: str, what: str, lineno: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"{what} is not a number: {token!r}", lineno) from None
    if not math.isfinite(value):
        raise ParseError(f"{what} is not finite: {token!r}", lineno)
    return value


def parse_clip_table(source: str | TextIO) -> dict[str, float]:
    clips: dict[str, float] = {}
    for lineno, (clip_id, dur) in _rows(_read(source), 2):
        if clip_id in clips:
            raise ValidationError(f"duplicate clip_id {clip_id!r}", lineno)
        duration = _number(dur, "duration", lineno)
        if duration <= 0:
            raise ValidationError(f"clip {clip_id!r} has non-positive duration", lineno)
        clips[clip_id] = duration
    return clips


def parse_strong_labels(source: str | TextIO, clip_table: str | TextIO | Mapping[str, float],
                        vocabulary: Sequence[str] | None = None) -> AnnotationSet:
    """Parse a strong-label TSV against a clip table.

    Parameters
    ----------
    source : str or text stream
        ``clip_id, onset, offset, label`` rows.
    clip_table : str, text stream or mapping
        ``clip_id, duration`` rows, or an already parsed mapping.
    vocabulary : sequence of str, optional
        Class order to use. Defaults to the sorted set of labels present.

    Raises
    ------
    ParseError
        Wrong column count or non-numeric time, with the offending line.
    ValidationError
        Unknown clip, ``offset <= onset``, offset past the clip end, or a
        label outside an explicit vocabulary.
    """
    clips = dict(clip_table) if isinstance(clip_table, Mapping) else parse_clip_table(clip_table)
    known = set(vocabulary) if vocabulary is not None else None
    events = []
    for lineno, (clip_id, onset, offset, label) in _rows(_read(source), 4):
        ev = EventInstance(clip_id, _number(onset, "onset", lineno),
                           _number(offset, "offset", lineno), label)
        check_event(ev, clips, known, lineno)
        events.append(ev)
    if vocabulary is None:
        vocabulary = sorted({ev.label for ev in events})
    return AnnotationSet(clips, tuple(vocabulary), tuple(events))


def format_time(t: float) -> str:
    s = f"{t:.3f}"
    return "0.000" if s == "-0.000" else s


def serialize_strong_labels(aset: AnnotationSet) -> str:
    out = io.StringIO()
    for ev in sorted(aset.events):
        out.write(f"{ev.clip_id}\t{format_time(ev.onset)}\t{format_time(ev.offset)}\t{ev.label}\n")
    return out.getvalue()


def serialize_clip_table(clips: Mapping[str, float]) -> str:
    return "".join(f"{clip_id}\t{format_time(dur)}\n" for clip_id, dur in sorted(clips.items()))


def class_duration_stats(aset: AnnotationSet,
                         labels: Iterable[str] | None = None) -> dict[str, tuple[float, float]]:
    """Population mean and standard deviation of event durations per class."""
    groups = aset.by_label()
    stats = {}
    for label in (aset.vocabulary if labels is None else labels):
        durations = [ev.duration for ev in groups.get(label, ())]
        if not durations:
            raise ValueError(f"no instances for class {label!r}")
        arr = np.asarray(durations, dtype=float)
        stats[label] = (float(arr.mean()), float(arr.std()))
    return stats


@dataclass(frozen=True, eq=False)
class SoftLabelGrid:
    """Per-frame class probabilities of one clip, shape ``[num_frames, M]``."""

    clip_id: str
    frame_length: float
    vocabulary: tuple[str, ...]
    values: np.ndarray
    duration: float | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2 or values.shape[1] != len(self.vocabulary):
            raise ValidationError(
                f"values must have shape [frames, {len(self.vocabulary)}], got {values.shape}")
        if values.size and (values.min() < 0 or values.max() > 1):
            raise ValidationError("probabilities must lie in [0, 1]")
        if not self.frame_length > 0:
            raise ValidationError("frame_length must be positive")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "vocabulary", tuple(self.vocabulary))
        if self.duration is None:
            object.__setattr__(self, "duration", values.shape[0] * self.frame_length)

    @property
    def num_frames(self) -> int:
        return self.values.shape[0]

    def __eq__(self, other):
        if not isinstance(other, SoftLabelGrid):
            return NotImplemented
        return (self.clip_id == other.clip_id and self.frame_length == other.frame_length
                and self.vocabulary == other.vocabulary and self.duration == other.duration
                and np.array_equal(self.values, other.values))


def parse_soft_labels(source: str | TextIO,
                      vocabulary: Sequence[str] | None = None) -> list[SoftLabelGrid]:
    """Parse soft-label rows into one grid per clip, ordered by clip id.

    All grids share one vocabulary (sorted labels of the whole file unless
    given). Cells without a row are probability 0. Every row of a clip must
    span the same frame length and start on that clip's frame grid; only a
    frame ending at the clip's last frame end may be shorter.
    """
    rows: dict[str, list] = defaultdict(list)
    for lineno, (clip_id, start, end, label, prob) in _rows(_read(source), 5):
        t0 = _number(start, "frame_start", lineno)
        t1 = _number(end, "frame_end", lineno)
        p = _number(prob, "probability", lineno)
        if not 0.0 <= p <= 1.0:
            raise ValidationError(f"probability {p} outside [0, 1]", lineno)
        if t0 < 0 or not t1 > t0:
            raise ValidationError("frame_end must exceed a non-negative frame_start", lineno)
        if vocabulary is not None and label not in vocabulary:
            raise ValidationError(f"label {label!r} is not in the vocabulary", lineno)
        rows[clip_id].append((lineno, t0, t1, label, p))

    vocab = tuple(vocabulary) if vocabulary is not None else tuple(
        sorted({r[3] for clip_rows in rows.values() for r in clip_rows}))
    col = {label: i for i, label in enumerate(vocab)}

    grids = []
    for clip_id in sorted(rows):
        clip_rows = rows[clip_id]
        frame_length = max(t1 - t0 for _, t0, t1, _, _ in clip_rows)
        end = max(t1 for _, _, t1, _, _ in clip_rows)
        tol = TIME_EPS * max(1.0, end)
        num_frames = math.ceil(end / frame_length - 1e-6)
        values = np.zeros((num_frames, len(vocab)))
        seen = set()
        for lineno, t0, t1, label, p in clip_rows:
            pos = t0 / frame_length
            k = round(pos)
            if abs(pos - k) > 1e-6:
                raise ValidationError(
                    f"frame start {t0} is not on the {frame_length}s frame grid of clip {clip_id!r}",
                    lineno)
            truncated_last = abs(t1 - end) <= tol and k == num_frames - 1
            if abs((t1 - t0) - frame_length) > 1e-6 and not truncated_last:
                raise ValidationError(f"non-uniform frame length within clip {clip_id!r}", lineno)
            if (k, label) in seen:
                raise ValidationError(f"duplicate frame for ({clip_id!r}, {label!r})", lineno)
            seen.add((k, label))
            values[k, col[label]] = p
        grids.append(SoftLabelGrid(clip_id, frame_length, vocab, values, end))
    return grids


def serialize_soft_labels(grids: Iterable[SoftLabelGrid]) -> str:
    out = io.StringIO()
    for grid in sorted(grids, key=lambda g: g.clip_id):
        for k in range(grid.num_frames):
            t0 = k * grid.frame_length
            t1 = min((k + 1) * grid.frame_length, grid.duration)
            for c, label in enumerate(grid.vocabulary):
                out.write(f"{grid.clip_id}\t{format_time(t0)}\t{format_time(t1)}\t{label}\t"
                          f"{grid.values[k, c]:.6g}\n")
    return out.getvalue()
