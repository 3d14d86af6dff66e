import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sednoise.annotations import (AnnotationSet, EventInstance, NoiseKind, ParseError,
                                  ValidationError, class_duration_stats, parse_clip_table,
                                  parse_soft_labels, parse_strong_labels, serialize_clip_table,
                                  serialize_soft_labels, serialize_strong_labels)

from factories import random_set

CLIPS = "a.wav\t10.0\nb.wav\t10.0\n"


class TestParseStrongLabels:
    def test_single_row(self):
        aset = parse_strong_labels("a.wav\t2.0\t5.5\tdog_bark\n", CLIPS)
        assert aset.events == (EventInstance("a.wav", 2.0, 5.5, "dog_bark"),)
        assert aset.vocabulary == ("dog_bark",)
        assert aset.clips == {"a.wav": 10.0, "b.wav": 10.0}

    def test_empty_text(self):
        aset = parse_strong_labels("", CLIPS)
        assert aset.events == ()
        assert aset.vocabulary == ()
        assert len(aset.clips) == 2

    def test_offset_before_onset(self):
        with pytest.raises(ValidationError) as exc:
            parse_strong_labels("a.wav\t5.0\t4.0\tsiren\n", CLIPS)
        assert exc.value.line == 1
        assert "offset <= onset" in str(exc.value)

    def test_zero_length_event(self):
        with pytest.raises(ValidationError):
            parse_strong_labels("a.wav\t4.0\t4.0\tsiren\n", CLIPS)

    @pytest.mark.parametrize("row, line", [
        ("a.wav\t1.0\t2.0\n", 1),
        ("a.wav\t1.0\t2.0\tsiren\textra\n", 1),
        ("a.wav\t1.0\t2.0\tsiren\na.wav\tone\t2.0\tsiren\n", 2),
        ("a.wav\tnan\t2.0\tsiren\n", 1),
    ])
    def test_malformed_rows(self, row, line):
        with pytest.raises(ParseError) as exc:
            parse_strong_labels(row, CLIPS)
        assert exc.value.line == line
        assert str(exc.value).startswith(f"line {line}:")

    def test_unknown_clip(self):
        with pytest.raises(ValidationError, match="unknown clip_id"):
            parse_strong_labels("c.wav\t1.0\t2.0\tsiren\n", CLIPS)

    def test_offset_past_clip_end(self):
        with pytest.raises(ValidationError, match="exceeds duration"):
            parse_strong_labels("a.wav\t1.0\t10.5\tsiren\n", CLIPS)

    def test_offset_at_clip_end_is_fine(self):
        aset = parse_strong_labels("a.wav\t1.0\t10.0\tsiren\n", CLIPS)
        assert aset.events[0].offset == 10.0

    def test_explicit_vocabulary_order(self):
        aset = parse_strong_labels("a.wav\t1\t2\tsiren\n", CLIPS, vocabulary=["siren", "dog_bark"])
        assert aset.vocabulary == ("siren", "dog_bark")
        assert aset.class_index("dog_bark") == 1

    def test_label_outside_vocabulary(self):
        with pytest.raises(ValidationError, match="not in the vocabulary"):
            parse_strong_labels("a.wav\t1\t2\tsiren\n", CLIPS, vocabulary=["dog_bark"])

    def test_vocabulary_sorted_and_polyphony(self):
        text = "a.wav\t1\t4\tsiren\na.wav\t2\t3\tsiren\nb.wav\t0\t1\tcar_horn\n"
        aset = parse_strong_labels(io.StringIO(text), io.StringIO(CLIPS))
        assert aset.vocabulary == ("car_horn", "siren")
        assert len(aset.events) == 3

    def test_blank_lines_are_skipped(self):
        aset = parse_strong_labels("\na.wav\t1\t2\tsiren\n\n", CLIPS)
        assert len(aset.events) == 1


class TestClipTable:
    def test_duplicate(self):
        with pytest.raises(ValidationError, match="duplicate"):
            parse_clip_table("a.wav\t10\na.wav\t5\n")

    def test_non_positive(self):
        with pytest.raises(ValidationError):
            parse_clip_table("a.wav\t0\n")

    def test_roundtrip(self):
        clips = parse_clip_table(CLIPS)
        assert parse_clip_table(serialize_clip_table(clips)) == clips


class TestSerialize:
    def test_formatting(self):
        aset = AnnotationSet({"a.wav": 10.0}, ("dog_bark",), [EventInstance("a.wav", 2, 5.5, "dog_bark")])
        assert serialize_strong_labels(aset) == "a.wav\t2.000\t5.500\tdog_bark\n"

    def test_grouped_by_clip(self):
        text = "b.wav\t0\t1\tx\na.wav\t3\t4\tx\nb.wav\t0\t0.5\tx\na.wav\t1\t2\tx\n"
        out = serialize_strong_labels(parse_strong_labels(text, CLIPS))
        assert [line.split("\t")[0] for line in out.splitlines()] == ["a.wav", "a.wav", "b.wav", "b.wav"]
        assert out.splitlines()[2] == "b.wav\t0.000\t0.500\tx"

    def test_roundtrip_random(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            aset = random_set(rng, n_events=int(rng.integers(1, 30)))
            used = tuple(sorted({ev.label for ev in aset.events}))
            aset = AnnotationSet(aset.clips, used, aset.events)
            again = parse_strong_labels(serialize_strong_labels(aset), serialize_clip_table(aset.clips))
            assert again == aset

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 9999), st.integers(1, 3000),
                              st.sampled_from(["a", "b", "c"])), max_size=20))
    def test_roundtrip_property(self, rows):
        events = [EventInstance("x.wav", on / 1000, min(on + d, 10000) / 1000, lab)
                  for on, d, lab in rows if on + d > on and min(on + d, 10000) > on]
        vocab = tuple(sorted({ev.label for ev in events}))
        aset = AnnotationSet({"x.wav": 10.0}, vocab, events)
        assert parse_strong_labels(serialize_strong_labels(aset), {"x.wav": 10.0}) == aset

    def test_event_order_does_not_matter(self):
        evs = [EventInstance("a.wav", 3, 4, "x"), EventInstance("a.wav", 1, 2, "x")]
        assert AnnotationSet({"a.wav": 10}, ("x",), evs) == AnnotationSet({"a.wav": 10}, ("x",), evs[::-1])


class TestDurationStats:
    def _set(self, durations):
        return AnnotationSet({"a.wav": 10.0}, ("x",),
                             [EventInstance("a.wav", 0.0, d, "x") for d in durations])

    def test_two(self):
        assert class_duration_stats(self._set([2.0, 4.0])) == {"x": (3.0, 1.0)}

    def test_single(self):
        assert class_duration_stats(self._set([5.0])) == {"x": (5.0, 0.0)}

    def test_population_std(self):
        mean, std = class_duration_stats(self._set([1, 2, 3, 4]))["x"]
        # sqrt(((1.5^2 + 0.5^2) * 2) / 4)
        assert mean == 2.5
        assert std == pytest.approx(math.sqrt(1.25), abs=1e-12)
        assert std == pytest.approx(1.118034, abs=1e-6)

    def test_empty_class(self):
        aset = AnnotationSet({"a.wav": 10.0}, ("x", "y"), [EventInstance("a.wav", 0, 1, "x")])
        with pytest.raises(ValueError, match="no instances for class"):
            class_duration_stats(aset)
        assert class_duration_stats(aset, ["x"]) == {"x": (1.0, 0.0)}


class TestSoftLabels:
    def test_shape(self):
        text = "".join(f"a.wav\t{k}\t{k + 1}\tbird\t0.5\n" for k in range(10))
        (grid,) = parse_soft_labels(text)
        assert grid.values.shape == (10, 1)
        assert grid.frame_length == 1.0
        assert grid.duration == 10.0

    def test_out_of_range(self):
        with pytest.raises(ValidationError, match="outside"):
            parse_soft_labels("a.wav\t0\t1\tbird\t1.3\n")

    def test_missing_frames_default_to_zero(self):
        text = "".join(f"a.wav\t{k}\t{k + 1}\tbird\t0.8\n" for k in range(5))
        text += "a.wav\t9\t10\tcar\t0.1\n"
        (grid,) = parse_soft_labels(text)
        assert grid.values.shape == (10, 2)
        bird = grid.vocabulary.index("bird")
        assert grid.values[5:, bird].tolist() == [0.0] * 5
        assert grid.values[:5, bird].tolist() == [0.8] * 5

    def test_non_uniform_frames(self):
        with pytest.raises(ValidationError, match="non-uniform"):
            parse_soft_labels("a.wav\t0\t1\tbird\t0.5\na.wav\t1\t1.5\tbird\t0.5\na.wav\t2\t3\tbird\t0.5\n")

    def test_off_grid_start(self):
        with pytest.raises(ValidationError, match="frame grid"):
            parse_soft_labels("a.wav\t0\t1\tbird\t0.5\na.wav\t1.5\t2.5\tbird\t0.5\n")

    def test_truncated_last_frame(self):
        text = "a.wav\t0\t0.4\tbird\t0.2\na.wav\t0.4\t0.8\tbird\t0.9\na.wav\t0.8\t1.0\tbird\t0.7\n"
        (grid,) = parse_soft_labels(text)
        assert grid.num_frames == 3
        assert grid.frame_length == pytest.approx(0.4)
        assert grid.duration == 1.0

    def test_multiple_clips_share_vocabulary(self):
        text = "b.wav\t0\t1\tcar\t0.5\na.wav\t0\t1\tbird\t0.5\n"
        grids = parse_soft_labels(text)
        assert [g.clip_id for g in grids] == ["a.wav", "b.wav"]
        assert all(g.vocabulary == ("bird", "car") for g in grids)

    def test_roundtrip(self):
        rng = np.random.default_rng(0)
        text = "".join(f"a.wav\t{k * 0.2:.3f}\t{(k + 1) * 0.2:.3f}\t{lab}\t{rng.integers(0, 101) / 100}\n"
                       for k in range(50) for lab in ("bird", "car"))
        grids = parse_soft_labels(text)
        assert parse_soft_labels(serialize_soft_labels(grids)) == grids


def test_noise_kind_is_closed():
    assert {k.value for k in NoiseKind} == {"deletion", "insertion", "substitution", "subjective"}
