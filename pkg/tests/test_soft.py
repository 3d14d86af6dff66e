import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from sednoise.annotations import SoftLabelGrid
from sednoise.metrics import FrameActivityGrid, events_to_grid
from sednoise.soft import (THRESHOLD_SWEEP, BinarizationConfig, binarize_fixed, binarize_relaxed,
                           grid_to_events, grids_to_annotations, relaxed_threshold)


def soft(values, clip="c.wav", length=1.0, vocab=None):
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    vocab = vocab or tuple(f"k{i}" for i in range(values.shape[1]))
    return SoftLabelGrid(clip, length, vocab, values)


def random_soft(rng, clip="c.wav", frames=20, classes=3):
    return soft(rng.random((frames, classes)), clip)


class TestFixed:
    def test_threshold_comparison(self):
        g = soft([0.45])
        assert binarize_fixed(g, 0.4).active[0, 0]
        assert not binarize_fixed(g, 0.5).active[0, 0]

    def test_equal_is_active(self):
        assert binarize_fixed(soft([0.5]), 0.5).active[0, 0]

    def test_carries_metadata(self):
        g = soft(np.full((4, 2), 0.7), length=0.2, vocab=("a", "b"))
        out = binarize_fixed(g, 0.5)
        assert out.frame_length == 0.2 and out.vocabulary == ("a", "b") and out.active.all()

    @pytest.mark.parametrize("tau", [0.0, 1.0, -0.1, 1.5])
    def test_rejects(self, tau):
        with pytest.raises(ValueError):
            binarize_fixed(soft([0.5]), tau)

    def test_monotone_sweep(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            g = random_soft(rng)
            prev = None
            for tau in THRESHOLD_SWEEP:
                cur = binarize_fixed(g, tau).active
                if prev is not None:
                    assert not (cur & ~prev).any()
                prev = cur

    def test_sweep_values(self):
        assert THRESHOLD_SWEEP[0] == 0.1 and THRESHOLD_SWEEP[-1] == 0.9 and len(THRESHOLD_SWEEP) == 17


class TestRelaxed:
    def test_omega_zero(self):
        rng = np.random.default_rng(1)
        for i in range(20):
            g = random_soft(rng, clip=f"c{i}.wav")
            assert binarize_relaxed(g, 0.0, seed=i) == binarize_fixed(g, 0.5)

    def test_range(self):
        taus = [relaxed_threshold(f"clip{i}", 0.45, 3) for i in range(500)]
        assert min(taus) >= 0.05 and max(taus) <= 0.95
        assert max(taus) - min(taus) > 0.8

    def test_sandwich(self):
        rng = np.random.default_rng(2)
        for i in range(200):
            g = random_soft(rng, clip=f"c{i}.wav")
            omega = float(rng.choice([0.05, 0.1, 0.2, 0.45]))
            got = binarize_relaxed(g, omega, seed=i).active
            upper = binarize_fixed(g, 0.5 - omega).active
            lower = binarize_fixed(g, 0.5 + omega).active
            assert not (lower & ~got).any()
            assert not (got & ~upper).any()

    def test_per_clip_threshold_is_keyed(self):
        rng = np.random.default_rng(3)
        grids = [random_soft(rng, clip=f"c{i}.wav") for i in range(6)]
        forward = [binarize_relaxed(g, 0.3, 9) for g in grids]
        backward = [binarize_relaxed(g, 0.3, 9) for g in reversed(grids)][::-1]
        assert forward == backward

    def test_rejects(self):
        with pytest.raises(ValueError):
            binarize_relaxed(soft([0.5]), 0.5, 0)

    def test_config(self):
        g = soft([0.2, 0.6])
        assert BinarizationConfig(threshold=0.5).apply(g) == binarize_fixed(g, 0.5)
        assert BinarizationConfig(omega=0.0, seed=3).apply(g) == binarize_fixed(g, 0.5)
        with pytest.raises(ValueError):
            BinarizationConfig(threshold=0.5, omega=0.1)


class TestGridToEvents:
    def _grid(self, col, length=1.0, duration=None):
        return FrameActivityGrid("c.wav", length, ("A",), np.array(col, bool)[:, None], duration)

    def test_runs(self):
        evs = grid_to_events(self._grid([1, 1, 0, 1]))
        assert [(e.onset, e.offset) for e in evs] == [(0.0, 2.0), (3.0, 4.0)]

    def test_empty(self):
        assert grid_to_events(self._grid([0] * 5)) == []

    def test_full(self):
        evs = grid_to_events(self._grid([1] * 10))
        assert [(e.onset, e.offset) for e in evs] == [(0.0, 10.0)]

    def test_truncated_last_frame(self):
        evs = grid_to_events(self._grid([0, 1, 1], length=0.4, duration=1.0))
        assert evs[0].onset == pytest.approx(0.4) and evs[0].offset == 1.0

    @settings(max_examples=200, deadline=None)
    @given(arrays(bool, st.tuples(st.integers(1, 30), st.integers(1, 4))),
           st.sampled_from([1.0, 0.2, 0.1, 0.5, 0.04]))
    def test_roundtrip_with_rasterizer(self, active, length):
        vocab = tuple(f"k{i}" for i in range(active.shape[1]))
        g = FrameActivityGrid("c.wav", length, vocab, active)
        aset = grids_to_annotations([g])
        assert events_to_grid(aset, "c.wav", length) == g
