"""Synthetic clip generator: determinism, motion fidelity, value ranges."""

import numpy as np
import pytest

from yuvc.synthdata import KINDS, ClipSpec, generate


class TestSpec:
    def test_kinds(self):
        assert KINDS == ("static", "translate", "rotate", "noise")
        with pytest.raises(ValueError, match="kind"):
            ClipSpec("pan", 64, 64, 2)
        with pytest.raises(ValueError, match="even"):
            ClipSpec("static", 63, 64, 2)


class TestGeneration:
    def test_deterministic(self):
        spec = ClipSpec("translate", 64, 48, 3, seed=5, dx=1.5, dy=-0.5)
        a = generate(spec)
        b = generate(spec)
        for fa, fb in zip(a, b):
            assert np.array_equal(fa.y, fb.y)
            assert np.array_equal(fa.u, fb.u)
            assert np.array_equal(fa.v, fb.v)
        c = generate(ClipSpec("translate", 64, 48, 3, seed=6, dx=1.5, dy=-0.5))
        assert not np.array_equal(a[0].y, c[0].y)

    def test_shapes_and_ranges(self):
        for kind in KINDS:
            frames = generate(ClipSpec(kind, 32, 48, 2, seed=0, dx=1.0,
                                       deg_per_frame=2.0))
            assert len(frames) == 2
            f = frames[0]
            assert f.y.shape == (48, 32) and f.u.shape == (24, 16)
            assert f.y.dtype == np.uint8
            # studio-ish ranges leave clipping headroom
            assert 16 <= f.y.min() and f.y.max() <= 240
            assert 60 <= f.u.min() and f.u.max() <= 196

    def test_static_frames_are_identical(self):
        frames = generate(ClipSpec("static", 64, 64, 4, seed=1))
        for f in frames[1:]:
            assert np.array_equal(f.y, frames[0].y)
            assert np.array_equal(f.u, frames[0].u)

    def test_integer_translation_is_an_exact_shift(self):
        # dx=2: frame t+1 shows the same texture shifted right by 2 luma px
        frames = generate(ClipSpec("translate", 64, 64, 3, seed=2, dx=2.0))
        a, b = frames[0].y.astype(int), frames[1].y.astype(int)
        assert np.array_equal(b[:, 2:], a[:, :-2])
        # chroma moves by 1 (half the luma displacement)
        au, bu = frames[0].u.astype(int), frames[1].u.astype(int)
        assert np.array_equal(bu[:, 1:], au[:, :-1])

    def test_fractional_translation_changes_content_smoothly(self):
        frames = generate(ClipSpec("translate", 64, 64, 2, seed=3, dx=0.5))
        diff = frames[1].y.astype(int) - frames[0].y.astype(int)
        assert np.any(diff != 0)
        assert np.abs(diff).mean() < 20  # small motion, small change

    def test_rotation_moves_periphery_more_than_center(self):
        frames = generate(ClipSpec("rotate", 64, 64, 2, seed=4,
                                   deg_per_frame=5.0))
        diff = np.abs(frames[1].y.astype(int) - frames[0].y.astype(int))
        center = diff[28:36, 28:36].mean()
        edge = np.concatenate([diff[:8].ravel(), diff[-8:].ravel()]).mean()
        assert edge > center

    def test_noise_frames_are_temporally_independent(self):
        frames = generate(ClipSpec("noise", 64, 64, 2, seed=5, smoothness=1.0))
        a = frames[0].y.astype(float).ravel()
        b = frames[1].y.astype(float).ravel()
        corr = np.corrcoef(a, b)[0, 1]
        assert abs(corr) < 0.2
