from __future__ import annotations

from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from canentropy.can_core import CanFrame, MAX_ID
from canentropy.entropy import (
    BitStats,
    WindowPolicy,
    binary_entropy,
    binary_entropy_array,
    bit_stats,
    windowed_stats,
    write_stats_csv,
)


def frames_of(ids, step=1000):
    return [CanFrame(k * step, i, 0) for k, i in enumerate(ids)]


def naive_ones(ids):
    ones = [0] * 11
    for i in ids:
        for b in range(11):
            if (i >> (10 - b)) & 1:
                ones[b] += 1
    return tuple(ones)


def mp_entropy(p):
    mpmath.mp.dps = 50
    p = mpmath.mpf(p)
    return float(-p * mpmath.log(p, 2) - (1 - p) * mpmath.log(1 - p, 2))


def test_entropy_fixed_points():
    assert abs(binary_entropy(0.5) - 1.0) <= 1e-12
    assert binary_entropy(0.0) == 0.0
    assert binary_entropy(1.0) == 0.0


def test_entropy_quarter_against_high_precision():
    assert binary_entropy(0.25) == pytest.approx(mp_entropy("0.25"), abs=1e-12)
    assert binary_entropy(0.25) == pytest.approx(0.8112781244591328, abs=1e-12)


@pytest.mark.parametrize("p", [-0.1, 1.5, float("nan")])
def test_entropy_domain(p):
    with pytest.raises(ValueError):
        binary_entropy(p)


def test_entropy_symmetry_grid():
    grid = np.arange(0, 1001) / 1000
    for p in grid:
        assert abs(binary_entropy(p) - binary_entropy(1 - p)) <= 1e-12


def test_entropy_strictly_increasing_to_half():
    grid = np.arange(0, 501) / 1000
    h = binary_entropy_array(grid)
    assert np.all(np.diff(h) > 0)


def test_vectorised_matches_scalar():
    grid = np.linspace(0, 1, 257)
    assert np.allclose(binary_entropy_array(grid), [binary_entropy(p) for p in grid], atol=1e-15)


def test_constant_bits():
    s = bit_stats(frames_of([0x7FF] * 4))
    assert np.all(s.p == 1.0) and np.all(s.H == 0.0)


def test_balanced_bits():
    s = bit_stats(frames_of([0x000, 0x7FF]))
    assert np.all(s.p == 0.5) and np.allclose(s.H, 1.0)


def test_four_frame_example():
    ids = [0x2A5, 0x2A5, 0x100, 0x3FF]
    s = bit_stats(frames_of(ids))
    assert s.ones == naive_ones(ids)
    assert s.p_exact == tuple(Fraction(c, 4) for c in naive_ones(ids))
    assert np.allclose(s.H, [binary_entropy(c / 4) for c in naive_ones(ids)])


def test_empty_window_rejected():
    with pytest.raises(ValueError, match="empty window"):
        bit_stats([])


@given(st.lists(st.integers(0, MAX_ID), min_size=1, max_size=200))
def test_bit_stats_matches_double_loop(ids):
    assert bit_stats(frames_of(ids)).ones == naive_ones(ids)


@given(st.lists(st.integers(0, MAX_ID), min_size=1, max_size=50), st.lists(st.integers(0, MAX_ID), min_size=1, max_size=50))
def test_concatenation_is_weighted_mean(a, b):
    sa, sb, sab = bit_stats(frames_of(a)), bit_stats(frames_of(b)), bit_stats(frames_of(a + b))
    for pa, pb, pab in zip(sa.p_exact, sb.p_exact, sab.p_exact):
        assert pab == (len(a) * pa + len(b) * pb) / (len(a) + len(b))


def test_count_windows_over_250_frames():
    frames = frames_of(list(range(250)))
    ws = windowed_stats(frames, WindowPolicy("count", 100, 100))
    assert [w.message_count for w in ws] == [100, 100, 50]
    ws = windowed_stats(frames[:220], WindowPolicy("count", 100, 100))
    assert [w.message_count for w in ws] == [100, 100]


def test_time_windows_with_idle_gap():
    # frames in seconds 0 and 2 only; second 1 is idle
    frames = [CanFrame(t, 0x100, 0) for t in (0, 500_000, 2_000_000, 2_500_000)]
    ws = windowed_stats(frames, WindowPolicy(), end=3_000_000)
    assert [w.window_id for w in ws] == [0, 2]
    assert ws.gaps == [1]


def test_sixty_second_log_gives_at_most_sixty_windows():
    frames = [CanFrame(t, 0x100, 0) for t in range(0, 60_000_000, 10_000)]
    ws = windowed_stats(frames, WindowPolicy())
    assert len(ws) <= 60
    assert all(w.message_count == 100 for w in ws)


def test_single_window_equals_whole_log():
    rng = np.random.default_rng(1)
    frames = frames_of(rng.integers(0, MAX_ID + 1, 500).tolist())
    ws = windowed_stats(frames, WindowPolicy("time", 10.0, 10.0))
    assert len(ws) == 1
    assert ws[0].ones == bit_stats(frames).ones


def test_sliding_windows_overlap():
    frames = [CanFrame(t, 0x100, 0) for t in range(0, 4_000_000, 100_000)]
    ws = windowed_stats(frames, WindowPolicy("time", 2.0, 1.0), end=4_000_000)
    assert [w.message_count for w in ws] == [20, 20, 20, 10]


@pytest.mark.parametrize("kw", [dict(mode="frames"), dict(length=0), dict(stride=2.0), dict(mode="count", length=1.5)])
def test_policy_validation(kw):
    with pytest.raises(ValueError):
        WindowPolicy(**kw)


def test_bitstats_validation():
    with pytest.raises(ValueError):
        BitStats(0, 2, (3,) + (0,) * 10)


def test_stats_csv(tmp_path):
    write_stats_csv([bit_stats(frames_of([1, 2, 3]))], tmp_path / "s.csv")
    rows = (tmp_path / "s.csv").read_text().splitlines()
    assert len(rows) == 2
