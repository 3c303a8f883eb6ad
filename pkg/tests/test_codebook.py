import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vapturn.codebook import (
    BinConfig,
    N_STATES,
    ProjectionWindow,
    StateIndexError,
    WindowTooShortError,
    decode_state,
    encode_state,
    entropy_nats,
    p_now,
    p_now_pair,
    swap_speakers,
    window_from_labels,
)


def oracle_decode_bits(idx: int):
    """Test-local bit extraction, independent of the module's decode tables."""
    return [[(idx >> (4 * s + i)) & 1 for i in range(4)] for s in range(2)]


def oracle_p_now(probs, speaker):
    """Brute-force accumulation over all 256 decoded states."""
    acc = [0.0, 0.0]
    for idx in range(256):
        bits = oracle_decode_bits(idx)
        for s in range(2):
            acc[s] += probs[idx] * (bits[s][0] + bits[s][1]) / 2.0
    total = acc[0] + acc[1]
    if total < 1e-9:
        return 0.5
    return acc[speaker] / total


class TestEncoding:
    def test_all_zero_is_zero(self):
        assert encode_state(ProjectionWindow(((0, 0, 0, 0), (0, 0, 0, 0)))) == 0

    def test_all_one_is_255(self):
        assert encode_state(ProjectionWindow(((1, 1, 1, 1), (1, 1, 1, 1)))) == 255

    def test_single_bits(self):
        assert encode_state(ProjectionWindow(((1, 0, 0, 0), (0, 0, 0, 0)))) == 1
        assert encode_state(ProjectionWindow(((0, 0, 0, 0), (1, 0, 0, 0)))) == 16

    def test_decode_endpoints(self):
        assert decode_state(0) == ProjectionWindow(((0,) * 4, (0,) * 4))
        assert decode_state(255) == ProjectionWindow(((1,) * 4, (1,) * 4))

    def test_exhaustive_bijectivity(self):
        # all 256 indices round-trip, and against the independent bit oracle
        for idx in range(N_STATES):
            w = decode_state(idx)
            assert encode_state(w) == idx
            assert [list(map(int, row)) for row in w.bits] == oracle_decode_bits(idx)
        # every 2x4 bit pattern round-trips the other way
        for idx in range(N_STATES):
            bits = oracle_decode_bits(idx)
            assert decode_state(encode_state(ProjectionWindow(tuple(map(tuple, bits))))).bits == ProjectionWindow(tuple(map(tuple, bits))).bits

    def test_out_of_range(self):
        with pytest.raises(StateIndexError):
            decode_state(256)
        with pytest.raises(StateIndexError):
            decode_state(-1)


class TestWindowFromLabels:
    def test_silent_window_zero(self):
        z = np.zeros(200, dtype=bool)
        assert encode_state(window_from_labels(z, z)) == 0

    def test_user_active_entire_horizon(self):
        a = np.ones(200, dtype=bool)
        b = np.zeros(200, dtype=bool)
        assert encode_state(window_from_labels(a, b)) == 15

    def test_threshold_boundary(self):
        # bin 0 covers frames 0..19; 100 ms = 10 frames = exactly half
        a = np.zeros(200, dtype=bool)
        a[:10] = True
        b = np.zeros(200, dtype=bool)
        w = window_from_labels(a, b)
        assert w.bits[0][0] is True
        # 90 ms = 9 of 20 frames -> below threshold
        a9 = np.zeros(200, dtype=bool)
        a9[:9] = True
        assert window_from_labels(a9, b).bits[0][0] is False

    def test_counts_against_frame_oracle(self):
        rng = np.random.default_rng(0)
        cfg = BinConfig()
        edges = cfg.edges_frames
        for _ in range(50):
            a = rng.random(200) < 0.4
            b = rng.random(200) < 0.4
            w = window_from_labels(a, b, cfg)
            for s, lab in enumerate((a, b)):
                for i in range(4):
                    frames = lab[edges[i] : edges[i + 1]]
                    expect = frames.sum() / len(frames) >= 0.5
                    assert w.bits[s][i] == expect

    def test_short_slice_rejected(self):
        with pytest.raises(WindowTooShortError):
            window_from_labels(np.zeros(199, dtype=bool), np.zeros(200, dtype=bool))

    @given(st.integers(min_value=0, max_value=199))
    @settings(max_examples=30, deadline=None)
    def test_monotone_in_added_activity(self, extra):
        rng = np.random.default_rng(5)
        a = rng.random(200) < 0.3
        b = rng.random(200) < 0.3
        w1 = window_from_labels(a, b)
        a2 = a.copy()
        a2[extra] = True
        w2 = window_from_labels(a2, b)
        for s in range(2):
            for i in range(4):
                assert w2.bits[s][i] >= w1.bits[s][i]


class TestBinConfig:
    def test_default_edges(self):
        assert BinConfig().edges_frames == (0, 20, 60, 120, 200)

    def test_rejects_bad_boundaries(self):
        with pytest.raises(ValueError):
            BinConfig(boundaries_s=(0.6, 0.2, 1.2, 2.0))
        with pytest.raises(ValueError):
            BinConfig(boundaries_s=(0.2, 0.6, 1.2, 1.9))
        with pytest.raises(ValueError):
            BinConfig(activity_ratio=0.0)


class TestPNow:
    def test_uniform_is_half(self):
        uniform = np.full(256, 1 / 256)
        assert p_now(uniform, 0) == pytest.approx(0.5, abs=1e-12)
        assert p_now(uniform, 1) == pytest.approx(0.5, abs=1e-12)

    def test_one_hot_user_near_bins(self):
        idx = encode_state(ProjectionWindow(((1, 1, 0, 0), (0, 0, 0, 0))))
        one_hot = np.zeros(256)
        one_hot[idx] = 1.0
        assert p_now(one_hot, 0) == 1.0
        assert p_now(one_hot, 1) == 0.0

    def test_degenerate_mass_returns_half(self):
        # all mass on states with no near-term activity for either speaker
        idx = encode_state(ProjectionWindow(((0, 0, 1, 1), (0, 0, 1, 1))))
        one_hot = np.zeros(256)
        one_hot[idx] = 1.0
        assert p_now(one_hot, 0) == 0.5
        assert p_now(one_hot, 1) == 0.5

    def test_brute_force_oracle_1000_random(self):
        rng = np.random.default_rng(99)
        for _ in range(1000):
            probs = rng.random(256)
            probs /= probs.sum()
            for s in (0, 1):
                assert abs(p_now(probs, s) - oracle_p_now(probs, s)) <= 1e-9
            assert abs(p_now(probs, 0) + p_now(probs, 1) - 1.0) <= 1e-6

    def test_pair_sums_exactly(self):
        rng = np.random.default_rng(1)
        probs = rng.random(256)
        probs /= probs.sum()
        u, r = p_now_pair(probs)
        assert u + r == 1.0

    def test_speaker_swap_symmetry(self):
        rng = np.random.default_rng(2)
        probs = rng.random(256)
        probs /= probs.sum()
        swapped = swap_speakers(probs)
        assert p_now(swapped, 0) == pytest.approx(p_now(probs, 1), abs=1e-12)
        assert p_now(swapped, 1) == pytest.approx(p_now(probs, 0), abs=1e-12)

    def test_rejects_bad_distribution(self):
        with pytest.raises(ValueError):
            p_now(np.full(256, 1.0), 0)
        with pytest.raises(ValueError):
            p_now(np.full(255, 1 / 255), 0)
        bad = np.full(256, 1 / 256)
        bad[0] = -bad[0]
        with pytest.raises(ValueError):
            p_now(bad / bad.sum(), 0)
        with pytest.raises(ValueError):
            p_now(np.full(256, 1 / 256), 2)


def test_entropy_uniform():
    assert entropy_nats(np.full(256, 1 / 256)) == pytest.approx(np.log(256))
    one_hot = np.zeros(256)
    one_hot[3] = 1.0
    assert entropy_nats(one_hot) == 0.0
