import numpy as np
import pytest

from vapturn.codebook import p_now_pair
from vapturn.features import extract_features
from vapturn.model import FrameBatch, ModelConfig, forward, init_params
from vapturn.streaming import (
    FrameResult,
    MismatchedChunkError,
    ModelNotAttachedError,
    StreamContext,
    run_stream,
)


@pytest.fixture(scope="module")
def cfg():
    return ModelConfig()


@pytest.fixture(scope="module")
def params(cfg):
    return init_params(cfg, seed=2)


def _audio(seconds, seed=0, amp=0.3):
    rng = np.random.default_rng(seed)
    return np.clip(amp * rng.standard_normal(int(seconds * 16000)), -1, 1)


def offline_frame_results(params, cfg, audio_a, audio_b=None):
    """Oracle: independent full recompute of every tick over its trailing window."""
    cap = cfg.context_samples
    b = np.zeros_like(audio_a) if audio_b is None else audio_b
    out = []
    n_ticks = audio_a.size // 1600
    for k in range(1, n_ticks + 1):
        end = k * 1600
        win_a = np.zeros(cap)
        win_b = np.zeros(cap)
        seg_a = audio_a[max(0, end - cap) : end]
        seg_b = b[max(0, end - cap) : end]
        win_a[cap - seg_a.size :] = seg_a
        win_b[cap - seg_b.size :] = seg_b
        pred = forward(params, FrameBatch(extract_features(win_a), extract_features(win_b)), cfg)
        p_user, p_robot = p_now_pair(pred.vap[-1])
        out.append((p_user, p_robot, float(pred.vad[-1, 0]), float(pred.vad[-1, 1])))
    return out


class TestRate:
    def test_exactly_floor_10n_results(self, params, cfg):
        rng = np.random.default_rng(1)
        audio = _audio(10.0, seed=1)
        ctx = StreamContext(params, cfg)
        results = []
        pos = 0
        while pos < audio.size:
            step = int(rng.integers(1, 7000))
            ctx.push_audio(audio[pos : pos + step])
            results.extend(ctx.tick_all())
            pos += step
        assert len(results) == 100
        assert [r.frame_index for r in results] == list(range(1, 101))
        for r in results:
            assert r.timestamp_s == pytest.approx(r.frame_index * 0.1)

    def test_non_multiple_duration(self, params, cfg):
        audio = _audio(1.234, seed=2)
        results = run_stream(params, cfg, audio)
        assert len(results) == 12  # floor(12.34)

    def test_push_one_hop_one_tick(self, params, cfg):
        ctx = StreamContext(params, cfg)
        ctx.push_audio(np.zeros(1600))
        assert ctx.tick_due
        first = ctx.tick()
        assert isinstance(first, FrameResult)
        assert ctx.tick() is None


class TestEquivalence:
    def test_streaming_matches_offline_recompute(self, params, cfg):
        audio = _audio(8.0, seed=3)
        results = run_stream(params, cfg, audio)
        oracle = offline_frame_results(params, cfg, audio)
        assert len(results) == len(oracle)
        worst = max(
            max(abs(r.p_now_user - o[0]), abs(r.p_now_robot - o[1]))
            for r, o in zip(results, oracle)
        )
        assert worst <= 1e-5

    def test_chunking_invariance_bit_exact(self, params, cfg):
        audio = _audio(6.0, seed=4)
        base = run_stream(params, cfg, audio, chunk_samples=1600)
        odd = run_stream(params, cfg, audio, chunk_samples=731)
        big = run_stream(params, cfg, audio, chunk_samples=160000)
        for other in (odd, big):
            assert len(other) == len(base)
            for a, b in zip(base, other):
                assert a.p_now_user == b.p_now_user
                assert a.p_now_robot == b.p_now_robot
                assert a.vad == b.vad

    def test_buffer_keeps_only_last_five_seconds(self, params, cfg):
        # prepend loud audio more than 5 s before the probe point: no effect
        tail = _audio(5.0, seed=5)
        head1 = np.zeros(32000)
        head2 = np.clip(0.9 * np.random.default_rng(6).standard_normal(32000), -1, 1)
        r1 = run_stream(params, cfg, np.concatenate([head1, tail]))
        r2 = run_stream(params, cfg, np.concatenate([head2, tail]))
        assert r1[-1].p_now_user == r2[-1].p_now_user
        assert r1[-1].vad == r2[-1].vad

    def test_omitted_robot_channel_is_zeros(self, params, cfg):
        audio = _audio(3.0, seed=7)
        implicit = run_stream(params, cfg, audio)
        explicit = run_stream(params, cfg, audio, np.zeros_like(audio))
        for a, b in zip(implicit, explicit):
            assert a.p_now_user == b.p_now_user
            assert a.vad == b.vad


class TestContract:
    def test_mismatched_chunks_rejected(self, params, cfg):
        ctx = StreamContext(params, cfg)
        with pytest.raises(MismatchedChunkError):
            ctx.push_audio(np.zeros(100), np.zeros(99))

    def test_tick_without_model(self, cfg):
        ctx = StreamContext(None, cfg)
        ctx.push_audio(np.zeros(1600))
        with pytest.raises(ModelNotAttachedError):
            ctx.tick()

    def test_result_invariants(self, params, cfg):
        results = run_stream(params, cfg, _audio(2.0, seed=8))
        for r in results:
            assert abs(r.p_now_user + r.p_now_robot - 1.0) <= 1e-6
            assert 0.0 <= r.vad_user <= 1.0 and 0.0 <= r.vad_robot <= 1.0
            assert r.vap_entropy >= 0.0
            assert r.compute_ms >= 0.0

    def test_json_line_fields(self, params, cfg):
        import json

        r = run_stream(params, cfg, _audio(0.5, seed=9))[0]
        row = json.loads(r.to_json_line())
        assert set(row) == {
            "frame_index",
            "timestamp_s",
            "p_now_user",
            "p_now_robot",
            "vad",
            "vap_entropy",
            "compute_ms",
        }


class TestReset:
    def test_reset_equals_fresh(self, params, cfg):
        audio = _audio(3.0, seed=10)
        ctx = StreamContext(params, cfg)
        ctx.push_audio(_audio(2.0, seed=11))
        ctx.tick_all()
        ctx.reset()
        assert ctx.clock == 0
        replay = []
        ctx.push_audio(audio)
        replay.extend(ctx.tick_all())
        fresh = run_stream(params, cfg, audio, chunk_samples=audio.size)
        assert len(replay) == len(fresh)
        for a, b in zip(replay, fresh):
            assert a.p_now_user == b.p_now_user
            assert a.vad == b.vad

    def test_double_reset_idempotent(self, params, cfg):
        ctx = StreamContext(params, cfg)
        ctx.push_audio(_audio(1.0, seed=12))
        ctx.tick_all()
        ctx.reset()
        ctx.reset()
        assert ctx.clock == 0 and ctx.samples_pending == 0

    def test_first_post_reset_tick_sees_padded_context(self, params, cfg):
        ctx = StreamContext(params, cfg)
        ctx.push_audio(_audio(4.0, seed=13))
        ctx.tick_all()
        ctx.reset()
        chunk = _audio(0.1, seed=14)
        ctx.push_audio(chunk)
        r = ctx.tick()
        fresh = run_stream(params, cfg, chunk)[0]
        assert r.p_now_user == fresh.p_now_user
        assert r.frame_index == 1
