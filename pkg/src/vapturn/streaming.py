"""Real-time inference: 5 s rolling context, one prediction tick per 100 ms of audio.

Each tick recomputes features and the forward pass over the buffered window,
which makes streaming output equal an offline pass over the same window by
construction and keeps results invariant to how the audio was chunked.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np

from .audio import Waveform
from .codebook import entropy_nats, p_now_pair
from .features import HOP_SAMPLES, WINDOW_SAMPLES, extract_features
from .model import FrameBatch, ModelConfig, forward

TICK_PERIOD_S = 0.1
_PAD_FRAMES = WINDOW_SAMPLES // HOP_SAMPLES - 1


class ModelNotAttachedError(RuntimeError):
    pass


class MismatchedChunkError(ValueError):
    pass


@dataclass(frozen=True)
class FrameResult:
    """One 10 Hz prediction tick."""

    frame_index: int
    timestamp_s: float
    p_now_user: float
    p_now_robot: float
    vad_user: float
    vad_robot: float
    vap_entropy: float
    compute_ms: float

    @property
    def vad(self) -> tuple[float, float]:
        return (self.vad_user, self.vad_robot)

    def to_json_dict(self) -> dict:
        return {
            "frame_index": self.frame_index,
            "timestamp_s": round(self.timestamp_s, 6),
            "p_now_user": self.p_now_user,
            "p_now_robot": self.p_now_robot,
            "vad": [self.vad_user, self.vad_robot],
            "vap_entropy": self.vap_entropy,
            "compute_ms": self.compute_ms,
        }

    def to_json_line(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)


class StreamContext:
    """Single-dialogue streaming state: rolling audio window plus a tick clock.

    Not safe for concurrent mutation; producer and ticker must be externally
    serialized. Emitted FrameResults are immutable and freely shareable.
    """

    def __init__(self, params: dict | None, cfg: ModelConfig):
        self.params = params
        self.cfg = cfg
        self.capacity = cfg.context_frames * HOP_SAMPLES
        self._window_a = np.zeros(self.capacity)
        self._window_b = np.zeros(self.capacity)
        self._feat_a: np.ndarray | None = None
        self._feat_b: np.ndarray | None = None
        self._pending_a: list[np.ndarray] = []
        self._pending_b: list[np.ndarray] = []
        self._pending_len = 0
        self.clock = 0

    @property
    def samples_pending(self) -> int:
        return self._pending_len

    def push_audio(self, chunk_a, chunk_b=None) -> None:
        """Queue new audio; the robot channel defaults to silence when omitted."""
        a = np.asarray(chunk_a, dtype=np.float64).ravel()
        b = np.zeros_like(a) if chunk_b is None else np.asarray(chunk_b, dtype=np.float64).ravel()
        if a.size != b.size:
            raise MismatchedChunkError(f"chunk lengths differ: {a.size} vs {b.size}")
        if a.size == 0:
            return
        self._pending_a.append(a)
        self._pending_b.append(b)
        self._pending_len += a.size

    def _take_hop(self) -> tuple[np.ndarray, np.ndarray]:
        out_a = np.empty(HOP_SAMPLES)
        out_b = np.empty(HOP_SAMPLES)
        need = HOP_SAMPLES
        pos = 0
        while need > 0:
            head_a = self._pending_a[0]
            head_b = self._pending_b[0]
            take = min(need, head_a.size)
            out_a[pos : pos + take] = head_a[:take]
            out_b[pos : pos + take] = head_b[:take]
            if take == head_a.size:
                self._pending_a.pop(0)
                self._pending_b.pop(0)
            else:
                self._pending_a[0] = head_a[take:]
                self._pending_b[0] = head_b[take:]
            need -= take
            pos += take
        self._pending_len -= HOP_SAMPLES
        return out_a, out_b

    @property
    def tick_due(self) -> bool:
        return self._pending_len >= HOP_SAMPLES

    def _window_features(self, window: np.ndarray, cached: np.ndarray | None) -> np.ndarray:
        """Features of the current window, reusing rows from the previous tick.

        After a one-hop shift, window rows 3..48 equal the previous rows 4..49
        sample-for-sample; only the zero-pad-affected head rows and the newest
        row see new audio, so those are the only ones recomputed.
        """
        if cached is None or self.capacity < WINDOW_SAMPLES + HOP_SAMPLES:
            return extract_features(window)
        head = extract_features(window[: _PAD_FRAMES * HOP_SAMPLES])
        tail = extract_features(window[-WINDOW_SAMPLES:])[-1:]
        return np.concatenate([head, cached[_PAD_FRAMES + 1 :], tail])

    def tick(self) -> FrameResult | None:
        """Consume 100 ms of queued audio and emit one prediction, or None if
        less than a hop of audio is pending."""
        if self.params is None:
            raise ModelNotAttachedError("no model parameters attached to this stream")
        if not self.tick_due:
            return None
        t0 = time.perf_counter()
        hop_a, hop_b = self._take_hop()
        self._window_a = np.concatenate([self._window_a[HOP_SAMPLES:], hop_a])
        self._window_b = np.concatenate([self._window_b[HOP_SAMPLES:], hop_b])
        self.clock += 1
        feats_a = self._window_features(self._window_a, self._feat_a)
        feats_b = self._window_features(self._window_b, self._feat_b)
        self._feat_a = feats_a
        self._feat_b = feats_b
        out = forward(self.params, FrameBatch(feats_a, feats_b), self.cfg)
        vap_row = out.vap[-1]
        vad_row = out.vad[-1]
        p_user, p_robot = p_now_pair(vap_row)
        compute_ms = (time.perf_counter() - t0) * 1000.0
        return FrameResult(
            frame_index=self.clock,
            timestamp_s=self.clock * TICK_PERIOD_S,
            p_now_user=p_user,
            p_now_robot=p_robot,
            vad_user=float(vad_row[0]),
            vad_robot=float(vad_row[1]),
            vap_entropy=entropy_nats(vap_row),
            compute_ms=compute_ms,
        )

    def tick_all(self) -> list[FrameResult]:
        out = []
        while self.tick_due:
            out.append(self.tick())
        return out

    def reset(self) -> None:
        """Back to a fresh context: zeroed window, empty queue, clock at 0."""
        self._window_a = np.zeros(self.capacity)
        self._window_b = np.zeros(self.capacity)
        self._feat_a = None
        self._feat_b = None
        self._pending_a = []
        self._pending_b = []
        self._pending_len = 0
        self.clock = 0


def run_stream(
    params: dict,
    cfg: ModelConfig,
    wav_a,
    wav_b=None,
    chunk_samples: int = HOP_SAMPLES,
) -> list[FrameResult]:
    """Replay waveforms through a fresh StreamContext in fixed-size chunks."""
    a = wav_a.samples if isinstance(wav_a, Waveform) else np.asarray(wav_a, dtype=np.float64)
    b = None
    if wav_b is not None:
        b = wav_b.samples if isinstance(wav_b, Waveform) else np.asarray(wav_b, dtype=np.float64)
        if b.size != a.size:
            raise MismatchedChunkError("channel lengths differ")
    ctx = StreamContext(params, cfg)
    results = []
    for start in range(0, a.size, chunk_samples):
        stop = start + chunk_samples
        ctx.push_audio(a[start:stop], None if b is None else b[start:stop])
        results.extend(ctx.tick_all())
    return results
