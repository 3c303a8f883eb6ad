"""Mono 16 kHz audio values, PCM-16 WAV I/O, power utilities, and 10 ms activity label tracks."""

from __future__ import annotations

import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SAMPLE_RATE = 16000
LABEL_FRAME_RATE = 100
SAMPLES_PER_LABEL_FRAME = SAMPLE_RATE // LABEL_FRAME_RATE
PCM_SCALE = 32768.0


class AudioError(ValueError):
    """Base class for audio value and format errors."""


class UnsupportedEncodingError(AudioError):
    pass


class UnsupportedSampleRateError(AudioError):
    pass


class UnsupportedChannelCountError(AudioError):
    pass


class EmptyWaveformError(AudioError):
    pass


@dataclass(frozen=True, eq=False)
class Waveform:
    """Immutable mono waveform with amplitudes in [-1, 1] at exactly 16 kHz."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        if self.sample_rate != SAMPLE_RATE:
            raise UnsupportedSampleRateError(
                f"sample_rate must be {SAMPLE_RATE}, got {self.sample_rate}"
            )
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim != 1:
            raise AudioError(f"samples must be 1-D, got shape {arr.shape}")
        if arr.size:
            if not np.isfinite(arr).all():
                raise AudioError("samples contain non-finite values")
            peak = float(np.abs(arr).max())
            if peak > 1.0 + 1e-9:
                raise AudioError(f"sample amplitude {peak} outside [-1, 1]")
        arr = np.clip(arr, -1.0, 1.0)
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True, eq=False)
class VadTrack:
    """Boolean voice-activity labels on a 10 ms (100 Hz) frame grid."""

    frames: np.ndarray
    frame_rate: int = LABEL_FRAME_RATE

    def __post_init__(self):
        if self.frame_rate != LABEL_FRAME_RATE:
            raise AudioError(f"frame_rate must be {LABEL_FRAME_RATE}, got {self.frame_rate}")
        arr = np.asarray(self.frames, dtype=bool)
        if arr.ndim != 1:
            raise AudioError(f"frames must be 1-D, got shape {arr.shape}")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "frames", arr)

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def duration_s(self) -> float:
        return len(self.frames) / self.frame_rate


def label_frame_count(n_samples: int) -> int:
    """Number of 10 ms label frames covering n_samples (ceil)."""
    return -(-n_samples // SAMPLES_PER_LABEL_FRAME)


@dataclass(frozen=True, eq=False)
class StereoDialogue:
    """Two aligned speaker channels with their activity label tracks.

    Channel a is the user, channel b the robot.
    """

    channel_a: Waveform
    channel_b: Waveform
    vad_a: VadTrack
    vad_b: VadTrack

    def __post_init__(self):
        if len(self.channel_a) != len(self.channel_b):
            raise AudioError(
                f"channel lengths differ: {len(self.channel_a)} vs {len(self.channel_b)}"
            )
        expect = label_frame_count(len(self.channel_a))
        for name, track in (("vad_a", self.vad_a), ("vad_b", self.vad_b)):
            if len(track) != expect:
                raise AudioError(f"{name} has {len(track)} frames, expected {expect}")

    @property
    def duration_s(self) -> float:
        return self.channel_a.duration_s


def load_wav(path) -> Waveform:
    """Read a PCM 16-bit mono 16 kHz WAV file, normalizing samples by 1/32768."""
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"no such file: {p}")
    try:
        reader = wave.open(str(p), "rb")
    except (wave.Error, EOFError) as exc:
        raise UnsupportedEncodingError(f"{p}: not a readable PCM WAV ({exc})") from exc
    with reader:
        if reader.getcomptype() != "NONE" or reader.getsampwidth() != 2:
            raise UnsupportedEncodingError(
                f"{p}: expected uncompressed 16-bit PCM, got "
                f"comptype={reader.getcomptype()} sampwidth={reader.getsampwidth()}"
            )
        if reader.getnchannels() != 1:
            raise UnsupportedChannelCountError(
                f"{p}: expected mono, got {reader.getnchannels()} channels"
            )
        if reader.getframerate() != SAMPLE_RATE:
            raise UnsupportedSampleRateError(
                f"{p}: expected {SAMPLE_RATE} Hz, got {reader.getframerate()}"
            )
        raw = reader.readframes(reader.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / PCM_SCALE
    return Waveform(samples)


def save_wav(w: Waveform, path) -> None:
    """Write a Waveform as PCM 16-bit mono 16 kHz, saturating at +/- full scale."""
    q = np.clip(np.rint(w.samples * PCM_SCALE), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as writer:
        writer.setnchannels(1)
        writer.setsampwidth(2)
        writer.setframerate(SAMPLE_RATE)
        writer.writeframes(q.tobytes())


def mean_power(w: Waveform) -> float:
    """Mean of squared samples (dimensionless signal power)."""
    if len(w) == 0:
        raise EmptyWaveformError("cannot compute power of an empty waveform")
    return float(np.mean(w.samples**2))


def apply_hangover(frames: np.ndarray, hangover_frames: int) -> np.ndarray:
    """Extend raw activity frames: a frame is active if any raw-active frame lies
    within the preceding hangover_frames (causal dilation).

    Expects raw (un-extended) activity; re-applying to an already extended track
    extends further, i.e. apply_hangover(apply_hangover(x, h), h) covers 2h.
    """
    frames = np.asarray(frames, dtype=bool)
    if hangover_frames < 0:
        raise AudioError("hangover must be >= 0")
    if hangover_frames == 0 or frames.size == 0:
        return frames.copy()
    n = frames.size
    idx = np.arange(n)
    last_active = np.maximum.accumulate(np.where(frames, idx, -n))
    return (idx - last_active) <= hangover_frames


def vad_from_energy(w: Waveform, threshold_db: float, hangover_ms: float) -> VadTrack:
    """Energy-threshold activity labels on 10 ms frames, extended by a hangover.

    threshold_db is relative to full scale (0 dB = unit mean-square power); a
    frame is active iff its energy strictly exceeds the threshold. Label
    generation only; never used at inference time.
    """
    if len(w) == 0:
        raise EmptyWaveformError("cannot label an empty waveform")
    if hangover_ms < 0:
        raise AudioError("hangover_ms must be >= 0")
    n_frames = label_frame_count(len(w))
    padded = np.zeros(n_frames * SAMPLES_PER_LABEL_FRAME)
    padded[: len(w)] = w.samples
    energy = np.mean(padded.reshape(n_frames, SAMPLES_PER_LABEL_FRAME) ** 2, axis=1)
    raw = energy > 10.0 ** (threshold_db / 10.0)
    hang = int(round(hangover_ms * LABEL_FRAME_RATE / 1000.0))
    return VadTrack(apply_hangover(raw, hang))
