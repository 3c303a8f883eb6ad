"""Training loop, target construction, per-SNR evaluation, and checkpoint I/O."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .audio import StereoDialogue, Waveform
from .codebook import HORIZON_FRAMES, BinConfig, N_BINS
from .features import extract_features
from .model import (
    FrameBatch,
    LossBreakdown,
    ModelConfig,
    batch_loss_and_grads,
    clone_params,
    init_params,
    loss_from_logits,
    _forward,
)
from .noise import NoiseBank, TRAIN_SNRS_DB, Condition, apply_condition, sample_condition

CHECKPOINT_VERSION = 1
LABELS_PER_FEATURE_FRAME = 10
HISTORY_COLUMNS = (
    "epoch",
    "train_loss",
    "train_vap",
    "train_vad",
    "valid_loss",
    "valid_vap",
    "valid_vad",
)


class TrainingDivergedError(RuntimeError):
    pass


class EmptyDatasetError(ValueError):
    pass


@dataclass(frozen=True)
class AugmentConfig:
    """How training audio is perturbed, re-drawn per item per epoch."""

    mode: str = "mc"
    snr_set: tuple = TRAIN_SNRS_DB
    zero_robot_prob: float = 0.5

    def __post_init__(self):
        if self.mode not in ("clean", "mc"):
            raise ValueError(f"mode must be 'clean' or 'mc', got {self.mode!r}")
        if not 0.0 <= self.zero_robot_prob <= 1.0:
            raise ValueError("zero_robot_prob must be in [0, 1]")


def frame_targets(labels_a, labels_b, n_frames: int, cfg: BinConfig = BinConfig()):
    """Per-frame projection-state and activity targets for a whole dialogue.

    Feature frame g predicts from label frame (g+1)*10 onward; frames whose 2 s
    horizon overruns the labels get target_state -1 and are excluded from the
    loss. Vectorized equivalent of window_from_labels over every frame.
    """
    labels_a = np.asarray(labels_a, dtype=bool)
    labels_b = np.asarray(labels_b, dtype=bool)
    n_labels = labels_a.size
    starts = (np.arange(n_frames) + 1) * LABELS_PER_FEATURE_FRAME
    valid = starts + HORIZON_FRAMES <= n_labels
    edges = cfg.edges_frames
    state = np.zeros(n_frames, dtype=np.int64)
    for s_idx, labels in enumerate((labels_a, labels_b)):
        cum = np.concatenate([[0], np.cumsum(labels)])
        for i in range(N_BINS):
            lo, hi = edges[i], edges[i + 1]
            width = hi - lo
            pos_lo = np.minimum(starts + lo, n_labels)
            pos_hi = np.minimum(starts + hi, n_labels)
            frac = (cum[pos_hi] - cum[pos_lo]) / width
            bit = (frac >= cfg.activity_ratio) & valid
            state |= bit.astype(np.int64) << (4 * s_idx + i)
    state[~valid] = -1
    prev = np.minimum(starts - 1, n_labels - 1)
    target_vad = np.stack([labels_a[prev], labels_b[prev]], axis=-1).astype(np.float64)
    return state, target_vad


def dialogue_frames(dialogue: StereoDialogue, cfg: BinConfig = BinConfig(),
                    zero_robot: bool = False) -> FrameBatch:
    """Features and targets for every 100 ms frame of one dialogue."""
    feats_a = extract_features(dialogue.channel_a)
    robot = dialogue.channel_b
    feats_b = extract_features(np.zeros(len(robot))) if zero_robot else extract_features(robot)
    state, target_vad = frame_targets(
        dialogue.vad_a.frames, dialogue.vad_b.frames, feats_a.shape[0], cfg
    )
    return FrameBatch(feats_a, feats_b, state, target_vad)


def slice_windows(batch: FrameBatch, window: int, stride: int, dedupe: bool = False):
    """Cut a whole-dialogue FrameBatch into fixed-length training windows.

    With dedupe=True a final catch-up window is added when the length is not a
    multiple of the stride and already-covered frames in it lose their targets,
    so every frame's loss is counted exactly once (evaluation mode).
    """
    t = batch.n_frames
    if t < window:
        return []
    starts = list(range(0, t - window + 1, stride))
    covered = starts[-1] + window if starts else 0
    extra_from = None
    if dedupe and covered < t:
        starts.append(t - window)
        extra_from = covered
    out = []
    for s in starts:
        state = batch.target_state[s : s + window].copy()
        if extra_from is not None and s == t - window and s < extra_from:
            state[: extra_from - s] = -1
        out.append(
            FrameBatch(
                batch.features_a[s : s + window],
                batch.features_b[s : s + window],
                state,
                batch.target_vad[s : s + window],
            )
        )
    return out


def _stack(windows) -> tuple:
    fa = np.stack([w.features_a for w in windows])
    fb = np.stack([w.features_b for w in windows])
    ts = np.stack([w.target_state for w in windows])
    tv = np.stack([w.target_vad for w in windows])
    return fa, fb, ts, tv


def _eval_loss(params, cfg: ModelConfig, windows, batch_size: int = 64) -> LossBreakdown:
    """Target-weighted mean loss over a list of windows."""
    tot = np.zeros(3)
    n_total = 0
    for i in range(0, len(windows), batch_size):
        chunk = windows[i : i + batch_size]
        fa, fb, ts, tv = _stack(chunk)
        n = int((ts >= 0).sum())
        if n == 0:
            continue
        vap_logits, vad_logits, _ = _forward(params, fa, fb, cfg)
        breakdown = loss_from_logits(vap_logits, vad_logits, ts, tv)
        tot += np.array(breakdown) * n
        n_total += n
    if n_total == 0:
        raise EmptyDatasetError("no frames with targets to evaluate")
    return LossBreakdown(*(tot / n_total))


def evaluate_items(params, cfg: ModelConfig, items, bin_cfg: BinConfig = BinConfig(),
                   zero_robot: bool = False) -> LossBreakdown:
    """Mean loss over full dialogues, each frame counted once."""
    windows = []
    for _, dialogue in items:
        fb = dialogue_frames(dialogue, bin_cfg, zero_robot=zero_robot)
        windows.extend(slice_windows(fb, cfg.context_frames, cfg.context_frames, dedupe=True))
    if not windows:
        raise EmptyDatasetError("no usable windows in dataset")
    return _eval_loss(params, cfg, windows)


@dataclass
class _Prepared:
    """Per-dialogue cache: everything augmentation does not touch."""

    user: "Waveform"
    feats_user_clean: np.ndarray
    feats_robot: np.ndarray
    feats_robot_zero: np.ndarray
    target_state: np.ndarray
    target_vad: np.ndarray


def _prepare_items(items, bin_cfg: BinConfig) -> list:
    out = []
    for _, dialogue in items:
        feats_user = extract_features(dialogue.channel_a)
        feats_robot = extract_features(dialogue.channel_b)
        state, target_vad = frame_targets(
            dialogue.vad_a.frames, dialogue.vad_b.frames, feats_user.shape[0], bin_cfg
        )
        out.append(
            _Prepared(
                user=dialogue.channel_a,
                feats_user_clean=feats_user,
                feats_robot=feats_robot,
                feats_robot_zero=np.full_like(feats_robot, math.log(1e-10)),
                target_state=state,
                target_vad=target_vad,
            )
        )
    return out


def _epoch_windows(prepared, augment: AugmentConfig, bank, cfg: ModelConfig,
                   stride: int, seed: int, epoch: int) -> list:
    """Fresh augmentation draw for every item, reusing cached clean features."""
    windows = []
    for item_idx, item in enumerate(prepared):
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=seed, spawn_key=(epoch, item_idx))
        )
        feats_user = item.feats_user_clean
        if augment.mode == "mc":
            cond = sample_condition(rng, bank, augment.snr_set)
            if not cond.is_clean:
                mixed, _ = apply_condition(item.user, cond, bank, rng)
                feats_user = extract_features(mixed)
        zero_robot = bool(rng.random() < augment.zero_robot_prob)
        feats_robot = item.feats_robot_zero if zero_robot else item.feats_robot
        batch = FrameBatch(feats_user, feats_robot, item.target_state, item.target_vad)
        windows.extend(slice_windows(batch, cfg.context_frames, stride))
    return windows


def _clip_gradients(grads: dict, max_norm: float) -> float:
    total = math.sqrt(sum(float((g**2).sum()) for g in grads.values()))
    if total > max_norm > 0:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


def fit(
    train_items,
    valid_items,
    cfg: ModelConfig,
    *,
    epochs: int = 50,
    lr: float = 0.3,
    lr_decay: float = 0.0,
    batch_size: int = 32,
    window_stride: int = 25,
    augment: AugmentConfig = AugmentConfig(),
    bank: NoiseBank | None = None,
    clip_norm: float = 1.0,
    seed: int = 0,
    bin_cfg: BinConfig = BinConfig(),
    log=None,
):
    """Minibatch gradient descent with per-epoch multi-condition augmentation.

    Returns (best-validation parameters, history). History row 0 is the
    pre-training evaluation; training rows report the running loss over the
    augmented batches seen that epoch. Fully deterministic for a fixed seed.
    """
    train_items = list(train_items)
    valid_items = list(valid_items)
    if not train_items or not valid_items:
        raise EmptyDatasetError("train and valid sets must be non-empty")
    if augment.mode == "mc" and bank is None:
        raise ValueError("multi-condition training requires a noise bank")
    params = init_params(cfg, seed=seed)
    history = []

    def epoch_row(epoch, train_bd, valid_bd):
        return {
            "epoch": epoch,
            "train_loss": train_bd.total,
            "train_vap": train_bd.vap,
            "train_vad": train_bd.vad,
            "valid_loss": valid_bd.total,
            "valid_vap": valid_bd.vap,
            "valid_vad": valid_bd.vad,
        }

    prepared = _prepare_items(train_items, bin_cfg)
    valid_windows = []
    for _, dialogue in valid_items:
        fb = dialogue_frames(dialogue, bin_cfg)
        valid_windows.extend(slice_windows(fb, cfg.context_frames, cfg.context_frames, dedupe=True))
    if not valid_windows:
        raise EmptyDatasetError("no usable validation windows")
    train_eval_windows = []
    for item in prepared:
        batch = FrameBatch(item.feats_user_clean, item.feats_robot, item.target_state, item.target_vad)
        train_eval_windows.extend(
            slice_windows(batch, cfg.context_frames, cfg.context_frames, dedupe=True)
        )

    valid_bd = _eval_loss(params, cfg, valid_windows)
    train_bd = _eval_loss(params, cfg, train_eval_windows)
    history.append(epoch_row(0, train_bd, valid_bd))
    best = (valid_bd.total, clone_params(params))
    if log:
        log(f"epoch 0 valid_loss={valid_bd.total:.4f} vap={valid_bd.vap:.4f}")

    order_rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(1,)))
    for epoch in range(1, epochs + 1):
        windows = _epoch_windows(prepared, augment, bank, cfg, window_stride, seed, epoch)
        if not windows:
            raise EmptyDatasetError("no usable training windows (dialogues too short?)")
        order = order_rng.permutation(len(windows))
        step_lr = lr / (1.0 + lr_decay * (epoch - 1))
        sums = np.zeros(3)
        n_frames = 0
        for i in range(0, len(order), batch_size):
            chunk = [windows[j] for j in order[i : i + batch_size]]
            fa, fb_, ts, tv = _stack(chunk)
            breakdown, grads = batch_loss_and_grads(params, cfg, fa, fb_, ts, tv)
            if not math.isfinite(breakdown.total):
                raise TrainingDivergedError(
                    f"non-finite loss {breakdown.total} at epoch {epoch}, batch {i // batch_size}"
                )
            _clip_gradients(grads, clip_norm)
            for key, g in grads.items():
                params[key] -= step_lr * g
            n = int((ts >= 0).sum())
            sums += np.array(breakdown) * n
            n_frames += n
        train_bd = LossBreakdown(*(sums / n_frames))
        valid_bd = _eval_loss(params, cfg, valid_windows)
        if not math.isfinite(valid_bd.total):
            raise TrainingDivergedError(f"non-finite validation loss at epoch {epoch}")
        history.append(epoch_row(epoch, train_bd, valid_bd))
        if valid_bd.total < best[0]:
            best = (valid_bd.total, clone_params(params))
        if log:
            log(
                f"epoch {epoch} train_loss={train_bd.total:.4f} "
                f"valid_loss={valid_bd.total:.4f} valid_vap={valid_bd.vap:.4f}"
            )
    return best[1], history


def eval_per_snr(
    params,
    test_items,
    cfg: ModelConfig,
    bank: NoiseBank,
    snr_list=(math.inf, 20.0, 15.0, 10.0, 5.0),
    seed: int = 0,
    bin_cfg: BinConfig = BinConfig(),
):
    """Projection-task loss at each SNR level, noise on the user channel only.

    Noise draws are deterministic per (seed, SNR row, item). Returns the loss
    table {snr: L_vap} and the condition provenance rows.
    """
    test_items = list(test_items)
    if not test_items:
        raise EmptyDatasetError("empty test set")
    table = {}
    provenance = []
    for row_idx, snr in enumerate(snr_list):
        windows = []
        for item_idx, (item_id, dialogue) in enumerate(test_items):
            rng = np.random.default_rng(
                np.random.SeedSequence(entropy=seed, spawn_key=(row_idx, item_idx))
            )
            if math.isinf(snr):
                mixed = dialogue
                cond = Condition("none", math.inf)
            else:
                name = bank.names[int(rng.integers(len(bank)))]
                cond = Condition(name, float(snr))
                user, _ = apply_condition(dialogue.channel_a, cond, bank, rng)
                mixed = StereoDialogue(user, dialogue.channel_b, dialogue.vad_a, dialogue.vad_b)
            provenance.append((item_id, cond, seed))
            fb = dialogue_frames(mixed, bin_cfg)
            windows.extend(slice_windows(fb, cfg.context_frames, cfg.context_frames, dedupe=True))
        table[snr] = _eval_loss(params, cfg, windows).vap
    return table, provenance


# ---------------------------------------------------------------------------
# checkpoint and history files


def save_checkpoint(path, params: dict, cfg: ModelConfig) -> None:
    meta = json.dumps({"version": CHECKPOINT_VERSION, "config": cfg.to_json_dict()})
    np.savez(path, __meta__=np.array(meta), **params)


def load_checkpoint(path) -> tuple[dict, ModelConfig]:
    with np.load(path) as z:
        if "__meta__" not in z:
            raise ValueError(f"{path}: not a model checkpoint")
        meta = json.loads(str(z["__meta__"].item()))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {meta.get('version')}")
        params = {k: z[k] for k in z.files if k != "__meta__"}
    return params, ModelConfig.from_json_dict(meta["config"])


def write_history_csv(path, history) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=HISTORY_COLUMNS)
        writer.writeheader()
        for row in history:
            writer.writerow(row)


def read_history_csv(path) -> list:
    with open(path, newline="") as fh:
        rows = []
        for row in csv.DictReader(fh):
            rows.append(
                {k: (int(v) if k == "epoch" else float(v)) for k, v in row.items()}
            )
        return rows
