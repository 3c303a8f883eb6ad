"""On-disk dialogue corpora: WAV pairs, label files, and a split manifest."""

from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path

import numpy as np

from .audio import LABEL_FRAME_RATE, StereoDialogue, VadTrack, load_wav, save_wav
from .noise import split_dataset
from .simulate import DialogueScript, ScriptedDialogue, ScriptedTurn, generate_scripted_dialogue

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1


class DatasetError(ValueError):
    pass


def _segments(frames: np.ndarray) -> list:
    """Run-length encode a boolean track into [start, end) frame pairs."""
    out = []
    start = None
    for i, v in enumerate(frames):
        if v and start is None:
            start = i
        elif not v and start is not None:
            out.append([start, i])
            start = None
    if start is not None:
        out.append([start, len(frames)])
    return out


def _frames_from_segments(segments, n_frames: int) -> np.ndarray:
    frames = np.zeros(n_frames, dtype=bool)
    for start, end in segments:
        frames[start:end] = True
    return frames


def write_dataset(out_dir, n_items: int, script: DialogueScript, seed: int) -> dict:
    """Generate n_items dialogues, write WAVs + labels, and split them 8:1:1.

    The manifest is byte-stable for a fixed seed and script.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ids = []
    for i in range(n_items):
        item_seed = int(np.random.SeedSequence(entropy=seed, spawn_key=(i,)).generate_state(1)[0])
        item_id = f"dlg{i:04d}"
        sd = generate_scripted_dialogue(replace(script, seed=item_seed))
        save_wav(sd.stereo.channel_a, out / f"{item_id}_user.wav")
        save_wav(sd.stereo.channel_b, out / f"{item_id}_robot.wav")
        labels = {
            "frame_rate": LABEL_FRAME_RATE,
            "n_frames": len(sd.stereo.vad_a),
            "segments_a": _segments(sd.stereo.vad_a.frames),
            "segments_b": _segments(sd.stereo.vad_b.frames),
            "turns": [
                {
                    "user_start_s": t.user_start_s,
                    "user_end_s": t.user_end_s,
                    "robot_start_s": t.robot_start_s,
                    "robot_end_s": t.robot_end_s,
                    "has_final_cue": t.has_final_cue,
                    "has_pause": t.has_pause,
                    "has_continuation": t.has_continuation,
                }
                for t in sd.turns
            ],
            "seed": item_seed,
        }
        with open(out / f"{item_id}_labels.json", "w") as fh:
            json.dump(labels, fh, sort_keys=True)
        ids.append(item_id)
    train, valid, test = split_dataset(ids, seed)
    manifest = {
        "version": MANIFEST_VERSION,
        "seed": seed,
        "script": script.to_json_dict(),
        "n_items": n_items,
        "splits": {"train": train, "valid": valid, "test": test},
    }
    with open(out / MANIFEST_NAME, "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
    return manifest


def load_item(data_dir, item_id: str) -> ScriptedDialogue:
    base = Path(data_dir)
    user = load_wav(base / f"{item_id}_user.wav")
    robot = load_wav(base / f"{item_id}_robot.wav")
    with open(base / f"{item_id}_labels.json") as fh:
        labels = json.load(fh)
    n_frames = labels["n_frames"]
    stereo = StereoDialogue(
        channel_a=user,
        channel_b=robot,
        vad_a=VadTrack(_frames_from_segments(labels["segments_a"], n_frames)),
        vad_b=VadTrack(_frames_from_segments(labels["segments_b"], n_frames)),
    )
    turns = tuple(ScriptedTurn(**t) for t in labels["turns"])
    return ScriptedDialogue(stereo=stereo, turns=turns, seed=labels["seed"])


def load_dataset(data_dir) -> dict:
    """Load a written dataset as {split: [(item_id, StereoDialogue), ...]}."""
    base = Path(data_dir)
    manifest_path = base / MANIFEST_NAME
    if not manifest_path.exists():
        raise DatasetError(f"no {MANIFEST_NAME} in {base}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    if manifest.get("version") != MANIFEST_VERSION:
        raise DatasetError(f"unsupported manifest version {manifest.get('version')}")
    splits = {}
    for split, ids in manifest["splits"].items():
        splits[split] = [(item_id, load_item(base, item_id).stereo) for item_id in ids]
    return splits
