import json

import numpy as np
import pytest

from vapturn.datasets import DatasetError, load_dataset, load_item, write_dataset
from vapturn.simulate import DialogueScript, generate_scripted_dialogue
from vapturn.stats import SampleDist


@pytest.fixture(scope="module")
def script():
    return DialogueScript(n_turns=1, user_reaction_s=SampleDist("normal", 1.0, 0.2), tail_s=2.2)


@pytest.fixture(scope="module")
def written(tmp_path_factory, script):
    out = tmp_path_factory.mktemp("corpus")
    manifest = write_dataset(out, 10, script, seed=4)
    return out, manifest


class TestWriteDataset:
    def test_split_sizes(self, written):
        _, manifest = written
        sizes = {k: len(v) for k, v in manifest["splits"].items()}
        assert sizes == {"train": 8, "valid": 1, "test": 1}

    def test_manifest_byte_identical_for_same_seed(self, tmp_path, script):
        a = tmp_path / "a"
        b = tmp_path / "b"
        write_dataset(a, 10, script, seed=9)
        write_dataset(b, 10, script, seed=9)
        assert (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()
        assert (a / "dlg0003_user.wav").read_bytes() == (b / "dlg0003_user.wav").read_bytes()

    def test_items_reload_as_valid_dialogues(self, written, script):
        out, manifest = written
        item_id = manifest["splits"]["train"][0]
        loaded = load_item(out, item_id)
        assert loaded.stereo.duration_s > 0
        assert len(loaded.turns) == script.n_turns
        assert len(loaded.stereo.vad_a) == len(loaded.stereo.vad_b)

    def test_reload_matches_generation(self, written):
        out, manifest = written
        item_id = manifest["splits"]["test"][0]
        loaded = load_item(out, item_id)
        with open(out / f"{item_id}_labels.json") as fh:
            labels = json.load(fh)
        regen = generate_scripted_dialogue(
            DialogueScript.from_json_dict({**manifest["script"], "seed": labels["seed"]})
        )
        # waveforms go through 16-bit quantization on disk
        assert np.max(np.abs(loaded.stereo.channel_a.samples - regen.stereo.channel_a.samples)) <= 1 / 32768
        assert np.array_equal(loaded.stereo.vad_a.frames, regen.stereo.vad_a.frames)
        assert loaded.turns == regen.turns

    def test_load_dataset_splits(self, written):
        out, _ = written
        splits = load_dataset(out)
        assert set(splits) == {"train", "valid", "test"}
        assert len(splits["train"]) == 8
        item_id, stereo = splits["train"][0]
        assert stereo.duration_s > 0

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DatasetError):
            load_dataset(tmp_path)
