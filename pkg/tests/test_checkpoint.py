import json
import zipfile

import numpy as np
import pytest

from medie import checkpoint
from medie.checkpoint import CheckpointError


def sample_models():
    rng = np.random.default_rng(0)
    return {"crf": ({"tags": ["O", "B-x"], "note": "胸痛"},
                    {"weights": rng.normal(size=(3, 2)), "ids": np.arange(3, dtype=np.int64)})}


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "m.ckpt"
        checkpoint.save(path, "crf", sample_models())
        kind, models = checkpoint.load(path)
        assert kind == "crf"
        meta, arrays = models["crf"]
        assert meta == sample_models()["crf"][0]
        np.testing.assert_array_equal(arrays["weights"], sample_models()["crf"][1]["weights"])
        assert arrays["ids"].dtype == np.int64

    def test_bytes_are_deterministic(self, tmp_path):
        checkpoint.save(tmp_path / "a", "crf", sample_models())
        checkpoint.save(tmp_path / "b", "crf", sample_models())
        assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()

    def test_no_temp_file_left(self, tmp_path):
        checkpoint.save(tmp_path / "m.ckpt", "crf", sample_models())
        assert [p.name for p in tmp_path.iterdir()] == ["m.ckpt"]

    def test_not_a_zip(self, tmp_path):
        (tmp_path / "junk").write_text("hello")
        with pytest.raises(CheckpointError):
            checkpoint.load(tmp_path / "junk")

    @pytest.mark.parametrize("meta", [{"format": "other", "version": 1},
                                      {"format": checkpoint.FORMAT, "version": 99}])
    def test_foreign_header(self, tmp_path, meta):
        path = tmp_path / "m.ckpt"
        with zipfile.ZipFile(path, "w") as zf:
            zf.writestr("meta.json", json.dumps(dict(meta, kind="crf", models={})))
        with pytest.raises(CheckpointError):
            checkpoint.load(path)

    def test_missing_meta(self, tmp_path):
        path = tmp_path / "m.ckpt"
        with zipfile.ZipFile(path, "w") as zf:
            zf.writestr("x.npy", b"")
        with pytest.raises(CheckpointError):
            checkpoint.load(path)
