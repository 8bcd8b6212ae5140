import json

import numpy as np
import pytest

from cadence.errors import ModelFileError
from cadence.serialize import load_model, save_model, sidecar_path


def test_roundtrip(tmp_path):
    arrays = {"a": np.arange(6.0).reshape(2, 3), "i": np.array([1, -2, 3]), "s": np.array(2.5)}
    save_model(tmp_path / "m.bin", "toy", arrays, {"k": 1})
    kind, back, meta = load_model(tmp_path / "m.bin", "toy")
    assert kind == "toy" and meta == {"k": 1}
    for k, v in arrays.items():
        np.testing.assert_array_equal(back[k], v)
        assert back[k].shape == v.shape
    assert back["i"].dtype.kind == "i"
    assert (tmp_path / "m.bin").read_bytes()[:4] == b"CADM"


def test_sidecar_contents(tmp_path):
    save_model(tmp_path / "m.bin", "toy", {"a": np.zeros(3)})
    doc = json.loads(sidecar_path(tmp_path / "m.bin").read_text())
    assert doc["kind"] == "toy" and doc["format_version"] == 1 and len(doc["sha256"]) == 64


def test_checksum_mismatch(tmp_path):
    save_model(tmp_path / "m.bin", "toy", {"a": np.zeros(3)})
    blob = bytearray((tmp_path / "m.bin").read_bytes())
    blob[-1] ^= 0xFF
    (tmp_path / "m.bin").write_bytes(bytes(blob))
    with pytest.raises(ModelFileError, match="checksum"):
        load_model(tmp_path / "m.bin")


def test_wrong_kind_and_missing(tmp_path):
    save_model(tmp_path / "m.bin", "toy", {"a": np.zeros(3)})
    with pytest.raises(ModelFileError):
        load_model(tmp_path / "m.bin", "other")
    with pytest.raises(ModelFileError):
        load_model(tmp_path / "nope.bin")


def test_bad_magic(tmp_path):
    save_model(tmp_path / "m.bin", "toy", {"a": np.zeros(3)})
    blob = bytearray((tmp_path / "m.bin").read_bytes())
    blob[:4] = b"XXXX"
    (tmp_path / "m.bin").write_bytes(bytes(blob))
    with pytest.raises(ModelFileError):
        load_model(tmp_path / "m.bin")
