import struct

import numpy as np
import pytest

from frnet import checkpoint
from frnet.checkpoint import CheckpointError
from frnet.models import FMFRNet, ModelSpec


def model(variant=13, seed=0):
    spec = ModelSpec(num_features=40, num_fields=5, embed_dim=6, attn_dim=4, cie_hidden=(7, 3),
                     variant=variant)
    m = FMFRNet.initialize(spec, seed=seed)
    rng = np.random.default_rng(seed)
    for p in m.parameters():
        p.data[...] = rng.normal(size=p.shape)
    return m


def test_round_trip_is_bit_exact(tmp_path):
    tensors = {"a": np.arange(6, dtype=np.float32).reshape(2, 3), "scalar": np.float32(1.5),
               "vec": np.array([np.pi, -0.0, 1e-30], dtype=np.float32), "empty": np.zeros((0, 4), np.float32)}
    checkpoint.save(tmp_path / "c.frn", tensors, {"k": "v", "other": "a=b"})
    back, cfg = checkpoint.load(tmp_path / "c.frn")
    assert list(back) == list(tensors)
    for k in tensors:
        assert back[k].shape == np.shape(tensors[k])
        assert back[k].tobytes() == np.asarray(tensors[k], dtype="<f4").tobytes()
    assert cfg == {"k": "v", "other": "a=b"}


def test_layout_header(tmp_path):
    checkpoint.save(tmp_path / "c.frn", {"w": np.ones((2, 2), np.float32)})
    raw = (tmp_path / "c.frn").read_bytes()
    assert raw[:4] == b"FRN1"
    assert struct.unpack("<II", raw[4:12]) == (1, 1)
    assert struct.unpack("<I", raw[12:16]) == (1,) and raw[16:17] == b"w"


def test_bad_magic(tmp_path):
    (tmp_path / "c.frn").write_bytes(b"NOPE" + b"\0" * 12)
    with pytest.raises(CheckpointError, match="FRN1"):
        checkpoint.load(tmp_path / "c.frn")


def test_bad_version(tmp_path):
    checkpoint.save(tmp_path / "c.frn", {})
    raw = bytearray((tmp_path / "c.frn").read_bytes())
    raw[4:8] = struct.pack("<I", 2)
    (tmp_path / "c.frn").write_bytes(bytes(raw))
    with pytest.raises(CheckpointError, match="version 2"):
        checkpoint.load(tmp_path / "c.frn")


def test_truncated_and_trailing(tmp_path):
    checkpoint.save(tmp_path / "c.frn", {"w": np.ones(3, np.float32)})
    raw = (tmp_path / "c.frn").read_bytes()
    (tmp_path / "t.frn").write_bytes(raw[:-6])
    with pytest.raises(CheckpointError, match="truncated"):
        checkpoint.load(tmp_path / "t.frn")
    (tmp_path / "x.frn").write_bytes(raw + b"\0")
    with pytest.raises(CheckpointError, match="trailing"):
        checkpoint.load(tmp_path / "x.frn")


@pytest.mark.parametrize("variant", [1, 4, 12, 13])
def test_model_round_trip_predicts_identically(tmp_path, variant):
    m = model(variant)
    checkpoint.save_model(tmp_path / "m.frn", m, {"lr": "0.001"})
    m2, train_cfg = checkpoint.load_model(tmp_path / "m.frn")
    assert train_cfg == {"lr": "0.001"}
    assert m2.spec == m.spec
    for k, p in m.params.items():
        assert m2.params[k].data.tobytes() == p.data.tobytes()
    feats = np.random.default_rng(0).integers(0, 40, size=(1000, 5))
    assert np.array_equal(m.predict(feats), m2.predict(feats))


def test_missing_model_config(tmp_path):
    checkpoint.save(tmp_path / "c.frn", {"embed": np.ones((2, 2), np.float32)})
    with pytest.raises(CheckpointError, match="config"):
        checkpoint.load_model(tmp_path / "c.frn")
