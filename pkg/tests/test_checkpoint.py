import numpy as np
import pytest
import torch

from dino_forge import checkpoint as ck
from dino_forge.model import build, preset

CFG = preset("vit-mu", projector_hidden=32, projector_out=16, prototypes=24, num_classes=4)


def test_roundtrip_bit_exact(tmp_path):
    net = build(CFG, 1)
    c = ck.Checkpoint(CFG, meta={"epoch": "3", "step": "42", "mode": "pretrain"})
    c.add_module("student", net)
    c.arrays["center"] = np.linspace(-1, 1, 24).astype("<f4")
    c.arrays["scalar"] = np.array(2.5, dtype="<f4")
    ck.save(c, tmp_path / "a.ckpt")
    back = ck.load(tmp_path / "a.ckpt")
    assert back.config == CFG
    assert back.epoch == 3 and back.step == 42
    assert back.arrays.keys() == c.arrays.keys()
    for k in c.arrays:
        assert back.arrays[k].tobytes() == c.arrays[k].tobytes()
    other = build(CFG, 2)
    back.load_module("student", other)
    for p, q in zip(net.state_dict().values(), other.state_dict().values()):
        assert torch.equal(p, q)
    ck.save(back, tmp_path / "b.ckpt")
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


def test_header_is_text(tmp_path):
    c = ck.Checkpoint(CFG, meta={"epoch": "0"})
    c.arrays["x"] = np.zeros((2, 3), dtype="<f4")
    ck.save(c, tmp_path / "h.ckpt")
    head = (tmp_path / "h.ckpt").read_bytes().split(b"\nend\n")[0].decode()
    assert head.splitlines()[0] == "DINO-FORGE-CHECKPOINT"
    assert "version=1" in head and "array x 2,3" in head and "config.embed_dim=64" in head


def test_corrupt_files_rejected(tmp_path):
    c = ck.Checkpoint(CFG)
    c.arrays["x"] = np.ones(10, dtype="<f4")
    ck.save(c, tmp_path / "ok.ckpt")
    data = (tmp_path / "ok.ckpt").read_bytes()
    (tmp_path / "trunc.ckpt").write_bytes(data[:-4])
    with pytest.raises(ck.CheckpointError):
        ck.load(tmp_path / "trunc.ckpt")
    (tmp_path / "extra.ckpt").write_bytes(data + b"\0")
    with pytest.raises(ck.CheckpointError):
        ck.load(tmp_path / "extra.ckpt")
    (tmp_path / "magic.ckpt").write_bytes(b"NOPE\nend\n")
    with pytest.raises(ck.CheckpointError):
        ck.load(tmp_path / "magic.ckpt")
    (tmp_path / "ver.ckpt").write_bytes(data.replace(b"version=1", b"version=9", 1))
    with pytest.raises(ck.CheckpointError):
        ck.load(tmp_path / "ver.ckpt")


def test_load_module_shape_mismatch(tmp_path):
    c = ck.Checkpoint(CFG)
    c.add_module("m", build(CFG, 0, "classifier"))
    other = build(CFG.replace(num_classes=5), 0, "classifier")
    with pytest.raises(ck.CheckpointError):
        c.load_module("m", other)
    with pytest.raises(ck.CheckpointError):
        c.load_module("missing", other)


def test_meta_must_be_single_line(tmp_path):
    with pytest.raises(ck.CheckpointError):
        ck.save(ck.Checkpoint(CFG, meta={"note": "a\nb"}), tmp_path / "x.ckpt")
