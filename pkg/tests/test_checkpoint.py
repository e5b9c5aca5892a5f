import numpy as np
import pytest

from nfmlab.checkpoint import (
    CheckpointError,
    load_checkpoint,
    load_student,
    load_teacher,
    save_checkpoint,
    save_student,
    save_teacher,
)
from nfmlab.couplings import SemiDiscreteOT
from nfmlab.datasets import LabeledBatch
from nfmlab.rand import stream
from nfmlab.student import VelocityNet
from nfmlab.teacher import FlowTeacher


def _sections(rng):
    return {
        "params": {"w": rng.standard_normal((3, 4)), "b": rng.standard_normal(2)},
        "meta": {"n": np.float64(2.0)},
    }


def test_round_trip_bit_identical(tmp_path):
    sections = _sections(stream(0))
    path = tmp_path / "a.ckpt"
    save_checkpoint(path, sections)
    loaded = load_checkpoint(path)
    assert set(loaded) == set(sections)
    for sec in sections:
        for name, arr in sections[sec].items():
            assert np.array_equal(loaded[sec][name], np.asarray(arr))


def test_save_load_save_byte_identical(tmp_path):
    sections = _sections(stream(1))
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(p1, sections)
    save_checkpoint(p2, load_checkpoint(p1))
    assert p1.read_bytes() == p2.read_bytes()


def test_header_and_crc_guards(tmp_path):
    path = tmp_path / "a.ckpt"
    save_checkpoint(path, _sections(stream(2)))
    blob = bytearray(path.read_bytes())
    # flip one payload byte
    corrupt = tmp_path / "bad.ckpt"
    blob[blob.find(b"\n\n") + 10] ^= 0xFF
    corrupt.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError):
        load_checkpoint(corrupt)

    nomagic = tmp_path / "nomagic.ckpt"
    nomagic.write_bytes(b"WRONG v9\nx y scalar 0\n\n" + b"\x00" * 12)
    with pytest.raises(CheckpointError):
        load_checkpoint(nomagic)

    truncated = tmp_path / "trunc.ckpt"
    truncated.write_bytes(path.read_bytes()[:40])
    with pytest.raises(CheckpointError):
        load_checkpoint(truncated)


def test_manifest_offsets_ascending(tmp_path):
    path = tmp_path / "a.ckpt"
    save_checkpoint(path, _sections(stream(3)))
    header = path.read_bytes().split(b"\n\n")[0].decode().splitlines()[1:]
    offsets = [int(line.split()[-1]) for line in header]
    assert offsets == sorted(offsets)
    assert len(set(offsets)) == len(offsets)


def test_teacher_bridge(tmp_path):
    teacher = FlowTeacher(n=2, k=3, blocks=4, width=16, embed_dim=8, eta=0.07, rng=stream(4))
    teacher.sigma_f = np.array([1.1, 0.9])
    path = tmp_path / "teacher.ckpt"
    save_teacher(path, teacher)
    back = load_teacher(path)
    assert (back.n, back.k, back.blocks, back.width, back.embed_dim) == (2, 3, 4, 16, 8)
    assert back.eta == teacher.eta and back.clamp == teacher.clamp
    assert np.array_equal(back.sigma_f, teacher.sigma_f)
    for name in teacher.params:
        assert np.array_equal(back.params[name], teacher.params[name])


def test_student_bridge_with_sd_potentials(tmp_path):
    net = VelocityNet(n=2, k=3, hidden=(8, 8), time_dim=8, embed_dim=4, rng=stream(5))
    support = LabeledBatch(x=stream(6).standard_normal((32, 2)), c=np.zeros(32, dtype=int))
    mode = SemiDiscreteOT(support=support, potentials=stream(7).standard_normal(32))
    path = tmp_path / "student.ckpt"
    save_student(path, net, "sdot", label_cost=5.0, sd_mode=mode)
    back, coupling = load_student(path)
    assert coupling == "sdot"
    assert back.hidden == (8, 8)
    for name in net.params:
        assert np.array_equal(back.params[name], net.params[name])
    sections = load_checkpoint(path)
    assert np.array_equal(sections["sd_potentials"]["g"], mode.potentials)
    assert np.array_equal(sections["sd_potentials"]["support_x"], support.x)


def test_kind_mismatch_rejected(tmp_path):
    teacher = FlowTeacher(n=2, k=1, rng=stream(8))
    path = tmp_path / "t.ckpt"
    save_teacher(path, teacher)
    with pytest.raises(CheckpointError):
        load_student(path)
    net = VelocityNet(n=2, k=1, hidden=(8,), rng=stream(9))
    path2 = tmp_path / "s.ckpt"
    save_student(path2, net, "fm")
    with pytest.raises(CheckpointError):
        load_teacher(path2)
