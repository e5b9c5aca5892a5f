import csv
import os
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from nfmlab.checkpoint import load_teacher
from nfmlab.cli import main
from nfmlab.teacher import nf_forward_batch, nf_inverse

TINY = """
dataset.name = gauss_mix
dataset.n = 2
dataset.k = 4
dataset.scale = 0.25
teacher.steps = 60
teacher.batch = 64
teacher.sigma_samples = 1500
student.widths = 16,16
student.steps = 40
student.batch = 32
sd.subset = 256
sd.iterations = 100
seed = 11
"""


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "cfg.txt"
    cfg.write_text(TINY + f"out = {root / 'run'}\n")
    assert main(["train-teacher", "--config", str(cfg)]) == 0
    return root, cfg


def test_teacher_checkpoint_loads_and_inverts(workdir):
    root, _ = workdir
    teacher = load_teacher(root / "run" / "teacher.ckpt")
    assert teacher.sigma_f is not None
    rng = np.random.default_rng(0)
    x = rng.standard_normal((100, 2))
    z, _ = nf_forward_batch(teacher, x, np.zeros(100, dtype=int))
    assert np.max(np.abs(nf_inverse(teacher, z, np.zeros(100, dtype=int)) - x)) < 1e-8
    assert (root / "run" / "teacher_loss.csv").exists()


def test_eta_flag_supersedes_config(workdir, tmp_path):
    root, cfg = workdir
    out = tmp_path / "eta_run"
    assert main(["train-teacher", "--config", str(cfg), "--eta", "0.2", "--out", str(out)]) == 0
    assert load_teacher(out / "teacher.ckpt").eta == 0.2


def test_distill_all_couplings(workdir):
    root, cfg = workdir
    for coupling in ("fm", "ot", "sdot"):
        assert main(["distill", "--config", str(cfg), "--coupling", coupling]) == 0
        assert (root / "run" / f"student_{coupling}.ckpt").exists()
        assert (root / "run" / f"student_{coupling}_loss.csv").exists()
    teacher = str(root / "run" / "teacher.ckpt")
    assert main(["distill", "--config", str(cfg), "--coupling", "nfm", "--teacher", teacher]) == 0
    with open(root / "run" / "student_nfm_loss.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["step", "loss", "mode"]
    assert len(rows) == 41 and rows[1][2] == "nfm"


def test_distill_nfm_requires_teacher(workdir):
    _, cfg = workdir
    assert main(["distill", "--config", str(cfg), "--coupling", "nfm"]) == 1


def test_sample_nfe_log_and_class_flag(workdir, capsys):
    root, cfg = workdir
    ckpt = str(root / "run" / "student_fm.ckpt")
    rc = main(["sample", ckpt, "--config", str(cfg), "--solver", "heun", "--steps", "16",
               "--count", "8", "--class", "3", "--trajectories"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "NFE=31" in out
    with open(root / "run" / "samples.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x0", "x1", "label"]
    assert all(r[2] == "3" for r in rows[1:])
    assert (root / "run" / "trajectories.csv").exists()


def test_sample_determinism(workdir, tmp_path):
    root, cfg = workdir
    ckpt = str(root / "run" / "student_fm.ckpt")
    outs = []
    for name in ("s1", "s2"):
        out = tmp_path / name
        assert main(["sample", ckpt, "--config", str(cfg), "--count", "1", "--seed", "7",
                     "--out", str(out)]) == 0
        outs.append((out / "samples.csv").read_bytes())
    assert outs[0] == outs[1]


def test_sample_invalid_solver_combo(workdir):
    root, cfg = workdir
    ckpt = str(root / "run" / "student_fm.ckpt")
    assert main(["sample", ckpt, "--config", str(cfg), "--solver", "heun", "--steps", "1"]) == 1


def test_eval_rows_and_usage_errors(workdir, tmp_path):
    root, cfg = workdir
    ckpt = str(root / "run" / "student_fm.ckpt")
    out = tmp_path / "eval"
    rc = main(["eval", ckpt, "--config", str(cfg), "--nfe", "31,15,7", "--solver", "heun",
               "--count", "64", "--kappa-count", "32", "--out", str(out)])
    assert rc == 0
    with open(out / "eval.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][0] == "nfe"
    assert [r[0] for r in rows[1:]] == ["31", "15", "7"]
    assert main(["eval", ckpt, "--config", str(cfg), "--nfe", " ", "--out", str(out)]) == 1
    assert main(["eval", ckpt, "--config", str(cfg), "--nfe", "4", "--solver", "heun",
                 "--out", str(out)]) == 1  # heun cannot hit even NFE


def test_ztable_single_row(workdir, tmp_path):
    root, cfg = workdir
    out = tmp_path / "zt"
    teacher = str(root / "run" / "teacher.ckpt")
    assert main(["ztable", "--config", str(cfg), "--teacher", teacher, "--pairs", "500",
                 "--out", str(out)]) == 0
    with open(out / "ztable.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 2
    assert len(rows[1]) == 7  # eta + six distance entries
    rc = main(["ztable", "--config", str(cfg), "--teacher", "/nope/missing.ckpt", "--out", str(out)])
    assert rc == 1


def test_svg_outputs_are_valid_xml(workdir):
    root, _ = workdir
    for name in ("teacher_samples.svg", "teacher_loss.svg"):
        tree = ET.parse(root / "run" / name)
        svg = tree.getroot()
        assert svg.tag.endswith("svg")
        assert svg.attrib["width"] == "800" and svg.attrib["height"] == "800"


def test_usage_exit_codes():
    assert main(["no-such-command"]) == 1
    assert main(["distill", "--config", "/nope/none.txt"]) == 1


def test_export_data(workdir, tmp_path):
    _, cfg = workdir
    out = tmp_path / "exp"
    assert main(["export-data", "--config", str(cfg), "--count", "32", "--out", str(out)]) == 0
    with open(out / "dataset.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x0", "x1", "label"] and len(rows) == 33
