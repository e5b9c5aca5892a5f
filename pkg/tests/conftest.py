import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from nfmlab.datasets import default_spec
from nfmlab.rand import stream
from nfmlab.teacher import FlowTeacher, estimate_sigma_f, train_teacher

LAB_SEED = 2024
LAB_TEACHER_STEPS = 3000
LAB_TEACHER_BATCH = 192


@pytest.fixture(scope="session")
def lab_spec():
    return default_spec()


@pytest.fixture(scope="session")
def lab_teacher(lab_spec):
    """One well-trained teacher on the default dataset, shared session-wide."""
    teacher = FlowTeacher(n=lab_spec.n, k=lab_spec.k, eta=0.05, rng=stream(LAB_SEED, 0))
    teacher.loss_history = train_teacher(
        teacher, lab_spec, LAB_TEACHER_STEPS, LAB_TEACHER_BATCH, stream(LAB_SEED, 1)
    )
    estimate_sigma_f(teacher, lab_spec, 8192, stream(LAB_SEED, 2))
    return teacher
