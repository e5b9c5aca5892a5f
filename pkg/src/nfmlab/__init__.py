"""nfmlab: a desk-scale lab for coupling-driven flow matching.

Train an invertible normalizing-flow teacher by maximum likelihood,
distill its data-to-Gaussian coupling into a flow-matching student, and
compare against independent and optimal-transport couplings with exact,
analytically checkable diagnostics.
"""

from .autodiff import NumericError, ShapeError, Tape, Tensor, backward, finite_difference_gradient
from .config import RunConfig, load_config, parse_config
from .couplings import (
    CouplingMode,
    Independent,
    MinibatchOT,
    NFTeacher,
    PairBatch,
    SemiDiscreteOT,
    draw_pairs,
    hungarian,
)
from .datasets import NULL_LABEL, DatasetSpec, LabeledBatch, default_spec, sample_dataset, true_log_density
from .metrics import (
    EvalReport,
    ZTableRow,
    curvature,
    golden_section_search,
    guidance_search,
    pair_distance,
    teacher_nll,
    wasserstein2,
    z_table,
)
from .optim import AdamState, adam_step
from .rand import stream
from .sampling import Schedule, SolverConfig, Trajectory, euler_solve, guided_velocity, heun_solve, nfe_count, sample_set
from .student import TimeSampler, VelocityNet, fm_loss, interpolate, max_noise_equivalent, train_student
from .teacher import (
    FlowTeacher,
    encode_coupling,
    estimate_sigma_f,
    nf_forward,
    nf_inverse,
    nf_loss,
    train_teacher,
)

__version__ = "0.1.0"
