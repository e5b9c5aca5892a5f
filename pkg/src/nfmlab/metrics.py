"""Quantitative diagnostics: z-space distance tables, trajectory curvature,
exact 2-Wasserstein sample quality, teacher NLL, and the guidance search.

All distances are the scaled Euclidean metric d(a,b) = ||a-b||/sqrt(2n),
under which two independent standard-normal vectors sit at distance 1.
Table cells aggregate pairs by root-mean-square so the analytic identities
(unit Gaussian shell, d_x = eta) hold exactly at any dimension.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .autodiff import NumericError
from .datasets import DatasetSpec, sample_dataset
from .couplings import hungarian
from .sampling import SolverConfig, Trajectory, sample_set
from .teacher import LOG_2PI, FlowTeacher, nf_forward_batch

__all__ = [
    "ZTableRow",
    "EvalReport",
    "pair_distance",
    "z_table",
    "curvature",
    "wasserstein2",
    "golden_section_bracket",
    "golden_section_search",
    "round_to_two_significant",
    "guidance_search",
    "teacher_nll",
]

INVPHI = (np.sqrt(5.0) - 1.0) / 2.0  # 0.618..., golden-section contraction rate


@dataclass
class ZTableRow:
    """RMS distances per regime: (x1!=x2, e1!=e2), (x1=x2, e1!=e2), (x1!=x2, e1=e2)."""

    eta: float
    d_x: tuple[float, float, float]
    d_z: tuple[float, float, float]

    def __post_init__(self):
        if any(v < 0 for v in self.d_x) or any(v < 0 for v in self.d_z):
            raise ValueError("distances must be nonnegative")


@dataclass
class EvalReport:
    nfe: int
    solver: str
    guidance: float
    w2: float
    curvature: float
    nll_per_dim: float | None = None

    def __post_init__(self):
        for v in (self.guidance, self.w2, self.curvature):
            if not np.isfinite(v):
                raise ValueError("EvalReport fields must be finite")


def pair_distance(a, b) -> float:
    """||a - b||_2 / sqrt(2n)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"pair_distance: expected equal-length vectors, got {a.shape} and {b.shape}")
    n = a.shape[0]
    return float(np.linalg.norm(a - b) / np.sqrt(2.0 * n))


def _rms_distance(a: np.ndarray, b: np.ndarray) -> float:
    """sqrt(mean ||a_i - b_i||^2 / (2n)) over row pairs."""
    n = a.shape[1]
    return float(np.sqrt(np.mean(np.sum((a - b) ** 2, axis=1)) / (2.0 * n)))


def z_table(
    teachers: Mapping[float, FlowTeacher],
    spec: DatasetSpec,
    eta_list,
    pairs_per_cell: int,
    rng: np.random.Generator,
) -> list[ZTableRow]:
    """Distances before/after the flow for the three pairing regimes.

    Teacher outputs enter unnormalized (no sigma_f division): the table
    probes how close the raw codes are to the unit Gaussian shell.
    """
    rows = []
    for eta in eta_list:
        if eta not in teachers:
            raise KeyError(f"no teacher supplied for eta={eta}")
        teacher = teachers[eta]
        if teacher.sigma_f is None:
            raise ValueError(f"teacher for eta={eta} looks untrained (sigma_f unset)")
        if abs(teacher.eta - eta) > 1e-12:
            raise ValueError(f"teacher trained at eta={teacher.eta}, table row wants {eta}")
        p = pairs_per_cell
        b1 = sample_dataset(spec, p, rng)
        b2 = sample_dataset(spec, p, rng)
        e1 = rng.standard_normal(b1.x.shape)
        e2 = rng.standard_normal(b1.x.shape)
        e_shared = rng.standard_normal(b1.x.shape)

        def dcell(xa, ca, ea, xb, cb, eb):
            pa = xa + eta * ea
            pb = xb + eta * eb
            za, _ = nf_forward_batch(teacher, pa, ca)
            zb, _ = nf_forward_batch(teacher, pb, cb)
            return _rms_distance(pa, pb), _rms_distance(za, zb)

        dx1, dz1 = dcell(b1.x, b1.c, e1, b2.x, b2.c, e2)
        dx2, dz2 = dcell(b1.x, b1.c, e1, b1.x, b1.c, e2)
        dx3, dz3 = dcell(b1.x, b1.c, e_shared, b2.x, b2.c, e_shared)
        rows.append(ZTableRow(eta=eta, d_x=(dx1, dx2, dx3), d_z=(dz1, dz2, dz3)))
    return rows


def curvature(trajectories: list[Trajectory]) -> float:
    """Mean squared deviation of segment velocities from the total displacement.

    kappa = mean over trajectories and segments of ||x_first - x_last - v||^2 / n;
    zero exactly when every segment velocity equals the straight-line flow.
    """
    if not trajectories:
        raise ValueError("curvature: empty trajectory list")
    total = 0.0
    count = 0
    for traj in trajectories:
        if traj.velocities.shape[0] < 1:
            raise ValueError("curvature: trajectory has no recorded velocities")
        n = traj.states.shape[1]
        disp = traj.states[0] - traj.states[-1]
        total += float(np.sum((disp - traj.velocities) ** 2)) / n
        count += traj.velocities.shape[0]
    return total / count


def wasserstein2(samples: np.ndarray, reference: np.ndarray) -> float:
    """Exact 2-Wasserstein between equal-size point sets via optimal assignment."""
    samples = np.asarray(samples, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if samples.shape != reference.shape:
        raise ValueError(
            f"wasserstein2: sets must have equal shape, got {samples.shape} and {reference.shape}"
        )
    if samples.shape[0] > 2048:
        raise ValueError("wasserstein2: limited to 2048 points")
    diff = samples[:, None, :] - reference[None, :, :]
    cost = np.sum(diff * diff, axis=2)
    perm = hungarian(cost)
    return float(np.sqrt(np.mean(cost[np.arange(len(perm)), perm])))


def golden_section_bracket(
    objective: Callable[[float], float],
    lo: float,
    hi: float,
    iterations: int = 12,
) -> tuple[float, float]:
    """Final [a, b] bracket after the given number of golden-section shrinks.

    Each iteration contracts the bracket by exactly (sqrt(5)-1)/2, so the
    final width is (hi-lo) * 0.618...^iterations.
    """
    if not lo < hi:
        raise ValueError(f"golden_section_search: need lo < hi, got [{lo}, {hi}]")

    def f(w):
        v = float(objective(w))
        if not np.isfinite(v):
            raise NumericError(f"objective returned non-finite value at {w}")
        return v

    a, b = float(lo), float(hi)
    c = b - INVPHI * (b - a)
    d = a + INVPHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iterations):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INVPHI * (b - a)
            fd = f(d)
    return a, b


def golden_section_search(
    objective: Callable[[float], float],
    lo: float,
    hi: float,
    iterations: int = 12,
) -> tuple[float, float]:
    """Bracket a unimodal minimum; returns the final bracket midpoint and its value."""
    a, b = golden_section_bracket(objective, lo, hi, iterations)
    mid = 0.5 * (a + b)
    value = float(objective(mid))
    if not np.isfinite(value):
        raise NumericError(f"objective returned non-finite value at {mid}")
    return mid, value


def round_to_two_significant(w: float) -> float:
    """Round to two significant digits; 0 stays 0."""
    if w == 0.0:
        return 0.0
    digits = 1 - int(np.floor(np.log10(abs(w))))
    return float(round(w, digits))


def guidance_search(
    net,
    config_template: SolverConfig,
    reference: np.ndarray,
    quick_count: int,
    rng: np.random.Generator,
    w_max: float = 4.0,
    iterations: int = 12,
) -> float:
    """Golden-section search of the guidance weight on a quick W2 objective.

    Every candidate w is evaluated on the same sample seed (common random
    numbers), the best evaluated point is rounded to two significant digits,
    and w=0 is returned whenever it beats the rounded candidate, so the
    search can never worsen the quick objective it optimizes.
    """
    if quick_count > 2048:
        raise ValueError("guidance_search: quick_count limited to 2048")
    if w_max < 0:
        raise ValueError("guidance_search: w_max must be nonnegative")
    if w_max == 0.0:
        return 0.0
    seed = int(rng.integers(0, 2**63 - 1))
    cache: dict[float, float] = {}

    def objective(w: float) -> float:
        w = float(w)
        if w not in cache:
            cfg = SolverConfig(
                solver=config_template.solver,
                schedule=config_template.schedule,
                guidance=w,
                class_label=config_template.class_label,
            )
            samples = sample_set(net, cfg, quick_count, seed)
            cache[w] = wasserstein2(samples, reference)
        return cache[w]

    f0 = objective(0.0)
    golden_section_search(objective, 0.0, w_max, iterations)
    best_w = min(cache, key=lambda w: (cache[w], w))
    candidate = round_to_two_significant(best_w)
    if objective(candidate) <= f0:
        return candidate
    return 0.0


def teacher_nll(
    teacher: FlowTeacher,
    spec: DatasetSpec,
    count: int,
    rng: np.random.Generator,
) -> float:
    """Held-out negative log likelihood in nats per dimension at the training eta."""
    if count < 1:
        raise ValueError("teacher_nll: count must be >= 1")
    batch = sample_dataset(spec, count, rng)
    x = batch.x + teacher.eta * rng.standard_normal(batch.x.shape)
    z, logdet = nf_forward_batch(teacher, x, batch.c)
    loss = float(np.mean(0.5 * np.sum(z * z, axis=1) - logdet))
    return (loss + 0.5 * teacher.n * LOG_2PI) / teacher.n
