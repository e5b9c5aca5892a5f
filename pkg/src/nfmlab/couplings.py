"""Noise/data pair construction under four coupling regimes.

All regimes yield a PairBatch of (data row, endpoint row, label); the
flow-matching loss downstream never knows which coupling produced it.
Independent pairs arbitrarily, minibatch OT re-pairs a batch by exact
assignment, semi-discrete OT looks fresh noise up against a fixed data
subset through learned dual potentials, and the teacher mode replaces
the endpoint with the flow's normalized Gaussian code.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .datasets import LabeledBatch
from .teacher import FlowTeacher, encode_batch

__all__ = [
    "PairBatch",
    "Independent",
    "MinibatchOT",
    "SemiDiscreteOT",
    "NFTeacher",
    "CouplingMode",
    "hungarian",
    "draw_pairs",
    "sd_potential_update",
    "fit_sd_potentials",
    "pair_cost",
    "velocity_target_spread",
]


@dataclass
class PairBatch:
    """Index-aligned (data, endpoint, label) triples."""

    x: np.ndarray  # (m, n)
    endpoint: np.ndarray  # (m, n)
    c: np.ndarray  # (m,)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.endpoint = np.asarray(self.endpoint, dtype=np.float64)
        self.c = np.asarray(self.c, dtype=np.int64)
        if self.x.shape != self.endpoint.shape or self.c.shape != (self.x.shape[0],):
            raise ValueError(
                f"PairBatch: inconsistent shapes x={self.x.shape} "
                f"endpoint={self.endpoint.shape} c={self.c.shape}"
            )

    def __len__(self) -> int:
        return self.x.shape[0]


@dataclass
class Independent:
    """Fresh i.i.d. Gaussian endpoints, arbitrary pairing."""


@dataclass
class MinibatchOT:
    """Within-batch exact assignment on squared distance plus label penalty."""

    label_cost: float = 0.0

    def __post_init__(self):
        if self.label_cost < 0:
            raise ValueError("label_cost must be nonnegative")


@dataclass
class SemiDiscreteOT:
    """Lookup coupling against a fixed data subset via dual potentials."""

    support: LabeledBatch
    potentials: np.ndarray = None
    label_cost: float = 1000.0
    step_size: float = 0.1

    def __post_init__(self):
        if len(self.support) > 4096:
            raise ValueError("semi-discrete support limited to 4096 points")
        if self.potentials is None:
            self.potentials = np.zeros(len(self.support))
        self.potentials = np.asarray(self.potentials, dtype=np.float64)
        if self.potentials.shape != (len(self.support),):
            raise ValueError("potentials must have one entry per support point")
        if self.label_cost < 0:
            raise ValueError("label_cost must be nonnegative")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")


@dataclass
class NFTeacher:
    """Endpoints are the frozen teacher's normalized Gaussian codes."""

    teacher: FlowTeacher


CouplingMode = Independent | MinibatchOT | SemiDiscreteOT | NFTeacher


def hungarian(cost: np.ndarray) -> np.ndarray:
    """Exact minimum-cost assignment; returns the column matched to each row."""
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError(f"hungarian: cost matrix must be square, got {cost.shape}")
    if cost.shape[0] > 2048:
        raise ValueError(f"hungarian: size {cost.shape[0]} exceeds the 2048 cap")
    if not np.all(np.isfinite(cost)):
        raise ValueError("hungarian: cost matrix contains non-finite entries")
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(cost.shape[0], dtype=np.int64)
    perm[rows] = cols
    return perm


def _sd_assign(
    support_x: np.ndarray,
    support_c: np.ndarray,
    potentials: np.ndarray,
    noise: np.ndarray,
    noise_labels: np.ndarray | None,
    label_cost: float,
) -> np.ndarray:
    """argmin_i 0.5*||eps - x_i||^2 - g_i (+ label penalty); lowest index wins."""
    scores = 0.5 * cdist(noise, support_x, "sqeuclidean") - potentials
    if noise_labels is not None and label_cost > 0:
        scores = scores + label_cost * (noise_labels[:, None] != support_c[None, :])
    return np.argmin(scores, axis=1)


def draw_pairs(mode: CouplingMode, data: LabeledBatch, rng: np.random.Generator) -> PairBatch:
    """Produce one training PairBatch under the given coupling."""
    if len(data) == 0:
        raise ValueError("draw_pairs: empty batch")
    m, n = data.x.shape
    if isinstance(mode, Independent):
        eps = rng.standard_normal((m, n))
        return PairBatch(x=data.x, endpoint=eps, c=data.c)
    if isinstance(mode, MinibatchOT):
        eps = rng.standard_normal((m, n))
        cost = cdist(data.x, eps, "sqeuclidean")
        if mode.label_cost > 0:
            # noise slot j inherits the co-sampled label c_j
            cost = cost + mode.label_cost * (data.c[:, None] != data.c[None, :])
        perm = hungarian(cost)
        return PairBatch(x=data.x, endpoint=eps[perm], c=data.c)
    if isinstance(mode, SemiDiscreteOT):
        eps = rng.standard_normal((m, n))
        k = int(mode.support.c.max()) + 1
        slot_labels = rng.integers(0, k, size=m)
        idx = _sd_assign(
            mode.support.x, mode.support.c, mode.potentials, eps, slot_labels, mode.label_cost
        )
        return PairBatch(x=mode.support.x[idx], endpoint=eps, c=mode.support.c[idx])
    if isinstance(mode, NFTeacher):
        if mode.teacher.sigma_f is None:
            raise ValueError("teacher coupling requires sigma_f; call estimate_sigma_f first")
        endpoint = encode_batch(mode.teacher, data.x, data.c, rng)
        return PairBatch(x=data.x, endpoint=endpoint, c=data.c)
    raise TypeError(f"unknown coupling mode: {mode!r}")


def sd_potential_update(
    potentials: np.ndarray,
    data: LabeledBatch,
    noise_batch: np.ndarray,
    step_size: float,
    label_cost: float = 0.0,
    noise_labels: np.ndarray | None = None,
) -> np.ndarray:
    """One stochastic-ascent step on the semi-dual objective.

    Each noise point votes for its current argmin; potentials move toward
    the uniform marginal 1/N minus the empirical selection frequency.
    """
    if step_size <= 0:
        raise ValueError("step_size must be positive")
    potentials = np.asarray(potentials, dtype=np.float64)
    count = len(data)
    if potentials.shape != (count,):
        raise ValueError(f"potentials shape {potentials.shape} does not match data size {count}")
    noise_batch = np.asarray(noise_batch, dtype=np.float64)
    idx = _sd_assign(data.x, data.c, potentials, noise_batch, noise_labels, label_cost)
    freq = np.bincount(idx, minlength=count) / noise_batch.shape[0]
    return potentials + step_size * (1.0 / count - freq)


def fit_sd_potentials(
    mode: SemiDiscreteOT,
    rng: np.random.Generator,
    iterations: int = 2000,
    batch_size: int = 256,
) -> SemiDiscreteOT:
    """Run the ascent until potentials settle; mutates mode.potentials."""
    n = mode.support.x.shape[1]
    k = int(mode.support.c.max()) + 1
    g = mode.potentials
    for _ in range(iterations):
        eps = rng.standard_normal((batch_size, n))
        labels = rng.integers(0, k, size=batch_size) if mode.label_cost > 0 else None
        g = sd_potential_update(g, mode.support, eps, mode.step_size, mode.label_cost, labels)
    mode.potentials = g
    return mode


def pair_cost(pairs: PairBatch) -> float:
    """Mean squared endpoint-to-data distance of a PairBatch."""
    return float(np.mean(np.sum((pairs.endpoint - pairs.x) ** 2, axis=1)))


def velocity_target_spread(pairs: PairBatch, t: float) -> float:
    """Conditional-velocity-variance proxy at interpolation time t.

    Interpolates every pair to x_t, finds each point's nearest neighbor
    among the other interpolants, and averages the squared difference of
    their velocity targets.  Couplings whose endpoints track the data give
    nearby interpolants nearby targets, shrinking this number.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    xt = (1.0 - t) * pairs.x + t * pairs.endpoint
    v = pairs.endpoint - pairs.x
    d2 = cdist(xt, xt, "sqeuclidean")
    np.fill_diagonal(d2, np.inf)
    nn = np.argmin(d2, axis=1)
    return float(np.mean(np.sum((v - v[nn]) ** 2, axis=1)))
