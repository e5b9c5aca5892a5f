"""Velocity network and the flow-matching regression loop.

The loss is the same for every coupling: regress net(x_t, c, t) onto the
endpoint difference along the linear interpolant.  Only the PairBatch
handed in differs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    NumericError,
    Tape,
    Tensor,
    affine,
    backward,
    embedding,
    gelu,
    matmul,
    square,
    tsum,
)
from .couplings import CouplingMode, NFTeacher, draw_pairs, PairBatch
from .datasets import DatasetSpec, sample_dataset
from .optim import AdamState, adam_step

__all__ = [
    "TimeSampler",
    "VelocityNet",
    "time_embedding",
    "interpolate",
    "fm_loss",
    "train_student",
    "max_noise_equivalent",
]


@dataclass
class TimeSampler:
    """Logit-normal time distribution, t = sigmoid(a + b*N(0,1))."""

    a: float = -0.2
    b: float = 1.0

    def __post_init__(self):
        if self.b <= 0:
            raise ValueError("logit-normal spread b must be positive")

    def draw(self, count: int, rng: np.random.Generator) -> np.ndarray:
        z = self.a + self.b * rng.standard_normal(count)
        return 1.0 / (1.0 + np.exp(-z))


def time_embedding(t: np.ndarray, dim: int) -> np.ndarray:
    """Fixed sinusoidal features of t in [0,1], geometric frequency ladder."""
    if dim % 2 != 0:
        raise ValueError("time embedding dimension must be even")
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = 1000.0 ** (np.arange(half) / max(half - 1, 1))
    phase = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(phase), np.cos(phase)], axis=1)


class VelocityNet:
    """MLP over (x_t, sinusoidal t, class embedding) predicting the velocity."""

    def __init__(
        self,
        n: int,
        k: int,
        hidden: tuple[int, ...] = (256, 256, 256),
        time_dim: int = 32,
        embed_dim: int = 16,
        rng: np.random.Generator | None = None,
    ):
        if len(hidden) < 1:
            raise ValueError("need at least one hidden layer")
        if rng is None:
            rng = np.random.default_rng(0)
        self.n = n
        self.k = k
        self.hidden = tuple(int(h) for h in hidden)
        self.time_dim = time_dim
        self.embed_dim = embed_dim
        h0 = self.hidden[0]
        p = {
            "embed": 0.05 * rng.standard_normal((k + 1, embed_dim)),
            "w_x": rng.standard_normal((n, h0)) * np.sqrt(2.0 / n),
            "w_t": rng.standard_normal((time_dim, h0)) * np.sqrt(2.0 / time_dim),
            "w_c": rng.standard_normal((embed_dim, h0)) * np.sqrt(2.0 / embed_dim),
            "b_0": np.zeros(h0),
        }
        for i in range(1, len(self.hidden)):
            p[f"w_{i}"] = rng.standard_normal((self.hidden[i - 1], self.hidden[i])) * np.sqrt(
                2.0 / self.hidden[i - 1]
            )
            p[f"b_{i}"] = np.zeros(self.hidden[i])
        # zero-init output: a fresh net predicts the zero velocity field
        p["w_out"] = np.zeros((self.hidden[-1], n))
        p["b_out"] = np.zeros(n)
        self.params = p

    def label_rows(self, c) -> np.ndarray:
        c = np.asarray(c, dtype=np.int64)
        if np.any(c >= self.k):
            raise ValueError("label outside 0..k-1")
        return np.where(c < 0, self.k, c)

    def apply(self, params: dict, xt: Tensor, temb: Tensor, rows: np.ndarray) -> Tensor:
        cemb = embedding(params["embed"], rows)
        h = gelu(
            affine(xt, params["w_x"], params["b_0"])
            + matmul(temb, params["w_t"])
            + matmul(cemb, params["w_c"])
        )
        for i in range(1, len(self.hidden)):
            h = gelu(affine(h, params[f"w_{i}"], params[f"b_{i}"]))
        return affine(h, params["w_out"], params["b_out"])

    def velocity(self, x: np.ndarray, c, t: float) -> np.ndarray:
        """Plain-numpy forward used by the ODE solvers."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        rows = self.label_rows(np.broadcast_to(np.asarray(c, dtype=np.int64), (x.shape[0],)))
        temb = time_embedding(np.full(x.shape[0], float(t)), self.time_dim)
        params = {k: Tensor(v) for k, v in self.params.items()}
        out = self.apply(params, Tensor(x), Tensor(temb), rows).data
        return out[0].copy() if single else out.copy()


def interpolate(x, endpoint, t):
    """Linear path point x_t = (1-t)*x + t*endpoint; t=0 is data, t=1 noise."""
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < 0.0) or np.any(t_arr > 1.0):
        raise ValueError(f"interpolation time outside [0, 1]: {t}")
    x = np.asarray(x, dtype=np.float64)
    endpoint = np.asarray(endpoint, dtype=np.float64)
    if x.shape != endpoint.shape:
        raise ValueError(f"interpolate: shapes {x.shape} and {endpoint.shape} differ")
    if t_arr.ndim == 1 and x.ndim == 2:
        t_arr = t_arr[:, None]
    return (1.0 - t_arr) * x + t_arr * endpoint


def fm_loss(
    net: VelocityNet,
    pairs: PairBatch,
    time_sampler: TimeSampler,
    rng: np.random.Generator,
    dropout_p: float = 0.1,
    leaves: dict | None = None,
) -> Tensor:
    """Mean squared error against the endpoint difference, per-example t.

    The endpoint is whatever the coupling produced; this code path is the
    same for every mode.  Pass `leaves` to receive parameter leaf tensors.
    """
    m = len(pairs)
    if m == 0:
        raise ValueError("fm_loss: empty pair batch")
    t = time_sampler.draw(m, rng)
    xt = interpolate(pairs.x, pairs.endpoint, t)
    target = pairs.endpoint - pairs.x
    rows = net.label_rows(pairs.c)
    if dropout_p > 0:
        rows = np.where(rng.random(m) < dropout_p, net.k, rows)
    if leaves is None:
        params = {k: Tensor(v) for k, v in net.params.items()}
    else:
        tape = Tape()
        params = {k: tape.leaf(v, name=k) for k, v in net.params.items()}
        leaves.update(params)
    v = net.apply(params, Tensor(xt), Tensor(time_embedding(t, net.time_dim)), rows)
    return tsum(square(v - target)) * (1.0 / m)


def train_student(
    net: VelocityNet,
    mode: CouplingMode,
    spec: DatasetSpec,
    steps: int,
    batch_size: int,
    rng: np.random.Generator,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps_opt: float = 1e-8,
    dropout_p: float = 0.1,
    time_sampler: TimeSampler | None = None,
) -> list[float]:
    """Adam on fm_loss with pairs drawn fresh each step; returns loss history."""
    if isinstance(mode, NFTeacher) and mode.teacher.sigma_f is None:
        raise ValueError("teacher coupling requires sigma_f; call estimate_sigma_f first")
    if time_sampler is None:
        time_sampler = TimeSampler()
    state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps_opt)
    history: list[float] = []
    for step in range(steps):
        data = sample_dataset(spec, batch_size, rng)
        pairs = draw_pairs(mode, data, rng)
        leaves: dict = {}
        loss = fm_loss(net, pairs, time_sampler, rng, dropout_p=dropout_p, leaves=leaves)
        value = loss.item()
        if not np.isfinite(value):
            raise NumericError(f"student training diverged at step {step}")
        grads_map = backward(loss)
        grads = {name: grads_map.wrt(tnsr) for name, tnsr in leaves.items()}
        net.params, state = adam_step(net.params, grads, state)
        history.append(value)
    return history


def max_noise_equivalent(eta: float) -> float:
    """Maximum flow-matching noise level induced by input noise eta."""
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    return eta / (1.0 + eta)
