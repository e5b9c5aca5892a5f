"""Conditional normalizing flow built from affine coupling blocks.

The teacher maps noisy data x' = x + eta*eps' to a Gaussian code z with an
analytically invertible stack of masked affine couplings; the log-det of
the Jacobian is the sum of the (clamped) per-coordinate log scales.  Once
trained, the per-dimension normalizer sigma_f turns its outputs into the
unit-second-moment endpoints used for coupling-based distillation.
"""

from __future__ import annotations

import numpy as np

from .autodiff import (
    NumericError,
    Tape,
    Tensor,
    affine,
    backward,
    embedding,
    exp,
    gelu,
    matmul,
    mul,
    square,
    tanh,
    tsum,
)
from .datasets import NULL_LABEL, DatasetSpec, LabeledBatch, sample_dataset
from .optim import AdamState, adam_step

__all__ = [
    "FlowTeacher",
    "nf_forward",
    "nf_forward_batch",
    "nf_inverse",
    "nf_loss",
    "train_teacher",
    "estimate_sigma_f",
    "encode_coupling",
    "encode_batch",
    "nll_per_dim",
]

LOG_2PI = float(np.log(2.0 * np.pi))


class FlowTeacher:
    """Stack of masked affine couplings with a shared class-embedding table.

    Row k of the embedding table is the null label.  Scale/shift heads are
    zero-initialized so a fresh teacher is exactly the identity map.
    """

    def __init__(
        self,
        n: int,
        k: int,
        blocks: int = 8,
        width: int = 64,
        embed_dim: int = 16,
        eta: float = 0.05,
        clamp: float = 4.0,
        rng: np.random.Generator | None = None,
    ):
        if n < 2:
            raise ValueError("coupling masks need n >= 2")
        if eta < 0:
            raise ValueError("input noise level eta must be nonnegative")
        if rng is None:
            rng = np.random.default_rng(0)
        self.n = n
        self.k = k
        self.blocks = blocks
        self.width = width
        self.embed_dim = embed_dim
        self.eta = eta
        self.clamp = clamp
        self.sigma_f: np.ndarray | None = None
        # alternating parity masks: 1 = coordinate passes through unchanged
        idx = np.arange(n)
        self.masks = [((idx % 2) == (i % 2)).astype(np.float64) for i in range(blocks)]
        self.params = self._init_params(rng)

    def _init_params(self, rng: np.random.Generator) -> dict:
        p = {"embed": 0.05 * rng.standard_normal((self.k + 1, self.embed_dim))}
        n, w, e = self.n, self.width, self.embed_dim
        for i in range(self.blocks):
            p[f"block{i}.win"] = rng.standard_normal((n, w)) * np.sqrt(2.0 / n)
            p[f"block{i}.wc"] = rng.standard_normal((e, w)) * np.sqrt(2.0 / e)
            p[f"block{i}.b0"] = np.zeros(w)
            p[f"block{i}.w1"] = rng.standard_normal((w, w)) * np.sqrt(2.0 / w)
            p[f"block{i}.b1"] = np.zeros(w)
            p[f"block{i}.ws"] = np.zeros((w, n))
            p[f"block{i}.bs"] = np.zeros(n)
            p[f"block{i}.wb"] = np.zeros((w, n))
            p[f"block{i}.bb"] = np.zeros(n)
        return p

    def label_rows(self, c) -> np.ndarray:
        """Map labels to embedding rows; the null label selects row k."""
        c = np.asarray(c, dtype=np.int64)
        if np.any(c >= self.k):
            raise ValueError("label outside 0..k-1")
        return np.where(c < 0, self.k, c)


def _conditioner(params: dict, prefix: str, xm: Tensor, cemb: Tensor, mask: np.ndarray, clamp: float):
    """Scale/shift head of one block: (masked coords, class emb) -> (s, b)."""
    h = gelu(affine(xm, params[f"{prefix}.win"], params[f"{prefix}.b0"]) + matmul(cemb, params[f"{prefix}.wc"]))
    h = gelu(affine(h, params[f"{prefix}.w1"], params[f"{prefix}.b1"]))
    s_raw = affine(h, params[f"{prefix}.ws"], params[f"{prefix}.bs"])
    b = affine(h, params[f"{prefix}.wb"], params[f"{prefix}.bb"])
    um = np.broadcast_to(1.0 - mask, s_raw.data.shape)
    s = mul(mul(tanh(mul(s_raw, 1.0 / clamp)), clamp), um)  # |s| <= clamp, masked coords zero
    b = mul(b, um)
    return s, b


def _apply_blocks(teacher: FlowTeacher, params: dict, x: Tensor, rows: np.ndarray):
    """Forward through all blocks; returns (z, per-example logdet)."""
    cemb = embedding(params["embed"], rows)
    z = x
    logdet = None
    for i, mask in enumerate(teacher.masks):
        mb = np.broadcast_to(mask, z.data.shape)
        umb = np.broadcast_to(1.0 - mask, z.data.shape)
        s, b = _conditioner(params, f"block{i}", mul(z, mb), cemb, mask, teacher.clamp)
        z = mul(z, mb) + mul(mul(z, exp(s)) + b, umb)
        if not np.all(np.isfinite(z.data)):
            raise NumericError(f"non-finite value after coupling block {i}")
        ld = tsum(s, axis=1)
        logdet = ld if logdet is None else logdet + ld
    return z, logdet


def _const_params(teacher: FlowTeacher) -> dict:
    return {k: Tensor(v) for k, v in teacher.params.items()}


def nf_forward(teacher: FlowTeacher, x, c) -> tuple[np.ndarray, float]:
    """Map one point to its Gaussian code; logdet accumulated analytically."""
    x = np.asarray(x, dtype=np.float64).reshape(1, teacher.n)
    rows = teacher.label_rows([c])
    z, logdet = _apply_blocks(teacher, _const_params(teacher), Tensor(x), rows)
    return z.data[0].copy(), float(logdet.data[0])


def nf_forward_batch(teacher: FlowTeacher, x: np.ndarray, c) -> tuple[np.ndarray, np.ndarray]:
    """Batched nf_forward; returns (codes, per-example logdets)."""
    x = np.asarray(x, dtype=np.float64)
    rows = teacher.label_rows(c)
    z, logdet = _apply_blocks(teacher, _const_params(teacher), Tensor(x), rows)
    return z.data.copy(), logdet.data.copy()


def nf_inverse(teacher: FlowTeacher, z, c) -> np.ndarray:
    """Analytic inverse: blocks unwound in reverse order."""
    single = np.asarray(z).ndim == 1
    z = np.asarray(z, dtype=np.float64).reshape(-1, teacher.n)
    rows = teacher.label_rows(np.atleast_1d(np.asarray(c, dtype=np.int64)))
    if rows.shape[0] == 1 and z.shape[0] > 1:
        rows = np.repeat(rows, z.shape[0])
    params = _const_params(teacher)
    cemb = embedding(params["embed"], rows)
    x = z
    for i in reversed(range(teacher.blocks)):
        mask = teacher.masks[i]
        mb = np.broadcast_to(mask, x.shape)
        umb = 1.0 - mb
        s, b = _conditioner(params, f"block{i}", Tensor(x * mb), cemb, mask, teacher.clamp)
        x = x * mb + ((x - b.data) * np.exp(-s.data)) * umb
        if not np.all(np.isfinite(x)):
            raise NumericError(f"non-finite value inverting coupling block {i}")
    return x[0].copy() if single else x


def nf_loss(
    teacher: FlowTeacher,
    batch: LabeledBatch,
    rng: np.random.Generator,
    dropout_p: float = 0.1,
    leaves: dict | None = None,
) -> Tensor:
    """Change-of-variables loss, mean(0.5*||z||^2 - logdet) over the batch.

    Fresh input noise eta*eps' is drawn per example; labels are dropped to
    the null class with probability dropout_p.  Pass a dict as `leaves` to
    receive the parameter leaf tensors for a subsequent backward pass.
    """
    if len(batch) == 0:
        raise ValueError("nf_loss: empty batch")
    x = batch.x + teacher.eta * rng.standard_normal(batch.x.shape)
    rows = teacher.label_rows(batch.c)
    if dropout_p > 0:
        rows = np.where(rng.random(len(batch)) < dropout_p, teacher.k, rows)
    if leaves is None:
        params = _const_params(teacher)
    else:
        tape = Tape()
        params = {k: tape.leaf(v, name=k) for k, v in teacher.params.items()}
        leaves.update(params)
    z, logdet = _apply_blocks(teacher, params, Tensor(x), rows)
    m = float(len(batch))
    return tsum(square(z)) * (0.5 / m) - tsum(logdet) * (1.0 / m)


def train_teacher(
    teacher: FlowTeacher,
    spec: DatasetSpec,
    steps: int,
    batch_size: int,
    rng: np.random.Generator,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps_opt: float = 1e-8,
    dropout_p: float = 0.1,
) -> list[float]:
    """Adam on nf_loss over fresh batches; returns the per-step loss history."""
    state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps_opt)
    history: list[float] = []
    for step in range(steps):
        batch = sample_dataset(spec, batch_size, rng)
        leaves: dict = {}
        loss = nf_loss(teacher, batch, rng, dropout_p=dropout_p, leaves=leaves)
        value = loss.item()
        if not np.isfinite(value):
            raise NumericError(f"teacher training diverged at step {step}")
        grads_map = backward(loss)
        grads = {name: grads_map.wrt(t) for name, t in leaves.items()}
        teacher.params, state = adam_step(teacher.params, grads, state)
        history.append(value)
    return history


def estimate_sigma_f(
    teacher: FlowTeacher,
    spec: DatasetSpec,
    sample_count: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Per-dimension output normalizer, sigma_f^2 = E[f(x + eta*eps', c)^2]."""
    if sample_count < 1000:
        raise ValueError("estimate_sigma_f: need at least 1000 samples")
    batch = sample_dataset(spec, sample_count, rng)
    x = batch.x + teacher.eta * rng.standard_normal(batch.x.shape)
    z, _ = nf_forward_batch(teacher, x, batch.c)
    sigma = np.sqrt(np.mean(z * z, axis=0))
    if np.any(sigma < 1e-6):
        raise NumericError(f"degenerate teacher output dimension, sigma_f={sigma}")
    teacher.sigma_f = sigma
    return sigma


def encode_batch(
    teacher: FlowTeacher,
    x: np.ndarray,
    c,
    rng: np.random.Generator,
) -> np.ndarray:
    """Normalized Gaussian codes f(x + eta*eps', c)/sigma_f with fresh eps'."""
    if teacher.sigma_f is None:
        raise ValueError("encode requires sigma_f; call estimate_sigma_f first")
    x = np.asarray(x, dtype=np.float64)
    noisy = x + teacher.eta * rng.standard_normal(x.shape)
    z, _ = nf_forward_batch(teacher, noisy, c)
    return z / teacher.sigma_f


def encode_coupling(teacher: FlowTeacher, x, c, rng: np.random.Generator) -> np.ndarray:
    """Single-point encode_batch."""
    out = encode_batch(teacher, np.asarray(x, dtype=np.float64).reshape(1, teacher.n), [c], rng)
    return out[0]


def nll_per_dim(loss_value: float, n: int) -> float:
    """Convert the training loss (nats) to per-dimension negative log likelihood."""
    return (loss_value + 0.5 * n * LOG_2PI) / n
