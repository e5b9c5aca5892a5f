"""Synthetic class-conditional distributions with known samplers.

Gaussian mixtures (isotropic or anisotropic) come with an exact log
density, which is what makes teacher NLL checkable against ground truth.
Moons and checkerboard are samplers only.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

__all__ = [
    "NULL_LABEL",
    "LabeledBatch",
    "DatasetSpec",
    "default_spec",
    "sample_dataset",
    "true_log_density",
    "save_batch_csv",
]

NULL_LABEL = -1  # the distinguished null class


@dataclass
class LabeledBatch:
    """Rows of samples with integer class labels; NULL_LABEL marks the null class."""

    x: np.ndarray  # (m, n) float64
    c: np.ndarray  # (m,) int64

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.c = np.asarray(self.c, dtype=np.int64)
        if self.x.ndim != 2 or self.c.shape != (self.x.shape[0],):
            raise ValueError(f"LabeledBatch: bad shapes x={self.x.shape} c={self.c.shape}")
        if not np.all(np.isfinite(self.x)):
            raise ValueError("LabeledBatch: non-finite sample")

    def __len__(self) -> int:
        return self.x.shape[0]


@dataclass(frozen=True)
class DatasetSpec:
    """Named distribution plus its parameters and output normalization.

    Samples are drawn in raw coordinates and multiplied by `scale`; the
    analytic density (where it exists) is that of the scaled variable.
    """

    name: str = "gauss_mix"
    n: int = 2
    k: int = 8
    scale: float = 1.0
    radius: float = 4.0  # circle of component means (gauss_mix, aniso_gauss)
    component_std: float = 0.3  # sqrt(0.09)
    moon_noise: float = 0.08
    board_extent: float = 2.0  # checkerboard covers [-extent, extent]^2, 4x4 tiles
    means: tuple = field(default=None)  # optional explicit (k, n) component means
    covs: tuple = field(default=None)  # optional explicit (k, n, n) covariances

    def __post_init__(self):
        if self.name not in ("gauss_mix", "moons", "checkerboard", "aniso_gauss"):
            raise ValueError(f"unknown dataset name: {self.name!r}")
        if self.n < 2:
            raise ValueError("dataset dimension must be at least 2")
        if self.k < 1:
            raise ValueError("class count must be at least 1")
        if self.name in ("moons", "checkerboard") and self.n != 2:
            raise ValueError(f"{self.name} is two-dimensional only")
        if self.name == "checkerboard" and self.k != 2:
            raise ValueError("checkerboard uses tile parity, k=2")
        if self.name == "moons" and self.k != 2:
            raise ValueError("moons has exactly two classes")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        # freeze derived mixture parameters
        if self.name in ("gauss_mix", "aniso_gauss"):
            means, covs = self._build_components()
            object.__setattr__(self, "means", means)
            object.__setattr__(self, "covs", covs)

    def _build_components(self):
        if self.means is not None:
            means = np.asarray(self.means, dtype=np.float64).reshape(self.k, self.n)
        elif self.k == 1:
            means = np.zeros((1, self.n))
        else:
            angles = 2.0 * np.pi * np.arange(self.k) / self.k
            means = np.zeros((self.k, self.n))
            means[:, 0] = self.radius * np.cos(angles)
            means[:, 1] = self.radius * np.sin(angles)
        if self.covs is not None:
            covs = np.asarray(self.covs, dtype=np.float64).reshape(self.k, self.n, self.n)
        elif self.name == "aniso_gauss":
            covs = np.zeros((self.k, self.n, self.n))
            for j in range(self.k):
                d = np.full(self.n, (0.2 * self.component_std) ** 2)
                d[0] = (3.0 * self.component_std) ** 2
                cov = np.diag(d)
                if self.n == 2 and self.k > 1:
                    a = 2.0 * np.pi * j / self.k
                    rot = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
                    cov = rot @ cov @ rot.T
                covs[j] = cov
        elif self.k == 1 and self.means is None:
            covs = np.eye(self.n)[None]  # single component defaults to N(0, I)
        else:
            covs = np.tile(np.eye(self.n) * self.component_std**2, (self.k, 1, 1))
        # positive-definiteness gate
        for j in range(self.k):
            try:
                np.linalg.cholesky(covs[j])
            except np.linalg.LinAlgError:
                raise ValueError(f"component {j} covariance is not positive definite") from None
        return tuple(map(tuple, means)), tuple(tuple(map(tuple, c)) for c in covs)

    def component_arrays(self):
        return (
            np.asarray(self.means, dtype=np.float64),
            np.asarray(self.covs, dtype=np.float64),
        )

    def has_analytic_density(self) -> bool:
        return self.name in ("gauss_mix", "aniso_gauss")


def default_spec() -> DatasetSpec:
    """Eight tight Gaussians on a circle, normalized to O(1) spread."""
    return DatasetSpec(name="gauss_mix", n=2, k=8, scale=0.25)


def sample_dataset(spec: DatasetSpec, count: int, rng: np.random.Generator) -> LabeledBatch:
    """Draw i.i.d. samples; labels follow component/cluster identity."""
    if count < 1:
        raise ValueError(f"sample_dataset: count must be >= 1, got {count}")
    if spec.name in ("gauss_mix", "aniso_gauss"):
        means, covs = spec.component_arrays()
        labels = rng.integers(0, spec.k, size=count)
        eps = rng.standard_normal((count, spec.n))
        chols = np.linalg.cholesky(covs)
        x = means[labels] + np.einsum("kij,kj->ki", chols[labels], eps)
    elif spec.name == "moons":
        labels = np.arange(count) % 2  # alternating, exactly balanced
        theta = rng.uniform(0.0, np.pi, size=count)
        x = np.empty((count, 2))
        upper = labels == 0
        x[upper, 0] = np.cos(theta[upper])
        x[upper, 1] = np.sin(theta[upper])
        x[~upper, 0] = 1.0 - np.cos(theta[~upper])
        x[~upper, 1] = 0.5 - np.sin(theta[~upper])
        x += spec.moon_noise * rng.standard_normal((count, 2))
    elif spec.name == "checkerboard":
        tiles = rng.integers(0, 4, size=(count, 2))
        width = spec.board_extent / 2.0
        x = -spec.board_extent + (tiles + rng.uniform(0.0, 1.0, size=(count, 2))) * width
        labels = (tiles[:, 0] + tiles[:, 1]) % 2
    else:  # pragma: no cover - guarded in __post_init__
        raise ValueError(f"unknown dataset name: {spec.name!r}")
    return LabeledBatch(x=spec.scale * x, c=labels)


def true_log_density(spec: DatasetSpec, x):
    """Exact mixture log density of the scaled variable, or None when unavailable.

    Accepts a single point (n,) or a batch (m, n); returns a float or an
    (m,) array correspondingly.
    """
    if not spec.has_analytic_density():
        return None
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    pts = x.reshape(-1, spec.n)
    means, covs = spec.component_arrays()
    means = means * spec.scale
    covs = covs * spec.scale**2
    logs = np.empty((pts.shape[0], spec.k))
    for j in range(spec.k):
        diff = pts - means[j]
        chol = np.linalg.cholesky(covs[j])
        sol = np.linalg.solve(chol, diff.T).T
        logdet = 2.0 * np.sum(np.log(np.diag(chol)))
        logs[:, j] = -0.5 * np.sum(sol * sol, axis=1) - 0.5 * (
            spec.n * np.log(2.0 * np.pi) + logdet
        )
    out = logsumexp(logs, axis=1) - np.log(spec.k)
    return float(out[0]) if single else out


def save_batch_csv(batch: LabeledBatch, path) -> None:
    """Write samples as CSV with header x0,...,x{n-1},label."""
    n = batch.x.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i}" for i in range(n)] + ["label"])
        for row, label in zip(batch.x, batch.c):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])
