"""ODE integration from noise to data with Euler and Heun solvers.

Grids never reach t=0: both schedules stop at their last positive knot and
the solver finishes with one extra Euler step to t=0, which is counted in
the NFE budget.  Heun applies the trapezoidal correction on every interior
segment and plain Euler on that final one, so its evaluation count is
exactly 2*steps - 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import NumericError
from .datasets import NULL_LABEL
from .rand import stream

__all__ = [
    "Schedule",
    "SolverConfig",
    "Trajectory",
    "guided_velocity",
    "euler_solve",
    "heun_solve",
    "nfe_count",
    "sample_set",
    "save_trajectories_csv",
]


@dataclass(frozen=True)
class Schedule:
    """Descending time grid; linear {1,...,dt} or its elementwise square."""

    kind: str = "square"
    steps: int = 16

    def __post_init__(self):
        if self.kind not in ("linear", "square"):
            raise ValueError(f"unknown schedule kind: {self.kind!r}")
        if self.steps < 1:
            raise ValueError("schedule needs at least one step")

    def grid(self) -> np.ndarray:
        g = (self.steps - np.arange(self.steps)) / self.steps
        return g * g if self.kind == "square" else g


@dataclass
class SolverConfig:
    solver: str = "heun"  # euler | heun
    schedule: Schedule = field(default_factory=Schedule)
    guidance: float = 0.0
    class_label: int | None = None  # None: random class per trajectory; NULL_LABEL: unconditional

    def __post_init__(self):
        if self.solver not in ("euler", "heun"):
            raise ValueError(f"unknown solver: {self.solver!r}")
        if self.guidance < 0:
            raise ValueError("guidance must be nonnegative")
        if self.solver == "heun" and self.schedule.steps < 2:
            raise ValueError("heun requires at least 2 steps")


@dataclass
class Trajectory:
    """States at each grid time plus t=0, and the velocity used per segment."""

    times: np.ndarray  # (m+1,) strictly descending, ends at 0
    states: np.ndarray  # (m+1, n); states[0] is the initial noise draw
    velocities: np.ndarray  # (m, n) effective per-segment velocities
    label: int = NULL_LABEL
    nfe: int = 0

    @property
    def terminal(self) -> np.ndarray:
        return self.states[-1]


def nfe_count(config: SolverConfig) -> int:
    """Velocity-field evaluations the configured run will make."""
    steps = config.schedule.steps
    return steps if config.solver == "euler" else 2 * steps - 1


def guided_velocity(net, x_t, t: float, c, w: float) -> np.ndarray:
    """Classifier-free extrapolation v_null + (1+w)*(v_cond - v_null).

    w=0 is the plain conditional velocity (one network pass).
    """
    if w == 0.0:
        return net.velocity(x_t, c, t)
    c = np.asarray(c, dtype=np.int64)
    if np.any(c == NULL_LABEL):
        raise ValueError("guidance requires a concrete class label")
    v_c = net.velocity(x_t, c, t)
    v_n = net.velocity(x_t, np.full_like(c, NULL_LABEL), t)
    return v_n + (1.0 + w) * (v_c - v_n)


def _resolve_labels(net, config: SolverConfig, rngs) -> np.ndarray:
    if config.class_label is None:
        return np.array([int(r.integers(0, net.k)) for r in rngs], dtype=np.int64)
    return np.full(len(rngs), int(config.class_label), dtype=np.int64)


def _integrate(net, config: SolverConfig, x0: np.ndarray, labels: np.ndarray):
    """Lockstep integration of a (batch, n) state; returns states, vels, nfe."""
    grid = config.schedule.grid()
    times = np.append(grid, 0.0)
    steps = len(grid)
    calls = [0]

    def fieldeval(x, t):
        calls[0] += 1
        return guided_velocity(net, x, t, labels, config.guidance)

    states = np.empty((steps + 1,) + x0.shape)
    vels = np.empty((steps,) + x0.shape)
    x = x0
    states[0] = x
    for i in range(steps):
        dt = times[i] - times[i + 1]
        if config.solver == "euler" or i == steps - 1:
            v = fieldeval(x, times[i])
        else:
            v1 = fieldeval(x, times[i])
            v2 = fieldeval(x - dt * v1, times[i + 1])
            v = 0.5 * (v1 + v2)
        x = x - dt * v
        if not np.all(np.isfinite(x)):
            bad = ~np.all(np.isfinite(x), axis=-1)
            if x.ndim == 1 or np.mean(bad) > 0.01:
                raise NumericError(f"solver state became non-finite at step {i}")
        vels[i] = v
        states[i + 1] = x
    return times, states, vels, calls[0]


def _solve_single(net, config: SolverConfig, seed: int) -> Trajectory:
    rng = stream(seed, 0)
    x0 = rng.standard_normal(net.n)
    label = _resolve_labels(net, config, [rng])[0]
    times, states, vels, calls = _integrate(
        net, config, x0[None, :], np.array([label], dtype=np.int64)
    )
    return Trajectory(
        times=times, states=states[:, 0, :], velocities=vels[:, 0, :], label=int(label), nfe=calls
    )


def euler_solve(net, config: SolverConfig, seed: int) -> Trajectory:
    """First-order solve along the configured grid, initial draw from seed."""
    if config.solver != "euler":
        raise ValueError("euler_solve requires an euler SolverConfig")
    return _solve_single(net, config, seed)


def heun_solve(net, config: SolverConfig, seed: int) -> Trajectory:
    """Second-order (trapezoidal) solve; the final segment is plain Euler."""
    if config.solver != "heun":
        raise ValueError("heun_solve requires a heun SolverConfig")
    return _solve_single(net, config, seed)


def sample_set(
    net,
    config: SolverConfig,
    count: int,
    seed: int,
    return_trajectories: bool = False,
):
    """Integrate `count` trajectories in lockstep.

    Each trajectory's noise and label come from the sub-stream (seed, index),
    so the result does not depend on how the batch is scheduled.  Aborts if
    more than 1% of trajectories go non-finite.
    """
    if count < 1:
        raise ValueError("sample_set: count must be >= 1")
    rngs = [stream(seed, i) for i in range(count)]
    x0 = np.stack([r.standard_normal(net.n) for r in rngs])
    labels = _resolve_labels(net, config, rngs)
    times, states, vels, calls = _integrate(net, config, x0, labels)
    samples = states[-1].copy()
    if not return_trajectories:
        return samples
    trajectories = [
        Trajectory(
            times=times,
            states=states[:, i, :].copy(),
            velocities=vels[:, i, :].copy(),
            label=int(labels[i]),
            nfe=calls,
        )
        for i in range(count)
    ]
    return samples, trajectories


def save_trajectories_csv(trajectories: list[Trajectory], path) -> None:
    """Rows (sample_id, step, t, x0..x{n-1}) for plotting."""
    import csv

    n = trajectories[0].states.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "step", "t"] + [f"x{i}" for i in range(n)])
        for sid, traj in enumerate(trajectories):
            for j, (t, xrow) in enumerate(zip(traj.times, traj.states)):
                writer.writerow([sid, j, repr(float(t))] + [repr(float(v)) for v in xrow])
