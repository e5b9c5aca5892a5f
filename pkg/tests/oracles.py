"""Independent oracles shared across the test suite.

Everything here is deliberately brute force: exhaustive enumeration,
central differences, closed forms.  None of it calls the code paths it
is used to check.
"""

from itertools import permutations

import numpy as np

from nfmlab.autodiff import Tensor, Tape, affine, backward, gelu, matmul, mul, square, tanh, tsum


def brute_force_assignment(cost: np.ndarray) -> tuple[float, tuple[int, ...]]:
    """Minimum total assignment cost by enumerating all permutations."""
    m = cost.shape[0]
    best_total, best_perm = np.inf, None
    for perm in permutations(range(m)):
        total = sum(cost[i, perm[i]] for i in range(m))
        if total < best_total:
            best_total, best_perm = total, perm
    return float(best_total), best_perm


def brute_force_w2(samples: np.ndarray, reference: np.ndarray) -> float:
    """Exact 2-Wasserstein via exhaustive matching (small sets only)."""
    m = samples.shape[0]
    cost = np.sum((samples[:, None, :] - reference[None, :, :]) ** 2, axis=2)
    best, _ = brute_force_assignment(cost)
    return float(np.sqrt(best / m))


def numeric_jacobian(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of a vector-valued function."""
    x = np.asarray(x, dtype=np.float64)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((f(x + e) - f(x - e)) / (2.0 * h))
    return np.stack(cols, axis=1)


def random_graph_check(seed: int, h: float = 1e-5) -> float:
    """Build one random taped graph (<=3 layers, width <=8) and return the
    max relative error between backward and central finite differences."""
    rng = np.random.default_rng(seed)
    layers = int(rng.integers(1, 4))
    widths = [int(rng.integers(2, 9)) for _ in range(layers + 1)]
    batch = int(rng.integers(1, 5))
    mats = [rng.standard_normal((widths[i], widths[i + 1])) for i in range(layers)]
    biases = [rng.standard_normal(widths[i + 1]) for i in range(layers)]
    acts = [rng.choice(["gelu", "tanh", "square", "none"]) for _ in range(layers)]
    x0 = rng.standard_normal((batch, widths[0]))
    scale = rng.standard_normal(widths[-1])

    def forward(params):
        h_t = params["x"]
        for i in range(layers):
            h_t = affine(h_t, params[f"w{i}"], params[f"b{i}"])
            if acts[i] == "gelu":
                h_t = gelu(h_t)
            elif acts[i] == "tanh":
                h_t = tanh(h_t)
            elif acts[i] == "square":
                h_t = square(h_t)
        return tsum(mul(h_t, np.broadcast_to(scale, h_t.data.shape)))

    arrays = {"x": x0}
    for i in range(layers):
        arrays[f"w{i}"] = mats[i]
        arrays[f"b{i}"] = biases[i]

    tape = Tape()
    leaves = {k: tape.leaf(v) for k, v in arrays.items()}
    grads = backward(forward(leaves))

    worst = 0.0
    for name, arr in arrays.items():
        g = grads.wrt(leaves[name])
        flat = arr.reshape(-1)
        gflat = np.asarray(g).reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            fp = forward({k: Tensor(v) for k, v in arrays.items()}).item()
            flat[j] = orig - h
            fm = forward({k: Tensor(v) for k, v in arrays.items()}).item()
            flat[j] = orig
            fd = (fp - fm) / (2.0 * h)
            worst = max(worst, abs(gflat[j] - fd) / max(1.0, abs(fd)))
    return worst
