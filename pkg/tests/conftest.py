import numpy as np
import pytest

from sa_diffusion.predictor import MLPPredictor


def random_mlp(dim=2, T=16, hidden=(8,), embed=4, seed=0, activation="silu", out_scale=0.5):
    """Small MLP with a non-zero output layer so gradients reach every parameter."""
    rng = np.random.default_rng(seed)
    p = MLPPredictor.init(dim, T, hidden_sizes=hidden, time_embed_dim=embed, activation=activation, rng=rng)
    arrays = p.arrays()
    arrays[-2] = out_scale * rng.standard_normal(arrays[-2].shape)
    arrays[-1] = out_scale * rng.standard_normal(arrays[-1].shape)
    return p.with_arrays(arrays)


def finite_difference(loss_fn, params, h=1e-5, indices=None):
    """Central differences of ``loss_fn(params)`` for selected (array, flat index) pairs."""
    arrays = params.arrays()
    out = []
    for a_idx, f_idx in indices:
        plus = [a.copy() for a in arrays]
        minus = [a.copy() for a in arrays]
        plus[a_idx].flat[f_idx] += h
        minus[a_idx].flat[f_idx] -= h
        out.append((loss_fn(params.with_arrays(plus)) - loss_fn(params.with_arrays(minus))) / (2 * h))
    return np.array(out)


def all_indices(params):
    return [(i, j) for i, a in enumerate(params.arrays()) for j in range(a.size)]


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-6))


@pytest.fixture
def tiny_mlp():
    return random_mlp()


ACCEPTANCE_LINES = []


def record_acceptance(number, name, ok, detail):
    line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {name} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
