"""Both kernel backends against each other and against direct formulas."""

import numpy as np
import pytest

from layerlens import _jit
from layerlens.probing import kernels
from layerlens.probing.probe import epoch_order, init_params

needs_numba = pytest.mark.skipif(not _jit.HAVE_NUMBA, reason="numba not installed")


def blobs(n=200, c=3, seed=0):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, c, n)
    x = (np.eye(c)[y] + 0.1 * rng.standard_normal((n, c))).astype(np.float32)
    return x, y


def loss_by_finite_differences(x, y, params, eps=1e-3):
    """Gradient of mean cross-entropy w.r.t. b2, by central differences in float64."""
    p64 = [p.astype(np.float64) for p in params]
    grads = np.zeros_like(p64[3])
    for q in range(len(grads)):
        for sign in (1, -1):
            shifted = [a.copy() for a in p64]
            shifted[3][q] += sign * eps
            grads[q] += sign * kernels.cross_entropy(kernels.forward_logits(x, shifted), y) / (2 * eps)
    return grads


@pytest.mark.parametrize("backend", ["numpy", pytest.param("numba", marks=needs_numba)])
def test_one_full_batch_step_matches_finite_differences(backend):
    x, y = blobs(32, 3)
    params = init_params(3, 16, 3, seed=0)
    before = [p.copy() for p in params]
    grad_b2 = loss_by_finite_differences(x, y, before)
    order = np.arange(len(y))[None, :]
    kernels.train_mlp(x, y, params, 1.0, order, batch_size=len(y), backend=backend)
    np.testing.assert_allclose(before[3] - params[3], grad_b2, rtol=1e-3, atol=1e-5)


@needs_numba
def test_backends_agree():
    x, y = blobs(300, 4)
    order = epoch_order(len(y), 5, seed=3)
    runs = {}
    for backend in ("numba", "numpy"):
        params = init_params(4, 64, 4, seed=1)
        losses = kernels.train_mlp(x, y, params, 0.05, order, 16, backend=backend)
        runs[backend] = (losses, params)
    np.testing.assert_allclose(runs["numba"][0], runs["numpy"][0], rtol=1e-4)
    for a, b in zip(runs["numba"][1], runs["numpy"][1]):
        np.testing.assert_allclose(a, b, rtol=1e-3, atol=1e-5)


@pytest.mark.parametrize("backend", ["numpy", pytest.param("numba", marks=needs_numba)])
def test_divergence_reported_as_nan(backend):
    x, y = blobs(64, 2)
    x *= 1e4
    params = init_params(2, 32, 2, seed=0)
    with np.errstate(all="ignore"):
        losses = kernels.train_mlp(x, y, params, 1e3, epoch_order(64, 20, 0), 8, backend=backend)
    assert not np.isfinite(losses).all()


@pytest.mark.parametrize("backend", ["numpy", pytest.param("numba", marks=needs_numba)])
def test_mean_cosine_against_formula(backend, rng):
    x = rng.standard_normal((5, 7))
    p = rng.standard_normal((3, 7))
    want = [np.mean([a @ b / (np.linalg.norm(a) * np.linalg.norm(b)) for b in p]) for a in x]
    np.testing.assert_allclose(kernels.mean_cosine(x, p, backend=backend), want, rtol=1e-12)


@pytest.mark.parametrize("backend", ["numpy", pytest.param("numba", marks=needs_numba)])
def test_mean_cosine_sign_flip_exact(backend, rng):
    x = rng.standard_normal((4, 6))
    p = rng.standard_normal((5, 6))
    assert np.array_equal(kernels.mean_cosine(-x, p, backend=backend), -kernels.mean_cosine(x, p, backend=backend))


def test_env_flag_selects_numpy(monkeypatch):
    import importlib

    monkeypatch.setenv(_jit.ENV_FLAG, "1")
    reloaded = importlib.reload(_jit)
    try:
        assert reloaded.backend() == "numpy"
    finally:
        monkeypatch.delenv(_jit.ENV_FLAG)
        importlib.reload(_jit)


def test_set_backend_validates():
    with pytest.raises(ValueError):
        _jit.set_backend("fortran")
