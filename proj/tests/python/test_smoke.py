import math

import numpy as np
import pytest

import relu_ntk


def arccos1(t):
    return (math.sqrt(1.0 - t * t) + (math.pi - math.acos(t)) * t) / (2.0 * math.pi)


def test_version():
    assert relu_ntk.__version__ == "0.1.0"


def test_series_kernel_matches_closed_form():
    rng = np.random.default_rng(0)
    for _ in range(20):
        x, y = rng.standard_normal(4), rng.standard_normal(4)
        k = relu_ntk.ntk_series(x, y)
        c = x @ y / (np.linalg.norm(x) * np.linalg.norm(y))
        assert abs(k.value - np.linalg.norm(x) * np.linalg.norm(y) * arccos1(c)) <= k.tail_bound + 1e-12


def test_special_values():
    e0, e1 = np.eye(3)[0], np.eye(3)[1]
    assert relu_ntk.ntk_series(e0, e1).value == pytest.approx(1.0 / (2.0 * math.pi))
    assert relu_ntk.ntk_series(e0, e0).value == pytest.approx(0.5)
    assert relu_ntk.remainder_kernel(e0, e0).value == pytest.approx(0.25 - 3.0 / (4.0 * math.pi), abs=1e-9)
    assert relu_ntk.ntk_series(np.zeros(3), e0).value == 0.0
    near = relu_ntk.ntk_series(e0, np.array([-1.0, 0.02, 0.0]))
    assert near.closed_tail and near.converged


def test_monte_carlo_oracle():
    x, y = np.array([1.0, 0.5, -0.2]), np.array([0.3, -1.0, 0.8])
    mc = relu_ntk.ntk_mc_oracle(x, y, 100000, 3)
    assert abs(mc.value - relu_ntk.ntk_series(x, y).value) <= 4 * mc.std_error


def test_network_and_fisher():
    w = relu_ntk.sample_network(3, 40, 7)
    assert w.shape == (3, 40)
    assert np.array_equal(w, relu_ntk.sample_network(3, 40, 7))
    j = relu_ntk.fisher_exact(w)
    assert j.shape == (40, 40)
    assert np.allclose(j, j.T)
    assert np.allclose(np.diag(j), 0.5 * (w * w).sum(axis=0))
    values, vectors = relu_ntk.eigendecompose(j)
    assert np.all(np.diff(values) <= 1e-12)
    assert np.allclose(vectors @ np.diag(values) @ vectors.T, j, atol=1e-10)
    jac, _ = relu_ntk.eigendecompose(j, "jacobi")
    assert np.allclose(jac, values, atol=1e-10)
    phi = relu_ntk.feature_map(w, np.ones(3))
    assert np.allclose(phi, np.maximum(w.T @ np.ones(3), 0.0))
    u = np.zeros(40)
    u[0] = 1.0
    assert relu_ntk.kl_divergence(u, np.zeros(40), j) == pytest.approx(0.5 * j[0, 0])


def test_eigenfunctions():
    assert relu_ntk.eigenfunction("F0", np.array([3.0, 4.0])) == pytest.approx(5 / math.sqrt(2))
    assert relu_ntk.eigenfunction("cross", np.array([1.0, 2.0, 2.0]), [0, 1]) == pytest.approx(math.sqrt(5) * 2 / 3)
    assert len(relu_ntk.basis_labels(5)) == 20
    assert relu_ntk.basis_values(np.array([1.0, 2.0, 2.0])).shape == (9,)
    with pytest.raises(ValueError):
        relu_ntk.eigenfunction("cross", np.zeros(3), [0, 1])
    with pytest.raises(ValueError):
        relu_ntk.eigenfunction("nope", np.ones(3))


def test_rayleigh_and_intervals():
    r = relu_ntk.rayleigh_quotient("linear", 4, [0], n_samples=40000, seed=2)
    assert abs(r.value - 0.25) <= 4 * r.std_error
    (lo0, hi0), (lo2, hi2) = relu_ntk.mu_intervals(5)
    assert lo0 == pytest.approx(11 / (4 * math.pi))
    assert hi2 - lo2 == pytest.approx(0.026 / 8)


def test_gradient_flow():
    t = relu_ntk.gradient_flow(np.ones(1), np.zeros(1), np.array([0.25]), 0.1, 5)
    err = 1.0 - np.array(t["theta"][0])
    assert np.allclose(err[1:] / err[:-1], 0.975)


def test_run_suite_and_bad_config():
    report = relu_ntk.run_suite("flow", {"samples": 20000, "m": 300})
    assert report["suites"][0]["suite"] == "flow"
    assert all("anchor" in r for r in report["suites"][0]["records"])
    with pytest.raises(ValueError):
        relu_ntk.run_suite("flow", {"samples": 0})
    with pytest.raises(ValueError):
        relu_ntk.run_suite("flow", {"unknown_key": 1})
