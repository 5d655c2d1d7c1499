import math

import numpy as np
import pytest
from scipy import integrate
from scipy.linalg import expm

from nlhormander import registry
from nlhormander.model import sde_from_strings
from nlhormander.rng import RngStream
from nlhormander.simulate import (SimulationScheme, excursion_probability, jump_rate, radius_icdf, sample_jumps,
                                  simulate_ensemble, simulate_path)

M = np.array([[0.0, 1.0], [-1.0, 0.0]])


def test_jump_rate_and_icdf():
    assert jump_rate(1.0, 0.1, 1.0, 1) == pytest.approx(18.0)
    assert radius_icdf(0.0, 1.3, 0.05, 1.0) == pytest.approx(0.05)
    assert radius_icdf(1.0, 1.3, 0.05, 1.0) == pytest.approx(1.0)
    u = np.linspace(0, 1, 50)
    assert np.all(np.diff(radius_icdf(u, 0.7, 0.01, 1.0)) > 0)


def test_poisson_count():
    lam = jump_rate(1.0, 0.1, 1.0, 1)
    T = 10.0
    counts = np.array([len(sample_jumps(1.0, 0.1, 1.0, 1, T, RngStream(5, p))) for p in range(1000)])
    assert abs(counts.mean() - lam * T) < 3 * math.sqrt(lam * T)
    assert counts.var() == pytest.approx(lam * T, rel=0.15)


def test_sample_jumps_agree_with_simulator():
    m = sde_from_strings("add", ["0"], g=["z1"])
    path = simulate_path(m, SimulationScheme(h=0.01, eps=0.1, seed=2), [0.0], 1.0, rng=3)
    ev = sample_jumps(1.0, 0.1, 1.0, 1, 1.0, RngStream(2, 3))
    assert [e.time for e in ev] == pytest.approx([e.time for e in path.jumps])
    assert path.states[-1, 0] == pytest.approx(sum(e.mark[0] for e in ev), abs=1e-12)


def test_trivial_model_is_frozen():
    m = sde_from_strings("zero", ["0", "0"])
    p = simulate_path(m, SimulationScheme(h=0.05), [1.0, -2.0], 1.0)
    np.testing.assert_array_equal(p.states[-1], [1.0, -2.0])
    np.testing.assert_array_equal(p.J[-1], np.eye(2))
    np.testing.assert_array_equal(p.K[-1], np.eye(2))
    np.testing.assert_array_equal(p.sigma_hat, np.zeros((2, 2)))


def test_brownian_identity_sigma_hat():
    m = sde_from_strings("bm", ["0", "0"], sigma=[["1", "0"], ["0", "1"]])
    p = simulate_path(m, SimulationScheme(h=0.01), [0.0, 0.0], 0.7)
    np.testing.assert_allclose(p.sigma_hat, 0.7 * np.eye(2), atol=1e-12)


def test_example4_flow_is_matrix_exponential():
    m = registry.example4()
    p = simulate_path(m, SimulationScheme(h=1e-3, eps=0.05, seed=1), [0.5, 0.5], 1.0)
    # Euler for J has an O(h) global error against exp(tM)
    np.testing.assert_allclose(p.J[-1], expm(M), atol=2e-3)
    assert p.flow_error() < 1e-8


@pytest.mark.parametrize("name", ["example1", "example2", "example3", "example4", "example5"])
def test_flow_inverse_consistency(name):
    m = registry.builtin(name)
    x0 = np.full(m.dim, 0.3)
    for s in range(3):
        p = simulate_path(m, SimulationScheme(h=1e-3, eps=0.05, seed=s), x0, 0.5)
        assert not p.failed
        norms = np.abs(p.J).sum(axis=2).max(axis=1)
        err = np.abs(np.einsum("nij,njk->nik", p.J, p.K) - np.eye(m.dim)).sum(axis=2).max(axis=1)
        assert np.all(err <= 1e-8 * (1 + norms))


def test_sigma_hat_monotone_psd():
    m = registry.example2()
    p = simulate_path(m, SimulationScheme(h=1e-2, eps=0.05, seed=4), [0.2, 0.1], 1.0)
    S = p.sigma_hat_path
    u = np.random.default_rng(0).standard_normal((20, 2))
    q = np.einsum("ki,nij,kj->nk", u, S, u)
    assert np.all(np.diff(q, axis=0) >= -1e-12)
    assert np.all(np.linalg.eigvalsh(S[-1]) > 0)


def test_example4_covariance():
    alpha = 0.5
    m = registry.example4(alpha=alpha)
    res = simulate_ensemble(m, SimulationScheme(h=1e-2, eps=1e-2, small_jump_mode="gaussian", seed=11),
                            [0.0, 0.0], 1.0, 10_000)
    e2 = np.array([0.0, 1.0])

    def integrand(s, i, j):
        v = expm(s * M) @ e2
        return v[i] * v[j]

    C = np.array([[integrate.quad(integrand, 0, 1, args=(i, j))[0] for j in range(2)] for i in range(2)])
    C *= 2 / (2 - alpha)
    S = np.cov(res.terminal.T)
    np.testing.assert_allclose(S, C, rtol=0.05)


def test_same_seed_same_terminal():
    m = registry.example1()
    sch = SimulationScheme(h=1e-2, eps=0.05)
    a = simulate_ensemble(m, sch, [0.1], 1.0, 1, seed=9).terminal
    b = simulate_ensemble(m, sch, [0.1], 1.0, 1, seed=9).terminal
    np.testing.assert_array_equal(a, b)


def test_ensemble_independent_of_workers_and_chunks():
    m = registry.example2()
    sch = SimulationScheme(h=1e-2, eps=0.05, seed=3)
    ref = simulate_ensemble(m, sch, [0.0, 0.0], 0.5, 600, sigma_hat=True)
    for workers, chunk in [(2, 100), (4, 37), (1, 600)]:
        r = simulate_ensemble(m, sch, [0.0, 0.0], 0.5, 600, sigma_hat=True, workers=workers, chunk=chunk)
        np.testing.assert_array_equal(r.terminal, ref.terminal)
        np.testing.assert_array_equal(r.sigma_hat, ref.sigma_hat)


def test_ensemble_matches_single_paths():
    m = registry.example1()
    sch = SimulationScheme(h=1e-2, eps=0.05, seed=6)
    ens = simulate_ensemble(m, sch, [0.2], 0.5, 5)
    for p in range(5):
        np.testing.assert_allclose(simulate_path(m, sch, [0.2], 0.5, rng=p).states[-1], ens.terminal[p],
                                   rtol=1e-12, atol=1e-14)


def test_linear_decay_mean():
    # Euler's own error is about x0 * exp(-T) * T * h / 2, well below 1e-6 here
    m = sde_from_strings("decay", ["-x1"])
    res = simulate_ensemble(m, SimulationScheme(h=2e-5), [0.1], 1.0, 4)
    np.testing.assert_allclose(res.terminal[:, 0], 0.1 * math.exp(-1), atol=1e-6)


def test_weak_order_sanity():
    m = registry.example1()
    phi = np.cos
    vals = []
    for h in (1e-2, 1e-3):
        t = simulate_ensemble(m, SimulationScheme(h=h, eps=0.05, seed=21), [0.3], 1.0, 10_000).terminal[:, 0]
        vals.append(phi(t))
    se = vals[1].std() / math.sqrt(len(vals[1]))
    assert abs(vals[0].mean() - vals[1].mean()) < se


def test_small_jump_bias_bound():
    alpha, T = 1.2, 1.0
    m = sde_from_strings("add", ["0"], g=["z1"], alpha=alpha)
    var = []
    for eps in (0.1, 0.05):
        t = simulate_ensemble(m, SimulationScheme(h=0.05, eps=eps, seed=8), [0.0], T, 20_000).terminal[:, 0]
        var.append(t.var())
    assert abs(var[0] - var[1]) <= 2 * T * (2 / (2 - alpha)) * 0.1 ** (2 - alpha)


def test_gaussian_mode_restores_variance():
    alpha = 1.2
    m = sde_from_strings("add", ["0"], g=["z1"], alpha=alpha)
    t = simulate_ensemble(m, SimulationScheme(h=0.01, eps=0.2, small_jump_mode="gaussian", seed=2),
                          [0.0], 1.0, 20_000).terminal[:, 0]
    assert t.var() == pytest.approx(2 / (2 - alpha), rel=0.05)


def test_excursion_trivial_and_monotone():
    zero = sde_from_strings("zero", ["0"])
    rep = excursion_probability(zero, SimulationScheme(h=1e-2), [0.0], 1.0, [0.2, 0.1], 100)
    assert np.all(rep.probability == 0) and rep.no_exceedances
    m = registry.example2()
    rep = excursion_probability(m, SimulationScheme(h=1e-3, eps=0.05, seed=1), [0.0, 0.0], 1.0,
                                [0.4, 0.2, 0.1], 4000, C=0.5)
    p, se = rep.probability, rep.stderr
    assert np.all(p[1:] <= p[:-1] + 2 * se[:-1])
    assert p[0] > 0


def test_guard_marks_failure():
    m = sde_from_strings("blow", ["x1^2"])
    p = simulate_path(m, SimulationScheme(h=1e-2), [2.0], 2.0)
    assert p.failed and p.message
    res = simulate_ensemble(m, SimulationScheme(h=1e-2), [2.0], 2.0, 3)
    assert res.n_failed == 3 and res.good().shape == (0, 1)


def test_scheme_validation():
    with pytest.raises(ValueError):
        SimulationScheme(h=0)
    with pytest.raises(ValueError):
        SimulationScheme(eps=0.1, delta=0.05)
    with pytest.raises(ValueError):
        SimulationScheme(small_jump_mode="exact")
    with pytest.raises(ValueError):
        simulate_path(registry.example1(), SimulationScheme(eps=1.5), [0.0], 0.1)
