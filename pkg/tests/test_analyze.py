import math

import numpy as np
import pytest
from scipy import stats

from nlhormander import registry
from nlhormander.analyze import (axis_xi, chapman_kolmogorov, char_function, default_grid, generator_residual,
                                 generator_value, kde, kde_stability, silverman_bandwidth)
from nlhormander.model import sde_from_strings
from nlhormander.simulate import SimulationScheme, simulate_ensemble


def test_kde_standard_normal():
    # about 8 % of seeds exceed 0.01 somewhere on the grid; the seed is pinned
    x = np.random.default_rng(2024).standard_normal(100_000)
    g = np.linspace(-3, 3, 241)
    est = kde(x, "silverman", [g])
    assert np.max(np.abs(est.values - stats.norm.pdf(g))) < 0.01
    assert np.all(est.values >= 0)


def test_kde_single_bump_and_integral():
    est = kde([0.0], 0.05, [np.linspace(-1, 1, 4001)])
    assert est.integral() == pytest.approx(1.0, abs=1e-9)
    assert np.argmax(est.values) == 2000
    x = np.random.default_rng(1).standard_normal((5000, 2))
    est2 = kde(x)
    assert 0.99 <= est2.integral() <= 1.01
    assert [len(g) for g in est2.grid] == [256, 256]


def test_kde_errors_and_bandwidth():
    with pytest.raises(ValueError):
        kde([])
    with pytest.raises(ValueError):
        kde([0.0, 1.0], 0.0)
    with pytest.raises(ValueError):
        kde(np.zeros((5, 3)))
    h = silverman_bandwidth(np.random.default_rng(0).standard_normal(10_000))
    assert h[0] == pytest.approx(0.9 * 10_000 ** -0.2, rel=0.05)


def test_default_grid_spans_five_sd():
    x = np.random.default_rng(3).normal(2.0, 0.5, (4000, 1))
    (g,) = default_grid(x)
    assert g[0] == pytest.approx(2 - 2.5, abs=0.05) and g[-1] == pytest.approx(2 + 2.5, abs=0.05)


def test_char_function_gaussian_and_trivial():
    N = 100_000
    x = np.random.default_rng(5).standard_normal(N)
    prof = char_function(x, [0.0, 2.0])
    assert prof.modulus[0] == 1.0
    assert prof.modulus[1] == pytest.approx(math.exp(-2), abs=3 / math.sqrt(N))
    assert prof.noise_floor == pytest.approx(3 / math.sqrt(N))
    pm = char_function(np.full((50, 2), 0.7), axis_xi(2, 1, 40.0, 101))
    np.testing.assert_allclose(pm.modulus, 1.0, atol=1e-12)
    assert pm.first_below_floor() is None


def test_char_function_dimension_check():
    with pytest.raises(ValueError):
        char_function(np.zeros((4, 2)), np.zeros((3, 3)))


def test_negative_control_singular_direction():
    m = registry.negative_control()
    res = simulate_ensemble(m, SimulationScheme(h=1e-2, eps=0.05, seed=1), [0.0, 0.0], 1.0, 2000)
    prof = char_function(res.terminal, axis_xi(2, 1, 40.0, 81))
    np.testing.assert_allclose(prof.modulus, 1.0, atol=1e-12)
    prof1 = char_function(res.terminal, axis_xi(2, 0, 40.0, 81))
    assert prof1.first_below_floor() is not None


def test_kde_stability_example1():
    res = simulate_ensemble(registry.example1(), SimulationScheme(h=1e-2, eps=0.05, seed=3), [0.0], 1.0,
                            100_000)
    info = kde_stability(res.good())
    assert info["sup_change"] < 0.1
    assert 0.9 <= info["integral"] <= 1.01


def test_chapman_kolmogorov_deterministic_and_s0():
    m = sde_from_strings("decay", ["-x1"])
    sch = SimulationScheme(h=1e-3)
    rep = chapman_kolmogorov(m, sch, [1.0], 0.3, 0.2, "x1", 20, M=4, seed=1)
    assert rep.one_shot == pytest.approx(math.exp(-0.5), abs=1e-3)
    assert rep.discrepancy == pytest.approx(0.0, abs=1e-12)
    e1 = registry.example1()
    rep0 = chapman_kolmogorov(e1, SimulationScheme(h=1e-2, eps=0.05), [0.0], 0.5, 0.0, "cos(x1)", 500, seed=2)
    assert rep0.discrepancy == 0.0


def test_chapman_kolmogorov_example1():
    rep = chapman_kolmogorov(registry.example1(), SimulationScheme(h=1e-2, eps=0.05), [0.0], 0.5, 0.5,
                             "cos(x1)", 10_000, M=32, seed=5)
    assert abs(rep.discrepancy) <= 3 * rep.pooled_se
    assert rep.failures == 0


def test_generator_closed_forms():
    assert generator_value(registry.example1(), "x1^2", [0.0]) == pytest.approx(2.0, rel=1e-9)
    drift = sde_from_strings("b", ["1"])
    assert generator_value(drift, "x1", [0.4]) == pytest.approx(1.0)
    rep = generator_residual(drift, "x1", [0.4], [0.1, 0.01], 3)
    np.testing.assert_allclose(rep.increment, 1.0, rtol=1e-9)
    bm = sde_from_strings("bm", ["0"], sigma=[["1"]])
    assert generator_value(bm, "x1^2", [3.0]) == pytest.approx(1.0)
    ou = sde_from_strings("ou", ["-x1"], sigma=[["1"]])
    assert generator_value(ou, "x1^2", [3.0]) == pytest.approx(1 - 18.0)


def test_generator_residual_example1():
    sch = SimulationScheme(h=1e-3, eps=0.02, small_jump_mode="gaussian", seed=9)
    rep = generator_residual(registry.example1(), "x1^2", [0.0], [0.1, 0.05, 0.02, 0.01], 100_000, sch)
    assert rep.generator == pytest.approx(2.0)
    assert abs(rep.residual[-1]) <= 3 * rep.stderr[-1]
    assert np.all(np.diff(np.abs(rep.residual)) < 0)
