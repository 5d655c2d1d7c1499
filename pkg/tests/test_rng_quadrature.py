import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from nlhormander import rng
from nlhormander.quadrature import (auto_cutoff, radial_levy_integral, second_moment_constant, sphere_area,
                                    sphere_rule)


def test_stream_reproducible_and_distinct():
    a = rng.RngStream(11, 4).uniform(1000)
    b = rng.RngStream(11, 4).uniform(1000)
    c = rng.RngStream(11, 5).uniform(1000)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    assert abs(np.corrcoef(a, c)[0, 1]) < 0.1


def test_uniforms_open_interval_and_uniform():
    u = rng.uniforms(rng.stream_keys(0, 0, 0), np.arange(200_000))
    assert u.min() > 0 and u.max() < 1
    assert stats.kstest(u, "uniform").pvalue > 1e-3


def test_counter_access_is_random_access():
    key = rng.stream_keys(3, np.arange(5), rng.BROWNIAN)
    block = rng.uniforms(key[:, None], np.arange(10)[None, :])
    single = rng.uniforms(key[2], 7)
    assert block[2, 7] == single


def test_normals_moments():
    z = rng.normals(rng.stream_keys(1, 0, rng.BROWNIAN), np.arange(100_000))
    assert abs(z.mean()) < 0.02 and abs(z.std() - 1) < 0.02


def test_sphere_constants():
    assert sphere_area(1) == 2.0
    assert sphere_area(2) == pytest.approx(2 * math.pi)
    assert sphere_area(3) == pytest.approx(4 * math.pi)
    # int_{|z|<1} z_1^2 dz/|z|^(1+alpha) = 2/(2-alpha) for m = 1
    assert second_moment_constant(1, 0.5) * 1 == pytest.approx(2 / 1.5 / 1)


@pytest.mark.parametrize("m", [1, 2, 3])
def test_sphere_rule_integrates_polynomials(m):
    nodes, w = sphere_rule(m, 24)
    assert w.sum() == pytest.approx(sphere_area(m))
    np.testing.assert_allclose(np.linalg.norm(nodes, axis=1), 1.0)
    # mean of w_1^2 on the sphere is 1/m
    assert (w * nodes[:, 0] ** 2).sum() / w.sum() == pytest.approx(1 / m)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 1.9), st.floats(0.3, 3.0))
def test_radial_integral_against_scipy(alpha, R):
    F = lambda r: r ** 2 * np.exp(-r) * (1 + np.cos(r))
    val = radial_levy_integral(F, R, alpha)
    ref, _ = integrate.quad(lambda r: float(F(np.array(r))) * r ** (-1 - alpha), 0, R, limit=200)
    assert val == pytest.approx(ref, rel=1e-7)


def test_radial_integral_closed_form():
    # int_0^R r^2 r^(-1-alpha) dr = R^(2-alpha)/(2-alpha)
    for a in (0.3, 1.0, 1.7):
        assert radial_levy_integral(lambda r: r ** 2, 2.0, a) == pytest.approx(2 ** (2 - a) / (2 - a), rel=1e-12)


def test_auto_cutoff_range():
    assert 1e-7 < auto_cutoff(0.5) < auto_cutoff(1.9) < 1e-3
