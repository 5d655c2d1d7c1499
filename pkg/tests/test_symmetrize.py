import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlhormander.errors import KernelBoundsError, RootBracketError
from nlhormander.symmetrize import (KineticModel, build_transform, check_kernel_bounds, gradient_regularity,
                                    kinetic_to_sde, phi_radial, psi_radial, verify_identity)
from nlhormander.vecfield import build_hierarchy, uniform_check


def const(c):
    return lambda t: np.full_like(np.asarray(t, dtype=float), c)


def test_phi_psi_constant_kernel():
    assert phi_radial(const(2.0), 0.5, 1.0, 1.0) == pytest.approx(1 / 3, abs=1e-10)
    assert psi_radial(const(2.0), 0.5, 1.0, 1.0, kappa0=2.0) == pytest.approx(2 / 3, abs=1e-8)
    r = np.linspace(0.05, 1.0, 7)
    np.testing.assert_allclose(phi_radial(const(1.0), r, 0.8, 1.0), r, rtol=1e-10)
    np.testing.assert_allclose(psi_radial(const(1.0), r, 0.8, 1.0, kappa0=1.0), r, rtol=1e-10)


def test_endpoint_maps_to_radius():
    k = lambda t: 1.5 + 0.4 * np.cos(3 * t)
    assert phi_radial(k, 1.0, 1.2, 1.0) == pytest.approx(1.0, abs=1e-12)
    assert psi_radial(k, 1.0, 1.2, 1.0, kappa0=2.0) == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 1.0), st.floats(0.3, 1.8), st.floats(-0.5, 0.5), st.floats(0.5, 4.0))
def test_roundtrip_and_bounds(r, alpha, amp, freq):
    k = lambda t: 1.0 + amp * np.sin(freq * t) ** 2
    k0 = 2.0
    psi = float(psi_radial(k, r, alpha, 1.0, kappa0=k0))
    assert phi_radial(k, psi, alpha, 1.0) == pytest.approx(r, rel=1e-9)
    lo, hi = k0 ** (-1 / alpha) * r, min(1.0, k0 ** (1 / alpha) * r)
    assert lo * (1 - 1e-9) <= psi <= hi * (1 + 1e-9)


def test_monotone_profile():
    k = lambda t: 1.5 + 0.4 * np.cos(5 * t)
    r = np.linspace(1e-3, 1.0, 200)
    psi = psi_radial(k, r, 0.9, 1.0, kappa0=2.0)
    assert np.all(np.diff(psi) > 0)


def test_psi_raises_when_kernel_leaves_bounds():
    with pytest.raises(RootBracketError):
        psi_radial(const(5.0), 0.3, 1.0, 1.0, kappa0=2.0)


def test_transform_spot_values():
    T = build_transform(2.0, 1.0, 1.0, 2.0)
    np.testing.assert_allclose(T([[0.5], [-0.5]]), [[2 / 3], [-2 / 3]], atol=1e-9)
    I = build_transform(1.0, 1.3, 1.0, 1.0, mark_dim=2)
    z = np.array([[0.3, -0.4], [0.01, 0.02]])
    np.testing.assert_allclose(I(z), z, rtol=1e-10)
    np.testing.assert_array_equal(T(np.zeros((1, 1))), [[0.0]])


def test_oddness_and_a_bounds():
    T = build_transform("1.5 + 0.4*cos(3*z1)*cos(z2)", 0.8, 1.0, 2.0, mark_dim=2)
    rng = np.random.default_rng(1)
    g = rng.standard_normal((10_000, 2))
    z = g / np.linalg.norm(g, axis=1, keepdims=True) * rng.uniform(1e-3, 1.0, (10_000, 1))
    np.testing.assert_allclose(T(z) + T(-z), 0.0, atol=1e-10)
    a = T.a(z)
    assert np.all(a >= 2 ** (-1 / 0.8) - 1e-12) and np.all(a <= 2 ** (1 / 0.8) + 1e-12)
    rim = z / np.linalg.norm(z, axis=1, keepdims=True)
    np.testing.assert_allclose(np.linalg.norm(T(rim[:50]), axis=1), 1.0, atol=1e-9)


@pytest.mark.parametrize("alpha", [1.5, 1.2, 1.0])
def test_gradient_at_zero_exponent(alpha):
    # the finite-difference error is O(h^alpha), so alpha >= 1 keeps it below 1e-3
    T = build_transform("1.5 + 0.4*z1^2", alpha, 1.0, 2.0)
    fd = T.fd_jacobian([0.0], h=1e-4)[0, 0]
    assert fd == pytest.approx(1.5 ** (1 / alpha), rel=1e-3)
    assert abs(fd - 1.5) > 1e-2 or alpha == 1.0


KERNELS = ["1", "2", "1.5 + 0.4*cos(3*z1)", "1 + 0.5*exp(-(z1^2))", "1.2 + 0.3*z1^2"]
TESTS = ["z1^2", "z1^2*(1 - abs(z1))", "1 - cos(2*z1)", "z1^2*exp(z1)", "sin(z1)^2"]


@pytest.mark.parametrize("kernel", KERNELS)
@pytest.mark.parametrize("f", TESTS)
def test_identity_suite(kernel, f):
    T = build_transform(kernel, 0.7, 1.0, 2.0)
    assert verify_identity(T, f).rel_error < 1e-5


def test_identity_closed_form_rhs():
    T = build_transform(2.0, 1.0, 1.0, 2.0)
    r = verify_identity(T, "z1^2")
    assert r.rhs == pytest.approx(4.0, rel=1e-10)
    assert r.lhs == pytest.approx(4.0, rel=1e-6)


def test_identity_two_and_three_dims():
    T2 = build_transform("1.5 + 0.4*z1*z2", 1.2, 1.0, 2.0, mark_dim=2)
    assert verify_identity(T2, "z1^2 + z2^2").rel_error < 1e-8
    T3 = build_transform("1.5 + 0.4*z1*z3", 1.2, 1.0, 2.0, mark_dim=3)
    assert verify_identity(T3, "1 - cos(z2)").rel_error < 1e-8


def test_identity_monte_carlo_dimension_four():
    T = build_transform("1.5", 1.0, 1.0, 2.0, mark_dim=4)
    r = verify_identity(T, "z1^2 + z4^2", mc_samples=100_000)
    assert r.stderr is not None
    assert abs(r.lhs - r.rhs) < 4 * r.stderr * abs(r.rhs) + 1e-12


def test_gradient_regularity_ratio_bounded():
    T = build_transform("1.5 + 0.4*cos(3*z1)", 0.6, 1.0, 2.0)
    radii, ratio = gradient_regularity(T)
    assert np.all(np.isfinite(ratio))
    assert ratio.max() < 10 * max(ratio[0], 1e-3)


def test_kernel_bounds_check():
    T = build_transform("1.5 + 0.4*cos(v1)*exp(-(z1^2))", 1.0, 0.5, 2.0, state_vars=("x1", "v1"))
    info = check_kernel_bounds(T)
    assert info["even"] and 1.0 < info["kappa_min"] <= info["kappa_max"] <= 1.9
    bad = build_transform("3 + z1^2", 1.0, 1.0, 2.0)
    with pytest.raises(KernelBoundsError):
        check_kernel_bounds(bad)


def test_kinetic_constant_and_additive():
    km = KineticModel(1, "2", ("0",), alpha=1.0, delta=1.0, kappa0=2.0)
    model = kinetic_to_sde(km)
    g = model.jump.value(np.array([0.3, 0.1]), np.array([0.5]))
    assert g[0] == 0.0 and g[1] == pytest.approx(2 / 3, abs=1e-8)
    km1 = KineticModel(1, "1", ("0",), alpha=1.0, delta=1.0, kappa0=1.0)
    g1 = kinetic_to_sde(km1).jump.value(np.array([0.3, 0.1]), np.array([0.37]))
    np.testing.assert_allclose(g1, [0.0, 0.37], atol=1e-10)


def test_kinetic_default_passes_hormander():
    km = KineticModel(1, "1.5 + 0.4*cos(v1)*exp(-(z1^2))", ("-x1",), alpha=1.0, delta=0.5, kappa0=2.0)
    model = kinetic_to_sde(km)
    H = build_hierarchy(model, 1)
    rep = uniform_check(H, [(-3, 3), (-3, 3)], 2000, c0=1e-3)
    assert rep.passed
    # the bracket with the transport drift produces an x-direction
    assert any(str(V).split(",")[0].strip() != "0" for V in H.levels[1])
