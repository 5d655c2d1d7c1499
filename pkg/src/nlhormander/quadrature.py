"""Quadrature rules for radial Lévy integrals ``int f(z) dz / |z|^(m+alpha)``.

In polar coordinates the measure is ``r^(-1-alpha) dr dω``; the radial part
is integrated in ``u = log r`` with composite Gauss-Legendre panels, and
the piece below ``r0`` is closed by the leading ``c r^2`` behaviour of the
(symmetrised) integrand.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .errors import QuadratureError


def sphere_area(m: int) -> float:
    """Surface measure of the unit sphere in R^m (2 for m = 1)."""
    return 2.0 * math.pi ** (m / 2.0) / math.gamma(m / 2.0)


def second_moment_constant(m: int, alpha: float) -> float:
    """``c`` in ``int_{|z|<=delta} z_i z_j dz/|z|^(m+alpha) = c 1_{i=j} delta^(2-alpha)``."""
    return sphere_area(m) / (m * (2.0 - alpha))


@lru_cache(maxsize=64)
def gauss_legendre(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


@lru_cache(maxsize=64)
def sphere_rule(m: int, n: int = 32):
    """Nodes (k, m) and weights (k,) integrating over the unit sphere.

    m=1: the two points ±1.  m=2: n equispaced angles (exact for
    trigonometric polynomials of degree < n).  m=3: Gauss-Legendre in
    cos(θ) times equispaced φ.
    """
    if m == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if m == 2:
        th = 2 * np.pi * (np.arange(n) + 0.5) / n
        return np.stack([np.cos(th), np.sin(th)], axis=1), np.full(n, 2 * np.pi / n)
    if m == 3:
        nt = max(n // 2, 4)
        ct, wt = gauss_legendre(nt)
        ph = 2 * np.pi * (np.arange(n) + 0.5) / n
        st = np.sqrt(1 - ct ** 2)
        nodes = np.stack(
            [np.outer(st, np.cos(ph)).ravel(), np.outer(st, np.sin(ph)).ravel(),
             np.repeat(ct, n)], axis=1)
        weights = np.outer(wt, np.full(n, 2 * np.pi / n)).ravel()
        return nodes, weights
    raise ValueError("sphere quadrature supports m <= 3; use Monte Carlo above")


def log_panels(lo: float, hi: float, width: float = 0.5, order: int = 16):
    """Nodes/weights for ``int_lo^hi F(r) dr`` written in ``u = log r``.

    Returned weights already include the Jacobian ``dr = r du``.
    """
    if not 0 < lo < hi:
        raise ValueError("need 0 < lo < hi")
    ulo, uhi = math.log(lo), math.log(hi)
    n = max(1, math.ceil((uhi - ulo) / width))
    x, w = gauss_legendre(order)
    edges = np.linspace(ulo, uhi, n + 1)
    half = (edges[1:] - edges[:-1])[:, None] / 2
    mid = (edges[1:] + edges[:-1])[:, None] / 2
    u = (mid + half * x).ravel()
    wu = (half * w).ravel()
    r = np.exp(u)
    return r, wu * r


def auto_cutoff(alpha: float) -> float:
    """Relative inner cutoff ``eps^(1/(2+alpha))``.

    The linear closure is off by ``O(r0^2)`` once the integrand deviates
    from ``r^2 (a + b r)`` at relative order ``r^alpha``, while cancellation
    in the integrand costs about ``eps r0^(-alpha)``; this balances the two.
    """
    return float(np.finfo(float).eps ** (1.0 / (2.0 + alpha)))


def radial_levy_integral(F, R: float, alpha: float, r0_rel: float | None = None,
                         width: float = 0.5, order: int = 16, check: bool = True,
                         rtol: float = 1e-9, atol: float = 1e-13):
    """``int_0^R F(r) r^(-1-alpha) dr`` for ``F(r) ~ c r^2`` near zero.

    ``F`` maps an array of radii to an array of the same leading shape
    (trailing dimensions are carried through).  On ``[0, r0]`` the ratio
    ``F(r)/r^2`` is replaced by the line through its values at ``r0`` and
    ``2 r0`` and integrated exactly; the default ``r0`` comes from
    :func:`auto_cutoff`.  With ``check``
    the integral is recomputed on panels of half width and a
    QuadratureError raised if the two disagree beyond both ``rtol`` and
    ``atol``.
    """
    r0 = R * (auto_cutoff(alpha) if r0_rel is None else r0_rel)

    def once(wd):
        r, w = log_panels(r0, R, wd, order)
        vals = np.asarray(F(r), dtype=float)
        scale = (w * r ** (-1.0 - alpha)).reshape((-1,) + (1,) * (vals.ndim - 1))
        body = np.sum(vals * scale, axis=0)
        # F(r)/r^2 ~ a + b r from r0 and 2 r0, integrated over [0, r0]
        f1, f2 = np.asarray(F(np.array([r0, 2 * r0])), dtype=float)
        q1, q2 = f1 / r0 ** 2, f2 / (4 * r0 ** 2)
        b = (q2 - q1) / r0
        a = q1 - b * r0
        tail = a * r0 ** (2 - alpha) / (2 - alpha) + b * r0 ** (3 - alpha) / (3 - alpha)
        return body + tail

    val = once(width)
    if check:
        fine = once(width / 2)
        err = np.max(np.abs(fine - val))
        scale = max(np.max(np.abs(fine)), 1e-300)
        if not np.all(np.isfinite(fine)):
            raise QuadratureError("non-finite integrand")
        if err > rtol * scale and err > atol:
            raise QuadratureError(f"radial quadrature error {err:.3g} exceeds tolerance")
        return fine
    return val
