"""Radial symmetrisation of variable Lévy kernels.

For a kernel ``kappa(z)`` with ``1/kappa0 <= kappa <= kappa0`` on the ball
``B_R`` the map ``Phi(z) = psi(|z|, w) w`` (``w = z/|z|``), with ``psi``
defined by

    int_psi^R kappa(t w) t^(-1-alpha) dt = int_r^R t^(-1-alpha) dt ,

pushes the pure power-law measure ``dz/|z|^(m+alpha)`` forward to
``kappa(z) dz/|z|^(m+alpha)``.  A kinetic operator with a variable kernel
in the velocity jumps can then be simulated as an ordinary jump SDE whose
jump coefficient is ``Phi``.

Radial integrals are computed in ``u = log t`` with composite
Gauss-Legendre panels; this is vectorised over many (state, ray) pairs at
once, which is what the simulator needs when it applies ``Phi`` to a batch
of jumps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import expr as ex
from .errors import KernelBoundsError, QuadratureError, RootBracketError
from .model import LargeJumpChannel, SdeModel, mark_variables
from .quadrature import gauss_legendre, radial_levy_integral, sphere_rule
from .vecfield import VectorField


@dataclass(frozen=True)
class QuadConfig:
    """Panel width in ``log t``, Gauss-Legendre order and tolerances."""

    width: float = 0.5
    order: int = 16
    rtol: float = 1e-10
    root_tol: float = 1e-12
    max_newton: int = 60
    r0_rel: float | None = None  # None: quadrature.auto_cutoff(alpha)


DEFAULT_QUAD = QuadConfig()


def _cum_integral(kfun, r, alpha, R, cfg: QuadConfig):
    """``I(r) = int_r^R kfun(t) t^(-1-alpha) dt`` for an array of radii.

    ``kfun`` receives ``t`` of shape ``r.shape + (q,)``.  Each radius gets
    its own partition of ``[log r, log R]`` into equal panels.
    """
    r = np.asarray(r, dtype=float)
    lr = np.log(r)
    lR = math.log(R)
    span = lR - lr
    npan = max(1, int(math.ceil(float(np.max(span, initial=0.0)) / cfg.width)))
    x, w = gauss_legendre(cfg.order)
    k = np.arange(npan)
    # node u = lr + span * (k + (x+1)/2) / npan
    frac = ((k[:, None] + (x[None, :] + 1) / 2) / npan).ravel()
    wq = np.tile(w / 2, npan) / npan
    u = lr[..., None] + span[..., None] * frac
    t = np.exp(u)
    vals = kfun(t) * np.exp(-alpha * u)
    return span * np.sum(vals * wq, axis=-1)


def _check_r(r, R):
    r = np.asarray(r, dtype=float)
    if np.any(~(r > 0)):
        raise ValueError("radius must be positive")
    if np.any(r > R * (1 + 1e-12)):
        raise ValueError("radius exceeds R")
    return np.minimum(r, R)


def phi_radial(kappa_ray: Callable, r, alpha: float, R: float, cfg: QuadConfig = DEFAULT_QUAD):
    """``phi(r) = [alpha int_r^R kappa(t) t^(-1-alpha) dt + R^(-alpha)]^(-1/alpha)``.

    ``kappa_ray`` maps an array of radii along the ray to kernel values; ``r``
    may be a scalar or an array.  The quadrature is repeated on panels of
    half width and a QuadratureError raised if the two differ by more than
    ``cfg.rtol`` relative.

    Examples
    --------
    >>> round(float(phi_radial(lambda t: 2.0 + 0 * t, 0.5, 1.0, 1.0)), 12)
    0.333333333333
    """
    r = _check_r(r, R)
    I = _cum_integral(kappa_ray, r, alpha, R, cfg)
    I2 = _cum_integral(kappa_ray, r, alpha, R, QuadConfig(cfg.width / 2, cfg.order))
    scale = np.maximum(np.abs(I2) + R ** -alpha / alpha, 1e-300)
    if np.any(np.abs(I - I2) > cfg.rtol * scale):
        raise QuadratureError("radial kernel integral did not reach tolerance")
    out = (alpha * I2 + R ** -alpha) ** (-1.0 / alpha)
    return float(out) if out.ndim == 0 else out


def _bounds_from_ray(kfun, shape, R, n=65):
    t = np.broadcast_to(np.linspace(R / n, R, n), tuple(shape) + (n,))
    k = kfun(t)
    return float(max(np.max(k), 1.0 / np.min(k))) * (1 + 1e-9)


class _RayTable:
    """Cumulative integrals ``int_t^R kappa(s w_i) s^(-1-alpha) ds`` along rays.

    Panel-edge values on a fixed log grid are accumulated once per ray;
    a lookup adds a single Gauss-Legendre panel from ``t`` to the next
    edge, so it is exact to quadrature precision rather than interpolated.
    ``kfun`` maps ``t (n, q)`` (row ``i`` on ray ``i``) to ``(n, q)``.
    """

    def __init__(self, kfun, n, alpha, R, t_min, cfg: QuadConfig):
        self.kfun, self.n, self.alpha, self.R = kfun, n, alpha, R
        self.x, self.w = gauss_legendre(cfg.order)
        lR = math.log(R)
        span = lR - math.log(t_min)
        self.P = max(1, int(math.ceil(span / cfg.width)))
        self.wd = span / self.P
        self.u0 = lR - self.P * self.wd
        edges = self.u0 + self.wd * np.arange(self.P + 1)
        half = self.wd / 2
        u = ((edges[:-1] + half)[:, None] + half * self.x[None, :]).ravel()
        vals = self._k(np.broadcast_to(np.exp(u), (n, u.size))) * np.exp(-alpha * u)
        panel = (vals.reshape(n, self.P, -1) * self.w).sum(axis=2) * half
        # cum[:, p] = integral from edge p up to R
        self.cum = np.concatenate([np.cumsum(panel[:, ::-1], axis=1)[:, ::-1], np.zeros((n, 1))], axis=1)

    def _k(self, t):
        shape = t.shape
        return self.kfun(t.reshape(self.n, -1)).reshape(shape)

    def integral(self, t):
        """``t (n, k)`` -> ``(n, k)``."""
        lt = np.log(t)
        p = np.clip(np.floor((lt - self.u0) / self.wd).astype(int), 0, self.P - 1)
        right = self.u0 + (p + 1) * self.wd
        half = (right - lt) / 2
        u = (lt + half)[..., None] + half[..., None] * self.x
        vals = self._k(np.exp(u)) * np.exp(-self.alpha * u)
        part = (vals * self.w).sum(axis=-1) * half
        return part + np.take_along_axis(self.cum, p + 1, axis=1)

    def kappa_at(self, t):
        return self._k(t)


def _solve_psi(kfun, r, alpha, R, kappa0, cfg: QuadConfig):
    """Vectorised safeguarded Newton in ``log psi`` for radii ``r (n, k)``.

    ``G(v) = I(e^v) - (r^-alpha - R^-alpha)/alpha`` is decreasing with
    ``G'(v) = -kappa(e^v) e^(-alpha v)``; iterates leaving the bracket are
    replaced by bisection.
    """
    r = np.asarray(r, dtype=float)
    n = r.shape[0]
    target = (r ** -alpha - R ** -alpha) / alpha
    # small slack so a sharp kappa0 does not put the root on the bracket edge
    lo = np.log(np.maximum(kappa0 ** (-1.0 / alpha) * r, 1e-300)) - 1e-6
    hi = np.log(np.minimum(R, kappa0 ** (1.0 / alpha) * r * (1 + 1e-6)))
    lo = np.minimum(lo, hi)
    table = _RayTable(kfun, n, alpha, R, float(np.exp(lo.min())) * 0.999, cfg)

    def G(v):
        return table.integral(np.exp(v)) - target

    glo, ghi = G(lo), G(hi)
    tol_abs = 1e-12 * (np.abs(target) + R ** -alpha)
    if np.any(glo < -tol_abs) or np.any(ghi > tol_abs):
        raise RootBracketError(
            "psi not bracketed by the kappa0 bounds; kappa leaves [1/kappa0, kappa0]")
    v = 0.5 * (lo + hi)
    done = hi - lo <= 0
    v = np.where(done, hi, v)
    for _ in range(cfg.max_newton):
        gv = G(v)
        lo = np.where(gv > 0, v, lo)
        hi = np.where(gv > 0, hi, v)
        dG = -table.kappa_at(np.exp(v)) * np.exp(-alpha * v)
        step = gv / dG
        vn = v - step
        conv = np.abs(step) < cfg.root_tol
        out = ~conv & ((vn < lo) | (vn > hi) | ~np.isfinite(vn))
        vn = np.where(out, 0.5 * (lo + hi), vn)
        v = np.where(done, v, vn)
        done = done | conv
        if done.all():
            break
    else:
        raise QuadratureError("Newton iteration for psi did not converge")
    return np.exp(v)


def psi_radial(kappa_ray: Callable, r, alpha: float, R: float, kappa0: float | None = None,
               cfg: QuadConfig = DEFAULT_QUAD):
    """Inverse radial profile: ``phi(psi(r)) = r``.

    The root is sought in ``[kappa0^(-1/alpha) r, min(R, kappa0^(1/alpha) r)]``;
    if ``kappa0`` is omitted it is estimated from ``kappa_ray`` on a
    uniform grid of the ray.

    Examples
    --------
    >>> abs(float(psi_radial(lambda t: 2.0 + 0 * t, 0.5, 1.0, 1.0)) - 2 / 3) < 1e-12
    True
    """
    r = _check_r(r, R)
    if kappa0 is None:
        kappa0 = _bounds_from_ray(kappa_ray, (), R)
    shape = np.shape(r)
    out = _solve_psi(kappa_ray, np.reshape(r, (1, -1)), alpha, R, kappa0, cfg).reshape(shape)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# kernel transform


def _kernel_callable(kappa, state_vars, mark_vars):
    """Turn an expression (or text) into ``f(x (..., D), z (..., m)) -> (...)``."""
    if callable(kappa) and not isinstance(kappa, ex.Expr):
        return kappa
    e = ex.parse_expr(kappa, tuple(state_vars) + tuple(mark_vars)) if isinstance(kappa, str) else kappa
    f = ex.compile_exprs([e], tuple(state_vars) + tuple(mark_vars))
    D = len(state_vars)

    def k(x, z):
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        shape = np.broadcast_shapes(x.shape[:-1], z.shape[:-1])
        xb = np.broadcast_to(x, shape + (D,))
        zb = np.broadcast_to(z, shape + (z.shape[-1],))
        return f(np.concatenate([xb, zb], axis=-1))[..., 0]

    return k


@dataclass
class KernelTransform:
    """``Phi(x, z) = psi_x(|z|, z/|z|) z/|z|`` on the ball of radius ``R``.

    ``kappa(x, z)`` accepts broadcastable arrays ``x (..., D)`` and
    ``z (..., m)``.  ``D`` may be zero (state-free kernel).
    """

    kappa: Callable
    alpha: float
    R: float
    kappa0: float
    mark_dim: int = 1
    state_dim: int = 0
    quad: QuadConfig = DEFAULT_QUAD
    kappa_expr: object = None
    variables: tuple = ()

    def __post_init__(self):
        if not 0 < self.alpha < 2:
            raise ValueError("alpha must lie in (0, 2)")
        if self.kappa0 < 1:
            raise ValueError("kappa0 must be >= 1")

    def _prep(self, x, z):
        z = np.atleast_2d(np.asarray(z, dtype=float))
        if z.shape[-1] != self.mark_dim:
            raise ValueError(f"z must have trailing dimension {self.mark_dim}")
        n = z.shape[0]
        if x is None:
            x = np.zeros((n, self.state_dim))
        x = np.asarray(x, dtype=float)
        x = np.broadcast_to(x if x.ndim == 2 else x.reshape(1, -1), (n, self.state_dim))
        return x, z

    def radius(self, x, z):
        """``psi(|z|, w)`` for each row; zero for ``z = 0``."""
        x, z = self._prep(x, z)
        r = np.linalg.norm(z, axis=1)
        if np.any(r > self.R * (1 + 1e-12)):
            raise ValueError("z outside the ball B_R")
        nz = r > 0
        out = np.zeros(len(r))
        if nz.any():
            w = z[nz] / r[nz, None]
            out[nz] = self.radius_on_rays(x[nz], w, r[nz, None])[:, 0]
        return out

    def radius_on_rays(self, x, w, r):
        """``psi`` for states ``x (n, D)``, unit directions ``w (n, m)`` and
        radii ``r (n, k)``; radii on one row share a cumulative table."""

        def kfun(t):
            return self.kappa(x[:, None, :], t[..., None] * w[:, None, :])

        return _solve_psi(kfun, np.minimum(r, self.R), self.alpha, self.R, self.kappa0, self.quad)

    def __call__(self, z, x=None):
        x, z = self._prep(x, z)
        r = np.linalg.norm(z, axis=1)
        s = self.radius(x, z)
        scale = np.divide(s, r, out=np.zeros_like(s), where=r > 0)
        return z * scale[:, None]

    def a(self, z, x=None):
        """``a(x, z) = |Phi(x, z)| / |z|`` (``z != 0``)."""
        x, z = self._prep(x, z)
        return self.radius(x, z) / np.linalg.norm(z, axis=1)

    def grad_at_zero(self, x=None):
        """``kappa(x, 0)^(1/alpha) I`` (the limit of ``grad_z Phi`` at 0)."""
        xx, z0 = self._prep(x, np.zeros((1, self.mark_dim)))
        k = float(self.kappa(xx, z0)[0])
        return k ** (1.0 / self.alpha) * np.eye(self.mark_dim)

    def fd_jacobian(self, z, x=None, h=1e-4):
        """Central finite-difference ``grad_z Phi`` at one point ``z``."""
        z = np.asarray(z, dtype=float).reshape(self.mark_dim)
        E = np.eye(self.mark_dim) * h
        zp = z + E
        zm = z - E
        rows = (self(zp, x) - self(zm, x)) / (2 * h)
        return rows.T


def build_transform(kappa, alpha: float, R: float, kappa0: float, quad: QuadConfig = DEFAULT_QUAD,
                    mark_dim: int = 1, state_vars=()) -> KernelTransform:
    """Construct a KernelTransform from an expression, text, or callable kernel.

    Text/expressions are in ``z1..zm`` (and optionally the names in
    ``state_vars``).  A constant kernel may also be given as a number.
    """
    mv = mark_variables(mark_dim)
    if isinstance(kappa, (int, float)):
        kappa = ex.Const(float(kappa))
    kexpr = None
    if isinstance(kappa, (str, ex.Expr)):
        kexpr = ex.parse_expr(kappa, tuple(state_vars) + mv) if isinstance(kappa, str) else kappa
    kf = _kernel_callable(kexpr if kexpr is not None else kappa, state_vars, mv)
    return KernelTransform(kf, alpha, R, kappa0, mark_dim, len(state_vars), quad, kexpr, tuple(state_vars))


def check_kernel_bounds(T: KernelTransform, n: int = 4096, seed: int = 0, x_box=None):
    """Verify ``1/kappa0 <= kappa <= kappa0`` and evenness on a probe grid."""
    from scipy.stats import qmc

    D, m = T.state_dim, T.mark_dim
    u = qmc.Halton(d=D + m + 1, scramble=True, seed=seed).random(n)
    if D:
        lo = np.array([b[0] for b in x_box]) if x_box else -3 * np.ones(D)
        hi = np.array([b[1] for b in x_box]) if x_box else 3 * np.ones(D)
        x = lo + (hi - lo) * u[:, :D]
    else:
        x = np.zeros((n, 0))
    dirs = u[:, D:D + m] * 2 - 1
    dirs /= np.maximum(np.linalg.norm(dirs, axis=1, keepdims=True), 1e-12)
    z = dirs * (T.R * u[:, -1:])
    k = T.kappa(x, z)
    kneg = T.kappa(x, -z)
    if np.any(k < 1 / T.kappa0 - 1e-12) or np.any(k > T.kappa0 + 1e-12):
        i = int(np.argmax(np.maximum(k - T.kappa0, 1 / T.kappa0 - k)))
        raise KernelBoundsError(f"kappa={k[i]:.6g} outside [1/kappa0, kappa0] with kappa0={T.kappa0}")
    return {"kappa_min": float(k.min()), "kappa_max": float(k.max()),
            "even": bool(np.allclose(k, kneg, rtol=0, atol=1e-12))}


def _as_function(f, m):
    if callable(f) and not isinstance(f, ex.Expr):
        return f
    e = ex.parse_expr(f, mark_variables(m)) if isinstance(f, str) else f
    g = ex.compile_exprs([e], mark_variables(m))
    return lambda z: g(z)[..., 0]


@dataclass
class IdentityCheck:
    lhs: float
    rhs: float
    rel_error: float
    stderr: float | None = None

    def to_dict(self):
        return dict(lhs=self.lhs, rhs=self.rhs, rel_error=self.rel_error, stderr=self.stderr)


def verify_identity(T: KernelTransform, f, x=None, cfg: QuadConfig | None = None,
                    n_sphere: int = 32, mc_samples: int = 200000, seed: int = 0) -> IdentityCheck:
    """Compare ``int f(Phi(z)) nu(dz)`` with ``int f(z) kappa(z) nu(dz)`` on ``B_R``.

    Polar quadrature for ``m <= 3`` (log-radial Gauss-Legendre panels with
    an ``r^2`` closure near the origin), Monte Carlo above.  ``f`` must
    vanish at least quadratically at 0.
    """
    m = T.mark_dim
    fz = _as_function(f, m)
    xx = np.zeros((1, T.state_dim)) if x is None else np.asarray(x, dtype=float).reshape(1, -1)
    if m > 3:
        return _verify_mc(T, fz, xx, mc_samples, seed)
    cfg = cfg or QuadConfig(width=0.5, order=16)
    nodes, wsph = sphere_rule(m, n_sphere)

    def rhs_F(r):
        z = r[:, None, None] * nodes[None, :, :]
        vals = fz(z) * T.kappa(xx[:, None, :], z)
        return vals @ wsph

    xr = np.broadcast_to(xx, (len(nodes), T.state_dim))

    def lhs_F(r):
        rr = np.broadcast_to(r, (len(nodes), len(r)))
        psi = T.radius_on_rays(xr, nodes, rr)  # (rays, radii)
        phi = psi.T[:, :, None] * nodes[None, :, :]
        return fz(phi) @ wsph

    try:
        rhs = float(radial_levy_integral(rhs_F, T.R, T.alpha, cfg.r0_rel, cfg.width, cfg.order, rtol=1e-8))
        lhs = float(radial_levy_integral(lhs_F, T.R, T.alpha, cfg.r0_rel, cfg.width, cfg.order, rtol=1e-8))
    except QuadratureError as err:
        raise QuadratureError(f"{err}; f may not vanish quadratically at 0") from None
    return IdentityCheck(lhs, rhs, abs(lhs - rhs) / max(abs(rhs), 1e-300))


def _verify_mc(T, fz, xx, n, seed):
    rng = np.random.default_rng(seed)
    m = T.mark_dim
    from .quadrature import sphere_area

    g = rng.standard_normal((n, m))
    w = g / np.linalg.norm(g, axis=1, keepdims=True)
    r0 = T.R * 1e-6
    u = rng.uniform(math.log(r0), math.log(T.R), n)
    r = np.exp(u)
    z = w * r[:, None]
    weight = sphere_area(m) * (math.log(T.R) - math.log(r0)) * r ** (-T.alpha)
    a = fz(T(z, np.broadcast_to(xx, (n, T.state_dim)))) * weight
    b = fz(z) * T.kappa(xx, z) * weight
    lhs, rhs = float(a.mean()), float(b.mean())
    se = float(np.std(a - b) / math.sqrt(n))
    return IdentityCheck(lhs, rhs, abs(lhs - rhs) / max(abs(rhs), 1e-300), se / max(abs(rhs), 1e-300))


def gradient_regularity(T: KernelTransform, direction=None, radii=None, x=None, h_rel=1e-3):
    """Ratios ``|grad Phi(z) - grad Phi(0)| / |z|^alpha`` along a ray."""
    m = T.mark_dim
    w = np.ones(m) / math.sqrt(m) if direction is None else np.asarray(direction, float) / np.linalg.norm(direction)
    radii = np.geomspace(T.R / 4, T.R * 1e-4, 12) if radii is None else np.asarray(radii)
    G0 = T.grad_at_zero(x)
    out = []
    for r in radii:
        Gz = T.fd_jacobian(r * w, x, h=r * h_rel)
        out.append(np.abs(Gz - G0).max() / r ** T.alpha)
    return radii, np.array(out)


# ---------------------------------------------------------------------------
# kinetic operator


@dataclass
class KineticModel:
    """``K u = v.grad_x u + b.grad_v u + int (u(x, v+w) - u) kappa(x,v,w) dw/|w|^(d+alpha)``.

    ``kappa`` and ``b`` are expressions over ``x1..xd, v1..vd`` (and
    ``z1..zd`` standing for ``w`` in ``kappa``).
    """

    d: int
    kappa: object
    b: tuple
    alpha: float = 1.0
    delta: float = 0.5
    kappa0: float = 2.0
    name: str = "kinetic"
    box: tuple | None = None
    quad: QuadConfig = field(default_factory=QuadConfig)

    def __post_init__(self):
        sv = self.state_vars
        mv = mark_variables(self.d)
        if isinstance(self.kappa, str):
            self.kappa = ex.parse_expr(self.kappa, sv + mv)
        self.b = tuple(ex.parse_expr(c, sv) if isinstance(c, str) else ex.as_expr(c) for c in self.b)
        if len(self.b) != self.d:
            raise ValueError(f"b needs {self.d} components")

    @property
    def state_vars(self) -> tuple:
        return tuple(f"x{i + 1}" for i in range(self.d)) + tuple(f"v{i + 1}" for i in range(self.d))

    def transform(self) -> KernelTransform:
        return build_transform(self.kappa, self.alpha, self.delta, self.kappa0, self.quad,
                               mark_dim=self.d, state_vars=self.state_vars)

    def kappa_fn(self):
        return _kernel_callable(self.kappa, self.state_vars, mark_variables(self.d))


class TransformJump:
    """Jump coefficient ``g((x, v), w) = (0, Phi(x, v, w))`` of a kinetic model.

    Jacobians are central finite differences of the quadrature-backed map.
    """

    symbolic = False

    def __init__(self, km: KineticModel, fd_step: float = 1e-6):
        self.km = km
        self.T = km.transform()
        self.state_vars = km.state_vars
        self.mark_vars = mark_variables(km.d)
        self.fd_step = fd_step

    @property
    def dim(self):
        return 2 * self.km.d

    @property
    def mark_dim(self):
        return self.km.d

    def _flat(self, x, z):
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        shape = np.broadcast_shapes(x.shape[:-1], z.shape[:-1])
        return (np.broadcast_to(x, shape + (self.dim,)).reshape(-1, self.dim),
                np.broadcast_to(z, shape + (self.mark_dim,)).reshape(-1, self.mark_dim), shape)

    def value(self, x, z):
        X, Z, shape = self._flat(x, z)
        out = np.zeros((len(X), self.dim))
        if len(X):
            out[:, self.km.d:] = self.T(Z, X)
        return out.reshape(shape + (self.dim,))

    def jac_x(self, x, z):
        X, Z, shape = self._flat(x, z)
        n, D = X.shape
        out = np.zeros((n, D, D))
        for j in range(D):
            h = self.fd_step * np.maximum(1.0, np.abs(X[:, j]))
            Xp, Xm = X.copy(), X.copy()
            Xp[:, j] += h
            Xm[:, j] -= h
            out[:, :, j] = (self.value(Xp, Z) - self.value(Xm, Z)) / (2 * h[:, None])
        return out.reshape(shape + (D, D))

    def jac_z(self, x, z):
        X, Z, shape = self._flat(x, z)
        n, m = Z.shape
        out = np.zeros((n, self.dim, m))
        R = self.T.R
        for j in range(m):
            h = self.fd_step * R
            Zp, Zm = Z.copy(), Z.copy()
            Zp[:, j] += h
            Zm[:, j] -= h
            # keep both probes inside the ball, degrading to one-sided at the rim
            rp = np.linalg.norm(Zp, axis=1)
            Zp = np.where((rp > R)[:, None], Z, Zp)
            hp = np.where(rp > R, 0.0, h)
            out[:, :, j] = (self.value(X, Zp) - self.value(X, Zm)) / (hp + h)[:, None]
        return out.reshape(shape + (self.dim, m))

    def fields(self) -> list:
        """``Ã_k = kappa(x, v, 0)^(1/alpha) e_{v_k}`` built symbolically."""
        km = self.km
        if km.kappa is None or not isinstance(km.kappa, ex.Expr):
            raise TypeError("symbolic jump fields need an expression kernel")
        k0 = ex.simplify(ex.subs(km.kappa, {z: 0.0 for z in self.mark_vars}))
        a = ex.simplify(ex.power(k0, ex.Const(1.0 / km.alpha))) if km.alpha != 1 else k0
        out = []
        for k in range(km.d):
            comps = [ex.ZERO] * self.dim
            comps[km.d + k] = a
            out.append(VectorField(tuple(comps), self.state_vars))
        return out

    def vanishes_at_zero(self) -> bool:
        return True


def kinetic_to_sde(km: KineticModel, check: bool = True) -> SdeModel:
    """SDE form of a kinetic model: drift ``(v, b)``, jumps ``(0, Phi(x, v, w))``
    for ``|w| < delta`` and a thinned large-jump channel for ``|w| >= delta``."""
    jump = TransformJump(km)
    if check:
        check_kernel_bounds(jump.T, x_box=km.box)
    sv = km.state_vars
    drift = VectorField(tuple(ex.Var(f"v{i + 1}") for i in range(km.d)) + tuple(km.b), sv)
    kfun = km.kappa_fn()
    large = LargeJumpChannel(km.delta, km.alpha, km.kappa0, kfun, tuple(range(km.d, 2 * km.d)), km.d)
    return SdeModel(km.name, drift, (), jump, km.alpha, zmax=km.delta, odd_g=True,
                    large_jumps=large, box=km.box,
                    notes="velocity jumps below delta via the symmetrising transform; larger ones by thinning",
                    meta={"kinetic": km})
