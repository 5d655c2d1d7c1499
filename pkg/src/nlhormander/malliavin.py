"""Jump linearisation, Malliavin matrices and Laplace-transform decay.

The reduced matrix ``Sigma_hat_t = int_0^t K_s (A A^T + Ã Ã^T)(X_s) K_s^T ds``
is accumulated by the simulator; this module adds the full matrix
``Sigma^(1) + Sigma^(2)`` (Brownian part plus a cut-off sum over small
jumps), the geometric quantities ``Q`` and ``U`` of a jump, and Monte Carlo
estimates of ``E exp(-lambda u Sigma_hat_t u^T)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .errors import JumpConditionError
from .quadrature import radial_levy_integral, sphere_rule
from .simulate import PathSample, simulate_ensemble, zeta_cutoff
from .vecfield import VectorField, lie_bracket


@dataclass
class JumpLinearization:
    """``M = I + grad_x g``, ``Q = M^-1 - I`` and ``U = M^-1 grad_z g`` at one (x, z)."""

    M: np.ndarray
    Q: np.ndarray
    U: np.ndarray


def _jump_matrices(model, x, z):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    z = np.atleast_2d(np.asarray(z, dtype=float))
    d = model.dim
    M = np.eye(d) + model.jump.jac_x(x, z)
    det = np.linalg.det(M)
    if not np.all(det > 0):
        i = int(np.argmin(det))
        raise JumpConditionError(
            f"det(I + grad_x g) = {det[i]:.3g} at x={x[i].tolist()}, z={z[i].tolist()}: "
            "condition (H_g°) fails")
    return x, z, M


def jump_linearization(model, x, z) -> JumpLinearization:
    """Linearisation of the jump map ``x -> x + g(x, z)``.

    Examples
    --------
    >>> from nlhormander.model import sde_from_strings
    >>> m = sde_from_strings("e1", ["-sin(x1)"], g=["cos(x1)*z1"])
    >>> L = jump_linearization(m, [0.0], [0.3])
    >>> float(L.Q[0, 0]), float(L.U[0, 0])
    (0.0, 1.0)
    """
    if model.jump is None:
        raise ValueError("model has no jump coefficient")
    xs, zs, M = _jump_matrices(model, x, z)
    Minv = np.linalg.inv(M[0])
    U = np.linalg.solve(M[0], model.jump.jac_z(xs, zs)[0])
    return JumpLinearization(M[0], Minv - np.eye(model.dim), U)


def _field_fn(V: VectorField):
    f = V.evaluator()
    return lambda x: f(np.asarray(x, dtype=float))


def _field_jac_fn(V: VectorField):
    d = V.dim
    f = ex.compile_exprs([c for row in V.jacobian() for c in row], V.variables)
    return lambda x: f(np.asarray(x, dtype=float)).reshape(np.shape(x)[:-1] + (d, d))


def g_v(model, V: VectorField, x, z):
    """``G_V(x, z) = V(x + g) - V(x) + Q(x, z) V(x + g)`` for rows of ``z``."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    x = np.broadcast_to(np.asarray(x, dtype=float), (len(z), model.dim))
    _, _, M = _jump_matrices(model, x, z)
    Vf = _field_fn(V)
    y = x + model.jump.value(x, z)
    Vy = Vf(y)
    Qv = np.linalg.solve(M, Vy[..., None])[..., 0] - Vy
    return Vy - Vf(x) + Qv


def gv_check(model, V: VectorField, x, h: float = 1e-4) -> float:
    """``|| grad_z G_V(x, 0) - [Ã, V](x) ||_inf`` with central differences in ``z``.

    Column ``k`` of the bracket matrix is ``lie_bracket(Ã_k, V)``.
    """
    m = model.mark_dim
    x = np.asarray(x, dtype=float).reshape(model.dim)
    E = np.eye(m) * h
    fd = (g_v(model, V, x, E) - g_v(model, V, x, -E)).T / (2 * h)
    br = np.stack([_field_fn(lie_bracket(A, V))(x) for A in model.jump_fields], axis=1)
    return float(np.max(np.abs(fd - br)))


def h_delta(model, V: VectorField, x, delta: float, n_sphere: int = 32, rtol: float = 1e-9):
    """``H^delta_V(x) = int_{|z|<=delta} [G_V + grad_x g V - (g.grad) V](x, z) nu(dz)``.

    The integrand is averaged over the pair ``{z, -z}`` so that only its
    ``O(|z|^2)`` even part is integrated.

    Examples
    --------
    >>> from nlhormander.model import sde_from_strings
    >>> from nlhormander.vecfield import parse_field
    >>> m = sde_from_strings("add", ["0"], g=["z1"])
    >>> round(float(h_delta(m, parse_field("x1^2", 1), [0.3], 0.5)[0]), 9)
    1.0
    """
    d, m = model.dim, model.mark_dim
    x = np.asarray(x, dtype=float).reshape(d)
    Vf, DV = _field_fn(V), _field_jac_fn(V)
    Vx, DVx = Vf(x), DV(x)
    nodes, w = sphere_rule(m, n_sphere)

    def F(r):
        z = (r[:, None, None] * nodes[None, :, :]).reshape(-1, m)
        xs = np.broadcast_to(x, (len(z), d))
        g = model.jump.value(xs, z)
        Gx = model.jump.jac_x(xs, z)
        val = g_v(model, V, x, z) + Gx @ Vx - g @ DVx.T
        zm = -z
        gm = model.jump.value(xs, zm)
        valm = g_v(model, V, x, zm) + model.jump.jac_x(xs, zm) @ Vx - gm @ DVx.T
        pair = 0.5 * (val + valm)
        return np.einsum("rqi,q->ri", pair.reshape(len(r), len(w), d), w)

    # the integrand cancels terms of size |V| and |grad V|; roundoff there sets the floor
    atol = 1e-10 * (1.0 + np.abs(Vx).max() + np.abs(DVx).max())
    return radial_levy_integral(F, delta, model.alpha, rtol=rtol, atol=atol)


@dataclass(frozen=True)
class MalliavinConfig:
    """Cut-off ``zeta(z) = |z|^(1+ell) eta(|z|)``: ``eta = 1`` below ``delta/4``,
    0 above ``delta/2``, quintic smoothstep in between."""

    ell: float = 2.0
    delta: float = 0.5

    def __post_init__(self):
        if self.ell < 2:
            raise ValueError("cutoff order ell must be >= 2")
        if self.delta <= 0:
            raise ValueError("delta must be positive")

    def zeta(self, r):
        return zeta_cutoff(r, self.ell, self.delta)


@dataclass
class FullMatrix:
    sigma1: np.ndarray
    sigma2: np.ndarray

    @property
    def total(self):
        return self.sigma1 + self.sigma2


def accumulate_full_matrix(path: PathSample, model, config: MalliavinConfig) -> FullMatrix:
    """Brownian part by the left rectangle rule on the recorded grid, jump
    part summed over the logged jumps with ``zeta(z) > 0``."""
    d = model.dim
    S1 = np.zeros((d, d))
    if model.n_brownian:
        dt = np.diff(path.times)
        sig = model.sigma_eval(path.states[:-1])
        KS = np.einsum("nij,njk->nik", path.K[:-1], sig)
        S1 = np.einsum("nik,njk,n->ij", KS, KS, dt)
    S2 = np.zeros((d, d))
    if path.jumps:
        z = np.array([e.mark for e in path.jumps])
        zeta = config.zeta(np.linalg.norm(z, axis=1))
        sel = np.nonzero(zeta > 0)[0]
        if len(sel):
            xb = np.array([path.jumps[i].state_before for i in sel])
            Kb = np.array([path.jumps[i].k_before for i in sel])
            M = np.eye(d) + model.jump.jac_x(xb, z[sel])
            U = np.linalg.solve(M, model.jump.jac_z(xb, z[sel]))
            KU = np.einsum("nij,njk->nik", Kb, U)
            S2 = np.einsum("nik,njk,n->ij", KU, KU, zeta[sel])
    return FullMatrix(0.5 * (S1 + S1.T), 0.5 * (S2 + S2.T))


def kolmogorov_sigma_oracle(t: float, alpha: float | None = None) -> np.ndarray:
    """Closed-form ``Sigma_hat_t`` for the linear Kolmogorov example.

    ``K_s Ã = (-sin s, cos s)``; the integral does not depend on ``alpha``.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    s2 = math.sin(t) ** 2 / 2
    return np.array([[t / 2 - math.sin(2 * t) / 4, -s2], [-s2, t / 2 + math.sin(2 * t) / 4]])


def fibonacci_directions(d: int, n: int) -> np.ndarray:
    """``n`` unit vectors spread over the sphere (d = 2: equal angles in a
    half circle; d = 3: Fibonacci lattice; otherwise Halton-normalised)."""
    if d == 1:
        return np.ones((1, 1))
    if d == 2:
        th = np.pi * np.arange(n) / n
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    if d == 3:
        i = np.arange(n) + 0.5
        phi = np.arccos(1 - 2 * i / n)
        th = np.pi * (1 + 5 ** 0.5) * i
        return np.stack([np.cos(th) * np.sin(phi), np.sin(th) * np.sin(phi), np.cos(phi)], axis=1)
    from scipy.stats import qmc
    from scipy.special import ndtri

    g = ndtri(qmc.Halton(d=d, scramble=True, seed=0).random(n))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


@dataclass
class LaplaceReport:
    lambdas: np.ndarray
    estimate: np.ndarray
    stderr: np.ndarray
    diff_stderr: np.ndarray
    u: np.ndarray
    t: float
    N: int
    failures: int = 0
    gamma: float | None = None
    c2: float | None = None
    fit_points: int = 0
    flags: list = field(default_factory=list)
    det_quantiles: dict | None = None

    @property
    def decay_observed(self) -> bool:
        return self.gamma is not None

    def strictly_decreasing(self, k: float = 2.0) -> bool:
        """Every consecutive drop exceeds ``k`` standard errors of the paired difference."""
        drops = self.estimate[:-1] - self.estimate[1:]
        return bool(np.all(drops > k * self.diff_stderr))

    def to_dict(self):
        return dict(lambdas=self.lambdas.tolist(), estimate=self.estimate.tolist(),
                    stderr=self.stderr.tolist(), u=self.u.tolist(), t=self.t, N=self.N,
                    failures=self.failures, gamma=self.gamma, c2=self.c2,
                    fit_points=self.fit_points, flags=list(self.flags),
                    det_quantiles=self.det_quantiles)


def laplace_from_sigma(S, u, lambdas, t, lo=1e-3, hi=0.5, failures=0) -> LaplaceReport:
    """Laplace estimates from per-path matrices ``S (N, d, d)``."""
    u = np.asarray(u, dtype=float)
    if abs(np.linalg.norm(u) - 1) > 1e-9:
        raise ValueError("u must be a unit vector")
    lam = np.asarray(lambdas, dtype=float)
    if np.any(lam < 0) or np.any(np.diff(lam) <= 0):
        raise ValueError("lambda grid must be nonnegative and increasing")
    q = np.einsum("i,nij,j->n", u, S, u)
    N = len(q)
    E = np.exp(-np.outer(q, lam))  # (N, L)
    est = E.mean(axis=0)
    se = E.std(axis=0) / math.sqrt(N)
    dse = (E[:, :-1] - E[:, 1:]).std(axis=0) / math.sqrt(N) if len(lam) > 1 else np.zeros(0)
    rep = LaplaceReport(lam, est, se, dse, u, float(t), N, failures)
    drops = est[:-1] - est[1:]
    if np.any(drops < -2 * dse - 1e-15):
        rep.flags.append("non-monotone beyond 2 SE")
    sel = (est >= lo) & (est <= hi) & (lam > 0)
    rep.fit_points = int(sel.sum())
    if rep.fit_points >= 2:
        y = np.log(-np.log(est[sel]))
        slope, icpt = np.polyfit(np.log(lam[sel]), y, 1)
        rep.gamma = float(slope)
        rep.c2 = float(math.exp(icpt) / t)
    else:
        rep.flags.append("no observed decay")
    return rep


def det_quantiles(S) -> dict:
    """1 %, 5 % and median of ``det Sigma`` over paths (a proxy for inverse moments)."""
    det = np.linalg.det(S)
    q = np.quantile(det, [0.01, 0.05, 0.5])
    return {"q01": float(q[0]), "q05": float(q[1]), "median": float(q[2])}


def laplace_transform(model, scheme, x, u, t, lambdas, N, seed=None, workers=1,
                      u_sweep: int | None = None) -> LaplaceReport:
    """Monte Carlo ``E exp(-lambda u Sigma_hat_t(x) u^T)`` over a lambda grid.

    With ``u_sweep = n`` the direction is chosen as the worst of ``n``
    sphere directions (largest mean estimate) and ``u`` is ignored.
    """
    res = simulate_ensemble(model, scheme, x, t, N, seed, sigma_hat=True, workers=workers)
    S = res.sigma_hat[~res.failed]
    if u_sweep:
        best = None
        for v in fibonacci_directions(model.dim, u_sweep):
            rep = laplace_from_sigma(S, v, lambdas, t, failures=res.n_failed)
            if best is None or rep.estimate.sum() > best.estimate.sum():
                best = rep
        rep = best
    else:
        rep = laplace_from_sigma(S, u, lambdas, t, failures=res.n_failed)
    rep.det_quantiles = det_quantiles(S)
    return rep
