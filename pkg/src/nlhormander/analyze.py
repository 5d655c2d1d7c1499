"""Regularity evidence from ensembles.

Kernel density estimates, empirical characteristic functions, a nested
Monte Carlo test of the semigroup law and a comparison between the
generator and short-time increments.  None of these prove smoothness; they
are proxies whose thresholds are engineering choices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from . import expr as ex
from .quadrature import radial_levy_integral, second_moment_constant, sphere_rule
from .simulate import SimulationScheme, simulate_ensemble


def _samples2d(samples):
    X = np.asarray(samples, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.size == 0 or len(X) == 0:
        raise ValueError("empty sample set")
    return X


def silverman_bandwidth(samples) -> np.ndarray:
    """Silverman's rule on each marginal: ``0.9 min(sd, IQR/1.34) N^(-1/5)``."""
    X = _samples2d(samples)
    N, d = X.shape
    sd = X.std(axis=0, ddof=1) if N > 1 else np.ones(d)
    q75, q25 = np.percentile(X, [75, 25], axis=0)
    iqr = (q75 - q25) / 1.34
    scale = np.where(iqr > 0, np.minimum(sd, iqr), sd)
    scale = np.where(scale > 0, scale, 1.0)
    return 0.9 * scale * N ** -0.2


def default_grid(samples, n: int = 256, width: float = 5.0) -> list:
    """``n`` points per axis over ``mean +- width * sd``."""
    X = _samples2d(samples)
    mu, sd = X.mean(axis=0), X.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return [np.linspace(m - width * s, m + width * s, n) for m, s in zip(mu, sd)]


@dataclass
class DensityEstimate:
    grid: list
    bandwidth: np.ndarray
    values: np.ndarray
    n: int
    kernel: str = "gaussian"

    def integral(self) -> float:
        v = self.values
        for ax in reversed(range(len(self.grid))):
            v = trapezoid(v, self.grid[ax], axis=ax)
        return float(v)


def _kernel_matrix(x, grid, h):
    u = (grid[None, :] - x[:, None]) / h
    return np.exp(-0.5 * u * u) / (h * math.sqrt(2 * math.pi))


def kde(samples, bandwidth="silverman", grid=None, n_grid: int = 256, chunk: int = 8192) -> DensityEstimate:
    """Gaussian product-kernel density estimate on a tensor grid (d <= 2).

    Points are folded in fixed chunks in sample order so the result is
    reproducible.

    Examples
    --------
    >>> est = kde([0.0], 0.1, [np.linspace(-1, 1, 2001)])
    >>> round(est.integral(), 6)
    1.0
    """
    X = _samples2d(samples)
    N, d = X.shape
    if d > 2:
        raise ValueError("tensor-grid KDE supports d <= 2")
    if isinstance(bandwidth, str):
        if bandwidth not in ("silverman", "auto"):
            raise ValueError(f"unknown bandwidth rule {bandwidth!r}")
        h = silverman_bandwidth(X)
    else:
        h = np.broadcast_to(np.asarray(bandwidth, dtype=float), (d,)).copy()
    if np.any(h <= 0):
        raise ValueError("bandwidth must be positive")
    if grid is None:
        grid = default_grid(X, n_grid)
    grid = [np.asarray(g, dtype=float) for g in grid]
    if d == 1:
        acc = np.zeros(len(grid[0]))
        for a in range(0, N, chunk):
            acc += _kernel_matrix(X[a:a + chunk, 0], grid[0], h[0]).sum(axis=0)
    else:
        acc = np.zeros((len(grid[0]), len(grid[1])))
        for a in range(0, N, chunk):
            K1 = _kernel_matrix(X[a:a + chunk, 0], grid[0], h[0])
            K2 = _kernel_matrix(X[a:a + chunk, 1], grid[1], h[1])
            acc += K1.T @ K2
    return DensityEstimate(grid, h, acc / N, N)


def kde_stability(samples, grid=None, n_grid: int = 256) -> dict:
    """Relative sup-norm change of the KDE when the Silverman bandwidth is halved."""
    X = _samples2d(samples)
    if grid is None:
        grid = default_grid(X, n_grid)
    a = kde(X, "silverman", grid)
    b = kde(X, a.bandwidth / 2, grid)
    change = float(np.max(np.abs(a.values - b.values)) / np.max(a.values))
    return {"bandwidth": a.bandwidth.tolist(), "sup_change": change,
            "integral": a.integral(), "grid_points": [len(g) for g in grid]}


@dataclass
class CharFunctionProfile:
    xi: np.ndarray
    modulus: np.ndarray
    noise_floor: float
    n: int

    @property
    def radii(self) -> np.ndarray:
        return np.linalg.norm(self.xi, axis=1)

    def first_below_floor(self) -> float | None:
        """Smallest ``|xi|`` at which ``|phi|`` drops under the noise floor."""
        r = self.radii
        order = np.argsort(r, kind="stable")
        below = self.modulus[order] < self.noise_floor
        if not below.any():
            return None
        return float(r[order][np.argmax(below)])

    def to_dict(self):
        return dict(xi=self.xi.tolist(), modulus=self.modulus.tolist(),
                    noise_floor=self.noise_floor, n=self.n,
                    first_below_floor=self.first_below_floor())


def char_function(samples, xi_grid, chunk: int = 4096) -> CharFunctionProfile:
    """``|mean exp(i xi . X)|`` for each row of ``xi_grid``; noise floor ``3/sqrt(N)``."""
    X = _samples2d(samples)
    N, d = X.shape
    xi = np.asarray(xi_grid, dtype=float)
    if xi.ndim == 1:
        xi = xi[:, None]
    if xi.shape[1] != d:
        raise ValueError("frequency dimension does not match samples")
    re = np.zeros(len(xi))
    im = np.zeros(len(xi))
    for a in range(0, N, chunk):
        ph = X[a:a + chunk] @ xi.T
        re += np.cos(ph).sum(axis=0)
        im += np.sin(ph).sum(axis=0)
    mod = np.hypot(re, im) / N
    mod[np.all(xi == 0, axis=1)] = 1.0
    return CharFunctionProfile(xi, mod, 3.0 / math.sqrt(N), N)


def axis_xi(d: int, axis: int, xi_max: float, n: int = 401) -> np.ndarray:
    """Frequencies ``t e_axis`` for ``t`` in ``[0, xi_max]``."""
    xi = np.zeros((n, d))
    xi[:, axis] = np.linspace(0.0, xi_max, n)
    return xi


def _as_test_fn(phi, variables):
    e = ex.parse_expr(phi, variables) if isinstance(phi, str) else ex.as_expr(phi)
    return e, ex.compile_exprs([e], variables)


@dataclass
class SemigroupReport:
    one_shot: float
    nested: float
    discrepancy: float
    se_one_shot: float
    se_nested: float
    pooled_se: float
    N: int
    M: int
    failures: int

    @property
    def z_score(self) -> float:
        return self.discrepancy / self.pooled_se if self.pooled_se > 0 else (0.0 if self.discrepancy == 0 else math.inf)

    def to_dict(self):
        return dict(self.__dict__, z_score=self.z_score)


def chapman_kolmogorov(model, scheme: SimulationScheme, x0, t: float, s: float, phi, N: int,
                       M: int = 32, seed=None, workers: int = 1) -> SemigroupReport:
    """Compare ``E phi(X_{t+s})`` with ``E[(T_s phi)(X_t)]`` (``M`` inner paths).

    The outer paths reuse the one-shot streams, so for ``s = 0`` the two
    estimates coincide exactly; inner paths use disjoint streams.  The
    nested standard error is the spread of the inner means, which by the
    law of total variance already contains the inner-sample noise.
    """
    if t <= 0 or s < 0:
        raise ValueError("need t > 0 and s >= 0")
    _, f = _as_test_fn(phi, model.variables)
    one = simulate_ensemble(model, scheme, x0, t + s, N, seed, workers=workers)
    outer = simulate_ensemble(model, scheme, x0, t, N, seed, workers=workers)
    ok1 = ~one.failed
    v1 = f(one.terminal[ok1])[:, 0]
    if s == 0:
        inner_means = f(outer.terminal)[:, 0][~outer.failed]
        fails = one.n_failed + outer.n_failed
    else:
        starts = np.repeat(outer.terminal, M, axis=0)
        inner = simulate_ensemble(model, scheme, starts, s, N * M, seed, workers=workers,
                                  stream_offset=N)
        vals = f(np.where(inner.failed[:, None], 0.0, inner.terminal))[:, 0].reshape(N, M)
        good = (~inner.failed).reshape(N, M)
        cnt = good.sum(axis=1)
        keep = (~outer.failed) & (cnt > 0)
        inner_means = (np.where(good, vals, 0.0).sum(axis=1)[keep] / cnt[keep])
        fails = one.n_failed + outer.n_failed + inner.n_failed
    a, b = float(v1.mean()), float(inner_means.mean())
    se1 = float(v1.std(ddof=1) / math.sqrt(len(v1))) if len(v1) > 1 else 0.0
    se2 = float(inner_means.std(ddof=1) / math.sqrt(len(inner_means))) if len(inner_means) > 1 else 0.0
    if s == 0:
        se2 = 0.0
    return SemigroupReport(a, b, a - b, se1, se2, math.hypot(se1, se2), N, M, fails)


def generator_value(model, phi, x, n_sphere: int = 32, rtol: float = 1e-9) -> float:
    """``A phi(x)``: Itô part plus the compensated jump integral over
    ``0 < |z| < zmax`` computed on symmetric pairs ``{z, -z}``."""
    vars_ = model.variables
    e, f = _as_test_fn(phi, vars_)
    d = model.dim
    x = np.asarray(x, dtype=float).reshape(d)
    grad = [ex.simplify(ex.diff(e, v)) for v in vars_]
    hess = [ex.simplify(ex.diff(gi, v)) for gi in grad for v in vars_]
    gfun = ex.compile_exprs(grad, vars_)
    hfun = ex.compile_exprs(hess, vars_)
    gx = gfun(x)
    Hx = hfun(x).reshape(d, d)
    val = float(model.drift_eval(x) @ gx)
    if model.n_brownian:
        S = model.sigma_eval(x)
        val += 0.5 * float(np.einsum("ik,jk,ij->", S, S, Hx))
    if model.jump is not None:
        m = model.mark_dim
        nodes, w = sphere_rule(m, n_sphere)
        fx = f(x)[0]

        def F(r):
            z = (r[:, None, None] * nodes[None, :, :]).reshape(-1, m)
            xs = np.broadcast_to(x, (len(z), d))
            gp = model.jump.value(xs, z)
            gm = model.jump.value(xs, -z)
            pair = 0.5 * (f(xs + gp)[:, 0] + f(xs + gm)[:, 0] - 2 * fx - (gp + gm) @ gx)
            return pair.reshape(len(r), len(w)) @ w

        val += float(radial_levy_integral(F, model.zmax, model.alpha, rtol=rtol))
    return val


@dataclass
class GeneratorReport:
    generator: float
    h: np.ndarray
    increment: np.ndarray
    stderr: np.ndarray
    truncation_bound: float
    N: int

    @property
    def residual(self) -> np.ndarray:
        return self.increment - self.generator

    def to_dict(self):
        return dict(generator=self.generator, h=self.h.tolist(), increment=self.increment.tolist(),
                    residual=self.residual.tolist(), stderr=self.stderr.tolist(),
                    truncation_bound=self.truncation_bound, N=self.N)


def generator_residual(model, phi, x, h_list, N: int, scheme: SimulationScheme | None = None,
                       seed=None, workers: int = 1) -> GeneratorReport:
    """``(E phi(X_h) - phi(x)) / h`` against ``A phi(x)`` for each ``h``.

    ``truncation_bound`` bounds the bias of dropping jumps below ``eps``:
    ``0.5 |Hess phi| |grad_z g(x,0)|^2 C eps^(2-alpha)``; it is zero in the
    Gaussian small-jump mode to leading order.
    """
    scheme = scheme or SimulationScheme()
    e, f = _as_test_fn(phi, model.variables)
    x = np.asarray(x, dtype=float).reshape(model.dim)
    A = generator_value(model, e, x)
    fx = f(x)[0]
    inc, se = [], []
    for h in h_list:
        sc = scheme.with_(h=min(scheme.h, h))
        res = simulate_ensemble(model, sc, x, h, N, seed, workers=workers)
        v = (f(res.good())[:, 0] - fx) / h
        inc.append(float(v.mean()))
        se.append(float(v.std(ddof=1) / math.sqrt(len(v))))
    bound = 0.0
    if model.jump is not None and scheme.small_jump_mode == "drop":
        d = model.dim
        hess = [ex.simplify(ex.diff(ex.diff(e, a), b)) for a in model.variables for b in model.variables]
        Hx = ex.compile_exprs(hess, model.variables)(x).reshape(d, d)
        At = model.jump_fields_eval(x)
        bound = 0.5 * float(np.linalg.norm(Hx, 2) * np.linalg.norm(At, 2) ** 2
                            * second_moment_constant(model.mark_dim, model.alpha)
                            * scheme.eps ** (2 - model.alpha))
    return GeneratorReport(A, np.asarray(h_list, dtype=float), np.array(inc), np.array(se), bound, N)
