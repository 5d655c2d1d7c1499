"""Euler simulation of jump SDEs with Jacobian flow and reduced Malliavin matrix.

Jumps with ``eps <= |z| < zmax`` are simulated exactly as a compound Poisson
stream whose times are inserted into the time grid; jumps below ``eps`` are
dropped or replaced by a Brownian substitute.  Every random number is drawn
from a counter-based stream keyed by the path index, so any batching of
paths reproduces the same trajectories bit for bit.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng as _rng
from .errors import JumpConditionError
from .quadrature import gauss_legendre, second_moment_constant, sphere_area, sphere_rule
from .rng import RngStream

BLOWUP = 1e12


@dataclass(frozen=True)
class SimulationScheme:
    """Discretisation parameters.

    Parameters
    ----------
    h : float
        Euler step.
    eps : float
        Truncation radius; jumps with ``|z| < eps`` are handled by
        ``small_jump_mode`` ("drop" or "gaussian").
    delta : float, optional
        Splitting radius ``eps <= delta <= zmax`` used by the Malliavin
        accumulators (cutoff ``zeta`` vanishes beyond ``delta / 2``).
        Defaults to ``zmax`` of the model.
    seed : int
        Master seed.
    thinning_bound : float, optional
        Overrides the dominating constant of a large-jump channel.
    """

    h: float = 1e-3
    eps: float = 1e-2
    delta: float | None = None
    small_jump_mode: str = "drop"
    seed: int = 0
    thinning_bound: float | None = None

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("h must be positive")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.delta is not None and self.delta < self.eps:
            raise ValueError("need eps <= delta")
        if self.small_jump_mode not in ("drop", "gaussian"):
            raise ValueError("small_jump_mode must be 'drop' or 'gaussian'")

    def validate_for(self, model):
        if model.jump is not None and not self.eps < model.zmax:
            raise ValueError(f"eps={self.eps} must be below zmax={model.zmax}")
        if self.delta is not None and self.delta > model.zmax:
            raise ValueError("delta must not exceed zmax")

    def with_(self, **kw) -> "SimulationScheme":
        d = dict(self.__dict__)
        d.update(kw)
        return SimulationScheme(**d)


@dataclass
class JumpEvent:
    time: float
    mark: np.ndarray
    accepted: bool = True
    state_before: np.ndarray | None = None
    k_before: np.ndarray | None = None


@dataclass
class PathSample:
    """A single trajectory sampled at the merged (grid + jump) times.

    ``states[i]`` etc. are right-continuous values at ``times[i]``; the
    pre-jump state and inverse flow are kept in each ``JumpEvent``.
    """

    times: np.ndarray
    states: np.ndarray
    J: np.ndarray
    K: np.ndarray
    sigma_hat: np.ndarray
    sigma_hat_path: np.ndarray
    jumps: list
    failed: bool = False
    message: str = ""
    large_jumps: list = field(default_factory=list)

    @property
    def dim(self):
        return self.states.shape[1]

    def flow_error(self) -> float:
        """``max_i || J_i K_i - I ||_inf`` along the path."""
        d = self.dim
        err = np.einsum("nij,njk->nik", self.J, self.K) - np.eye(d)
        return float(np.abs(err).sum(axis=2).max())


@dataclass
class EnsembleResult:
    terminal: np.ndarray
    failed: np.ndarray
    sigma_hat: np.ndarray | None = None
    det_J: np.ndarray | None = None
    sup_norm: np.ndarray | None = None
    flow_error: np.ndarray | None = None
    snapshots: dict | None = None

    @property
    def n_failed(self) -> int:
        return int(self.failed.sum())

    def good(self):
        return self.terminal[~self.failed]


# ---------------------------------------------------------------------------
# jump laws


def jump_rate(alpha: float, eps: float, zmax: float, m: int) -> float:
    """Mass of ``dz/|z|^(m+alpha)`` on ``eps <= |z| < zmax``."""
    return sphere_area(m) * (eps ** -alpha - zmax ** -alpha) / alpha


def radius_icdf(u, alpha, eps, zmax):
    a, b = eps ** -alpha, zmax ** -alpha
    return (a - u * (a - b)) ** (-1.0 / alpha)


def _directions(key_dir, counter, m):
    """Uniform directions on the sphere; ``counter`` is the jump index."""
    if m == 1:
        u = _rng.uniforms(key_dir, counter)
        return np.where(u < 0.5, -1.0, 1.0)[..., None]
    c = np.asarray(counter, dtype=np.uint64)[..., None] * np.uint64(m) + np.arange(m, dtype=np.uint64)
    g = _rng.normals(np.asarray(key_dir)[..., None], c)
    return g / np.linalg.norm(g, axis=-1, keepdims=True)


def sample_jumps(alpha, eps, zmax, d, T, rng: RngStream) -> list:
    """Marks and times of the resolved jumps of one path on ``[0, T]``.

    The draw uses the same counters as the ensemble simulator, so
    ``sample_jumps`` for stream ``p`` lists exactly the jumps that path
    ``p`` receives (for models driven by ``d``-dimensional marks).

    Examples
    --------
    >>> ev = sample_jumps(1.0, 0.1, 1.0, 1, 10.0, RngStream(0, 0))
    >>> all(0.1 <= abs(e.mark[0]) <= 1.0 for e in ev)
    True
    """
    if not 0 < eps < zmax:
        raise ValueError("need 0 < eps < zmax")
    lam = jump_rate(alpha, eps, zmax, d)
    kt = _rng.stream_keys(rng.seed, rng.stream, _rng.JUMP_TIME)
    kr = _rng.stream_keys(rng.seed, rng.stream, _rng.JUMP_RADIUS)
    kd = _rng.stream_keys(rng.seed, rng.stream, _rng.JUMP_DIRECTION)
    out, t, k = [], 0.0, 0
    while True:
        t = t + float(-np.log(_rng.uniforms(kt, np.uint64(k)))) / lam
        if t > T:
            return out
        r = radius_icdf(_rng.uniforms(kr, np.uint64(k)), alpha, eps, zmax)
        z = r * _directions(kd, np.uint64(k), d)
        out.append(JumpEvent(t, np.asarray(z, dtype=float).reshape(d)))
        k += 1


def _compensator(model, eps, n_radial=48):
    """``x -> (-int g(x,z) nu(dz), -int grad_x g nu(dz))`` over ``eps<=|z|<zmax``.

    Needed only when ``g`` is not odd in ``z``.
    """
    m = model.mark_dim
    nodes, wsph = sphere_rule(m, 32)
    x, w = gauss_legendre(n_radial)
    lo, hi = math.log(eps), math.log(model.zmax)
    u = lo + (hi - lo) * (x + 1) / 2
    r = np.exp(u)
    wr = w * (hi - lo) / 2 * r ** (-model.alpha)
    Z = (r[:, None, None] * nodes[None, :, :]).reshape(-1, m)
    W = (wr[:, None] * wsph[None, :]).ravel()

    def comp(X):
        n = X.shape[0]
        Xr = np.repeat(X, len(W), axis=0)
        Zr = np.tile(Z, (n, 1))
        g = model.jump.value(Xr, Zr).reshape(n, len(W), -1)
        G = model.jump.jac_x(Xr, Zr).reshape(n, len(W), X.shape[1], X.shape[1])
        return -np.einsum("q,nqi->ni", W, g), -np.einsum("q,nqij->nij", W, G)

    return comp


# ---------------------------------------------------------------------------
# engine


class _Engine:
    """Vectorised simulation of a batch of paths sharing a time grid."""

    def __init__(self, model, scheme: SimulationScheme, x0, T, streams, *, flows=True,
                 record=False, snapshots=(), track_sup=False, track_flow=False):
        scheme.validate_for(model)
        self.model, self.scheme, self.T = model, scheme, float(T)
        x0 = np.asarray(x0, dtype=float)
        P = len(streams)
        d = model.dim
        self.P, self.d = P, d
        self.X = np.array(np.broadcast_to(x0, (P, d)), dtype=float)
        self.t = np.zeros(P)
        self.flows = flows
        self.record = record
        self.track_sup = track_sup
        self.failed = np.zeros(P, dtype=bool)
        self.messages = {}
        # models may declare a tighter guard than the generic blow-up level
        self.limit = float(model.meta.get("guard", BLOWUP))
        seed = scheme.seed
        st = np.asarray(streams, dtype=np.uint64)
        self.keys = {dom: _rng.stream_keys(seed, st, dom) for dom in range(10)}
        self.nw = model.n_brownian
        self.m = model.mark_dim
        self.gauss = scheme.small_jump_mode == "gaussian" and model.jump is not None
        self.bc = np.zeros(P, dtype=np.uint64)
        self.sc = np.zeros(P, dtype=np.uint64)
        eye = np.eye(d)
        self.J = np.tile(eye, (P, 1, 1)) if flows else None
        self.K = np.tile(eye, (P, 1, 1)) if flows else None
        self.Sh = np.zeros((P, d, d)) if flows else None
        self.sup = np.linalg.norm(self.X, axis=1) if track_sup else None
        self.flow_err = np.zeros(P) if track_flow and flows else None
        # resolved jumps
        self.lam = 0.0
        if model.jump is not None:
            self.lam = jump_rate(model.alpha, scheme.eps, model.zmax, self.m)
        self.kj = np.zeros(P, dtype=np.uint64)
        self.tj = self._gap(_rng.JUMP_TIME, self.kj, self.lam)
        self.comp = None
        if model.jump is not None and not model.odd_g:
            self.comp = _compensator(model, scheme.eps)
        self.c_eps = 0.0
        if self.gauss:
            self.c_eps = second_moment_constant(self.m, model.alpha) * scheme.eps ** (2 - model.alpha)
        # large jumps by thinning
        self.lj = model.large_jumps
        self.kl = np.zeros(P, dtype=np.uint64)
        self.lam_l = 0.0
        if self.lj is not None:
            k0 = scheme.thinning_bound or self.lj.kappa0
            self.k0 = k0
            self.lam_l = k0 * sphere_area(self.lj.mark_dim) * self.lj.delta ** -self.lj.alpha / self.lj.alpha
        self.tl = self._gap(_rng.LARGE_TIME, self.kl, self.lam_l)
        # grid
        n = max(1, int(math.ceil(self.T / scheme.h - 1e-9)))
        grid = np.minimum(np.arange(n + 1) * scheme.h, self.T)
        grid[-1] = self.T
        snaps = set(float(s) for s in snapshots)
        if snaps:
            grid = np.unique(np.concatenate([grid, [s for s in snaps if 0 < s <= self.T]]))
        self.grid = grid
        self.snap_times = snaps
        self.snaps = {}
        if record:
            self.rec = [dict(times=[0.0], X=[self.X[p].copy()], J=[self.J[p].copy()],
                             K=[self.K[p].copy()], Sh=[self.Sh[p].copy()], jumps=[], large=[])
                        for p in range(P)]
        if 0.0 in snaps:
            self._snapshot(0.0)

    # random helpers --------------------------------------------------------

    def _gap(self, dom, k, lam, idx=None):
        if lam <= 0:
            return np.full(len(k), np.inf)
        keys = self.keys[dom] if idx is None else self.keys[dom][idx]
        return -np.log(_rng.uniforms(keys, k)) / lam

    def _marks(self, idx):
        m = self.m
        k = self.kj[idx]
        r = radius_icdf(_rng.uniforms(self.keys[_rng.JUMP_RADIUS][idx], k),
                        self.model.alpha, self.scheme.eps, self.model.zmax)
        return r[:, None] * _directions(self.keys[_rng.JUMP_DIRECTION][idx], k, m)

    def _large_marks(self, idx):
        lj = self.lj
        k = self.kl[idx]
        u = _rng.uniforms(self.keys[_rng.LARGE_RADIUS][idx], k)
        r = lj.delta * u ** (-1.0 / lj.alpha)
        return r[:, None] * _directions(self.keys[_rng.LARGE_DIRECTION][idx], k, lj.mark_dim)

    # stepping --------------------------------------------------------------

    def _euler(self, idx, dt):
        model, d = self.model, self.d
        x = self.X[idx]
        b = model.drift_eval(x)
        sdt = np.sqrt(dt)
        cols, dW, jacs = [], [], []
        if self.nw:
            sig = model.sigma_eval(x)
            c = self.bc[idx][:, None] + np.arange(self.nw, dtype=np.uint64)
            dw = _rng.normals(self.keys[_rng.BROWNIAN][idx][:, None], c) * sdt[:, None]
            self.bc[idx] += np.uint64(self.nw)
            cols.append(sig)
            dW.append(dw)
            if self.flows:
                jacs.append(model.sigma_jac(x))
        At = None
        if model.jump is not None and (self.flows or self.gauss):
            At = model.jump_fields_eval(x)
        if self.gauss:
            c = self.sc[idx][:, None] + np.arange(self.m, dtype=np.uint64)
            dw = _rng.normals(self.keys[_rng.SMALL_JUMP][idx][:, None], c) * sdt[:, None]
            self.sc[idx] += np.uint64(self.m)
            s = math.sqrt(self.c_eps)
            cols.append(At * s)
            dW.append(dw)
            if self.flows:
                jacs.append(model.jump_fields_jac(x) * s)
        xnew = x + b * dt[:, None]
        if self.comp is not None:
            cb, cj = self.comp(x)
            xnew = xnew + cb * dt[:, None]
        if cols:
            S = np.concatenate(cols, axis=2)
            W = np.concatenate(dW, axis=1)
            xnew = xnew + np.einsum("nik,nk->ni", S, W)
        if self.flows:
            K = self.K[idx]
            if self.nw or At is not None:
                parts = []
                if self.nw:
                    parts.append(cols[0])
                if At is not None:
                    parts.append(At)
                A = np.concatenate(parts, axis=2)
                KA = np.einsum("nij,njk->nik", K, A)
                self.Sh[idx] += np.einsum("nik,njk->nij", KA, KA) * dt[:, None, None]
            Mstep = np.eye(d) + model.drift_jac(x) * dt[:, None, None]
            if self.comp is not None:
                Mstep = Mstep + cj * dt[:, None, None]
            if jacs:
                Jc = np.concatenate(jacs, axis=1)
                Mstep = Mstep + np.einsum("nkij,nk->nij", Jc, W)
            self.J[idx] = np.einsum("nij,njk->nik", Mstep, self.J[idx])
            self.K[idx] = np.einsum("nij,njk->nik", K, np.linalg.inv(Mstep))
        self.X[idx] = xnew
        self._guard(idx)

    def _guard(self, idx):
        x = self.X[idx]
        bad = ~np.all(np.isfinite(x), axis=1) | (np.abs(x).max(axis=1) > self.limit)
        if self.flows:
            bad |= ~np.all(np.isfinite(self.J[idx]), axis=(1, 2)) | ~np.all(np.isfinite(self.K[idx]), axis=(1, 2))
        if bad.any():
            for p in idx[bad]:
                if not self.failed[p]:
                    self.messages[int(p)] = f"blow-up at t={self.t[p]:.6g}"
            self.failed[idx[bad]] = True
        if self.track_sup:
            nx = np.linalg.norm(np.where(np.isfinite(x), x, np.inf), axis=1)
            self.sup[idx] = np.maximum(self.sup[idx], nx)
        if self.flow_err is not None:
            E = np.einsum("nij,njk->nik", self.J[idx], self.K[idx]) - np.eye(self.d)
            self.flow_err[idx] = np.maximum(self.flow_err[idx], np.abs(E).sum(axis=2).max(axis=1))

    def _jump(self, idx):
        model, d = self.model, self.d
        z = self._marks(idx)
        x = self.X[idx]
        g = model.jump.value(x, z)
        M = np.eye(d) + model.jump.jac_x(x, z)
        det = np.linalg.det(M)
        if not np.all(det > 0):
            i = int(np.argmin(det))
            raise JumpConditionError(
                f"det(I + grad_x g) = {det[i]:.3g} <= 0 at x={x[i].tolist()}, z={z[i].tolist()}; "
                "condition (H_g°) is violated")
        if self.flows:
            K = self.K[idx]
            if self.record:
                for j, p in enumerate(idx):
                    self.rec[p]["jumps"].append(JumpEvent(float(self.t[p]), z[j].copy(), True,
                                                          x[j].copy(), K[j].copy()))
            self.J[idx] = np.einsum("nij,njk->nik", M, self.J[idx])
            self.K[idx] = np.einsum("nij,njk->nik", K, np.linalg.inv(M))
        elif self.record:
            for j, p in enumerate(idx):
                self.rec[p]["jumps"].append(JumpEvent(float(self.t[p]), z[j].copy(), True, x[j].copy()))
        self.X[idx] = x + g
        self.kj[idx] += np.uint64(1)
        self.tj[idx] = self.tj[idx] + self._gap(_rng.JUMP_TIME, self.kj[idx], self.lam, idx)
        self._guard(idx)

    def _large_jump(self, idx):
        lj = self.lj
        w = self._large_marks(idx)
        x = self.X[idx]
        u = _rng.uniforms(self.keys[_rng.LARGE_ACCEPT][idx], self.kl[idx])
        acc = u * self.k0 < lj.kappa(x, w)
        tg = list(lj.targets)
        xn = x.copy()
        xn[:, tg] = np.where(acc[:, None], x[:, tg] + w, x[:, tg])
        if self.record:
            for j, p in enumerate(idx):
                self.rec[p]["large"].append(JumpEvent(float(self.t[p]), w[j].copy(), bool(acc[j]), x[j].copy()))
        self.X[idx] = xn
        self.kl[idx] += np.uint64(1)
        self.tl[idx] = self.tl[idx] + self._gap(_rng.LARGE_TIME, self.kl[idx], self.lam_l, idx)
        self._guard(idx)

    def _snapshot(self, s):
        self.snaps[s] = dict(X=self.X.copy(), sup=None if self.sup is None else self.sup.copy(),
                             failed=self.failed.copy())

    def _push_record(self, idx):
        for p in idx:
            r = self.rec[p]
            r["times"].append(float(self.t[p]))
            r["X"].append(self.X[p].copy())
            r["J"].append(self.J[p].copy())
            r["K"].append(self.K[p].copy())
            r["Sh"].append(self.Sh[p].copy())

    def run(self):
        for t_end in self.grid[1:]:
            while True:
                live = np.nonzero((self.t < t_end) & ~self.failed)[0]
                if len(live) == 0:
                    break
                target = np.minimum(np.minimum(self.tj[live], self.tl[live]), t_end)
                dt = target - self.t[live]
                self._euler(live, dt)
                self.t[live] = target
                ok = ~self.failed[live]
                hit = live[ok & (self.tj[live] == target)]
                if len(hit):
                    self._jump(hit)
                hitl = live[ok & (self.tl[live] == target) & ~self.failed[live]]
                if len(hitl):
                    self._large_jump(hitl)
                if self.record:
                    self._push_record(live[~self.failed[live]])
            if float(t_end) in self.snap_times:
                self._snapshot(float(t_end))
        return self


def zeta_cutoff(r, ell: float, delta: float):
    """``|z|^(1+ell) eta(|z|)`` with quintic smoothstep ``eta``: 1 on
    ``[0, delta/4]``, 0 beyond ``delta/2``."""
    r = np.asarray(r, dtype=float)
    s = np.clip((delta / 2 - r) / (delta / 4), 0.0, 1.0)
    eta = s ** 3 * (10 - 15 * s + 6 * s ** 2)
    return r ** (1 + ell) * eta


# ---------------------------------------------------------------------------
# public drivers


def simulate_path(model, scheme: SimulationScheme, x0, T, rng=None) -> PathSample:
    """Simulate one path with flows; ``rng`` is an RngStream or a stream index.

    The seed of an RngStream overrides ``scheme.seed``.
    """
    if isinstance(rng, RngStream):
        scheme = scheme.with_(seed=rng.seed)
        stream = rng.stream
    else:
        stream = 0 if rng is None else int(rng)
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape != (model.dim,):
        raise ValueError(f"x0 has length {x0.size}, model dimension is {model.dim}")
    eng = _Engine(model, scheme, x0, T, [stream], record=True).run()
    r = eng.rec[0]
    return PathSample(
        times=np.array(r["times"]), states=np.array(r["X"]), J=np.array(r["J"]),
        K=np.array(r["K"]), sigma_hat=eng.Sh[0].copy(), sigma_hat_path=np.array(r["Sh"]),
        jumps=r["jumps"], failed=bool(eng.failed[0]), message=eng.messages.get(0, ""),
        large_jumps=r["large"],
    )


def _chunks(N, chunk):
    return [(a, min(N, a + chunk)) for a in range(0, N, chunk)]


def simulate_ensemble(model, scheme: SimulationScheme, x0, T, N, seed=None, *,
                      sigma_hat=False, det_j=False, track_sup=False, track_flow=False, snapshots=(),
                      workers=1, chunk=20000, stream_offset=0) -> EnsembleResult:
    """Terminal states of ``N`` independent paths (stream ``i`` = path ``i``).

    Chunks of paths run on up to ``workers`` threads; since each path owns
    its random stream the result does not depend on ``workers`` or
    ``chunk``.  ``x0`` may be a single point or an ``(N, d)`` array.
    ``track_flow`` records the running maximum of ``||J K - I||_inf`` per path.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if seed is not None:
        scheme = scheme.with_(seed=int(seed))
    d = model.dim
    x0 = np.asarray(x0, dtype=float)
    per_path = x0.ndim == 2
    flows = sigma_hat or det_j or track_flow
    parts = _chunks(N, chunk)

    def job(ab):
        a, b = ab
        xs = x0[a:b] if per_path else x0
        eng = _Engine(model, scheme, xs, T, np.arange(a, b) + stream_offset, flows=flows,
                      snapshots=snapshots, track_sup=track_sup, track_flow=track_flow).run()
        return eng

    if workers > 1 and len(parts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            engines = list(pool.map(job, parts))
    else:
        engines = [job(p) for p in parts]
    res = EnsembleResult(
        terminal=np.concatenate([e.X for e in engines]).reshape(N, d),
        failed=np.concatenate([e.failed for e in engines]),
    )
    if sigma_hat:
        res.sigma_hat = np.concatenate([e.Sh for e in engines])
    if det_j:
        res.det_J = np.concatenate([np.linalg.det(e.J) for e in engines])
    if track_sup:
        res.sup_norm = np.concatenate([e.sup for e in engines])
    if track_flow:
        res.flow_error = np.concatenate([e.flow_err for e in engines])
    if snapshots:
        res.snapshots = {
            s: {k: (None if engines[0].snaps[s][k] is None else
                    np.concatenate([e.snaps[s][k] for e in engines]))
                for k in ("X", "sup", "failed")}
            for s in engines[0].snaps
        }
    return res


@dataclass
class ExcursionReport:
    eps: np.ndarray
    threshold: float
    probability: np.ndarray
    stderr: np.ndarray
    counts: np.ndarray
    N: int
    failures: int
    slope: float
    no_exceedances: bool
    target_power: float

    @property
    def passes(self) -> bool:
        return bool(self.slope >= self.target_power)

    def to_dict(self):
        return dict(eps=self.eps.tolist(), threshold=self.threshold,
                    probability=self.probability.tolist(), stderr=self.stderr.tolist(),
                    counts=self.counts.tolist(), N=self.N, failures=self.failures,
                    slope=None if not np.isfinite(self.slope) else self.slope,
                    slope_infinite=bool(np.isinf(self.slope)),
                    no_exceedances=self.no_exceedances, target_power=self.target_power)


def excursion_probability(model, scheme, x0, R, eps_list, N, n=2.0, C=1.0, seed=None,
                          workers=1) -> ExcursionReport:
    """Estimate ``P(sup_{s<=eps} |X_s| >= C R)`` for each ``eps``.

    All horizons come from one ensemble run to ``max(eps_list)`` with the
    running supremum snapshotted at every ``eps``.  The log-log slope is a
    least-squares fit over the horizons with a positive estimate; when no
    path ever crosses the threshold the slope is reported as ``inf``
    (decay faster than any power).
    """
    if R < 1:
        raise ValueError("R must be >= 1")
    eps = np.asarray(sorted(eps_list, reverse=True), dtype=float)
    thr = C * R
    res = simulate_ensemble(model, scheme, x0, float(eps[0]), N, seed, track_sup=True,
                            snapshots=tuple(eps), workers=workers)
    probs, counts = [], []
    for e in eps:
        snap = res.snapshots[float(e)]
        ok = ~snap["failed"]
        hits = int(np.sum(snap["sup"][ok] >= thr))
        counts.append(hits)
        probs.append(hits / max(ok.sum(), 1))
    probs = np.array(probs)
    n_ok = max(int((~res.failed).sum()), 1)
    se = np.sqrt(probs * (1 - probs) / n_ok)
    pos = probs > 0
    if not pos.any():
        slope, none = math.inf, True
    elif pos.sum() >= 2:
        slope, none = float(np.polyfit(np.log(eps[pos]), np.log(probs[pos]), 1)[0]), False
    else:
        slope, none = math.nan, False
    return ExcursionReport(eps, thr, probs, se, np.array(counts), N, res.n_failed, slope, none, n)
