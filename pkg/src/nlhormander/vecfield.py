"""Vector fields, Lie brackets and the Hörmander spanning check."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize
from scipy.stats import qmc

from . import expr as ex
from .errors import ArityError, DimensionMismatchError, DomainError, UnsupportedFormError


def state_variables(dim: int) -> tuple:
    return tuple(f"x{i + 1}" for i in range(dim))


@dataclass(frozen=True)
class VectorField:
    """A d-tuple of expressions over a shared variable list.

    ``variables`` defaults to ``x1..xd``; it names the coordinates so that
    ``components[i]`` is the coefficient of the i-th partial derivative.
    """

    components: tuple
    variables: tuple = None

    def __post_init__(self):
        comps = tuple(ex.as_expr(c) for c in self.components)
        object.__setattr__(self, "components", comps)
        if self.variables is None:
            object.__setattr__(self, "variables", state_variables(len(comps)))
        if len(self.variables) != len(comps):
            raise DimensionMismatchError(
                f"{len(comps)} components over {len(self.variables)} variables"
            )
        allowed = set(self.variables)
        for c in comps:
            extra = ex.free_vars(c) - allowed
            if extra:
                raise DimensionMismatchError(f"component {c} uses undeclared {sorted(extra)}")

    @property
    def dim(self) -> int:
        return len(self.components)

    def __str__(self):
        return ", ".join(ex.to_str(c) for c in self.components)

    def __len__(self):
        return self.dim

    def __neg__(self):
        return VectorField(tuple(ex.simplify(ex.neg(c)) for c in self.components), self.variables)

    def simplify(self) -> "VectorField":
        return VectorField(tuple(ex.simplify(c) for c in self.components), self.variables)

    def is_zero(self) -> bool:
        return all(ex.is_const(ex.simplify(c), 0.0) for c in self.components)

    def jacobian(self) -> tuple:
        """Rows ``i``: gradient of component ``i``, simplified."""
        return tuple(
            tuple(ex.simplify(ex.diff(c, v)) for v in self.variables) for c in self.components
        )

    def evaluator(self):
        """Vectorised ``f(points (..., d)) -> (..., d)``; no domain checks."""
        return ex.compile_exprs(self.components, self.variables)

    def __call__(self, x):
        return eval_field(self, x)


def zero_field(dim, variables=None) -> VectorField:
    return VectorField(tuple(ex.ZERO for _ in range(dim)), variables)


def parse_field(source: str, dim: int, variables: Sequence[str] | None = None) -> VectorField:
    """Parse ``"e1, e2, ..."`` into a field of dimension ``dim``.

    Examples
    --------
    >>> str(parse_field("0, x1", 2))
    '0, x1'
    """
    variables = tuple(variables) if variables is not None else state_variables(dim)
    if len(variables) != dim:
        raise DimensionMismatchError(f"dim={dim} but {len(variables)} variables")
    comps = ex.parse_list(source, variables)
    if len(comps) != dim:
        raise ArityError(f"expected {dim} components, got {len(comps)}")
    return VectorField(tuple(comps), variables)


def eval_field(V: VectorField, x) -> np.ndarray:
    """Evaluate at a point (or a batch of points along the last axis)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (V.dim,):
        raise DimensionMismatchError(f"point of shape {x.shape} for a {V.dim}-field")
    out = V.evaluator()(x)
    if not np.all(np.isfinite(out)):
        raise DomainError(f"field ({V}) undefined at {x.tolist()}")
    return out


def _check_compatible(V, W):
    if V.dim != W.dim or V.variables != W.variables:
        raise DimensionMismatchError(f"cannot bracket {V.dim}-field with {W.dim}-field")


def lie_bracket(V: VectorField, W: VectorField) -> VectorField:
    """``[V, W]^i = V^j d_j W^i - W^j d_j V^i``, simplified."""
    _check_compatible(V, W)
    comps = []
    for i in range(V.dim):
        acc = ex.ZERO
        for j, vj in enumerate(V.variables):
            acc = ex.add(acc, ex.mul(V.components[j], ex.diff(W.components[i], vj)))
            acc = ex.sub(acc, ex.mul(W.components[j], ex.diff(V.components[i], vj)))
        comps.append(ex.simplify(acc))
    return VectorField(tuple(comps), V.variables)


def directional(V: VectorField, W: VectorField) -> VectorField:
    """``(V . grad) W`` componentwise."""
    _check_compatible(V, W)
    comps = []
    for i in range(V.dim):
        acc = ex.ZERO
        for j, vj in enumerate(V.variables):
            acc = ex.add(acc, ex.mul(V.components[j], ex.diff(W.components[i], vj)))
        comps.append(ex.simplify(acc))
    return VectorField(tuple(comps), V.variables)


def ito_drift_field(model) -> VectorField:
    """``A_0 = b - 1/2 sum_k (sigma_k . grad) sigma_k``."""
    b = model.drift
    comps = list(b.components)
    for s in model.sigma:
        corr = directional(s, s)
        comps = [ex.sub(c, ex.mul(ex.Const(0.5), k)) for c, k in zip(comps, corr.components)]
    return VectorField(tuple(ex.simplify(c) for c in comps), b.variables)


def diffusion_fields(model) -> list:
    return list(model.sigma)


def jump_fields(model) -> list:
    """``Ã_k = d/dz_k g(x, z) at z = 0`` for every mark coordinate."""
    if model.jump is None:
        return []
    return list(model.jump.fields())


def vbar(model, V: VectorField) -> VectorField:
    """``[A_0, V] + 1/2 sum_k [A_k, [A_k, V]]``."""
    out = lie_bracket(ito_drift_field(model), V)
    comps = list(out.components)
    for a in model.sigma:
        inner = lie_bracket(a, lie_bracket(a, V))
        comps = [ex.add(c, ex.mul(ex.Const(0.5), k)) for c, k in zip(comps, inner.components)]
    return VectorField(tuple(ex.simplify(c) for c in comps), V.variables)


@dataclass
class BracketHierarchy:
    """Bracket levels ``levels[j]`` for ``j = 0..j0``."""

    levels: list
    j0: int
    dedup: bool
    pruned: list = field(default_factory=list)
    duplicates: list = field(default_factory=list)
    variables: tuple = ()

    @property
    def fields(self) -> list:
        return [V for level in self.levels for V in level]

    @property
    def dim(self) -> int:
        return len(self.variables)

    def evaluator(self):
        comps = [c for V in self.fields for c in V.components]
        f = ex.compile_exprs(comps, self.variables)
        n, d = len(self.fields), self.dim

        def evaluate(points):
            out = f(points)
            return out.reshape(out.shape[:-1] + (n, d))

        return evaluate

    def summary(self) -> list:
        return [[str(V) for V in level] for level in self.levels]


def _generators(model):
    gens = [a for a in model.sigma if not a.is_zero()]
    gens += [a for a in jump_fields(model) if not a.is_zero()]
    a0 = ito_drift_field(model)
    if not a0.is_zero():
        gens.append(a0)
    return gens


def build_hierarchy(model, j0: int, dedup: bool = True) -> BracketHierarchy:
    """Levels up to ``j0``: level 0 holds the A_k and Ã_k, level j the
    brackets ``[A_k, V], [Ã_k, V], [A_0, V]`` of every V in level j-1."""
    if j0 < 0:
        raise ValueError("j0 must be >= 0")
    base = list(model.sigma) + jump_fields(model)
    levels, pruned, dups = [], [], []
    level, n_pruned, n_dup = _clean(base, dedup)
    levels.append(level)
    pruned.append(n_pruned)
    dups.append(n_dup)
    gens = _generators(model)
    for _ in range(j0):
        raw = [lie_bracket(G, V) for V in levels[-1] for G in gens]
        level, n_pruned, n_dup = _clean(raw, dedup)
        levels.append(level)
        pruned.append(n_pruned)
        dups.append(n_dup)
    return BracketHierarchy(levels, j0, dedup, pruned, dups, tuple(model.variables))


def _clean(fields, dedup):
    out, seen = [], set()
    n_zero = n_dup = 0
    for V in fields:
        V = V.simplify()
        if V.is_zero():
            n_zero += 1
            continue
        if dedup:
            if V.components in seen:
                n_dup += 1
                continue
            seen.add(V.components)
        out.append(V)
    return out, n_zero, n_dup


def gram_matrices(H: BracketHierarchy, points) -> np.ndarray:
    vals = H.evaluator()(np.asarray(points, dtype=float))
    return np.einsum("...ki,...kj->...ij", vals, vals)


def _defects(H, points):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if not H.fields:
        return np.zeros(len(points)), np.ones(len(points), bool)
    G = gram_matrices(H, points)
    ok = np.all(np.isfinite(G), axis=(-2, -1))
    lam = np.full(len(points), np.nan)
    if ok.any():
        lam[ok] = np.maximum(np.linalg.eigvalsh(G[ok])[:, 0], 0.0)
    return lam, ok


def hormander_defect(H: BracketHierarchy, x) -> float:
    """``min_{|u|=1} sum_V |u . V(x)|^2``: smallest Gram eigenvalue at ``x``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (H.dim,):
        raise DimensionMismatchError(f"point of shape {x.shape} for dimension {H.dim}")
    lam, ok = _defects(H, x[None, :])
    if not ok[0]:
        raise DomainError(f"bracket fields undefined at {x.tolist()}")
    return float(lam[0])


@dataclass
class HormanderReport:
    points: np.ndarray
    defects: np.ndarray
    infimum: float
    argmin: np.ndarray
    c0: float
    passed: bool
    box: tuple
    errors: list
    n_refined: int = 0

    def to_dict(self) -> dict:
        return {
            "box": [list(map(float, b)) for b in self.box],
            "n_points": int(len(self.points)),
            "n_refined": int(self.n_refined),
            "n_domain_errors": len(self.errors),
            "infimum": float(self.infimum),
            "argmin": [float(v) for v in self.argmin],
            "c0": float(self.c0),
            "passed": bool(self.passed),
        }


def _box_corners(lo, hi):
    d = len(lo)
    if d > 12:
        return np.empty((0, d))
    grid = np.array(np.meshgrid(*[[a, b] for a, b in zip(lo, hi)], indexing="ij"))
    return grid.reshape(d, -1).T


def uniform_check(
    H: BracketHierarchy,
    box,
    n_samples: int,
    c0: float,
    seed: int = 0,
    refine: int = 8,
) -> HormanderReport:
    """Sampled version of the uniform Hörmander condition on a box.

    Defects are evaluated on a scrambled Halton sample plus the box corners.
    The ``refine`` lowest samples are then polished by a bounded local
    minimisation; polished points join the sample.  ``box`` is a sequence
    of ``(lo, hi)`` pairs, one per coordinate.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    box = [tuple(map(float, b)) for b in box]
    if len(box) != H.dim:
        raise DimensionMismatchError(f"box has {len(box)} sides for dimension {H.dim}")
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    sampler = qmc.Halton(d=H.dim, scramble=True, seed=seed)
    pts = lo + (hi - lo) * sampler.random(n_samples)
    pts = np.vstack([pts, _box_corners(lo, hi)])
    lam, ok = _defects(H, pts)
    errors = [pts[i].tolist() for i in np.nonzero(~ok)[0]]

    n_refined = 0
    if refine and ok.any():
        order = np.argsort(np.where(ok, lam, np.inf))[:refine]
        extra = []
        for i in order:
            p = _polish(H, pts[i], lo, hi)
            if p is not None:
                extra.append(p)
        if extra:
            extra = np.array(extra)
            lam_e, ok_e = _defects(H, extra)
            pts = np.vstack([pts, extra])
            lam = np.concatenate([lam, lam_e])
            ok = np.concatenate([ok, ok_e])
            n_refined = len(extra)

    if ok.any():
        k = int(np.nanargmin(np.where(ok, lam, np.nan)))
        inf, argmin = float(lam[k]), pts[k]
    else:
        inf, argmin = float("nan"), np.full(H.dim, np.nan)
    passed = bool(np.isfinite(inf) and inf >= c0)
    return HormanderReport(pts, lam, inf, argmin, c0, passed, tuple(box), errors, n_refined)


def _polish(H, x0, lo, hi):
    def fun(y):
        y = np.clip(np.atleast_1d(y), lo, hi)
        lam, ok = _defects(H, y[None, :])
        return float(lam[0]) if ok[0] else np.inf

    width = hi - lo
    try:
        if H.dim == 1:
            step = width[0] / 50.0
            a, b = max(lo[0], x0[0] - step), min(hi[0], x0[0] + step)
            res = optimize.minimize_scalar(fun, bounds=(a, b), method="bounded",
                                           options={"xatol": 1e-12})
            y = np.array([res.x])
        else:
            simplex = [x0] + [x0 + np.eye(H.dim)[i] * width[i] / 100.0 for i in range(H.dim)]
            res = optimize.minimize(fun, x0, method="Nelder-Mead",
                                    options={"initial_simplex": np.array(simplex),
                                             "xatol": 1e-10, "fatol": 1e-14, "maxiter": 2000})
            y = res.x
    except (ValueError, FloatingPointError):
        return None
    y = np.clip(np.atleast_1d(y), lo, hi)
    return y if fun(y) <= fun(x0) else None


def check_jump_fields(exprs_dz, mark_vars):
    """Substitute z = 0 in derivative expressions; used by symbolic jumps."""
    zero = {z: 0.0 for z in mark_vars}
    try:
        return [ex.simplify(ex.subs(e, zero)) for e in exprs_dz]
    except DomainError as err:
        raise UnsupportedFormError(
            f"jump coefficient is not differentiable in z at z=0 ({err})"
        ) from err
