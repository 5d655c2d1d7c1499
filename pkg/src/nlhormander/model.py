"""Jump SDE models ``dX = b dt + sigma_k dW^k + int g(X-, z) Ñ(dt, dz)``.

The Lévy measure is ``nu(dz) = dz / |z|^(m + alpha)`` on ``0 < |z| < zmax``
where ``m`` is the mark dimension.  The mark dimension is independent of
the state dimension so that a two-dimensional system can be driven by a
scalar Lévy process.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy.stats import qmc

from . import expr as ex
from .errors import ArityError, DimensionMismatchError, JumpConditionError
from .vecfield import VectorField, check_jump_fields, state_variables


def mark_variables(m: int) -> tuple:
    return tuple(f"z{i + 1}" for i in range(m))


class SymbolicJump:
    """Jump coefficient ``g(x, z)`` given by expressions in state and mark vars."""

    symbolic = True

    def __init__(self, exprs: Sequence, state_vars: Sequence[str], mark_vars: Sequence[str]):
        self.exprs = tuple(ex.as_expr(e) for e in exprs)
        self.state_vars = tuple(state_vars)
        self.mark_vars = tuple(mark_vars)
        if len(self.exprs) != len(self.state_vars):
            raise ArityError(f"g has {len(self.exprs)} components for dimension {len(self.state_vars)}")
        allowed = set(self.state_vars) | set(self.mark_vars)
        for e in self.exprs:
            extra = ex.free_vars(e) - allowed
            if extra:
                raise DimensionMismatchError(f"g component {e} uses undeclared {sorted(extra)}")
        self._vars = self.state_vars + self.mark_vars

    @classmethod
    def from_matrix(cls, matrix, state_vars, mark_vars=None):
        """``g(x, z) = M(x) z`` for a ``d x m`` matrix of expressions."""
        rows = [[ex.as_expr(c) for c in row] for row in matrix]
        m = len(rows[0]) if rows else 0
        mark_vars = tuple(mark_vars) if mark_vars is not None else mark_variables(m)
        exprs = []
        for row in rows:
            if len(row) != m:
                raise ArityError("ragged jump matrix")
            acc = ex.ZERO
            for c, z in zip(row, mark_vars):
                acc = ex.add(acc, ex.mul(c, ex.Var(z)))
            exprs.append(acc)
        return cls(exprs, state_vars, mark_vars)

    @property
    def dim(self):
        return len(self.state_vars)

    @property
    def mark_dim(self):
        return len(self.mark_vars)

    def __str__(self):
        return ", ".join(ex.to_str(e) for e in self.exprs)

    @cached_property
    def _value(self):
        return ex.compile_exprs(self.exprs, self._vars)

    @cached_property
    def _jac_x(self):
        comps = [ex.simplify(ex.diff(e, v)) for e in self.exprs for v in self.state_vars]
        return ex.compile_exprs(comps, self._vars)

    @cached_property
    def _jac_z(self):
        comps = [ex.simplify(ex.diff(e, z)) for e in self.exprs for z in self.mark_vars]
        return ex.compile_exprs(comps, self._vars)

    def _stack(self, x, z):
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        x, z = np.broadcast_arrays(x[..., :, None], z[..., None, :])
        return np.concatenate([x[..., :, 0], z[..., 0, :]], axis=-1)

    def value(self, x, z):
        return self._value(self._stack(x, z))

    def jac_x(self, x, z):
        out = self._jac_x(self._stack(x, z))
        return out.reshape(out.shape[:-1] + (self.dim, self.dim))

    def jac_z(self, x, z):
        out = self._jac_z(self._stack(x, z))
        return out.reshape(out.shape[:-1] + (self.dim, self.mark_dim))

    def fields(self) -> list:
        out = []
        for z in self.mark_vars:
            dz = [ex.diff(e, z) for e in self.exprs]
            out.append(VectorField(tuple(check_jump_fields(dz, self.mark_vars)), self.state_vars))
        return out

    def vanishes_at_zero(self) -> bool:
        zero = {z: 0.0 for z in self.mark_vars}
        return all(ex.is_zero(ex.subs(e, zero)) for e in self.exprs)


@dataclass
class LargeJumpChannel:
    """Compound-Poisson jumps ``X[targets] += w`` with intensity
    ``kappa(X, w) / |w|^(m + alpha)`` on ``|w| >= delta``.

    Simulated by thinning against the dominating intensity
    ``kappa0 / |w|^(m + alpha)``.
    """

    delta: float
    alpha: float
    kappa0: float
    kappa: Callable  # (states (n, D), w (n, m)) -> (n,)
    targets: tuple
    mark_dim: int


@dataclass
class SdeModel:
    name: str
    drift: VectorField
    sigma: tuple = ()
    jump: object = None
    alpha: float = 1.0
    zmax: float = 1.0
    odd_g: bool = True
    large_jumps: LargeJumpChannel | None = None
    box: tuple | None = None
    notes: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.sigma = tuple(self.sigma)
        if not 0.0 < self.alpha < 2.0:
            raise ValueError(f"alpha must lie in (0, 2), got {self.alpha}")
        if self.zmax <= 0:
            raise ValueError("zmax must be positive")
        for s in self.sigma:
            if s.variables != self.drift.variables:
                raise DimensionMismatchError("diffusion column over different variables than drift")
        if self.jump is not None and tuple(self.jump.state_vars) != self.variables:
            raise DimensionMismatchError("jump coefficient over different state variables")

    @property
    def dim(self) -> int:
        return self.drift.dim

    @property
    def variables(self) -> tuple:
        return tuple(self.drift.variables)

    @property
    def mark_dim(self) -> int:
        return 0 if self.jump is None else self.jump.mark_dim

    @property
    def n_brownian(self) -> int:
        return len(self.sigma)

    # compiled evaluators ---------------------------------------------------

    @cached_property
    def drift_eval(self):
        return self.drift.evaluator()

    @cached_property
    def drift_jac(self):
        rows = self.drift.jacobian()
        f = ex.compile_exprs([c for r in rows for c in r], self.variables)
        d = self.dim
        return lambda x: f(x).reshape(x.shape[:-1] + (d, d))

    @cached_property
    def sigma_eval(self):
        """``x -> (..., d, n_brownian)`` with columns sigma_k."""
        d, k = self.dim, self.n_brownian
        comps = [s.components[i] for i in range(d) for s in self.sigma]
        f = ex.compile_exprs(comps, self.variables)
        return lambda x: f(x).reshape(x.shape[:-1] + (d, k))

    @cached_property
    def sigma_jac(self):
        """``x -> (..., k, d, d)``: Jacobian of each column."""
        d, k = self.dim, self.n_brownian
        comps = [c for s in self.sigma for r in s.jacobian() for c in r]
        f = ex.compile_exprs(comps, self.variables)
        return lambda x: f(x).reshape(x.shape[:-1] + (k, d, d))

    @cached_property
    def jump_fields(self) -> list:
        return [] if self.jump is None else self.jump.fields()

    @cached_property
    def jump_fields_eval(self):
        """``x -> (..., d, m)`` with columns Ã_k."""
        d, m = self.dim, self.mark_dim
        comps = [V.components[i] for i in range(d) for V in self.jump_fields]
        f = ex.compile_exprs(comps, self.variables)
        return lambda x: f(x).reshape(x.shape[:-1] + (d, m))

    @cached_property
    def jump_fields_jac(self):
        """``x -> (..., m, d, d)``: Jacobian of each Ã_k."""
        d, m = self.dim, self.mark_dim
        comps = [c for V in self.jump_fields for r in V.jacobian() for c in r]
        f = ex.compile_exprs(comps, self.variables)
        return lambda x: f(x).reshape(x.shape[:-1] + (m, d, d))

    # validation -----------------------------------------------------------

    def probe(self, n: int = 256, seed: int = 0, extent: float = 2.0):
        """Deterministic probe grid of ``(x, z)`` pairs with ``|z| < zmax``."""
        m = max(self.mark_dim, 1)
        if self.box is not None:
            lo = np.array([b[0] for b in self.box])
            hi = np.array([b[1] for b in self.box])
        else:
            lo, hi = -extent * np.ones(self.dim), extent * np.ones(self.dim)
        u = qmc.Halton(d=self.dim + m + 1, scramble=True, seed=seed).random(n)
        x = lo + (hi - lo) * u[:, : self.dim]
        dirs = u[:, self.dim: self.dim + m] * 2 - 1
        norms = np.linalg.norm(dirs, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        r = 0.999 * self.zmax * u[:, -1:]
        z = dirs / norms * r
        return x, z[:, : self.mark_dim]

    def validate(self, n_probe: int = 256):
        """Check g(x,0)=0, det(I + grad_x g) > 0 and oddness on a probe grid."""
        if self.jump is None:
            return
        if getattr(self.jump, "symbolic", False) and not self.jump.vanishes_at_zero():
            raise ValueError("jump coefficient must satisfy g(x, 0) = 0")
        x, z = self.probe(n_probe)
        jac = self.jump.jac_x(x, z)
        det = np.linalg.det(np.eye(self.dim) + jac)
        if not np.all(det > 0):
            i = int(np.argmin(det))
            raise JumpConditionError(
                f"det(I + grad_x g) = {det[i]:.3g} <= 0 at x={x[i].tolist()}, z={z[i].tolist()} "
                "violates the (H_g°) condition"
            )
        if self.odd_g:
            s = self.jump.value(x, z) + self.jump.value(x, -z)
            if not np.allclose(s, 0.0, atol=1e-10):
                raise ValueError("odd_g is set but g(x, -z) != -g(x, z) on the probe grid")


def sde_from_strings(
    name: str,
    drift: Sequence[str],
    sigma: Sequence[Sequence[str]] = (),
    g: Sequence[str] | None = None,
    alpha: float = 1.0,
    zmax: float = 1.0,
    mark_dim: int | None = None,
    variables: Sequence[str] | None = None,
    **kwargs,
) -> SdeModel:
    """Build a model from DSL strings (drift and sigma in state variables,
    ``g`` additionally in ``z1..zm``)."""
    d = len(drift)
    variables = tuple(variables) if variables is not None else state_variables(d)
    b = VectorField(tuple(ex.parse_expr(s, variables) for s in drift), variables)
    cols = []
    for col in sigma:
        if len(col) != d:
            raise ArityError(f"diffusion column has {len(col)} entries for dimension {d}")
        cols.append(VectorField(tuple(ex.parse_expr(s, variables) for s in col), variables))
    jump = None
    if g is not None:
        if len(g) != d:
            raise ArityError(f"g has {len(g)} components for dimension {d}")
        if mark_dim is None:
            zs = set()
            for s in g:
                zs |= {v for v in ex.free_vars(ex.parse_expr(s)) if v.startswith("z")}
            mark_dim = max([int(v[1:]) for v in zs], default=1)
        mv = mark_variables(mark_dim)
        jump = SymbolicJump([ex.parse_expr(s, variables + mv) for s in g], variables, mv)
    return SdeModel(name, b, tuple(cols), jump, alpha, zmax, **kwargs)
