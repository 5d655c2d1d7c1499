"""Fast end-to-end oracle suite behind ``nlhormander selftest``.

Every check compares against a closed form or an exact identity, with
small sample sizes so the whole suite finishes in well under a minute.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import expr as ex
from . import registry
from .analyze import generator_value
from .malliavin import gv_check, kolmogorov_sigma_oracle, laplace_from_sigma
from .simulate import SimulationScheme, simulate_ensemble, simulate_path
from .symmetrize import build_transform, verify_identity
from .vecfield import (build_hierarchy, ito_drift_field, jump_fields, lie_bracket, parse_field,
                       uniform_check)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def to_dict(self):
        return {"name": self.name, "passed": self.passed, "detail": self.detail,
                "seconds": round(self.seconds, 3)}


def _is_const_field(V, values):
    return all(ex.is_zero(ex.simplify(ex.sub(c, ex.Const(v)))) for c, v in zip(V.components, values))


def _parser_roundtrip():
    e = ex.parse_expr("x1*sin(x2) - 3/(1 + x1^2)")
    back = ex.parse_expr(ex.to_str(e))
    pts = np.array([[0.3, -1.2], [2.0, 0.5]])
    a = ex.compile_exprs([e], ("x1", "x2"))(pts)
    b = ex.compile_exprs([back], ("x1", "x2"))(pts)
    err = float(np.abs(a - b).max())
    return err == 0.0, f"round-trip difference {err:.1e}"


def _brackets():
    m1 = registry.example1()
    b1 = lie_bracket(ito_drift_field(m1), jump_fields(m1)[0])
    m2 = registry.example2()
    A1, A2 = jump_fields(m2)
    b2 = lie_bracket(A1, A2)
    ok = _is_const_field(b1, [1.0]) and _is_const_field(b2, [0.0, 1.0])
    return ok, f"[A0,A1] = {b1}; [A1,A2] = {b2}"


def _hormander():
    H = build_hierarchy(registry.example1(), 1)
    rep = uniform_check(H, [(-10, 10)], 2000, c0=1.0)
    Hd = build_hierarchy(registry.negative_control(), 2)
    bad = uniform_check(Hd, [(-5, 5), (-5, 5)], 200, c0=1e-9)
    ok = abs(rep.infimum - 1.0) < 1e-9 and not bad.passed and abs(bad.infimum) < 1e-12
    return ok, f"example1 infimum {rep.infimum:.12f}; control infimum {bad.infimum:.1e}"


def _psi_closed_form():
    T = build_transform(2.0, 1.0, 1.0, 2.0)
    v = float(T.radius(None, [[0.5]])[0])
    return abs(v - 2 / 3) < 1e-8, f"psi(0.5) = {v:.12f} (closed form 2/3)"


def _identity():
    T = build_transform("1.5 + 0.4*cos(3*z1)", 1.3, 1.0, 2.0)
    worst = 0.0
    for f in ("z1^2", "1 - cos(2*z1)", "z1^2*exp(z1)"):
        worst = max(worst, verify_identity(T, f).rel_error)
    return worst < 1e-5, f"worst relative error {worst:.1e}"


def _gradient():
    T = build_transform("1.5 + 0.4*z1^2", 1.5, 1.0, 2.0)
    fd = T.fd_jacobian([0.0], h=1e-6)[0, 0]
    target = 1.5 ** (1 / 1.5)
    return abs(fd - target) < 1e-3, f"FD {fd:.6f} vs kappa(0)^(1/alpha) = {target:.6f}"


def _flows():
    worst = 0.0
    scheme = SimulationScheme(h=1e-3, eps=0.05, seed=1)
    for name in ("example1", "example2", "example3", "example4", "example5"):
        m = registry.builtin(name)
        p = simulate_path(m, scheme, np.zeros(m.dim) + 0.1, 0.5, rng=3)
        worst = max(worst, p.flow_error())
    return worst < 1e-6, f"max |JK - I| = {worst:.1e}"


def _kolmogorov():
    m = registry.example4()
    p = simulate_path(m, SimulationScheme(h=1e-3, eps=0.05, seed=2), [0.0, 0.0], 1.0, rng=0)
    err = float(np.abs(p.sigma_hat - kolmogorov_sigma_oracle(1.0)).max())
    return err < 1e-3, f"max entry error {err:.1e}"


def _laplace_identity():
    S = np.tile(np.eye(2), (10, 1, 1))
    lam = np.array([1.0, 2.0, 5.0])
    rep = laplace_from_sigma(S * 0.5, [1.0, 0.0], lam, 0.5)
    err = float(np.abs(rep.estimate - np.exp(-lam * 0.5)).max())
    return err < 1e-12, f"max deviation from exp(-lambda t) {err:.1e}"


def _gv():
    m = registry.example1()
    V = parse_field("x1^2 + sin(x1)", 1)
    errs = [gv_check(m, V, np.array([0.4]), h) for h in (1e-2, 1e-3)]
    rate = math.log10(errs[0] / errs[1]) if errs[1] > 0 else float("inf")
    return errs[1] < 1e-5 and rate > 1.8, f"deviations {errs[0]:.1e}, {errs[1]:.1e}"


def _generator():
    v = generator_value(registry.example1(), "x1^2", [0.0])
    return abs(v - 2.0) < 1e-8, f"A phi(0) = {v:.10f} (closed form 2)"


def _determinism():
    m = registry.example1()
    s = SimulationScheme(h=1e-2, eps=0.05, seed=5)
    a = simulate_ensemble(m, s, [0.0], 0.5, 300, chunk=300).terminal
    b = simulate_ensemble(m, s, [0.0], 0.5, 300, chunk=37, workers=3).terminal
    return bool(np.array_equal(a, b)), "chunked and threaded ensembles identical" if np.array_equal(a, b) else "mismatch"


CHECKS = {
    "parser_roundtrip": _parser_roundtrip,
    "bracket_oracles": _brackets,
    "hormander_example1": _hormander,
    "psi_closed_form": _psi_closed_form,
    "change_of_variables": _identity,
    "gradient_at_zero": _gradient,
    "flow_consistency": _flows,
    "kolmogorov_covariance": _kolmogorov,
    "laplace_identity": _laplace_identity,
    "gv_identity": _gv,
    "generator_closed_form": _generator,
    "determinism": _determinism,
}


def run_selftest(only=None) -> list:
    out = []
    for name, fn in CHECKS.items():
        if only and name not in only:
            continue
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as err:  # a crash counts as a failed check
            ok, detail = False, f"{type(err).__name__}: {err}"
        out.append(CheckResult(name, bool(ok), detail, time.perf_counter() - t0))
    return out
