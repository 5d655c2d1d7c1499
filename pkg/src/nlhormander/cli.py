"""Command line front end.

``python -m nlhormander <command> [options]`` with commands check,
simulate, density, laplace, symmetrize, kinetic and selftest.

Exit codes: 0 success, 1 analysis-level failure (for instance a failed
Hörmander check), 2 usage or configuration error.  Diagnostics go to
standard error.  ``--json PATH`` writes the schema-versioned report
(``-`` for standard output) and ``--out PATH`` writes the command's CSV
table; a path ending in ``.json`` given to ``--out`` receives the report
instead.  Without either flag the report is printed to standard output.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import expr as ex
from . import registry
from .errors import NLHormanderError
from .simulate import SimulationScheme

SPEC_VERSION = "1.0"
log = logging.getLogger("nlhormander")

# options whose values routinely start with '-' (e.g. "--box -10:10")
_VALUE_OPTS = ("--box", "--x0", "--u", "--x", "--lambdas", "--drift")


class UsageError(Exception):
    pass


def load_schema(command: str) -> dict:
    """The JSON schema shipped for a command's report."""
    from importlib.resources import files

    return json.loads(files(__package__).joinpath("schemas", f"{command}.schema.json").read_text("utf-8"))


# ---------------------------------------------------------------------------
# parsing helpers


def _floats(text, what):
    try:
        return [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"{what}: expected comma-separated numbers, got {text!r}") from None


def parse_box(spec, dim):
    """``"lo:hi"`` (repeated over every axis) or ``"lo:hi,lo:hi,..."``."""
    try:
        sides = [tuple(float(v) for v in part.split(":")) for part in spec.split(",")]
    except ValueError:
        raise UsageError(f"--box: cannot parse {spec!r}") from None
    if any(len(s) != 2 or not s[0] < s[1] for s in sides):
        raise UsageError(f"--box: each side must be lo:hi with lo < hi, got {spec!r}")
    if len(sides) == 1:
        sides = sides * dim
    if len(sides) != dim:
        raise UsageError(f"--box: {len(sides)} sides for dimension {dim}")
    return sides


def _point(text, dim, what="--x0"):
    if text is None:
        return np.zeros(dim)
    v = _floats(text, what)
    if len(v) == 1:
        v = v * dim
    if len(v) != dim:
        raise UsageError(f"{what}: {len(v)} coordinates for dimension {dim}")
    return np.array(v)


def _fmt(v) -> str:
    return repr(float(v))


def _write_csv(path, header, rows):
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for r in rows:
        w.writerow([c if isinstance(c, str) else _fmt(c) for c in r])
    data = buf.getvalue()
    if path == "-":
        sys.stdout.write(data)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(data)


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.floating, float)):
        f = float(o)
        return f if math.isfinite(f) else str(f)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.bool_):
        return bool(o)
    return o


def _emit(args, report, rows=None, header=None):
    report = _jsonable({"spec_version": SPEC_VERSION, "command": args.command, **report})
    text = json.dumps(report, indent=2, sort_keys=False) + "\n"
    json_path = args.json
    out = args.out
    if out is not None and out.endswith(".json"):
        json_path, out = json_path or out, None
    if out is not None and rows is not None:
        _write_csv(out, header, rows)
    if json_path == "-" or (json_path is None and out is None):
        sys.stdout.write(text)
    elif json_path is not None:
        Path(json_path).write_text(text, encoding="utf-8")


def _load(args, sde=True):
    params = {}
    if getattr(args, "alpha", None) is not None:
        params["alpha"] = args.alpha
    src = args.model
    scheme = None
    try:
        if src in registry.BUILTINS:
            model = registry.builtin(src, **params)
        else:
            if not Path(src).exists():
                raise UsageError(f"unknown model {src!r}: not a built-in ({', '.join(registry.BUILTINS)}) "
                                 "and no such file")
            model, scheme = registry.load_config(src)
            if params:
                log.warning("--alpha is ignored for model files")
    except KeyError as err:
        raise UsageError(str(err.args[0])) from None
    if sde:
        from .symmetrize import KineticModel, kinetic_to_sde

        if isinstance(model, KineticModel):
            model = kinetic_to_sde(model)
    return model, scheme


def _scheme(args, base=None):
    s = base or SimulationScheme()
    kw = {}
    names = [("h", "h"), ("eps", "eps"), ("mode", "small_jump_mode")]
    if args.command != "kinetic":
        names.append(("delta", "delta"))
    for name, attr in names:
        v = getattr(args, name, None)
        if v is not None:
            kw[attr] = v
    if args.seed is not None:
        kw["seed"] = args.seed
    try:
        return s.with_(**kw) if kw else s
    except (TypeError, ValueError) as err:
        raise UsageError(str(err)) from None


def _chunk(N, threads):
    return max(1000, -(-N // max(threads, 1))) if threads > 1 else 20000


# ---------------------------------------------------------------------------
# commands


def cmd_check(args):
    from .vecfield import build_hierarchy, uniform_check

    model, _ = _load(args)
    box = parse_box(args.box, model.dim) if args.box else model.box
    if box is None:
        raise UsageError("--box is required for models without a default box")
    H = build_hierarchy(model, args.j0)
    c0 = args.c0 if args.c0 is not None else 1e-10
    rep = uniform_check(H, box, args.samples, c0, seed=args.seed or 0)
    msg = "holds" if rep.passed else "FAILS"
    log.warning("uniform condition %s on the box: infimum %.10g (c0 = %g)", msg, rep.infimum, c0)
    report = {"model": model.name, "j0": args.j0, "fields": H.summary(), **rep.to_dict()}
    if model.notes:
        report["notes"] = model.notes
    header = [*model.variables, "defect"]
    rows = [[*p, lam] for p, lam in zip(rep.points, rep.defects)]
    _emit(args, report, rows, header)
    return 0 if rep.passed else 1


def _moments(X):
    X = np.asarray(X)
    if len(X) == 0:
        return {"mean": None, "covariance": None}
    cov = np.atleast_2d(np.cov(X, rowvar=False)) if len(X) > 1 else np.zeros((X.shape[1],) * 2)
    return {"mean": X.mean(axis=0), "covariance": cov}


def cmd_simulate(args):
    from .simulate import simulate_ensemble

    model, base = _load(args)
    scheme = _scheme(args, base)
    x0 = _point(args.x0, model.dim)
    N = args.paths
    res = simulate_ensemble(model, scheme, x0, args.t, N, sigma_hat=args.sigma_hat,
                            workers=args.threads, chunk=_chunk(N, args.threads))
    d = model.dim
    header = ["path", *[f"x{i + 1}" for i in range(d)]]
    if args.sigma_hat:
        header += [f"sigma_hat_{i + 1}{j + 1}" for i in range(d) for j in range(d)]
    rows = []
    for p in range(N):
        row = [str(p), *res.terminal[p]]
        if args.sigma_hat:
            row += list(res.sigma_hat[p].ravel())
        rows.append(row)
    good = res.terminal[~res.failed]
    report = {"model": model.name, "t": args.t, "x0": x0, "paths": N, "failures": res.n_failed,
              "scheme": _scheme_dict(scheme), "moments": _moments(good)}
    if args.sigma_hat:
        report["sigma_hat_mean"] = res.sigma_hat[~res.failed].mean(axis=0) if len(good) else None
    _emit(args, report, rows, header)
    return 0


def _scheme_dict(s):
    return {"h": s.h, "eps": s.eps, "delta": s.delta, "small_jump_mode": s.small_jump_mode, "seed": s.seed}


def cmd_density(args):
    from .analyze import axis_xi, char_function, default_grid, kde, kde_stability
    from .simulate import simulate_ensemble

    model, base = _load(args)
    if model.dim > 2:
        raise UsageError("density estimates are limited to dimension <= 2")
    scheme = _scheme(args, base)
    x0 = _point(args.x0, model.dim)
    N = args.paths
    res = simulate_ensemble(model, scheme, x0, args.t, N, workers=args.threads,
                            chunk=_chunk(N, args.threads))
    X = res.good()
    grid = default_grid(X, args.grid)
    bw = "silverman" if args.bandwidth == "auto" else float(args.bandwidth)
    est = kde(X, bw, grid)
    stab = kde_stability(X, grid)
    d = model.dim
    profiles = [char_function(X, axis_xi(d, a, args.char_max_xi, args.char_points)) for a in range(d)]
    first = [p.first_below_floor() for p in profiles]
    decay_ok = all(f is not None and f <= args.char_max_xi for f in first)
    stable = stab["sup_change"] < args.stability
    passed = decay_ok and stable
    log.warning("decay heuristic %s (first |xi| below floor per axis: %s; KDE change %.3f)",
                "passes" if passed else "fails", first, stab["sup_change"])
    if d == 1:
        header = ["x1", "density"]
        rows = [[g, v] for g, v in zip(grid[0], est.values)]
    else:
        header = ["x1", "x2", "density"]
        rows = [[a, b, est.values[i, j]] for i, a in enumerate(grid[0]) for j, b in enumerate(grid[1])]
    char_rows = [[str(a), *xi, mod, p.noise_floor]
                 for a, p in enumerate(profiles) for xi, mod in zip(p.xi, p.modulus)]
    char_path = args.char_out
    if char_path is None and args.out and not args.out.endswith(".json") and args.out != "-":
        char_path = str(Path(args.out).with_name(Path(args.out).stem + "_char.csv"))
    if char_path:
        _write_csv(char_path, ["axis", *[f"xi{i + 1}" for i in range(d)], "modulus", "noise_floor"], char_rows)
    report = {
        "model": model.name, "t": args.t, "x0": x0, "paths": N, "failures": res.n_failed,
        "bandwidth": est.bandwidth, "integral": est.integral(),
        "kde_sup_change_half_bandwidth": stab["sup_change"],
        "noise_floor": profiles[0].noise_floor if profiles else None,
        "first_below_floor": first, "char_max_xi": args.char_max_xi,
        "decay_observed": decay_ok, "kde_stable": stable, "passed": passed,
        "note": "proxy evidence only; thresholds are engineering choices",
    }
    _emit(args, report, rows, header)
    return 0 if passed else 1


def cmd_laplace(args):
    from .malliavin import laplace_transform

    model, base = _load(args)
    scheme = _scheme(args, base)
    x0 = _point(args.x0, model.dim)
    lam = _floats(args.lambdas, "--lambdas")
    if args.u is not None:
        u = np.array(_floats(args.u, "--u"))
        if len(u) != model.dim or np.linalg.norm(u) == 0:
            raise UsageError(f"--u needs {model.dim} coordinates, not all zero")
        u = u / np.linalg.norm(u)
        sweep = None
    else:
        u, sweep = np.eye(model.dim)[0], args.u_sweep
    rep = laplace_transform(model, scheme, x0, u, args.t, lam, args.paths, workers=args.threads,
                            u_sweep=sweep)
    report = {"model": model.name, "x0": x0, **rep.to_dict(),
              "strictly_decreasing_2se": rep.strictly_decreasing(2.0),
              "decay_observed": rep.decay_observed}
    rows = [[L, e, s] for L, e, s in zip(rep.lambdas, rep.estimate, rep.stderr)]
    log.warning("gamma = %s, c2 = %s, flags = %s", rep.gamma, rep.c2, rep.flags)
    _emit(args, report, rows, ["lambda", "estimate", "stderr"])
    return 0 if rep.decay_observed else 1


_DEFAULT_TESTS = {
    1: ("z1^2", "1 - cos(z1)", "z1^2*exp(z1)"),
    2: ("z1^2 + z2^2", "1 - cos(z1 + z2)", "z1^2*exp(z2)"),
    3: ("z1^2 + z2^2 + z3^2", "1 - cos(z1 - z3)", "z2^2*exp(z1)"),
}


def cmd_symmetrize(args):
    from .symmetrize import build_transform, check_kernel_bounds, verify_identity

    try:
        kexpr = ex.parse_expr(args.kernel)
    except NLHormanderError as err:
        raise UsageError(f"--kernel: {err}") from None
    free = ex.free_vars(kexpr)
    zs = [v for v in free if v.startswith("z")]
    m = args.dim or max([int(v[1:]) for v in zs], default=1)
    state = sorted((v for v in free if v[0] in "xv"), key=lambda s: (s[0] != "x", int(s[1:])))
    x = _point(args.x, len(state), "--x") if state else None
    T0 = build_transform(kexpr, args.alpha, args.radius, 1e6, mark_dim=m, state_vars=state)
    probe = check_kernel_bounds(T0, x_box=None)
    if probe["kappa_min"] <= 0:
        raise UsageError("kernel must be positive on the ball")
    k0 = args.kappa0 or max(probe["kappa_max"], 1 / probe["kappa_min"]) * 1.01
    T = build_transform(kexpr, args.alpha, args.radius, max(k0, 1.0), mark_dim=m, state_vars=state)
    bounds = check_kernel_bounds(T)
    rng = np.random.default_rng(args.seed or 0)
    g = rng.standard_normal((256, m))
    z = g / np.linalg.norm(g, axis=1, keepdims=True) * (args.radius * rng.uniform(0.01, 1.0, (256, 1)))
    xa = None if x is None else np.broadcast_to(x, (256, len(state)))
    a = T.a(z, xa)
    tests = args.verify or list(_DEFAULT_TESTS.get(m, _DEFAULT_TESTS[3]))
    ident = []
    for f in tests:
        r = verify_identity(T, f, x)
        ident.append({"f": f, **r.to_dict()})
    G0 = T.grad_at_zero(x)
    fd = T.fd_jacobian(np.zeros(m), x, h=args.radius * 1e-6)
    grad_err = float(np.abs(fd - G0).max())
    k_at0 = float(G0[0, 0] ** args.alpha)
    ok_ident = all(r["rel_error"] < args.tol for r in ident)
    passed = ok_ident and grad_err < 1e-3
    report = {
        "kernel": ex.to_str(kexpr), "alpha": args.alpha, "radius": args.radius, "mark_dim": m,
        "state_vars": state, "x": x, "kappa0": T.kappa0, "kernel_bounds": bounds,
        "a_bounds_observed": {"min": float(a.min()), "max": float(a.max()),
                              "theory": [T.kappa0 ** (-1 / args.alpha), T.kappa0 ** (1 / args.alpha)]},
        "identity": ident,
        "gradient_at_zero": {"finite_difference": fd, "expected": G0, "kappa_at_zero": k_at0,
                             "max_abs_error": grad_err},
        "passed": passed,
    }
    from .symmetrize import gradient_regularity

    radii, ratio = gradient_regularity(T, x=x)
    report["gradient_holder_ratios"] = {"radii": radii, "ratio": ratio}
    _emit(args, report, [[r, q] for r, q in zip(radii, ratio)], ["radius", "ratio"])
    return 0 if passed else 1


def cmd_kinetic(args):
    from .simulate import simulate_ensemble
    from .symmetrize import KineticModel, kinetic_to_sde
    from .vecfield import build_hierarchy, uniform_check

    d = args.dim
    drift = args.drift.split(";") if args.drift else ["-x%d" % (i + 1) for i in range(d)]
    km = KineticModel(d, args.kernel or registry.KINETIC_KERNEL, tuple(drift), alpha=args.alpha,
                      delta=args.delta, kappa0=args.kappa0)
    box = parse_box(args.box, 2 * d)
    km.box = tuple(box)
    model = kinetic_to_sde(km)
    H = build_hierarchy(model, args.j0)
    rep = uniform_check(H, box, args.samples, args.c0 if args.c0 is not None else 1e-10, seed=args.seed or 0)
    report = {"kernel": ex.to_str(km.kappa), "drift": [ex.to_str(b) for b in km.b], "alpha": km.alpha,
              "delta": km.delta, "kappa0": km.kappa0, "j0": args.j0, "fields": H.summary(),
              "hormander": rep.to_dict()}
    rows, header = None, None
    if args.paths:
        scheme = _scheme(args)
        x0 = _point(args.x0, 2 * d)
        res = simulate_ensemble(model, scheme, x0, args.t, args.paths, workers=args.threads,
                                chunk=_chunk(args.paths, args.threads))
        report["simulation"] = {"t": args.t, "paths": args.paths, "failures": res.n_failed,
                                "scheme": _scheme_dict(scheme), "moments": _moments(res.good())}
        header = ["path", *model.variables]
        rows = [[str(p), *res.terminal[p]] for p in range(args.paths)]
    _emit(args, report, rows, header)
    return 0 if rep.passed else 1


def cmd_selftest(args):
    from .selftest import run_selftest

    results = run_selftest(args.only)
    for r in results:
        log.warning("%-24s %s  %s", r.name, "PASS" if r.passed else "FAIL", r.detail)
    ok = all(r.passed for r in results)
    rows = [[r.name, "pass" if r.passed else "fail", r.seconds] for r in results]
    _emit(args, {"passed": ok, "checks": [r.to_dict() for r in results]}, rows,
          ["check", "result", "seconds"])
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# parser


def _common(p):
    p.add_argument("--seed", type=int, default=None, help="random seed (overrides the model file)")
    p.add_argument("--out", default=None, help="CSV output path ('-' for stdout; *.json for the report)")
    p.add_argument("--json", default=None, help="JSON report path ('-' for stdout)")
    p.add_argument("--threads", type=int, default=1, help="worker threads for ensembles")
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.add_argument("-q", "--quiet", action="store_true")


def _sim_opts(p, t=1.0, paths=10000, delta=True):
    p.add_argument("--t", type=float, default=t, help="time horizon")
    p.add_argument("--x0", default=None, help="initial point, comma separated")
    p.add_argument("--paths", type=int, default=paths)
    p.add_argument("--h", type=float, default=None, help="time step")
    p.add_argument("--eps", type=float, default=None, help="small-jump cutoff")
    if delta:
        p.add_argument("--delta", type=float, default=None, help="splitting radius of the scheme")
    p.add_argument("--mode", choices=("drop", "gaussian"), default=None, help="small-jump treatment")


def build_parser():
    ap = argparse.ArgumentParser(prog="nlhormander", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="sampled uniform Hörmander condition on a box")
    p.add_argument("--model", required=True)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--j0", type=int, default=1)
    p.add_argument("--box", default=None, help="lo:hi or lo:hi,lo:hi,...")
    p.add_argument("--c0", type=float, default=None)
    p.add_argument("--samples", type=int, default=10000)
    _common(p)

    p = sub.add_parser("simulate", help="ensemble of terminal states")
    p.add_argument("--model", required=True)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--sigma-hat", action="store_true", help="also accumulate the reduced Malliavin matrix")
    _sim_opts(p)
    _common(p)

    p = sub.add_parser("density", help="KDE and characteristic-function decay")
    p.add_argument("--model", required=True)
    p.add_argument("--alpha", type=float, default=None)
    _sim_opts(p, paths=100000)
    p.add_argument("--grid", type=int, default=256, help="points per axis")
    p.add_argument("--bandwidth", default="auto")
    p.add_argument("--char-max-xi", type=float, default=40.0)
    p.add_argument("--char-points", type=int, default=401)
    p.add_argument("--char-out", default=None, help="CSV for the characteristic function")
    p.add_argument("--stability", type=float, default=0.10, help="allowed KDE sup-change")
    _common(p)

    p = sub.add_parser("laplace", help="Laplace transform of the reduced Malliavin matrix")
    p.add_argument("--model", required=True)
    p.add_argument("--alpha", type=float, default=None)
    _sim_opts(p)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--u", default=None, help="direction, comma separated")
    g.add_argument("--u-sweep", type=int, default=16)
    p.add_argument("--lambdas", default="1,2,5,10,20,50,100,200,500,1000")
    _common(p)

    p = sub.add_parser("symmetrize", help="kernel symmetrising transform diagnostics")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--kernel", required=True, help="expression in z1.. (and x.., v..)")
    p.add_argument("--verify", action="append", default=None, help="test function in z1..; repeatable")
    p.add_argument("--kappa0", type=float, default=None)
    p.add_argument("--dim", type=int, default=None, help="mark dimension")
    p.add_argument("--x", default=None, help="state point for state-dependent kernels")
    p.add_argument("--tol", type=float, default=1e-5)
    _common(p)

    p = sub.add_parser("kinetic", help="kinetic operator: Hörmander check and optional simulation")
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--kernel", default=None)
    p.add_argument("--drift", default=None, help="b components separated by ';'")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--kappa0", type=float, default=2.0)
    p.add_argument("--j0", type=int, default=1)
    p.add_argument("--box", default="-3:3")
    p.add_argument("--c0", type=float, default=None)
    p.add_argument("--samples", type=int, default=2000)
    _sim_opts(p, paths=0, delta=False)
    _common(p)

    p = sub.add_parser("selftest", help="closed-form oracle suite")
    p.add_argument("--only", action="append", default=None)
    _common(p)
    return ap


COMMANDS = {"check": cmd_check, "simulate": cmd_simulate, "density": cmd_density, "laplace": cmd_laplace,
            "symmetrize": cmd_symmetrize, "kinetic": cmd_kinetic, "selftest": cmd_selftest}


def _join_values(argv):
    out, i = [], 0
    while i < len(argv):
        a = argv[i]
        if a in _VALUE_OPTS and i + 1 < len(argv):
            out.append(f"{a}={argv[i + 1]}")
            i += 2
        else:
            out.append(a)
            i += 1
    return out


def main(argv=None) -> int:
    argv = _join_values(list(sys.argv[1:] if argv is None else argv))
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 2
    level = logging.ERROR if args.quiet else (logging.INFO if args.verbose else logging.WARNING)
    logging.basicConfig(level=level, format="%(message)s", stream=sys.stderr, force=True)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](args)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (NLHormanderError, ValueError) as err:
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
