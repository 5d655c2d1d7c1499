"""Built-in models and the TOML model-file loader.

Built-ins
---------
example1  dX = -sin X dt + cos X dL                    (d = 1)
example2  dX1 = dL1, dX2 = X1 dL2, marks in the unit disc  (d = 2)
example3  dX1 = dL, dX2 = X1 dW                        (d = 2)
example4  dX1 = X2 dt, dX2 = dL - X1 dt                (d = 2)
example5  dX = V/sqrt(1+V^2) dt, dV = dL - X dt        (d = 2)
kinetic   kinetic operator with kernel 1.5 + 0.4 cos(v) exp(-w^2)

Unbounded jump measures are truncated to ``|z| < zmax`` (default 1).
"""

from __future__ import annotations

from pathlib import Path

from .errors import ExprSyntaxError, SchemaError
from .model import SdeModel, SymbolicJump, mark_variables, sde_from_strings
from .simulate import SimulationScheme
from .symmetrize import KineticModel

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

BUILTINS = ("example1", "example2", "example3", "example4", "example5", "kinetic")

KINETIC_KERNEL = "1.5 + 0.4*cos(v1)*exp(-(z1^2))"


def example1(alpha=1.0, zmax=1.0) -> SdeModel:
    return sde_from_strings("example1", ["-sin(x1)"], g=["cos(x1)*z1"], alpha=alpha, zmax=zmax,
                            box=((-10.0, 10.0),), notes="standard nonlinear example")


def example2(alpha=1.0, zmax=1.0) -> SdeModel:
    return sde_from_strings("example2", ["0", "0"], g=["z1", "x1*z2"], alpha=alpha, zmax=zmax,
                            box=((-5.0, 5.0), (-5.0, 5.0)), notes="nonlocal Grushin type")


def example3(alpha=1.0, zmax=1.0) -> SdeModel:
    # sigma_1 = 0 and sigma_2 = x1 e_2: a single Brownian motion drives x2
    return sde_from_strings("example3", ["0", "0"], sigma=[["0", "0"], ["0", "x1"]],
                            g=["z1", "0"], alpha=alpha, zmax=zmax,
                            box=((-5.0, 5.0), (-5.0, 5.0)), notes="local and nonlocal Grushin type")


def example4(alpha=1.0, zmax=1.0) -> SdeModel:
    return sde_from_strings("example4", ["x2", "-x1"], g=["0", "z1"], alpha=alpha, zmax=zmax,
                            box=((-5.0, 5.0), (-5.0, 5.0)), notes="nonlocal Kolmogorov type")


def example5(alpha=1.0, zmax=1.0) -> SdeModel:
    return sde_from_strings(
        "example5", ["x2/sqrt(1 + x2^2)", "-x1"], g=["0", "z1"], alpha=alpha, zmax=zmax,
        box=((-5.0, 5.0), (-5.0, 5.0)), meta={"guard": 1e3},
        notes="unbounded drift: only the strong (pointwise) condition holds, checks report the boxed infimum")


def kinetic(alpha=1.0, delta=0.5, kappa0=2.0) -> KineticModel:
    return KineticModel(1, KINETIC_KERNEL, ("-x1",), alpha=alpha, delta=delta, kappa0=kappa0,
                        box=((-3.0, 3.0), (-3.0, 3.0)))


def negative_control(alpha=1.0, zmax=1.0) -> SdeModel:
    """``dX1 = dL, dX2 = 0``: the second coordinate never moves."""
    return sde_from_strings("degenerate", ["0", "0"], g=["z1", "0"], alpha=alpha, zmax=zmax,
                            box=((-5.0, 5.0), (-5.0, 5.0)), notes="non-Hörmander control")


_FACTORIES = {"example1": example1, "example2": example2, "example3": example3,
              "example4": example4, "example5": example5, "kinetic": kinetic}


def builtin(name: str, **params):
    try:
        f = _FACTORIES[name]
    except KeyError:
        raise KeyError(f"unknown built-in model {name!r}; choose from {', '.join(BUILTINS)}") from None
    return f(**{k: v for k, v in params.items() if v is not None})


# ---------------------------------------------------------------------------
# TOML


def _req(tbl, key, path, kind):
    if key not in tbl:
        raise SchemaError(f"{path}.{key}", "missing required field")
    v = tbl[key]
    if kind is float and isinstance(v, int) and not isinstance(v, bool):
        v = float(v)
    if not isinstance(v, kind):
        raise SchemaError(f"{path}.{key}", f"expected {kind.__name__}, got {type(v).__name__}")
    return v


def _str_list(v, path, n=None):
    if not isinstance(v, list) or not all(isinstance(s, str) for s in v):
        raise SchemaError(path, "expected a list of expression strings")
    if n is not None and len(v) != n:
        raise SchemaError(path, f"expected {n} components, got {len(v)}")
    return v


def _parse(path, fn):
    try:
        return fn()
    except ExprSyntaxError as err:
        raise SchemaError(path, str(err)) from None


def _model_from_table(tbl, path="model") -> SdeModel:
    d = _req(tbl, "dim", path, int)
    if d < 1:
        raise SchemaError(f"{path}.dim", "must be positive")
    alpha = float(tbl.get("alpha", 1.0))
    zmax = float(tbl.get("zmax", 1.0))
    name = str(tbl.get("name", "model"))
    drift = _str_list(_req(tbl, "drift", path, list), f"{path}.drift", d)
    sigma = tbl.get("sigma", [])
    if not isinstance(sigma, list):
        raise SchemaError(f"{path}.sigma", "expected a list of columns")
    for i, col in enumerate(sigma):
        _str_list(col, f"{path}.sigma[{i}]", d)
    if "g" in tbl and "gmatrix" in tbl:
        raise SchemaError(path, "give either g or gmatrix, not both")
    g = None
    gmatrix = None
    if "g" in tbl:
        g = tbl["g"]
        if isinstance(g, list) and len(g) == 1 and isinstance(g[0], list):
            g = g[0]
        g = _str_list(g, f"{path}.g", d)
    if "gmatrix" in tbl:
        gmatrix = tbl["gmatrix"]
        if not isinstance(gmatrix, list) or len(gmatrix) != d:
            raise SchemaError(f"{path}.gmatrix", f"expected {d} rows")
        widths = set()
        for i, row in enumerate(gmatrix):
            _str_list(row, f"{path}.gmatrix[{i}]")
            widths.add(len(row))
        if len(widths) != 1:
            raise SchemaError(f"{path}.gmatrix", "rows differ in length")
    box = tbl.get("box")
    if box is not None:
        if (not isinstance(box, list) or len(box) != d
                or not all(isinstance(b, list) and len(b) == 2 for b in box)):
            raise SchemaError(f"{path}.box", f"expected {d} [lo, hi] pairs")
        box = tuple((float(a), float(b)) for a, b in box)
    kw = dict(alpha=alpha, zmax=zmax, odd_g=bool(tbl.get("odd_g", True)), box=box)
    if "mark_dim" in tbl:
        kw["mark_dim"] = _req(tbl, "mark_dim", path, int)
    try:
        if gmatrix is not None:
            from . import expr as ex
            from .vecfield import state_variables

            sv = state_variables(d)
            mat = [[_parse(f"{path}.gmatrix[{i}][{j}]", lambda c=c: ex.parse_expr(c, sv))
                    for j, c in enumerate(row)] for i, row in enumerate(gmatrix)]
            base = _parse(f"{path}.drift", lambda: sde_from_strings(name, drift, sigma, None, **{
                k: v for k, v in kw.items() if k != "mark_dim"}))
            base.jump = SymbolicJump.from_matrix(mat, sv, mark_variables(len(gmatrix[0])))
            return base
        return _parse(f"{path}", lambda: sde_from_strings(name, drift, sigma, g, **kw))
    except SchemaError:
        raise
    except ValueError as err:
        raise SchemaError(path, str(err)) from None


def _kinetic_from_table(tbl, path="kinetic") -> KineticModel:
    d = int(tbl.get("d", 1))
    kappa = _req(tbl, "kappa", path, str)
    b = _str_list(_req(tbl, "b", path, list), f"{path}.b", d)
    box = tbl.get("box")
    if box is not None:
        box = tuple((float(a), float(c)) for a, c in box)
    return _parse(path, lambda: KineticModel(
        d, kappa, tuple(b), alpha=float(tbl.get("alpha", 1.0)), delta=float(tbl.get("delta", 0.5)),
        kappa0=float(tbl.get("kappa0", 2.0)), name=str(tbl.get("name", "kinetic")), box=box))


def _scheme_from_table(tbl, path="scheme") -> SimulationScheme:
    allowed = {"h", "eps", "delta", "small_jump_mode", "seed", "thinning_bound"}
    extra = set(tbl) - allowed
    if extra:
        raise SchemaError(f"{path}.{sorted(extra)[0]}", "unknown field")
    try:
        return SimulationScheme(**tbl)
    except (TypeError, ValueError) as err:
        raise SchemaError(path, str(err)) from None


def load_config(path):
    """Parse a model file; returns ``(model, scheme or None)``."""
    p = Path(path)
    try:
        data = tomllib.loads(p.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as err:
        raise SchemaError(str(p), f"invalid TOML: {err}") from None
    if ("model" in data) == ("kinetic" in data):
        raise SchemaError("model", "file needs exactly one of [model] or [kinetic]")
    if "model" in data:
        model = _model_from_table(data["model"])
    else:
        model = _kinetic_from_table(data["kinetic"])
    scheme = _scheme_from_table(data["scheme"]) if "scheme" in data else None
    return model, scheme


def load_model(source, **params):
    """A built-in name or a path to a TOML model file."""
    if isinstance(source, (str, Path)) and str(source) in _FACTORIES:
        return builtin(str(source), **params)
    p = Path(source)
    if not p.exists():
        raise KeyError(f"unknown built-in model {str(source)!r} and no such file; "
                       f"built-ins: {', '.join(BUILTINS)}")
    return load_config(p)[0]
