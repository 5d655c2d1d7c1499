import math
import textwrap

import numpy as np
import pytest

from nlhormander import registry
from nlhormander.errors import JumpConditionError, SchemaError
from nlhormander.model import sde_from_strings
from nlhormander.symmetrize import KineticModel
from nlhormander.vecfield import jump_fields


def test_builtins_match_definitions():
    m1 = registry.load_model("example1")
    assert m1.dim == 1 and str(m1.drift) == "-sin(x1)" and m1.n_brownian == 0
    assert str(m1.jump) == "cos(x1)*z1"
    m3 = registry.load_model("example3")
    assert m3.dim == 2 and str(m3.sigma[1]) == "0, x1" and m3.sigma[0].is_zero()
    assert str(m3.jump) == "z1, 0" and m3.mark_dim == 1
    m2 = registry.load_model("example2")
    assert m2.mark_dim == 2 and m2.zmax == 1.0
    assert isinstance(registry.load_model("kinetic"), KineticModel)
    assert registry.load_model("example4", alpha=0.5).alpha == 0.5


@pytest.mark.parametrize("name", ["example1", "example2", "example3", "example4", "example5"])
def test_builtins_validate(name):
    m = registry.builtin(name)
    m.validate()
    assert jump_fields(m)


def test_unknown_builtin():
    with pytest.raises(KeyError):
        registry.load_model("example9")


def test_jump_condition_violation():
    # I + d/dx (-2 x z) = 1 - 2z vanishes at z = 1/2
    m = sde_from_strings("bad", ["0"], g=["-2*x1*z1"])
    with pytest.raises(JumpConditionError):
        m.validate()


def test_oddness_flag_checked():
    m = sde_from_strings("even", ["0"], g=["z1 + z1^2"])
    with pytest.raises(ValueError):
        m.validate()
    sde_from_strings("even", ["0"], g=["z1 + z1^2"], odd_g=False).validate()


def _write(tmp_path, body):
    p = tmp_path / "m.toml"
    p.write_text(textwrap.dedent(body))
    return p


def test_toml_model_and_scheme(tmp_path):
    p = _write(tmp_path, """
        [model]
        name = "kolm"
        dim = 2
        alpha = 0.5
        zmax = 1.0
        drift = ["x2", "-x1"]
        g = [["0", "z1"]]

        [scheme]
        h = 1e-2
        eps = 0.05
        seed = 3
    """)
    model, scheme = registry.load_config(p)
    assert model.alpha == 0.5 and str(model.jump) == "0, z1"
    assert scheme.h == 1e-2 and scheme.seed == 3
    assert registry.load_model(p).name == "kolm"


def test_toml_gmatrix(tmp_path):
    p = _write(tmp_path, """
        [model]
        dim = 2
        drift = ["0", "0"]
        gmatrix = [["1", "0"], ["0", "x1"]]
    """)
    model, scheme = registry.load_config(p)
    assert scheme is None
    x, z = np.array([2.0, 0.0]), np.array([0.3, 0.5])
    np.testing.assert_allclose(model.jump.value(x, z), [0.3, 1.0])
    assert [str(V) for V in jump_fields(model)] == ["1, 0", "0, x1"]


def test_toml_schema_error_names_drift(tmp_path):
    p = _write(tmp_path, """
        [model]
        dim = 2
        drift = ["0", "0", "x1"]
        g = ["z1", "0"]
    """)
    with pytest.raises(SchemaError) as info:
        registry.load_config(p)
    assert info.value.path == "model.drift"


def test_toml_parse_error_has_position(tmp_path):
    p = _write(tmp_path, """
        [model]
        dim = 1
        drift = ["x1 +"]
    """)
    with pytest.raises(SchemaError) as info:
        registry.load_config(p)
    assert "offset 4" in str(info.value)


def test_toml_unknown_scheme_field(tmp_path):
    p = _write(tmp_path, """
        [model]
        dim = 1
        drift = ["0"]
        [scheme]
        step = 0.1
    """)
    with pytest.raises(SchemaError) as info:
        registry.load_config(p)
    assert info.value.path == "scheme.step"


def test_toml_kinetic(tmp_path):
    p = _write(tmp_path, """
        [kinetic]
        d = 1
        kappa = "2"
        b = ["-x1"]
        delta = 1.0
    """)
    km, _ = registry.load_config(p)
    assert isinstance(km, KineticModel) and km.delta == 1.0


def test_demo_degenerate_file():
    from pathlib import Path

    m = registry.load_model(Path(__file__).parent.parent / "demos" / "degenerate.toml")
    assert m.name == "degenerate" and str(m.jump) == "z1, 0"
    assert math.isclose(m.zmax, 1.0)
