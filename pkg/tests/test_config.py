import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fluxreg.config import DEFAULTS, Expression, parse_config, parse_config_text
from fluxreg.errors import ConfigError


class TestParse:
    def test_defaults(self):
        cfg = parse_config_text("")
        assert cfg.structure == DEFAULTS["structure"]
        assert cfg.epsilon == 1e-4 and cfg.bc == "dirichlet" and cfg.seed == 0
        assert cfg.grid().h == 0.03125

    def test_values_and_comments(self):
        cfg = parse_config_text("structure = power:p=3  # model case\n\nbc = Neumann\nseed = 12\nepsilon = 0\n")
        assert cfg.structure_function().i_a == pytest.approx(1.0)
        assert cfg.bc == "neumann" and cfg.seed == 12 and cfg.epsilon == 0.0

    @pytest.mark.parametrize("text", [
        "colour = red",
        "seed = 1\nseed = 2",
        "just a line",
        "epsilon = 2",
        "epsilon = abc",
        "bc = robin",
        "rhs = 1 + x",
        "rhs = expr:import_os(x)",
        "rhs = file:missing.csv",
        "domain = hexagon:h=0.1",
        "structure = power:p=0.5",
    ])
    def test_rejected(self, text):
        with pytest.raises(ConfigError):
            parse_config_text(text)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_config(tmp_path / "nope.cfg")

    def test_relative_paths(self, tmp_path):
        d = parse_config_text("domain = square:side=1,h=0.25").grid()
        X, Y = d.mesh()
        rows = "\n".join(f"{x},{y},{x + y}" for x, y in zip(X.ravel(), Y.ravel()))
        (tmp_path / "f.csv").write_text("x,y,value\n" + rows + "\n")
        (tmp_path / "run.cfg").write_text("domain = square:side=1,h=0.25\nrhs = file:f.csv\nout = res\n")
        cfg = parse_config(tmp_path / "run.cfg")
        assert cfg.out_dir() == tmp_path / "res"
        assert np.allclose(cfg.rhs_field(d).values, X + Y)


class TestExpression:
    def test_caret_is_power(self):
        assert Expression("2*x^2 + y")(1.0, 3.0) == 5.0

    def test_matches_numpy(self):
        rng = np.random.default_rng(0)
        x, y = rng.uniform(0.1, 2, (2, 100))
        cases = {
            "sin(pi*x)*cos(y) + exp(-x*y)": np.sin(np.pi * x) * np.cos(y) + np.exp(-x * y),
            "sqrt(abs(x - y)) / (1 + x**2)": np.sqrt(np.abs(x - y)) / (1 + x**2),
            "-log(x) + tanh(y) - e": -np.log(x) + np.tanh(y) - math.e,
        }
        for text, expected in cases.items():
            assert np.allclose(Expression(text)(x, y), expected, rtol=1e-14)

    def test_constant_broadcasts(self):
        X = np.zeros((3, 4))
        assert Expression("1")(X, X).shape == (3, 4)

    @pytest.mark.parametrize("text", ["__import__('os')", "x.real", "[x]", "x if y else 1", "foo(x)", "x < y",
                                      "sin(x, y)", "'a'", "x @ y", "z"])
    def test_rejects(self, text):
        with pytest.raises(ConfigError):
            Expression(text)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-3, 3), st.floats(-3, 3))
    def test_polynomial_roundtrip(self, a, b, x, y):
        e = Expression(f"{a!r}*x*y + {b!r}*y^2 - x")
        assert e(x, y) == pytest.approx(a * x * y + b * y**2 - x, rel=1e-12, abs=1e-12)
