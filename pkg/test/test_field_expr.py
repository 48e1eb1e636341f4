import cmath
import math

import numpy as np
import pytest

from holoflow.errors import ConfigError, DivisionByZero, FieldSyntaxError, UnknownIdentifier
from holoflow.field_expr import derivative, derivatives, negate, parse, substitute, to_source


def test_evaluate_polynomial_and_transcendental():
    assert abs(parse("x^2+1")(1j)) < 1e-15
    assert parse("x*(x-1)")(2) == 2
    z = 0.3 - 0.7j
    assert abs(parse("x*exp(x)")(z) - z * cmath.exp(z)) < 1e-14
    assert abs(parse("sin(x)^2+cos(x)^2")(z) - 1) < 1e-13
    assert abs(parse("exp(i*pi)")(0) + 1) < 1e-15


def test_evaluate_array_matches_scalar():
    f = parse("exp(i*0.5)*(x-1)^2*(x+1)^2")
    zs = np.array([0j, 1 + 1j, -2.5 + 0.25j, 3j])
    got = f.evaluate_array(zs)
    assert got.shape == zs.shape
    for z, v in zip(zs, got):
        assert abs(v - f(z)) <= 1e-12 * max(1.0, abs(v))


def test_symbolic_derivatives():
    f = parse("x*exp(x)")
    d1 = derivative(f)
    z = 0.5 + 0.25j
    assert abs(d1(z) - cmath.exp(z) * (1 + z)) < 1e-13
    d2 = f.derivative(2)
    assert abs(d2(z) - cmath.exp(z) * (2 + z)) < 1e-13
    assert abs(parse("sin(x)").derivative(2)(z) + cmath.sin(z)) < 1e-14
    chain = derivatives(parse("x^4"), 4)
    assert [abs(d(1.0)) for d in chain] == [1.0, 4.0, 12.0, 24.0, 24.0]


def test_derivative_order_must_be_positive():
    with pytest.raises(ValueError):
        derivative(parse("x"), 0)


@pytest.mark.parametrize("src", [
    "x^2*(x-1)*(x-i)*(x-1-i)",
    "-x^2",
    "exp(i*0.25)*(x-1)^2*(x+1)^2",
    "x-(x-1)",
    "x*-1",
    "-(-x)",
    "1/(x+2)",
    "cos(sin(x))/2-e*pi",
])
def test_canonical_printing_reparses_to_the_same_tree(src):
    f = parse(src)
    again = parse(to_source(f.root))
    assert again == f
    assert parse(str(again)) == again


def test_unary_minus_binds_tighter_than_power():
    assert parse("-x^2")(1j) == parse("(-x)^2")(1j)
    assert parse("-x^2")(2) == 4


def test_syntax_error_reports_byte_offset():
    with pytest.raises(FieldSyntaxError) as e:
        parse("x+*2")
    assert e.value.offset == 2
    assert isinstance(e.value, SyntaxError)
    with pytest.raises(FieldSyntaxError) as e:
        parse("x+")
    assert e.value.offset == 2
    with pytest.raises(FieldSyntaxError):
        parse("x^1.5")
    with pytest.raises(FieldSyntaxError):
        parse("   ")


def test_offsets_count_bytes_not_characters():
    with pytest.raises(FieldSyntaxError) as e:
        parse("x+é")
    assert e.value.offset == 2
    with pytest.raises(FieldSyntaxError) as e:
        parse("éé")
    assert e.value.offset == 0
    with pytest.raises(FieldSyntaxError) as e:
        parse("x+(x")
    assert e.value.offset == len("x+(x".encode("utf-8"))


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifier) as e:
        parse("x*y")
    assert e.value.name == "y"
    assert e.value.offset == 2


def test_division_is_diagnosed_and_poles_raise():
    f = parse("1/x")
    assert f.has_division
    assert f.diagnostics
    assert not parse("x^2").diagnostics
    with pytest.raises(DivisionByZero):
        f(0)


def test_negate_reverses_the_field():
    f = parse("x*(x-1)")
    g = negate(f)
    for z in (2, 0.5j, -1 + 3j):
        assert g(z) == -f(z)


def test_substitute_placeholder():
    src = substitute("exp(i*A)*(x-1)^2*(x+1)^2", "A", math.pi / 2)
    f = parse(src)
    assert abs(f(0) - 1j) < 1e-15
    assert "Alpha" in substitute("Alpha+A", "A", 1.0)
    with pytest.raises(ConfigError):
        substitute("x", "x", 1.0)
    with pytest.raises(ConfigError):
        substitute("exp(x)", "exp", 1.0)


def test_polynomial_coefficients():
    c = parse("x^2*(x-1)").polynomial_coefficients()
    assert np.allclose(c, [0, 0, -1, 1])
    assert parse("x*exp(x)").polynomial_coefficients() is None
    assert parse("2*i").is_constant
    assert not parse("x-x").is_constant


def test_overflow_evaluates_to_non_finite():
    v = parse("exp(x)")(1000.0)
    assert not cmath.isfinite(v)
    w = parse("x*exp(x)").evaluate_array(np.array([1000.0 + 0j, 1.0 + 0j]))
    assert not np.isfinite(w[0]) and np.isfinite(w[1])


def _poly_source(coeffs):
    powers = ["", "*x"] + [f"*x^{k}" for k in range(2, len(coeffs))]
    return "+".join(f"({c.real:.4f}+({c.imag:.4f})*i){p}" for c, p in zip(coeffs, powers))


def test_symbolic_derivative_matches_finite_differences():
    rng = np.random.default_rng(7)
    h = 1e-5
    for _ in range(20):
        deg = int(rng.integers(1, 7))
        coeffs = rng.uniform(-1, 1, deg + 1) + 1j * rng.uniform(-1, 1, deg + 1)
        f = parse(_poly_source(coeffs))
        d = f.derivative()
        for z in rng.uniform(-1, 1, 5) + 1j * rng.uniform(-1, 1, 5):
            fd = (f(z + h) - f(z - h)) / (2 * h)
            assert abs(d(z) - fd) <= 1e-6 * (1 + abs(fd))


def test_real_and_imaginary_parts_of_x_exp_x():
    rng = np.random.default_rng(11)
    z = rng.uniform(-3, 3, 1000) + 1j * rng.uniform(-3, 3, 1000)
    v = parse("x*exp(x)").evaluate_array(z)
    x, y = z.real, z.imag
    re = np.exp(x) * (x * np.cos(y) - y * np.sin(y))
    im = np.exp(x) * (x * np.sin(y) + y * np.cos(y))
    scale = 1 + np.abs(v)
    assert np.max(np.abs(v.real - re) / scale) < 1e-12
    assert np.max(np.abs(v.imag - im) / scale) < 1e-12
