"""
Tests for the scalar-field expression parser
"""
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.core.domain.errors import ExpressionSyntaxError, FormatError
from src.core.domain.expression import Number, as_field, parse

SPHERE = "sin(x)*sin(y)*sin(z)*(x^2+y^2+z^2-121)*(x^2+y^2+z^2-81)"


def test_manufactured_source_on_the_cube():
    exact = parse("sin(pi*x)*sin(pi*y)*sin(pi*z)")
    source = exact.laplacian()
    assert source.at(0.5, 0.5, 0.5) == pytest.approx(-3 * math.pi ** 2)
    lap2d = parse("sin(pi*x)*sin(pi*y)").laplacian()
    assert lap2d.at(0.5, 0.5, 0.3) == pytest.approx(-2 * math.pi ** 2)


def test_single_variable():
    assert parse("x").at(3.0, 0.0, 0.0) == 3.0


def test_sphere_solution_vanishes_on_coordinate_plane():
    assert parse(SPHERE).at(0.0, 4.0, 7.0) == 0.0
    assert parse(SPHERE).at(6.0, 6.0, 7.0) == pytest.approx(0.0, abs=1e-9)


def test_precedence_and_associativity():
    assert parse("1 + 2*3").at(0) == 7.0
    assert parse("2^3^2").at(0) == 512.0
    assert parse("-2^2").at(0) == -4.0
    assert parse("(1 + 2)*3").at(0) == 9.0
    assert parse("8/4/2").at(0) == 1.0
    assert parse("2*-x").at(1.5) == -3.0


def test_vectorised_evaluation():
    f = parse("x*y + z")
    pts = np.array([[1.0, 2.0, 3.0], [0.5, 0.5, 0.0]])
    assert_allclose(f(pts), [5.0, 0.25])
    assert_allclose(parse("2.5")(pts), [2.5, 2.5])


def test_symbolic_derivatives_match_finite_differences():
    f = parse("exp(x*y)*cos(z) + sqrt(1 + x^2) - log(2 + y)/z")
    p = np.array([0.3, 0.7, 1.1])
    h = 1e-6
    for i, var in enumerate("xyz"):
        step = np.zeros(3)
        step[i] = h
        fd = (f.at(*(p + step)) - f.at(*(p - step))) / (2 * h)
        assert f.derivative(var).at(*p) == pytest.approx(fd, rel=1e-6)


def test_printed_form_parses_back():
    for text in ("x^2 - 3*y/z", SPHERE, "-(x + 1.25e-3)*exp(-y)", "pi*e"):
        e = parse(text)
        again = parse(e.to_string())
        pts = np.array([[0.3, 1.7, 2.2], [4.0, -1.0, 0.5]])
        assert_allclose(again(pts), e(pts), rtol=1e-15)


def test_syntax_error_reports_byte_offset():
    with pytest.raises(ExpressionSyntaxError) as info:
        parse("x + * y")
    assert info.value.offset == 4
    assert "x" in info.value.expected
    assert isinstance(info.value, FormatError)


def test_unbalanced_parenthesis():
    with pytest.raises(ExpressionSyntaxError) as info:
        parse("sin(x")
    assert info.value.offset == 5
    assert info.value.expected == [")"]


def test_offsets_count_bytes():
    with pytest.raises(ExpressionSyntaxError) as info:
        parse("x + é")
    assert info.value.offset == 4
    with pytest.raises(ExpressionSyntaxError) as info:
        parse("é + ?")
    assert info.value.offset == 0


def test_unknown_names_and_empty_input():
    with pytest.raises(ExpressionSyntaxError):
        parse("tan(x)")
    with pytest.raises(ExpressionSyntaxError) as info:
        parse("   ")
    assert info.value.offset == 0


def test_as_field_accepts_numbers_and_text():
    assert as_field(2) == Number(2.0)
    assert as_field("y").at(0.0, 4.0) == 4.0
    e = parse("z")
    assert as_field(e) is e
