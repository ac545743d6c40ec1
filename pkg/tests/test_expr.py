import numpy as np
import pytest
from hypothesis import given, strategies as st

from hjhomog.expr import ExpressionError, parse


def test_coefficient_expression():
    e = parse("2+cos(2*pi*y1)")
    assert e.variables == frozenset({"y1"})
    y = np.array([[0.0], [0.5], [0.25]])
    np.testing.assert_allclose(e(y=y), [3.0, 1.0, 2.0], atol=1e-15)


def test_all_variable_kinds():
    e = parse("abs(p1) + r1 - 2*r2 + x1*y2")
    assert e.max_index("r") == 2
    assert e.uses("p") and e.uses("x") and e.uses("y")
    val = e(x=np.array([0.5]), y=np.array([0.0, 4.0]), r=np.array([1.0, 3.0]), p=np.array([-2.0]))
    assert float(val) == pytest.approx(2 + 1 - 6 + 2)


def test_functions_and_constants():
    e = parse("max(sin(pi/2), 0.5, -1) + min(exp(0), sqrt(4)) - e + -(1)")
    assert float(e()) == pytest.approx(1 + 1 - np.e - 1)


@pytest.mark.parametrize(
    "source",
    ["__import__('os')", "x1**2", "foo(1)", "q1", "x0", "lambda: 1", "a.b", "max(1)", "1 if x1 else 2", ""],
)
def test_rejects_outside_grammar(source):
    with pytest.raises(ExpressionError):
        parse(source)


@given(st.floats(-5, 5), st.floats(-5, 5))
def test_matches_python_arithmetic(a, b):
    e = parse("r1*r2 - abs(r1) + max(r1, r2)/2")
    got = float(e(r=np.array([a, b])))
    assert got == pytest.approx(a * b - abs(a) + max(a, b) / 2, abs=1e-12)
