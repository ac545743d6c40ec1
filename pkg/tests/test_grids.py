from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from hjhomog.grids import (
    GridField,
    TorusGrid,
    interpolate,
    read_csv,
    restrict,
    sample,
    sup_diff,
    sup_norm,
    upwind_diffs,
    write_csv,
)


def test_grid_spacing_is_exact():
    g = TorusGrid(1, 10, Fraction(3))
    assert g.h == Fraction(3, 10) and g.h * g.n == g.L
    assert TorusGrid(1, 8, 2.5).L == Fraction(5, 2)


@pytest.mark.parametrize("N, n", [(3, 8), (1, 3), (0, 8)])
def test_grid_validation(N, n):
    with pytest.raises(ValueError):
        TorusGrid(N, n)


def test_sample_examples():
    g = TorusGrid(1, 4)
    assert np.all(sample(g, lambda x: 0 * x).values == 0)
    np.testing.assert_allclose(sample(g, lambda x: np.sin(2 * np.pi * x)).values[0], [0, 1, 0, -1], atol=1e-15)
    assert sample(g, lambda x: x).values[0].tolist() == [0, 0.25, 0.5, 0.75]


def test_sample_rejects_non_finite():
    with pytest.raises(ValueError), np.errstate(divide="ignore"):
        sample(TorusGrid(1, 4), lambda x: 1 / x)


def test_field_is_read_only_and_checked():
    g = TorusGrid(1, 4)
    f = GridField(g, np.arange(4.0))
    with pytest.raises(ValueError):
        f.values[0] = 1
    with pytest.raises(ValueError):
        GridField(g, np.arange(5.0))


def test_upwind_of_constant_is_zero():
    f = GridField(TorusGrid(2, 6), np.full((6, 6), 2.5))
    for axis in (0, 1):
        dm, dp = upwind_diffs(f, axis)
        assert np.all(dm.values == 0) and np.all(dp.values == 0)


def test_upwind_sine_taylor_bound():
    n = 256
    g = TorusGrid(1, n)
    h = 1 / n
    f = sample(g, lambda x: np.sin(2 * np.pi * x))
    _, dp = upwind_diffs(f, 0)
    y = g.nodes()
    # D_plus is the exact derivative at the midpoint y + h/2 up to (2 pi)^3 h^2 / 24
    err = np.abs(dp.values[0] - 2 * np.pi * np.cos(2 * np.pi * y + np.pi * h)).max()
    assert err <= (2 * np.pi) ** 3 * h**2 / 24 * 1.01


def test_linear_index_field_wraps():
    g = TorusGrid(1, 8)
    f = GridField(g, np.arange(8.0))
    _, dp = upwind_diffs(f, 0)
    assert dp.values[0, -1] == pytest.approx(-7 / g.spacing)
    assert abs(dp.values.sum() * g.spacing) < 1e-12


@given(arrays(np.float64, 16, elements=st.floats(-1e3, 1e3)))
def test_summation_by_parts(values):
    g = TorusGrid(1, 16)
    _, dp = upwind_diffs(GridField(g, values), 0)
    bound = 1e-12 * g.n * max(np.abs(values).max(), 1.0)
    assert abs(dp.values.sum() * g.spacing) <= bound


def test_norms():
    g = TorusGrid(1, 4)
    assert sup_norm(GridField(g, np.zeros(4))) == 0
    assert sup_norm(GridField(g, [1, -3, 2, 0])) == 3
    f = GridField(g, [1.0, 2, 3, 4])
    assert sup_diff(f, f) == 0
    with pytest.raises(ValueError):
        sup_diff(f, GridField(TorusGrid(1, 8), np.zeros(8)))


def test_interpolation_examples():
    g = TorusGrid(1, 8)
    f = sample(g, lambda x: np.cos(2 * np.pi * x))
    for k, x in enumerate(g.nodes()):
        assert interpolate(f, x) == f.values[0, k]
    assert interpolate(f, 1 / 16) == pytest.approx(0.5 * (f.values[0, 0] + f.values[0, 1]))
    assert interpolate(GridField(g, np.full(8, 4.0)), 0.123) == 4.0
    assert interpolate(f, 1.0 + 0.125) == f.values[0, 1]


@given(st.floats(0, 0.7), st.floats(0, 0.7))
def test_interpolation_reproduces_affine_2d(a, b):
    g = TorusGrid(2, 8)
    f = sample(g, lambda x1, x2: 1 + 2 * x1 - 3 * x2)
    assert interpolate(f, [a, b]) == pytest.approx(1 + 2 * a - 3 * b, abs=1e-12)


def test_restrict():
    fine = sample(TorusGrid(1, 8), lambda x: np.sin(2 * np.pi * x) + x)
    coarse = restrict(fine, TorusGrid(1, 4))
    assert coarse.values[0].tolist() == fine.values[0, ::2].tolist()
    assert sup_diff(coarse, sample(TorusGrid(1, 4), lambda x: np.sin(2 * np.pi * x) + x)) == 0
    with pytest.raises(ValueError):
        restrict(fine, TorusGrid(1, 6))


def test_csv_round_trip(tmp_path):
    g = TorusGrid(2, 4, Fraction(3, 2))
    rng = np.random.default_rng(0)
    f = GridField(g, rng.normal(size=(2, 4, 4)))
    write_csv(f, tmp_path / "f.csv")
    back = read_csv(tmp_path / "f.csv")
    assert back.grid == g and np.array_equal(back.values, f.values)
    assert (tmp_path / "f.csv").read_text().startswith("# grid n=4 N=2 L=3/2 M=2\n")


def test_csv_rejects_missing_rows(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("# grid n=4 N=1 L=1 M=1\n0,1.0\n1,2.0\n")
    with pytest.raises(ValueError):
        read_csv(path)
