import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hjhomog import catalog
from hjhomog.efftable import (
    Axis,
    CellParams,
    ConstantCouplingHBar,
    HBarTable,
    OutOfHullError,
    TableBuildError,
    WeaklyCoupledEikonalHBar,
    build_table,
    closed_form_constant_coupling,
    closed_form_eikonal_weakly_coupled,
    closed_form_piecewise_r1,
    coefficient_stats,
    flat_part_width,
    load,
    parse_axes,
    save,
)
from hjhomog.expr import parse
from hjhomog.hamiltonians import Custom, HamiltonianSystem

import oracles

ABS_P = HamiltonianSystem((Custom(parse("abs(p1)"), convex_in_p=True),))
EXAMPLE_B_COLUMNS = [
    [oracles.c_example_a, lambda y: -(1 + 0.5 * np.cos(2 * np.pi * y))],
    [lambda y: -(1 + 0.5 * np.sin(2 * np.pi * y)), lambda y: 2 + np.sin(2 * np.pi * y)],
]


def small_table(values=(2.0, 1.0, 0.0, 1.0, 2.0)):
    axes = (Axis("x1", 0, 0, 1), Axis("r1", 0, 0, 1), Axis("p1", -2, 2, len(values)))
    return HBarTable(1, 1, axes, (0,), np.reshape(values, (1, 1, 1, -1)))


def test_abs_p_table():
    table = build_table(ABS_P, [0], "p1:-2:2:5", CellParams(n=64), workers=1)
    np.testing.assert_allclose(table.values.ravel(), [2, 1, 0, 1, 2], atol=1e-8)
    assert table.provenance["cell"]["n"] == 64


def test_example_a_table_matches_oracle():
    table = build_table(catalog.system("example_a"), [0], "r1:1:1:1 p1:-4:4:9")
    for k, p in enumerate(table.axes[2].nodes()):
        expected = oracles.hbar_weakly_coupled([oracles.c_example_a], [1.0], p)
        assert table.values[0, 0, 0, k] == pytest.approx(expected, abs=2e-2)


def test_build_errors():
    with pytest.raises(ValueError):
        build_table(ABS_P, [], "p1:-1:1:3")
    with pytest.raises(IndexError):
        build_table(ABS_P, [1], "p1:-1:1:3")


def test_failed_nodes_are_listed():
    with pytest.raises(TableBuildError) as info:
        build_table(catalog.system("example_a"), [0], "r1:1:1:1 p1:0:1:2", CellParams(max_iters=1), workers=2)
    assert len(info.value.failures) == 2
    assert {f["p"][0] for f in info.value.failures} == {0.0, 1.0}


def test_query_examples():
    table = small_table()
    assert table.query(0, 0, 0, -1.0) == 1.0
    assert small_table((1.0, 3.0)).query(0, 0, 0, 0.0) == 2.0
    with pytest.raises(OutOfHullError):
        table.query(0, 0, 0, 2.5)
    with pytest.raises(KeyError):
        table.query(1, 0, 0, 0.0)


def test_frozen_axes_are_ignored():
    assert small_table().query(0, 0.7, 5.0, 0.5) == 0.5


@given(st.floats(-2, 2))
def test_interpolation_is_exact_for_piecewise_linear_data(p):
    assert small_table().query(0, 0, 0, p) == pytest.approx(abs(p), abs=1e-12)


def test_multilinear_two_free_axes():
    axes = (Axis("x1", 0, 0, 1), Axis("r1", 0, 1, 2), Axis("p1", 0, 1, 2))
    vals = np.array([[[[0.0, 1.0], [2.0, 3.0]]]])  # value = 2 r + p
    table = HBarTable(1, 1, axes, (0,), vals)
    assert table.query(0, 0, 0.25, 0.5) == pytest.approx(1.0)
    assert table.lip_p() == pytest.approx(1.1) and table.lip_r() == pytest.approx(2.2)


def test_table_rejects_bad_shapes():
    axes = (Axis("x1", 0, 0, 1), Axis("r1", 0, 0, 1), Axis("p1", -2, 2, 5))
    with pytest.raises(ValueError):
        HBarTable(1, 1, axes, (0,), np.zeros((1, 1, 1, 4)))
    with pytest.raises(ValueError):
        HBarTable(1, 1, axes[::-1], (0,), np.zeros((1, 1, 1, 5)))
    with pytest.raises(ValueError):
        Axis("p1", 1, 0, 3)


def test_parse_axes():
    axes = parse_axes("p1:-4:4:81 r1:1:1:1")
    assert axes[0].name == "p1" and axes[0].count == 81 and axes[1].frozen
    with pytest.raises(ValueError):
        parse_axes("p1:-4:4")


def test_save_load_round_trip(tmp_path):
    table = small_table()
    save(table, tmp_path / "t.hbar")
    back = load(tmp_path / "t.hbar")
    assert np.array_equal(back.values, table.values) and back.axes == table.axes
    for p in np.linspace(-2, 2, 17):
        assert back.query(0, 0, 0, p) == table.query(0, 0, 0, p)
    assert (tmp_path / "t.hbar").read_bytes()[:5] == b"HBAR1"


def test_load_rejects_damaged_files(tmp_path):
    save(small_table(), tmp_path / "t.hbar")
    data = (tmp_path / "t.hbar").read_bytes()
    (tmp_path / "short.hbar").write_bytes(data[:-3])
    (tmp_path / "v2.hbar").write_bytes(b"HBAR2" + data[5:])
    (tmp_path / "other.hbar").write_bytes(b"PNG\x00" + data[4:])
    for name in ("short", "v2", "other"):
        with pytest.raises(ValueError):
            load(tmp_path / f"{name}.hbar")


def test_csv_export(tmp_path):
    small_table().to_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "# HBAR1 M=1 N=1 components=1"
    assert lines[1] == "x1,r1,p1,hbar1"
    assert len(lines) == 7 and lines[2].endswith(",2.0")


@pytest.mark.parametrize("r, p, expected", [(1.0, 0.0, 3.0), (1.0, 4.0, 6.0), (0.0, -1.7, 1.7), (0.0, 0.0, 0.0)])
def test_closed_form_example_a(r, p, expected):
    c = catalog.system("example_a").coupling_matrix()
    assert closed_form_eikonal_weakly_coupled(c, 0, [r], p) == pytest.approx(expected, abs=1e-9)


def test_closed_form_audit_grid_minimum():
    c = catalog.system("example_a").coupling_matrix()
    with pytest.raises(ValueError):
        closed_form_eikonal_weakly_coupled(c, 0, [1.0], 0.0, audit_n=1024)


@settings(max_examples=25)
@given(st.integers(0, 1), st.floats(-2, 2), st.floats(-2, 2), st.floats(-4, 4))
def test_closed_form_and_provider_match_oracle(i, r1, r2, p):
    c = catalog.system("example_b").coupling_matrix()
    expected = oracles.hbar_weakly_coupled(EXAMPLE_B_COLUMNS[i], [r1, r2], p)
    assert closed_form_eikonal_weakly_coupled(c, i, [r1, r2], p) == pytest.approx(expected, abs=1e-6)
    provider = WeaklyCoupledEikonalHBar(c)
    assert provider.query(i, 0.0, [r1, r2], [p]) == pytest.approx(expected, abs=1e-6)


def test_constant_coupling_closed_form():
    c = catalog.system("constant_coupling").coupling_matrix()
    assert closed_form_constant_coupling(lambda i, p: abs(p[0]), c, 0, [2.0, 1.0], [0.0]) == 1.0
    table = small_table()
    assert closed_form_constant_coupling(table, c, 0, [2.0, 1.0], [-1.0]) == 2.0
    provider = ConstantCouplingHBar(lambda i, p: np.abs(p[..., 0]), c)
    assert provider.query(1, 0, [2.0, 1.0], [0.5]) == pytest.approx(-0.5)
    with pytest.raises(ValueError):
        closed_form_constant_coupling(abs, catalog.system("example_a").coupling_matrix(), 0, [1.0], [0.0])


def test_piecewise_closed_form():
    c11 = catalog.system("piecewise").coupling_matrix().entries[0][0]
    top, bottom, mean = coefficient_stats(c11)
    assert (top, bottom) == pytest.approx((1.5, 0.5)) and mean == pytest.approx(1.0, abs=1e-12)
    assert closed_form_piecewise_r1(c11, 4.0, 0.0) == pytest.approx(6.0)
    assert closed_form_piecewise_r1(c11, 0.0, 1.0) == pytest.approx(1.0)
    assert closed_form_piecewise_r1(c11, -4.0, 0.0) == pytest.approx(-2.0)
    with pytest.raises(ValueError):
        closed_form_piecewise_r1(parse("2"), 1.0, 0.0)


@settings(max_examples=30)
@given(st.floats(-4, 4), st.floats(-3, 3))
def test_piecewise_matches_oracle(r1, p):
    c11 = catalog.system("piecewise").coupling_matrix().entries[0][0]
    expected = oracles.hbar_weakly_coupled([oracles.c_piecewise], [r1], p)
    assert closed_form_piecewise_r1(c11, r1, p) == pytest.approx(expected, abs=1e-8)


def test_flat_part_width_example_a():
    c = catalog.system("example_a").coupling_matrix()
    # the flat part of max{3, |p| + 2} is |p| <= 1
    assert flat_part_width(c, 0, [1.0]) == pytest.approx(1.0, abs=1e-9)
