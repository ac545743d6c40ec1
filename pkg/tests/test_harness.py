import copy
import dataclasses
import json

import numpy as np
import pytest

from hjhomog import catalog
from hjhomog.config import ConfigError, system_from_dict
from hjhomog.efftable import save
from hjhomog.grids import TorusGrid
from hjhomog.harness import (
    DEFAULT_BUDGETS,
    ConvergenceReport,
    ExperimentConfig,
    SuiteReport,
    emit_plot_data,
    read_plot_csv,
    run_convergence,
    run_property_suite,
    structural_checks,
)

from conftest import CONFIGS
from test_efftable import small_table

ABS_P_PLUS_U = {"M": 1, "N": 1, "components": [{"kind": "Custom", "expr": "abs(p1) + r1", "convex_in_p": True}]}


def quick(system=catalog.EXAMPLE_A, **kw):
    data = {"system": system, "eps": ["1/5", "1/10"], "T": 0.2}
    data.update(kw)
    return ExperimentConfig.from_dict(data)


@pytest.mark.parametrize(
    "changes",
    [
        {"eps": ["2/5"]},
        {"eps": ["1/10", "1/5"]},
        {"eps": []},
        {"points_per_eps": 16},
        {"hbar": {"source": "magic"}},
        {"hbar": {"source": "table", "path": "missing.hbar"}},
        {"colour": "red"},
        {"budgets": {"oracle": 0}},
    ],
)
def test_invalid_experiment_configs(changes):
    data = {"system": catalog.EXAMPLE_A}
    data.update(changes)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(data)


def test_shipped_experiment_config():
    cfg = ExperimentConfig.load(CONFIGS / "experiment.json")
    assert cfg.grid_sizes() == [160, 320, 640, 1280]
    assert cfg.system_obj().M == 1 and cfg.budgets == DEFAULT_BUDGETS


def test_initial_data_must_match_components():
    with pytest.raises(ConfigError):
        run_convergence(quick(catalog.EXAMPLE_B))
    with pytest.raises(ConfigError):
        quick(u0=["sin(2*pi*y1)"]).initial_data(TorusGrid(1, 8), 1)


def test_closed_form_needs_abs_p_base():
    with pytest.raises(ConfigError):
        run_convergence(quick(ABS_P_PLUS_U))


def test_y_independent_convergence_with_built_table():
    cfg = quick(ABS_P_PLUS_U, eps=["1/5", "1/10", "1/20"],
                hbar={"source": "build", "axes": "r1:-2:2:5 p1:-8:8:17", "cell": {"n": 32}})
    report = run_convergence(cfg)
    for n, err in zip(report.n_list, report.errors):
        assert err <= 5 * (1 / n) ** 0.5 * (1 + cfg.T)


def test_table_source(tmp_path):
    save(small_table(), tmp_path / "t.hbar")
    cfg = ExperimentConfig.from_dict(
        {"system": "s.json", "hbar": {"source": "table", "path": "t.hbar"}},
        base_dir=_write(tmp_path / "s.json", catalog.EXAMPLE_A).parent,
    )
    assert cfg.hbar["path"].endswith("t.hbar")


def _write(path, data):
    path.write_text(json.dumps(data))
    return path


def test_plot_data_round_trip(tmp_path):
    report = run_convergence(quick())
    paths = emit_plot_data(report, tmp_path)
    header, rows = read_plot_csv(paths[0])
    assert header == ["eps", "error", "ratio"]
    assert [r[1] for r in rows] == report.errors
    assert rows[0][2] == report.ratios[0] and np.isnan(rows[-1][2])

    header, rows = read_plot_csv(paths[1])
    p, hbar = np.array(rows).T
    # max{3, |p| + 2} on the default slice r = 1
    assert np.all(hbar[np.abs(p) <= 1] == pytest.approx(3.0, abs=1e-9))
    np.testing.assert_allclose(hbar, np.maximum(3, np.abs(p) + 2), atol=1e-9)

    header, rows = read_plot_csv(paths[2])
    assert header == ["x", "hom_1", "eps_0.2_1", "eps_0.1_1"]
    assert len(rows) == report.n_coarse

    again = emit_plot_data(ConvergenceReport.from_dict(json.loads(json.dumps(report.to_dict()))), tmp_path / "b")
    for a, b in zip(paths, again):
        assert a.read_bytes() == b.read_bytes()


def test_empty_plot_data(tmp_path):
    paths = emit_plot_data(None, tmp_path)
    assert [p.read_text() for p in paths] == ["eps,error,ratio\n", "p,hbar\n", "x\n"]


def test_convergence_checks_flag_growth():
    report = ConvergenceReport(eps_list=[0.2, 0.1], errors=[0.1, 0.2], final_slopes=[1.0, 1.5],
                               lipschitz_radii=[2.0, 1.0], linf=[{"run": "a", "ok": False}])
    verdicts = {c.name: c.passed for c in report.checks()}
    assert not any(verdicts.values())


def test_broken_coupling_fails_a1():
    broken = copy.deepcopy(catalog.EXAMPLE_B)
    # a positive off-diagonal entry breaks the sign condition
    broken["components"][0]["coupling"][1] = "1+0.5*cos(2*pi*y1)"
    for comp in broken["components"]:
        comp["monotone"] = False
    checks = structural_checks(system_from_dict(broken), 0, 64)
    verdicts = {c.name: c.passed for c in checks}
    assert not verdicts["system_A1"]
    assert not SuiteReport(0, checks).passed


def test_suite_report_json_is_stable():
    checks = structural_checks(catalog.system("example_b"), 3, 32)
    a = SuiteReport(3, checks).to_json()
    b = SuiteReport(3, structural_checks(catalog.system("example_b"), 3, 32)).to_json()
    assert a == b and json.loads(a)["passed"]


def test_verdicts_do_not_depend_on_seed():
    base = ExperimentConfig.load(CONFIGS / "experiment.json")
    verdicts = []
    for seed in (0, 1, 2):
        cfg = dataclasses.replace(base, seed=seed, budgets={k: 4 for k in DEFAULT_BUDGETS})
        suite = run_property_suite(cfg, workers=4, convergence=False)
        verdicts.append({c.name: c.passed for c in suite.checks})
    assert verdicts[0] == verdicts[1] == verdicts[2]
    assert all(verdicts[0].values())
