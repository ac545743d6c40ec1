import numpy as np
import pytest

from hjhomog import catalog
from hjhomog.config import ConfigError, load_system, system_from_dict
from hjhomog.hamiltonians import check_A1_coefficients

from conftest import CONFIGS


@pytest.mark.parametrize("name", ["example_a", "example_b", "comparison", "piecewise", "constant_coupling"])
def test_shipped_configs_match_catalog(name):
    from_file = load_system(CONFIGS / f"{name}.json")
    from_catalog = catalog.system(name)
    rng = np.random.default_rng(0)
    for _ in range(5):
        x, y = rng.uniform(0, 1, 2)
        r = rng.uniform(-2, 2, from_file.M)
        p = rng.uniform(-3, 3)
        for i in range(from_file.M):
            assert from_file.eval(i, [x], [y], r, [p]) == from_catalog.eval(i, [x], [y], r, [p])


def test_experiment_wrapper_is_accepted():
    assert load_system({"system": catalog.EXAMPLE_B}).M == 2


def test_eikonal_kind_and_default_delta():
    sys = system_from_dict(
        {"M": 1, "components": [{"kind": "eikonal_coupled", "speed": "2+cos(2*pi*y1)", "coupling": "r1"}]}
    )
    comp = sys.components[0]
    assert comp.delta == pytest.approx(1.0)
    assert sys.eval(0, [0], [0], [1.5], [-2]) == pytest.approx(7.5)


def test_table_coefficient():
    sys = system_from_dict(
        {"M": 1, "components": [{"kind": "WeaklyCoupled", "coupling": [{"table": [1.0, 3.0, 1.0, 3.0]}]}]}
    )
    assert sys.eval(0, [0], [0.125], [1.0], [0.0]) == pytest.approx(2.0)
    assert sys.eval(0, [0], [1.25], [1.0], [0.0]) == pytest.approx(3.0)


def test_constant_coefficients_become_constant_matrix():
    c = catalog.system("constant_coupling").coupling_matrix()
    assert c.is_constant
    assert c.constant_values().tolist() == [[1, -1], [-1, 1]]


def test_monotone_flag_rejects_bad_coupling():
    bad = {
        "M": 2,
        "components": [
            {"kind": "WeaklyCoupled", "coupling": [1, 1], "monotone": True},
            {"kind": "WeaklyCoupled", "coupling": [0, 1]},
        ],
    }
    with pytest.raises(ConfigError):
        system_from_dict(bad)
    bad["components"][0]["monotone"] = False
    sys = system_from_dict(bad)
    assert not check_A1_coefficients(sys.coupling_matrix(), 16, 0).passed


@pytest.mark.parametrize(
    "data",
    [
        {"M": 2, "components": [{"kind": "Custom", "expr": "abs(p1)"}]},
        {"M": 1, "components": [{"kind": "Quadratic"}]},
        {"M": 1, "components": [{"kind": "Custom", "expr": "abs(p1) + r2"}]},
        {"M": 1, "components": [{"kind": "WeaklyCoupled", "coupling": ["r1"]}]},
        {"M": 1, "components": [{"kind": "WeaklyCoupled", "coupling": []}]},
        {"M": 1, "components": [{"kind": "Custom", "expr": "import os"}]},
        {"components": []},
    ],
)
def test_invalid_configs(data):
    with pytest.raises(ConfigError):
        system_from_dict(data)


def test_invalid_json(tmp_path):
    path = tmp_path / "s.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_system(path)
