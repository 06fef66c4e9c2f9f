import dataclasses
import json

import pytest

from segflow.adapt import AdaptConfig
from segflow.bregman import SolverConfig
from segflow.config import (ADAPT_KEYS, SOLVER_KEYS, ConfigError, config_snapshot, load_config,
                            parse_config)


def test_empty_object_gives_defaults():
    solver, adapt = parse_config({})
    assert (solver.tau, solver.mu, solver.nu, solver.beta, solver.eps, solver.zeta, solver.alpha) == \
        (1.0, 1.0, 1.0, 100.0, 1e-2, 1e-8, 1.0)
    assert (adapt.tau_star, adapt.n_breg, adapt.omega, adapt.cap) == (0.5, 3, 0.9, 1000.0)


def test_rsfe_defaults():
    solver, _ = parse_config({"model": "rsfe"})
    assert (solver.sigma, solver.mu, solver.mu_i, solver.mu_e) == (8.0, 1e-3, 1e-5, 1e-5)
    assert parse_config({}, model="rsfe")[0].mu == 1e-3


def test_key_sets_cover_dataclasses():
    assert set(SOLVER_KEYS) == {f.name for f in dataclasses.fields(SolverConfig)}
    assert set(ADAPT_KEYS) == {f.name for f in dataclasses.fields(AdaptConfig)}


@pytest.mark.parametrize("data, key", [
    ({"nu": -1}, "nu"),
    ({"n_breg": 2.5}, "n_breg"),
    ({"n_breg": True}, "n_breg"),
    ({"omega": "high"}, "omega"),
    ({"bogus": 1}, "bogus"),
    ({"model": "other"}, "model"),
    ({"omega": 2.0}, "omega"),
    ([1, 2], "$"),
])
def test_errors_name_the_key(data, key):
    with pytest.raises(ConfigError) as exc:
        parse_config(data)
    assert exc.value.key == key
    assert str(exc.value).startswith(key)


def test_values_applied():
    solver, adapt = parse_config({"n_breg": 3, "nu": 2, "lambda_max": None, "rsfe_source_sum": True})
    assert adapt.n_breg == 3 and solver.nu == 2.0 and isinstance(solver.nu, float)
    assert adapt.lambda_max is None and solver.rsfe_source_sum is True


def test_load_config_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"eta_star": 1e-3, "omega": 0.5}))
    solver, adapt = load_config(p)
    assert solver.eta_star == 1e-3 and adapt.omega == 0.5
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(p)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    assert load_config(None)[0] == SolverConfig()


def test_snapshot_is_flat_and_complete():
    snap = config_snapshot(*parse_config({}))
    assert set(snap) == set(SOLVER_KEYS) | set(ADAPT_KEYS)
    json.dumps(snap)
