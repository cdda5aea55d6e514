# app/kac_decay/test/test_experiment_config.py
import json
import os

import numpy as np
import pytest

from app.kac_decay.assets.errors import ValidationError
from app.kac_decay.assets.experiment_config import RuntimeSettings, load_config
from app.kac_decay.assets.simulators import IsotropicGaussian, ReservoirParams, WithReservoir

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "..", "..", "..", "configs")


def _sample_config(**changes):
    data = {
        "model": "thermostat",
        "params": {"d": 2, "N": 3, "lambda": 1.0, "mu": 1.0, "beta": 1.0},
        "initial": {"kind": "gaussian", "beta0": 0.5},
        "time_grid": [0.0, 0.5, 1.0],
        "samples": {"trajectories": 100},
        "seed": 4,
    }
    data.update(changes)
    return data


def _write(tmp_path, data, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data) if isinstance(data, dict) else data, encoding="utf-8")
    return str(path)


@pytest.mark.parametrize("name", sorted(os.listdir(CONFIG_DIR)))
def test_shipped_configs_load(name):
    config = load_config(os.path.join(CONFIG_DIR, name))
    assert config.model_params() is not None
    assert config.times().size >= 1


def test_loads_and_exposes_accessors(tmp_path):
    config = load_config(_write(tmp_path, _sample_config()))
    assert config.seed == 4
    assert np.allclose(config.times(), [0.0, 0.5, 1.0])
    assert config.sample_count("trajectories", 7) == 100
    assert config.sample_count("histories", 7) == 7
    assert config.tolerance("dsmc_sigma", 3.0) == 3.0
    assert isinstance(config.system_sampler(), IsotropicGaussian)
    assert config.to_dict()["params"]["N"] == 3


def test_time_grid_from_linspace(tmp_path):
    config = load_config(_write(tmp_path, _sample_config(time_grid={"start": 0.0, "stop": 5.0, "num": 11})))
    assert config.times().size == 11
    assert config.times()[-1] == pytest.approx(5.0)


def test_overrides_skip_none(tmp_path):
    config = load_config(_write(tmp_path, _sample_config()), {"seed": 9, "output": None, "workers": 2})
    assert config.seed == 9
    assert config.workers == 2
    assert config.output is None


def test_reservoir_and_classic_kac_models(tmp_path):
    params = {"d": 2, "N": 2, "M": 3, "lambda_S": 1.0, "lambda_R": 1.0, "mu": 1.0, "beta": 1.0}
    config = load_config(_write(tmp_path, _sample_config(model="reservoir", params=params)))
    assert isinstance(config.model_params(), ReservoirParams)
    assert isinstance(config.initial_sampler(), WithReservoir)

    classic = load_config(_write(tmp_path, _sample_config(model="classic-kac", params={"d": 1, "N": 2, "M": 3,
                                                                                        "beta": 1.0})))
    p = classic.model_params()
    assert p.mu == pytest.approx(1.5)
    assert p.total_rate == pytest.approx(5.0)


@pytest.mark.parametrize(
    "changes, field",
    [
        ({"model": "boltzmann"}, "model"),
        ({"seed": -1}, "seed"),
        ({"workers": 0}, "workers"),
        ({"time_grid": [0.0, 1.0, 1.0]}, "time_grid"),
        ({"time_grid": [-1.0, 1.0]}, "time_grid"),
        ({"time_grid": {"start": 0.0}}, "time_grid"),
        ({"samples": {"trajectories": 0}}, "samples.trajectories"),
        ({"tolerances": {"ou": -1.0}}, "tolerances.ou"),
        ({"params": {"d": 2, "N": 3, "beta": 1.0}}, "params.mu"),
        ({"params": {"d": 2, "N": 3, "mu": 1.0, "beta": -1.0}}, "params.beta"),
        ({"initial": {"kind": "uniform"}}, "initial.kind"),
        ({"initial": {"kind": "point", "velocities": [[1.0, 0.0]]}}, "initial.velocities"),
        ({"initial": {"kind": "sphere"}}, "initial.energy"),
        ({"checks": "conservation"}, "checks"),
    ],
)
def test_invalid_fields_are_named(tmp_path, changes, field):
    with pytest.raises(ValidationError) as exc:
        load_config(_write(tmp_path, _sample_config(**changes)))
    assert exc.value.field == field


def test_unknown_keys_are_rejected(tmp_path):
    with pytest.raises(ValidationError) as exc:
        load_config(_write(tmp_path, _sample_config(bogus=1)))
    assert exc.value.field == "bogus"


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ValidationError) as exc:
        load_config(str(tmp_path / "absent.json"))
    assert exc.value.field == "config"
    with pytest.raises(ValidationError) as exc:
        load_config(_write(tmp_path, "{not json"))
    assert exc.value.field == "config"


def test_runtime_settings_from_env(monkeypatch, tmp_path):
    monkeypatch.setenv("OUTPUT_DIR", str(tmp_path))
    monkeypatch.delenv("RESULTS_DB_URL", raising=False)
    monkeypatch.delenv("KAC_WORKERS", raising=False)
    settings = RuntimeSettings.from_env()
    assert settings.workers is None
    assert settings.results_db_url == f"sqlite:///{tmp_path}/kac_runs.db"
    monkeypatch.setenv("KAC_WORKERS", "3")
    assert RuntimeSettings.from_env().workers == 3


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__]))
