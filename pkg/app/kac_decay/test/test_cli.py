# app/kac_decay/test/test_cli.py
import json
import os

import numpy as np
import pytest

import cli
from app.kac_decay.assets import kinematics


@pytest.fixture(autouse=True)
def _isolated_env(monkeypatch, tmp_path):
    monkeypatch.setenv("LOG_DIR", str(tmp_path / "logs"))
    monkeypatch.setenv("OUTPUT_DIR", str(tmp_path / "results"))
    monkeypatch.delenv("RESULTS_DB_URL", raising=False)
    monkeypatch.delenv("KAC_WORKERS", raising=False)


def _write_config(tmp_path, **changes):
    data = {
        "model": "thermostat",
        "params": {"d": 3, "N": 4, "lambda": 1.0, "mu": 1.0, "beta": 1.0},
        "time_grid": [0.0],
        "seed": 3,
        "checks": ["involution", "lambda-alpha"],
    }
    data.update(changes)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(data), encoding="utf-8")
    return str(path)


def _run(capsys, *argv):
    code = cli.main(list(argv))
    return code, json.loads(capsys.readouterr().out)


def test_verify_exit_zero_and_summary(tmp_path, capsys):
    out = str(tmp_path / "report.json")
    code, doc = _run(capsys, "verify", "--config", _write_config(tmp_path), "--out", out)
    assert code == cli.EXIT_OK
    assert doc["ok"] is True
    assert doc["command"] == "verify"
    assert doc["output"] == out
    assert doc["summary"]["counts"]["pass"] == 2
    assert os.path.exists(out)
    assert os.path.exists(tmp_path / "results" / "kac_runs.db")


def test_invalid_model_exits_two_with_field(tmp_path, capsys):
    code, doc = _run(capsys, "verify", "--config", _write_config(tmp_path, model="boltzmann"))
    assert code == cli.EXIT_ERROR
    assert doc == {"ok": False, "error": "ValidationError", "message": doc["message"], "field": "model"}


def test_missing_parameter_is_named(tmp_path, capsys):
    code, doc = _run(capsys, "energy-decay", "--config",
                     _write_config(tmp_path, params={"d": 3, "mu": 1.0, "beta": 1.0}))
    assert code == cli.EXIT_ERROR
    assert doc["field"] == "params.N"


def test_k_matrix_on_thermostat_model_is_rejected(tmp_path, capsys):
    code, doc = _run(capsys, "k-matrix", "--config", _write_config(tmp_path))
    assert code == cli.EXIT_ERROR
    assert doc["field"] == "model"


def test_failed_check_exits_one(tmp_path, capsys, monkeypatch):
    def sign_flipped(v, w, sigma):
        proj = np.sum(sigma * (v - w), axis=-1, keepdims=True) * sigma
        return v + proj, w - proj

    monkeypatch.setattr(kinematics, "reflect", sign_flipped)
    config = _write_config(tmp_path, checks=["conservation"], samples={"collisions": 500})
    code, doc = _run(capsys, "verify", "--config", config)
    assert code == cli.EXIT_CHECK_FAILED
    assert doc["ok"] is False
    assert doc["summary"]["counts"]["fail"] == 1


def test_seed_override_reaches_the_run(tmp_path, capsys):
    out = str(tmp_path / "report.json")
    _run(capsys, "verify", "--config", _write_config(tmp_path), "--seed", "41", "--out", out)
    with open(out, encoding="utf-8") as file:
        assert json.load(file)["config"]["seed"] == 41


@pytest.mark.parametrize("command", sorted(cli.ROUTES))
def test_every_command_has_a_default_config(command):
    assert os.path.exists(cli.default_config_path(command))


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__]))
