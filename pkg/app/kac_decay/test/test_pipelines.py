# app/kac_decay/test/test_pipelines.py
import os
from dataclasses import replace

import numpy as np
import pandas as pd
import pytest

from app.kac_decay.assets.errors import ValidationError
from app.kac_decay.assets.experiment_config import load_config
from app.kac_decay.assets.metadata_logging import MetaDataLogging
from app.kac_decay.connectors.result_files import read_csv, read_json
from app.kac_decay.connectors.results_db import ResultsDbClient
from app.kac_decay.pipelines.energy_decay_pipeline import run_energy_decay_pipeline
from app.kac_decay.pipelines.entropy_decay_pipeline import run_entropy_decay_pipeline
from app.kac_decay.pipelines.info_decay_pipeline import run_info_decay_pipeline
from app.kac_decay.pipelines.k_matrix_pipeline import run_k_matrix_pipeline
from app.kac_decay.pipelines.momentum_decay_pipeline import run_momentum_decay_pipeline
from app.kac_decay.pipelines.ou_check_pipeline import run_ou_check_pipeline
from app.kac_decay.pipelines.verify_pipeline import run_verify_pipeline

THERMOSTAT = {"d": 2, "N": 3, "lambda": 1.0, "mu": 1.0, "beta": 1.0}
RESERVOIR = {"d": 2, "N": 2, "M": 3, "lambda_S": 1.0, "lambda_R": 1.0, "mu": 1.0, "beta": 1.0}


def _sample_config(**overrides):
    base = {
        "model": "thermostat",
        "params": THERMOSTAT,
        "initial": {"kind": "gaussian", "beta0": 0.5, "mean": [1.0, 0.0]},
        "time_grid": [0.0, 0.5, 1.0],
        "samples": {"trajectories": 200},
        "seed": 11,
    }
    base.update(overrides)
    return load_config(None, base)


def _statuses(settings, pipeline_name):
    client = ResultsDbClient(settings.results_db_url)
    try:
        meta = MetaDataLogging(pipeline_name, client)
        return [r["status"] for r in client.select_all(meta.table)], client.select_all(meta.check_table)
    finally:
        client.dispose()


def test_energy_decay_writes_curve_and_logs_run(settings):
    result = run_energy_decay_pipeline(_sample_config(), settings)
    assert result.ok
    assert result.output == os.path.join(settings.output_dir, "energy_decay.csv")
    df = read_csv(result.output)
    assert list(df.columns) == ["t", "E_mean", "E_stderr", "E_oracle", "E_paper_printed", "z", "provenance"]
    assert df["E_oracle"].iloc[0] == pytest.approx(df["E_mean"].iloc[0], rel=0.2)
    assert result.summary["oracle_rate"] == pytest.approx(0.5)
    statuses, _ = _statuses(settings, "energy_decay_pipeline")
    assert statuses == ["start", "success"]
    assert any(name.startswith("energy_decay_pipeline_") for name in os.listdir(settings.log_dir))


def test_energy_decay_is_reproducible_for_a_seed(settings, tmp_path):
    config = _sample_config()
    first = run_energy_decay_pipeline(replace(config, output=str(tmp_path / "a.csv")), settings)
    second = run_energy_decay_pipeline(replace(config, output=str(tmp_path / "b.csv")), settings)
    pd.testing.assert_frame_equal(read_csv(first.output), read_csv(second.output))


def test_reservoir_energy_conserves_the_total(settings):
    config = _sample_config(model="reservoir", params=RESERVOIR,
                            initial={"kind": "gaussian", "beta0": 0.5})
    result = run_energy_decay_pipeline(config, settings)
    df = read_csv(result.output)
    for column in ("E_R_mean", "E_R_stderr", "E_R_oracle", "E_total_mean"):
        assert column in df.columns
    assert result.summary["max_energy_drift"] <= 1e-10
    assert np.allclose(df["E_oracle"] + df["E_R_oracle"], df["E_oracle"].iloc[0] + df["E_R_oracle"].iloc[0])
    assert list(df.columns[:5]) == ["t", "E_mean", "E_stderr", "E_oracle", "E_paper_printed"]


def test_momentum_decay_has_one_row_per_component(settings):
    result = run_momentum_decay_pipeline(_sample_config(), settings)
    df = read_csv(result.output)
    assert len(df) == 3 * 2
    assert sorted(df["component"].unique()) == [0, 1]
    first = df[(df["component"] == 0) & (df["t"] == 0.0)]
    assert first["p_oracle"].iloc[0] == pytest.approx(3.0)


def test_k_matrix_report(settings):
    config = _sample_config(model="reservoir", params=RESERVOIR, initial={},
                            samples={"histories": 2000}, time_grid=[0.0, 0.5])
    result = run_k_matrix_pipeline(config, settings)
    doc = read_json(result.output)
    for column in ("t", "c_analytic", "c_mc", "stderr", "isotropy_residual"):
        assert len(doc[column]) == 2
    assert "rows" not in doc
    assert doc["t"] == [0.0, 0.5]
    assert doc["c_mc"][0] == 1.0 and doc["c_analytic"][0] == pytest.approx(1.0)
    assert abs(doc["c_mc"][1] - doc["c_analytic"][1]) <= 4.5 * doc["stderr"][1] + 1e-12
    assert doc["p_matrix"]["eigenvalues"][0] == pytest.approx(1.0)
    assert doc["config"]["model"] == "reservoir"


def test_k_matrix_rejects_thermostat_and_logs_failure(settings):
    with pytest.raises(ValidationError) as exc:
        run_k_matrix_pipeline(_sample_config(), settings)
    assert exc.value.field == "model"
    statuses, _ = _statuses(settings, "k_matrix_pipeline")
    assert statuses == ["start", "fail"]


def test_info_and_entropy_decay_curves(settings):
    small = {"histories": 50, "functional_samples": 500}
    info = run_info_decay_pipeline(_sample_config(params={"d": 1, "N": 2, "lambda": 1.0, "mu": 1.0, "beta": 1.0},
                                                  initial={"kind": "gaussian", "beta0": 0.5},
                                                  samples=small), settings)
    df = read_csv(info.output)
    for column in ("I_mc", "I_stderr", "envelope", "bound", "initial_exact", "n_components", "n_rejected"):
        assert column in df.columns
    assert df["envelope"].iloc[0] == pytest.approx(1.0)
    assert df["I_mc"].iloc[0] == pytest.approx(df["initial_exact"].iloc[0], rel=0.2)

    entropy = run_entropy_decay_pipeline(
        _sample_config(model="reservoir", params={"d": 1, "N": 1, "M": 2, "lambda_S": 0.0, "lambda_R": 1.0,
                                                  "mu": 1.0, "beta": 1.0},
                       initial={"kind": "gaussian", "beta0": 0.5}, samples=small),
        settings,
    )
    df = read_csv(entropy.output)
    assert "Ent_mc" in df.columns and "Ent_stderr" in df.columns
    assert (df["envelope"].diff().dropna() <= 0).all()


def test_ou_check_table(settings):
    config = _sample_config(params={"d": 1, "N": 2, "lambda": 1.0, "mu": 1.0, "beta": 1.0},
                            initial={}, time_grid=[0.0, 0.5])
    result = run_ou_check_pipeline(config, settings)
    df = read_csv(result.output)
    assert list(df.columns) == ["check", "operator", "s", "residual", "residual_refined",
                                "tolerance", "status", "provenance"]
    assert set(df["check"]) >= {"semigroup", "self-adjoint", "mean", "commutation", "mass", "entropy-identity"}
    assert set(df["status"]) <= {"pass", "fail"}


def test_ou_check_rejects_large_dimension(settings):
    with pytest.raises(ValidationError) as exc:
        run_ou_check_pipeline(_sample_config(), settings)
    assert exc.value.field == "params.N"


def test_verify_records_check_rows(settings):
    config = _sample_config(checks=["involution", "lambda-alpha", "classic-kac"])
    result = run_verify_pipeline(config, settings)
    assert result.ok
    assert result.summary["counts"] == {"pass": 3, "fail": 0, "inconclusive": 0}
    doc = read_json(result.output)
    assert [c["check"] for c in doc["checks"]] == ["involution", "lambda-alpha", "classic-kac"]
    statuses, checks = _statuses(settings, "verify_pipeline")
    assert statuses == ["start", "success"]
    assert len(checks) == 3 and all(r["status"] == "pass" for r in checks)


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__]))
