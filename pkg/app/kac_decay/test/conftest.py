# app/kac_decay/test/conftest.py
import pytest
from dotenv import load_dotenv

from app.kac_decay.assets.experiment_config import RuntimeSettings
from app.kac_decay.assets.helpers import substream
from app.kac_decay.assets.simulators import ReservoirParams, ThermostatParams

load_dotenv()


@pytest.fixture
def rng():
    return substream(2024, 99)


@pytest.fixture
def thermostat_params():
    return ThermostatParams(d=2, N=3, lam=1.0, mu=1.0, beta=1.0)


@pytest.fixture
def reservoir_params():
    return ReservoirParams(d=2, N=2, M=3, lam_s=1.0, lam_r=1.0, mu=1.0, beta=1.0)


@pytest.fixture
def settings(tmp_path):
    out = tmp_path / "results"
    return RuntimeSettings(
        log_dir=str(tmp_path / "logs"),
        output_dir=str(out),
        results_db_url=f"sqlite:///{out}/kac_runs.db",
        workers=None,
        dense_cap=64,
    )


# run all tests
# python -m pytest -q app/kac_decay/test
# skip acceptance-scale runs
# python -m pytest -q app/kac_decay/test -m "not slow"
