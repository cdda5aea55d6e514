# app/kac_decay/test/test_metadata_logging.py
import pytest

from app.kac_decay.assets.experiments import RunResult
from app.kac_decay.assets.metadata_logging import (
    MetaDataLogging,
    MetaDataLoggingStatus,
    run_logged_pipeline,
)
from app.kac_decay.connectors.results_db import ResultsDbClient


@pytest.fixture
def client(tmp_path):
    db = ResultsDbClient(f"sqlite:///{tmp_path}/runs.db")
    yield db
    db.dispose()


def _succeeding_pipeline(pipeline_logging, value):
    pipeline_logging.logger.info("100 | starting")
    return RunResult(output="out.csv", summary={"value": value},
                     check_rows=[{"check": "demo", "status": "pass", "value": 0.0,
                                  "tolerance": 1.0, "provenance": "unit test"}])


def _failing_pipeline(pipeline_logging):
    pipeline_logging.logger.info("100 | starting")
    raise ValueError("boom")


def test_run_ids_increment_per_pipeline(client):
    first = MetaDataLogging("demo_pipeline", client, config={"seed": 1})
    first.log()
    second = MetaDataLogging("demo_pipeline", client)
    other = MetaDataLogging("other_pipeline", client)
    assert first.run_id == 1
    assert second.run_id == 2
    assert other.run_id == 1


def test_logged_pipeline_writes_start_success_and_checks(client, tmp_path):
    result = run_logged_pipeline("demo_pipeline", _succeeding_pipeline, {"seed": 3}, client,
                                 str(tmp_path / "logs"), value=5)
    assert result.summary == {"value": 5}
    meta = MetaDataLogging("demo_pipeline", client)
    rows = client.select_all(meta.table)
    assert [r["status"] for r in rows] == [MetaDataLoggingStatus.RUN_START, MetaDataLoggingStatus.RUN_SUCCESS]
    assert rows[0]["config"] == {"seed": 3}
    assert "100 | starting" in rows[1]["logs"]
    checks = client.select_all(meta.check_table)
    assert checks[0]["check"] == "demo" and checks[0]["run_id"] == 1


def test_logged_pipeline_records_failure_and_reraises(client, tmp_path):
    with pytest.raises(ValueError):
        run_logged_pipeline("failing_pipeline", _failing_pipeline, {}, client, str(tmp_path / "logs"))
    rows = client.select_all(MetaDataLogging("failing_pipeline", client).table)
    assert [r["status"] for r in rows] == [MetaDataLoggingStatus.RUN_START, MetaDataLoggingStatus.RUN_FAILURE]
    assert "500 | failing_pipeline run failed: boom" in rows[1]["logs"]


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__]))
