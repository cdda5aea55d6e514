# app/kac_decay/assets/metadata_logging.py
from datetime import datetime
from typing import Callable, TypeVar

from sqlalchemy import (
    JSON,
    Column,
    DateTime,
    Float,
    Integer,
    MetaData,
    String,
    Table,
    func,
    select,
)

from app.kac_decay.assets.pipeline_logging import PipelineLogging
from app.kac_decay.connectors.results_db import ResultsDbClient

T = TypeVar("T")


class MetaDataLoggingStatus:
    """Data class for log status"""

    RUN_START = "start"
    RUN_SUCCESS = "success"
    RUN_FAILURE = "fail"


class MetaDataLogging:
    def __init__(
        self,
        pipeline_name: str,
        results_db_client: ResultsDbClient,
        config: dict = None,
        log_table_name: str = "pipeline_logs",
    ):
        self.pipeline_name = pipeline_name
        self.log_table_name = log_table_name
        self.results_db_client = results_db_client
        self.config = config or {}
        self.metadata = MetaData()
        self.table = Table(
            self.log_table_name,
            self.metadata,
            Column("id", Integer, primary_key=True, autoincrement=True),
            Column("pipeline_name", String),
            Column("run_id", Integer),
            Column("timestamp", DateTime),
            Column("status", String),
            Column("config", JSON),
            Column("logs", String),
        )
        self.check_table = Table(
            "check_results",
            self.metadata,
            Column("id", Integer, primary_key=True, autoincrement=True),
            Column("run_id", Integer),
            Column("check", String),
            Column("status", String),
            Column("value", Float),
            Column("tolerance", Float),
            Column("provenance", String),
        )
        self.run_id: int = self._get_run_id()

    def _create_log_table(self) -> None:
        """Create log tables if they do not exist."""
        self.results_db_client.create_table(metadata=self.metadata, table=self.table)
        self.results_db_client.create_table(metadata=self.metadata, table=self.check_table)

    def _get_run_id(self) -> int:
        """Retrieve the next run ID for the current pipeline."""
        try:
            self._create_log_table()
            statement = select(func.max(self.table.c.run_id)).where(
                self.table.c.pipeline_name == self.pipeline_name
            )
            with self.results_db_client.engine.connect() as conn:
                max_run_id = conn.execute(statement).scalar() or 0
            return max_run_id + 1
        except Exception as e:
            raise RuntimeError(f"Failed to retrieve run ID: {e}") from e

    def log(
        self,
        status: str = MetaDataLoggingStatus.RUN_START,
        timestamp: datetime = None,
        logs: str = None,
    ) -> None:
        """Writes pipeline metadata log to the results database"""
        if timestamp is None:
            timestamp = datetime.now()
        try:
            self.results_db_client.insert(
                data=[{
                    "pipeline_name": self.pipeline_name,
                    "timestamp": timestamp,
                    "run_id": self.run_id,
                    "status": status,
                    "config": self.config,
                    "logs": logs,
                }],
                table=self.table,
                metadata=self.metadata,
            )
        except Exception as e:
            raise RuntimeError(f"Failed to log metadata: {e}") from e

    def log_checks(self, rows: list[dict]) -> None:
        """One row per verification check: check, status, value, tolerance, provenance."""
        data = [{"run_id": self.run_id, **row} for row in rows]
        try:
            self.results_db_client.insert(data=data, table=self.check_table, metadata=self.metadata)
        except Exception as e:
            raise RuntimeError(f"Failed to log check results: {e}") from e


def run_logged_pipeline(
    pipeline_name: str,
    pipeline: Callable[..., T],
    config: dict,
    results_db_client: ResultsDbClient,
    log_dir: str,
    /,
    **kwargs,
) -> T:
    """
    Wrapper that:
      - sets up file+stdout logging
      - writes start/success/failure rows to the metadata table
      - runs pipeline(pipeline_logging=..., **kwargs)
    """
    pipeline_logging = PipelineLogging(pipeline_name=pipeline_name, log_folder_path=log_dir)
    metadata_logger = MetaDataLogging(
        pipeline_name=pipeline_name,
        results_db_client=results_db_client,
        config=config,
    )
    try:
        metadata_logger.log()  # start
        result = pipeline(pipeline_logging=pipeline_logging, **kwargs)
        rows = getattr(result, "check_rows", None)
        if rows:
            metadata_logger.log_checks(rows)
        metadata_logger.log(
            status=MetaDataLoggingStatus.RUN_SUCCESS,
            logs=pipeline_logging.get_logs(),
        )
        return result
    except Exception as e:
        pipeline_logging.logger.error(f"500 | {pipeline_name} run failed: {e}")
        metadata_logger.log(
            status=MetaDataLoggingStatus.RUN_FAILURE,
            logs=pipeline_logging.get_logs(),
        )
        raise
    finally:
        pipeline_logging.close()
