# app/kac_decay/connectors/results_db.py
from sqlalchemy import MetaData, Table, create_engine, insert, select


class ResultsDbClient:
    """
    SQLAlchemy 2.x client for the run-metadata database. Any SQLAlchemy URL
    works; the default deployment is a sqlite file next to the results.
    """

    def __init__(self, database_url: str):
        self.database_url = database_url
        self.engine = create_engine(database_url, future=True)

    @classmethod
    def for_output_dir(cls, output_dir: str, file_name: str = "kac_runs.db") -> "ResultsDbClient":
        return cls(f"sqlite:///{output_dir}/{file_name}")

    def create_table(self, metadata: MetaData, table: Table) -> None:
        metadata.create_all(self.engine, tables=[table])

    def insert(self, data: list[dict], table: Table, metadata: MetaData) -> None:
        if not data:
            return
        self.create_table(metadata=metadata, table=table)
        with self.engine.begin() as conn:
            conn.execute(insert(table), data)

    def select_all(self, table: Table) -> list[dict]:
        with self.engine.connect() as conn:
            result = conn.execute(select(table))
            return [dict(row._mapping) for row in result.fetchall()]

    def dispose(self) -> None:
        self.engine.dispose()
