# app/kac_decay/pipelines/verify_pipeline.py
import os

from dotenv import load_dotenv

from app.kac_decay.assets.experiment_config import ExperimentConfig, RuntimeSettings, load_config
from app.kac_decay.assets.experiments import RunResult, resolve_output
from app.kac_decay.assets.metadata_logging import run_logged_pipeline
from app.kac_decay.assets.pipeline_logging import PipelineLogging
from app.kac_decay.assets.verification import CHECKS, CheckResult, run_checks
from app.kac_decay.connectors.result_files import write_json
from app.kac_decay.connectors.results_db import ResultsDbClient

PIPELINE_NAME = "verify_pipeline"
DEFAULT_OUTPUT = "verify.json"


def pipeline(pipeline_logging: PipelineLogging, config: ExperimentConfig,
             output_dir: str = "./results") -> RunResult:
    logger = pipeline_logging.logger
    names = list(config.checks) or list(CHECKS)
    logger.info(f"100 | Starting verify run: {len(names)} checks (seed={config.seed})")

    def report(result: CheckResult) -> None:
        line = (f"{result.name}: {result.status} (value {result.value:.3g}, "
                f"tolerance {result.tolerance:.3g}) [{result.provenance}]")
        if result.ok:
            logger.info(f"200 | {line}")
        else:
            logger.warning(f"210 | {line}")

    battery = run_checks(config, names, workers=config.workers, on_result=report)
    counts = battery.counts()
    logger.info(f"300 | pass={counts['pass']} fail={counts['fail']} inconclusive={counts['inconclusive']}")

    output = resolve_output(config, output_dir, DEFAULT_OUTPUT)
    logger.info(f"400 | Writing verification report to {output}")
    write_json(battery.to_dict(), output, config.to_dict())
    logger.info("499 | Verify run finished")
    return RunResult(
        output=output,
        summary={"ok": battery.ok, "counts": counts},
        ok=battery.ok,
        check_rows=[r.to_row() for r in battery.results],
    )


def run_verify_pipeline(config: ExperimentConfig, settings: RuntimeSettings) -> RunResult:
    os.makedirs(settings.output_dir, exist_ok=True)
    results_db_client = ResultsDbClient(settings.results_db_url)
    try:
        return run_logged_pipeline(
            PIPELINE_NAME, pipeline, config.to_dict(), results_db_client, settings.log_dir,
            config=config, output_dir=settings.output_dir,
        )
    finally:
        results_db_client.dispose()


if __name__ == "__main__":
    load_dotenv()
    run_verify_pipeline(load_config("configs/verify.json"), RuntimeSettings.from_env())
