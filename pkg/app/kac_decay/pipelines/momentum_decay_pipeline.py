# app/kac_decay/pipelines/momentum_decay_pipeline.py
import json
import os

from dotenv import load_dotenv

from app.kac_decay.assets.experiment_config import ExperimentConfig, RuntimeSettings, load_config
from app.kac_decay.assets.experiments import RunResult, momentum_curve, resolve_output
from app.kac_decay.assets.metadata_logging import run_logged_pipeline
from app.kac_decay.assets.pipeline_logging import PipelineLogging
from app.kac_decay.connectors.result_files import write_csv
from app.kac_decay.connectors.results_db import ResultsDbClient

PIPELINE_NAME = "momentum_decay_pipeline"
DEFAULT_OUTPUT = "momentum_decay.csv"


def pipeline(pipeline_logging: PipelineLogging, config: ExperimentConfig,
             output_dir: str = "./results") -> RunResult:
    logger = pipeline_logging.logger
    logger.info(f"100 | Starting momentum-decay run (model={config.model}, seed={config.seed})")

    logger.info(f"200 | Simulating {config.sample_count('trajectories', 2000)} trajectories")
    curve = momentum_curve(config, workers=config.workers, n_sigma=config.tolerance("dsmc_sigma", 3.0))
    summary = curve.summary

    logger.info(f"300 | Moment ODE rate {summary['oracle_rate']:.6g}, max |z| = {summary['max_abs_z']:.3f}")
    if "fitted_rate" in summary:
        logger.info(f"310 | Fitted momentum rate {summary['fitted_rate']:.6g}")
    else:
        logger.info("310 | Zero initial momentum: no rate fitted")

    output = resolve_output(config, output_dir, DEFAULT_OUTPUT)
    logger.info(f"400 | Writing curve CSV to {output}")
    write_csv(curve.table, output, config.to_dict(),
              header={"provenance": curve.provenance, "summary": json.dumps(summary, sort_keys=True)})
    logger.info("499 | Momentum-decay run successful")
    return RunResult(output=output, summary=summary)


def run_momentum_decay_pipeline(config: ExperimentConfig, settings: RuntimeSettings) -> RunResult:
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
    run_momentum_decay_pipeline(load_config("configs/momentum_decay.json"), RuntimeSettings.from_env())
