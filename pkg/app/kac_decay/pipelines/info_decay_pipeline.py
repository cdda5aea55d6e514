# app/kac_decay/pipelines/info_decay_pipeline.py
import json
import os

from dotenv import load_dotenv

from app.kac_decay.assets.experiment_config import ExperimentConfig, RuntimeSettings, load_config
from app.kac_decay.assets.experiments import INFORMATION, RunResult, functional_curve, resolve_output
from app.kac_decay.assets.metadata_logging import run_logged_pipeline
from app.kac_decay.assets.pipeline_logging import PipelineLogging
from app.kac_decay.connectors.result_files import write_csv
from app.kac_decay.connectors.results_db import ResultsDbClient

PIPELINE_NAME = "info_decay_pipeline"
DEFAULT_OUTPUT = "info_decay.csv"


def pipeline(pipeline_logging: PipelineLogging, config: ExperimentConfig,
             output_dir: str = "./results") -> RunResult:
    logger = pipeline_logging.logger
    logger.info(f"100 | Starting info-decay run (model={config.model}, seed={config.seed})")

    logger.info(f"200 | Evolving Gaussian mixtures with {config.sample_count('histories', 2000)} histories "
                f"at {config.times().size} times")
    curve = functional_curve(config, INFORMATION, n_sigma=config.tolerance("decay_sigma", 3.0))
    summary = curve.summary

    logger.info(f"300 | Envelope {summary['envelope']}: I(h_0) = {summary['initial_exact']:.6g}, "
                f"min slack {summary['min_slack']:.3g}")
    if not summary["within_bound"]:
        logger.warning("310 | Information estimate above the envelope bound at some time")
    rejected = int(curve.table["n_rejected"].sum())
    if rejected:
        logger.warning(f"320 | {rejected} ill-conditioned mixture components rejected")

    output = resolve_output(config, output_dir, DEFAULT_OUTPUT)
    logger.info(f"400 | Writing curve CSV to {output}")
    write_csv(curve.table, output, config.to_dict(),
              header={"provenance": curve.provenance, "summary": json.dumps(summary, sort_keys=True)})
    logger.info("499 | Info-decay run successful")
    return RunResult(output=output, summary=summary)


def run_info_decay_pipeline(config: ExperimentConfig, settings: RuntimeSettings) -> RunResult:
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
    run_info_decay_pipeline(load_config("configs/info_decay.json"), RuntimeSettings.from_env())
