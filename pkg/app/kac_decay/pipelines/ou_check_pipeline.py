# app/kac_decay/pipelines/ou_check_pipeline.py
import os

import numpy as np
import pandas as pd
from dotenv import load_dotenv

from app.kac_decay.assets.errors import ValidationError
from app.kac_decay.assets.experiment_config import ExperimentConfig, RuntimeSettings, load_config
from app.kac_decay.assets.experiments import RunResult, resolve_output
from app.kac_decay.assets.gaussian_states import GaussianComponent, entropy_gaussian_isotropic
from app.kac_decay.assets.metadata_logging import run_logged_pipeline
from app.kac_decay.assets.ou_semigroup import (
    OP_MARGINAL,
    OP_PAIR,
    OP_Q,
    OP_THERMOSTAT,
    CollisionOpSpec,
    QuadratureSpec,
    ScalarField,
    check_mass_preservation,
    check_mean_preservation,
    check_self_adjoint,
    check_semigroup,
    commutation_refinement,
    entropy_from_information,
    gaussian_information_curve,
    quadrature_information_curve,
)
from app.kac_decay.assets.pipeline_logging import PipelineLogging
from app.kac_decay.connectors.result_files import write_csv
from app.kac_decay.connectors.results_db import ResultsDbClient

PIPELINE_NAME = "ou_check_pipeline"
DEFAULT_OUTPUT = "ou_check.csv"
MAX_TENSOR_DIM = 3
PROVENANCE = {
    "semigroup": "Ornstein-Uhlenbeck semigroup property P_s P_t = P_{s+t}",
    "self-adjoint": "P_s is self-adjoint in L^2(gamma)",
    "mean": "P_s preserves the gamma mean",
    "commutation": "OU semigroup commutes with the time evolution operator",
    "mass": "collision operators preserve the gamma mass",
    "entropy-identity": "entropy from information via the Ornstein-Uhlenbeck semigroup",
}


def _test_fields(n: int, beta: float):
    """Two anisotropic Gaussian ratios on R^n with variances around 1/beta."""
    fields = []
    for shift in (0.2, -0.3):
        a = (1.0 + shift * np.cos(np.arange(n))) / beta
        cov = np.diag(a)
        if n > 1:
            cov[0, 1] = cov[1, 0] = 0.05 / beta
        mean = np.full(n, shift) * np.where(np.arange(n) % 2 == 0, 1.0, -0.5)
        fields.append(ScalarField.gaussian_ratio(GaussianComponent(mean, cov), beta))
    return fields


def _row(check: str, operator: str, s: float, residual: float, refined: float, tolerance: float) -> dict:
    return {
        "check": check,
        "operator": operator,
        "s": s,
        "residual": residual,
        "residual_refined": refined,
        "tolerance": tolerance,
        "status": "pass" if residual <= tolerance else "fail",
        "provenance": PROVENANCE[check],
    }


def pipeline(pipeline_logging: PipelineLogging, config: ExperimentConfig,
             output_dir: str = "./results") -> RunResult:
    logger = pipeline_logging.logger
    logger.info(f"100 | Starting ou-check run (seed={config.seed})")
    p = config.model_params()
    n = p.d * p.N
    if n > MAX_TENSOR_DIM:
        raise ValidationError(f"tensor quadrature supports d N <= {MAX_TENSOR_DIM}, got {n}", field="params.N")
    q = QuadratureSpec(order=config.sample_count("quadrature_order", 24), beta=p.beta, seed=config.seed)
    tol = config.tolerance("ou", 1e-6)
    h, g = _test_fields(n, p.beta)
    ops = [OP_THERMOSTAT] + ([OP_PAIR, OP_Q, OP_MARGINAL] if p.N >= 2 else [])
    spec = CollisionOpSpec(d=p.d, n_particles=p.N, beta=p.beta, seed=config.seed)

    rows = []
    s_values = [float(s) for s in config.times() if s > 0]
    logger.info(f"200 | Semigroup identities at s in {s_values} (order {q.order})")
    for s in s_values:
        rows.append(_row("semigroup", "P", s, check_semigroup(h, s, 0.3, q), np.nan, tol))
        rows.append(_row("self-adjoint", "P", s, check_self_adjoint(h, g, s, q), np.nan, tol))
        rows.append(_row("mean", "P", s, check_mean_preservation(h, s, q), np.nan, tol))

    logger.info(f"300 | Commutation with {ops}")
    for op in ops:
        for s in s_values:
            coarse, fine = commutation_refinement(h, s, op, spec, q)
            rows.append(_row("commutation", op, s, coarse, fine, tol))
            logger.info(f"310 | {op} s={s:g}: {coarse:.3e} -> {fine:.3e}")
        rows.append(_row("mass", op, 0.0, check_mass_preservation(h, op, spec, q), np.nan, tol))

    id_tol = config.tolerance("entropy_identity", 1e-4)
    logger.info("320 | Entropy from information on isotropic Gaussians")
    for scale in (0.5, 2.0, 5.0):
        a = scale / p.beta
        exact = entropy_gaussian_isotropic(a, p.beta, 1)
        closed = entropy_from_information(gaussian_information_curve(GaussianComponent.isotropic(1, a), p.beta), p.beta)
        rows.append(_row("entropy-identity", f"gaussian a={scale}/beta", 0.0,
                         abs(closed.value - exact) / exact, np.nan, id_tol))
    a = 0.5 / p.beta
    ratio = ScalarField.gaussian_ratio(GaussianComponent.isotropic(1, a), p.beta)
    quad = entropy_from_information(quadrature_information_curve(ratio, p.beta, q), p.beta, tol=1e-7)
    exact = entropy_gaussian_isotropic(a, p.beta, 1)
    rows.append(_row("entropy-identity", "quadrature a=0.5/beta", 0.0, abs(quad.value - exact) / exact, np.nan, id_tol))

    table = pd.DataFrame(rows)
    failed = int((table["status"] != "pass").sum())
    summary = {"n_rows": len(table), "n_failed": failed, "order": q.order}
    if failed:
        logger.warning(f"330 | {failed} OU identities above tolerance")

    output = resolve_output(config, output_dir, DEFAULT_OUTPUT)
    logger.info(f"400 | Writing OU check CSV to {output}")
    write_csv(table, output, config.to_dict(), header={"quadrature_order": q.order})
    logger.info("499 | OU-check run successful")
    return RunResult(output=output, summary=summary, ok=failed == 0)


def run_ou_check_pipeline(config: ExperimentConfig, settings: RuntimeSettings) -> RunResult:
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
    run_ou_check_pipeline(load_config("configs/ou_check.json"), RuntimeSettings.from_env())
