# app/kac_decay/assets/experiment_config.py
import json
import os
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Optional, Union

import numpy as np

from app.kac_decay.assets.errors import ValidationError
from app.kac_decay.assets.oracles import classic_kac_params
from app.kac_decay.assets.simulators import (
    EnergySphere,
    IsotropicGaussian,
    PointMass,
    ReservoirParams,
    ThermostatParams,
    WithReservoir,
)

THERMOSTAT = "thermostat"
RESERVOIR = "reservoir"
CLASSIC_KAC = "classic-kac"
MODELS = (THERMOSTAT, RESERVOIR, CLASSIC_KAC)
INITIAL_KINDS = ("point", "gaussian", "sphere")


# ---------------------------------------------------------------------
# Environment
# ---------------------------------------------------------------------
@dataclass(frozen=True)
class RuntimeSettings:
    log_dir: str
    output_dir: str
    results_db_url: str
    workers: Optional[int]
    dense_cap: int

    @classmethod
    def from_env(cls) -> "RuntimeSettings":
        output_dir = os.getenv("OUTPUT_DIR", "./results")
        workers = os.getenv("KAC_WORKERS")
        return cls(
            log_dir=os.getenv("LOG_DIR", "./logs"),
            output_dir=output_dir,
            results_db_url=os.getenv("RESULTS_DB_URL", f"sqlite:///{output_dir}/kac_runs.db"),
            workers=int(workers) if workers else None,
            dense_cap=int(os.getenv("KAC_DENSE_CAP", "64")),
        )


# ---------------------------------------------------------------------
# Experiment configuration
# ---------------------------------------------------------------------
@dataclass(frozen=True)
class ExperimentConfig:
    model: str = THERMOSTAT
    params: dict = field(default_factory=dict)
    initial: dict = field(default_factory=dict)
    time_grid: Union[list, dict] = field(default_factory=lambda: [0.0])
    samples: dict = field(default_factory=dict)
    seed: int = 0
    workers: int = 1
    output: Optional[str] = None
    checks: list = field(default_factory=list)
    tolerances: dict = field(default_factory=dict)

    # -- accessors ----------------------------------------------------
    def times(self) -> np.ndarray:
        grid = self.time_grid
        if isinstance(grid, dict):
            return np.linspace(float(grid["start"]), float(grid["stop"]), int(grid["num"]))
        return np.asarray(grid, dtype=float).reshape(-1)

    def sample_count(self, key: str, default: int) -> int:
        return int(self.samples.get(key, default))

    def tolerance(self, key: str, default: float) -> float:
        return float(self.tolerances.get(key, default))

    def model_params(self) -> Union[ThermostatParams, ReservoirParams]:
        p = self.params
        try:
            if self.model == THERMOSTAT:
                return ThermostatParams(d=int(p["d"]), N=int(p["N"]), lam=float(p.get("lambda", 0.0)),
                                        mu=float(p["mu"]), beta=float(p["beta"]))
            if self.model == CLASSIC_KAC:
                return classic_kac_params(int(p["d"]), int(p["N"]), int(p["M"]), float(p["beta"]))
            return ReservoirParams(d=int(p["d"]), N=int(p["N"]), M=int(p["M"]),
                                   lam_s=float(p.get("lambda_S", 0.0)), lam_r=float(p.get("lambda_R", 0.0)),
                                   mu=float(p["mu"]), beta=float(p["beta"]))
        except KeyError as exc:
            raise ValidationError(f"missing model parameter {exc.args[0]!r}", field=f"params.{exc.args[0]}") from exc
        except ValidationError as exc:
            raise ValidationError(str(exc), field=f"params.{exc.field}") from exc

    def system_sampler(self):
        """Initial law of the N system particles."""
        p = self.model_params()
        init = self.initial
        kind = init.get("kind", "gaussian")
        if kind == "point":
            sampler = PointMass.from_array(init["velocities"])
            if sampler.n_particles != p.N or sampler.d != p.d:
                raise ValidationError("point-mass velocities must be N rows of d components",
                                      field="initial.velocities")
            return sampler
        if kind == "sphere":
            return EnergySphere(n_particles=p.N, d=p.d, energy=float(init["energy"]))
        mean = init.get("mean")
        return IsotropicGaussian(
            n_particles=p.N, d=p.d, beta0=float(init.get("beta0", p.beta)),
            mean=None if mean is None else tuple(float(x) for x in mean),
        )

    def initial_sampler(self):
        sampler = self.system_sampler()
        p = self.model_params()
        if isinstance(p, ReservoirParams):
            return WithReservoir(system=sampler, M=p.M, beta=p.beta)
        return sampler

    # -- validation ---------------------------------------------------
    def validate(self) -> "ExperimentConfig":
        if self.model not in MODELS:
            raise ValidationError(f"model must be one of {MODELS}, got {self.model!r}", field="model")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ValidationError(f"seed must be a non-negative integer, got {self.seed!r}", field="seed")
        if not isinstance(self.workers, int) or self.workers < 1:
            raise ValidationError(f"workers must be >= 1, got {self.workers!r}", field="workers")
        try:
            times = self.times()
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"unreadable time grid: {exc}", field="time_grid") from exc
        if times.size == 0 or not np.all(np.isfinite(times)) or times[0] < 0 or np.any(np.diff(times) <= 0):
            raise ValidationError("time grid must be non-empty, >= 0 and strictly increasing", field="time_grid")
        for key, value in self.samples.items():
            if not isinstance(value, int) or value < 1:
                raise ValidationError(f"sample count {key!r} must be a positive integer", field=f"samples.{key}")
        for key, value in self.tolerances.items():
            if not isinstance(value, (int, float)) or value < 0:
                raise ValidationError(f"tolerance {key!r} must be >= 0", field=f"tolerances.{key}")
        if not isinstance(self.checks, list) or not all(isinstance(c, str) for c in self.checks):
            raise ValidationError("checks must be a list of check names", field="checks")
        kind = self.initial.get("kind", "gaussian")
        if kind not in INITIAL_KINDS:
            raise ValidationError(f"initial.kind must be one of {INITIAL_KINDS}, got {kind!r}", field="initial.kind")
        try:
            self.system_sampler()
        except KeyError as exc:
            raise ValidationError(f"missing initial field {exc.args[0]!r}", field=f"initial.{exc.args[0]}") from exc
        except ValidationError as exc:
            if exc.field and exc.field.startswith(("params", "initial")):
                raise
            raise ValidationError(str(exc), field=f"initial.{exc.field}") from exc
        return self

    def to_dict(self) -> dict:
        return asdict(self)


def load_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> ExperimentConfig:
    """
    Read a JSON experiment file (or start from defaults when `path` is None),
    apply non-None `overrides` and validate.
    """
    data: dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as file:
                data = json.load(file)
        except FileNotFoundError as exc:
            raise ValidationError(f"config file not found: {path}", field="config") from exc
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config file {path} is not valid JSON: {exc}", field="config") from exc
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = sorted(set(data) - known)
    if unknown:
        raise ValidationError(f"unknown config keys: {unknown}", field=unknown[0])
    config = ExperimentConfig(**data)
    changes = {k: v for k, v in (overrides or {}).items() if v is not None}
    if changes:
        config = replace(config, **changes)
    return config.validate()
