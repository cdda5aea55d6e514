# app/kac_decay/assets/verification.py
"""
Property battery run by `cli.py verify`.

Every check returns a CheckResult with status pass / fail / inconclusive.
Statistical checks report "inconclusive" instead of "fail" when the configured
tolerance is tighter than three standard errors of the estimate.
"""
import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from app.kac_decay.assets import kinematics
from app.kac_decay.assets.errors import OracleMismatchError, ValidationError
from app.kac_decay.assets.experiment_config import ExperimentConfig
from app.kac_decay.assets.experiments import ENTROPY, INFORMATION, functional_curve
from app.kac_decay.assets.gaussian_states import (
    GaussianComponent,
    GaussianMixtureState,
    entropy_gaussian,
    entropy_gaussian_isotropic,
    entropy_mixture_mc,
    fisher_info_gaussian,
    fisher_info_gaussian_block,
    fisher_info_gaussian_isotropic,
    fisher_info_mixture_mc,
    propagate_component_pair,
    thermostat_collision_mixture,
)
from app.kac_decay.assets.helpers import fit_exponential_rate, substream
from app.kac_decay.assets.histories import (
    PMatrix,
    all_pair_weights,
    k_coefficient_analytic,
    k_coefficient_mc,
    k_coefficient_series,
)
from app.kac_decay.assets.oracles import (
    CLASSIC_KAC_INFORMATION,
    RESERVOIR_INFORMATION,
    THERMOSTAT_INFORMATION,
    classic_kac_exponent,
    classic_kac_params,
    energy_oracle,
    envelope,
    momentum_oracle,
    one_collision_moment,
    relative_functionals_dense,
)
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
)
from app.kac_decay.assets.simulators import (
    IsotropicGaussian,
    ReservoirParams,
    ThermostatParams,
    WithReservoir,
    simulate,
)

logger = logging.getLogger(__name__)

PASS = "pass"
FAIL = "fail"
INCONCLUSIVE = "inconclusive"
VERIFY_STREAM = 5


@dataclass
class CheckResult:
    name: str
    status: str
    value: float
    tolerance: float
    provenance: str
    detail: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == PASS

    def to_row(self) -> dict:
        return {
            "check": self.name,
            "status": self.status,
            "value": float(self.value),
            "tolerance": float(self.tolerance),
            "provenance": self.provenance,
        }


@dataclass
class VerificationReport:
    results: List[CheckResult]

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.results)

    def counts(self) -> Dict[str, int]:
        out = {PASS: 0, FAIL: 0, INCONCLUSIVE: 0}
        for r in self.results:
            out[r.status] += 1
        return out

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "counts": self.counts(),
            "checks": [dict(r.to_row(), detail=r.detail) for r in self.results],
        }


# ---------------------------------------------------------------------
# Judging
# ---------------------------------------------------------------------
def judge(gap: float, tolerance: float, noise: float = 0.0) -> str:
    """pass within tolerance; otherwise inconclusive when tolerance < 3 noise, else fail."""
    if not math.isfinite(gap):
        return FAIL
    if gap <= tolerance:
        return PASS
    if noise > 0 and tolerance < 3.0 * noise:
        return INCONCLUSIVE
    return FAIL


@dataclass
class _Part:
    gap: float
    tolerance: float
    noise: float = 0.0
    label: str = ""

    @property
    def status(self) -> str:
        return judge(self.gap, self.tolerance, self.noise)

    @property
    def ratio(self) -> float:
        if self.tolerance > 0:
            return self.gap / self.tolerance
        return 0.0 if self.gap == 0 else math.inf


def _combine(name: str, parts: Sequence[_Part], provenance: str, detail: Optional[dict] = None) -> CheckResult:
    statuses = [p.status for p in parts]
    if FAIL in statuses:
        status = FAIL
    elif INCONCLUSIVE in statuses:
        status = INCONCLUSIVE
    else:
        status = PASS
    worst = max(parts, key=lambda p: p.ratio)
    detail = dict(detail or {})
    detail["worst"] = worst.label
    detail["n_parts"] = len(parts)
    if status != PASS:
        detail["failing"] = [p.label for p in parts if p.status != PASS][:20]
    return CheckResult(name, status, worst.gap, worst.tolerance, provenance, detail)


@dataclass
class _Context:
    config: ExperimentConfig
    index: int
    workers: int = 1

    @property
    def rng(self) -> np.random.Generator:
        return substream(self.config.seed, VERIFY_STREAM, self.index)

    def samples(self, key: str, default: int) -> int:
        return self.config.sample_count(key, default)

    def tol(self, key: str, default: float) -> float:
        return self.config.tolerance(key, default)


# ---------------------------------------------------------------------
# Kinematics
# ---------------------------------------------------------------------
def check_conservation(ctx: _Context) -> CheckResult:
    rng = ctx.rng
    n = ctx.samples("collisions", 200_000)
    tol = ctx.tol("conservation", 1e-12)
    parts = []
    for d in (1, 2, 3):
        v = rng.standard_normal((n, d))
        w = rng.standard_normal((n, d))
        sigma = kinematics.sample_sigmas(d, n, rng)
        v_star, w_star = kinematics.reflect(v, w, sigma)
        e_before = np.sum(v * v + w * w, axis=1)
        e_after = np.sum(v_star * v_star + w_star * w_star, axis=1)
        scale = np.linalg.norm(v, axis=1) + np.linalg.norm(w, axis=1)
        p_drift = np.linalg.norm((v_star + w_star) - (v + w), axis=1) / scale
        parts.append(_Part(float(np.max(np.abs(e_after - e_before) / e_before)), tol, label=f"energy d={d}"))
        parts.append(_Part(float(np.max(p_drift)), tol, label=f"momentum d={d}"))
    return _combine("conservation", parts, "kinetic energy conserving rotation: |v|^2 + |w|^2 and v + w kept",
                    {"collisions_per_dimension": n})


def check_symmetry(ctx: _Context) -> CheckResult:
    rng = ctx.rng
    n = ctx.samples("sigmas", 1_000_000)
    n_sigma = ctx.tol("symmetry_sigma", 4.0)
    parts = []
    for d in (2, 3):
        sigma = kinematics.sample_sigmas(d, n, rng)
        outer = sigma[:, :, None] * sigma[:, None, :]
        mean = outer.mean(axis=0)
        spread = outer.reshape(n, -1).std(axis=0, ddof=1)
        parts.append(_Part(
            gap=float(np.max(np.abs(mean - np.eye(d) / d))),
            tolerance=n_sigma / math.sqrt(n),
            noise=float(np.max(spread)) / math.sqrt(n),
            label=f"d={d}",
        ))
    return _combine("symmetry", parts, "symmetry condition: E[sigma sigma^T] = I/d", {"n": n})


def check_involution(ctx: _Context) -> CheckResult:
    rng = ctx.rng
    tol = ctx.tol("involution", 1e-12)
    parts, signs = [], []
    for d in (1, 2, 3):
        for _ in range(20):
            i, j = sorted(rng.choice(3, size=2, replace=False))
            c = kinematics.PairCollision(int(i), int(j), kinematics.sample_scattering_angle(d, rng))
            m = kinematics.collision_matrix_dense(c, 3, d)
            eye = np.eye(m.shape[0])
            det = float(np.linalg.det(m))
            signs.append(det)
            parts.append(_Part(float(np.max(np.abs(m @ m - eye))), tol, label=f"M^2=I d={d}"))
            parts.append(_Part(float(np.max(np.abs(m.T @ m - eye))), tol, label=f"M^T M=I d={d}"))
            parts.append(_Part(abs(det + 1.0), tol, label=f"det=-1 d={d}"))
    return _combine("involution", parts, "reflection map is an orthogonal involution (det = -1)",
                    {"det_values": sorted({round(s, 12) for s in signs})})


# ---------------------------------------------------------------------
# Histories and K
# ---------------------------------------------------------------------
K_PARAMS = ReservoirParams(d=2, N=2, M=3, lam_s=1.0, lam_r=1.0, mu=1.0, beta=1.0)
K_TIMES = (0.25, 0.5, 1.0, 2.0)


def check_lambda_alpha(ctx: _Context) -> CheckResult:
    tol = ctx.tol("lambda_alpha", 1e-12)
    parts = []
    grids = [K_PARAMS, ReservoirParams(d=3, N=1, M=4, lam_s=2.0, lam_r=0.5, mu=1.5, beta=1.0),
             ReservoirParams(d=1, N=5, M=2, lam_s=0.0, lam_r=3.0, mu=0.7, beta=2.0)]
    for p in grids:
        weights = all_pair_weights(p)[:, 2]
        parts.append(_Part(abs(float(weights.sum()) - 1.0), tol, label=f"sum N={p.N} M={p.M}"))
    kac = classic_kac_params(2, 3, 4, 1.0)
    weights = all_pair_weights(kac)[:, 2]
    parts.append(_Part(float(np.max(np.abs(weights - 1.0 / math.comb(7, 2)))), tol, label="classic Kac uniform"))
    return _combine("lambda-alpha", parts, "pair weights lambda_alpha are convex weights")


def check_p_matrix(ctx: _Context) -> CheckResult:
    tol = ctx.tol("p_matrix", 1e-12)
    p = K_PARAMS
    pm = PMatrix.from_params(p)
    expected = np.array([1.0, 1.0 - p.mu * (p.N + p.M) / (p.d * p.total_rate * p.M)])
    parts = [_Part(float(np.max(np.abs(pm.eigenvalues() - expected))), tol, label="eigenvalues")]
    series_tol = ctx.tol("k_series", 1e-5)
    for t in K_TIMES:
        gap = abs(k_coefficient_series(t, p) - k_coefficient_analytic(t, p).value)
        parts.append(_Part(gap, series_tol, label=f"series t={t}"))
    return _combine("p-matrix", parts, "K matrix sum rule: P eigenvalues 1 and 1 - mu(N+M)/(d Lambda M)",
                    {"eigenvalues": pm.eigenvalues().tolist()})


def check_k_matrix(ctx: _Context) -> CheckResult:
    rng = ctx.rng
    n = ctx.samples("k_histories", 20_000)
    n_sigma = ctx.tol("k_sigma", 3.0)
    parts, rows = [], []
    for t in K_TIMES:
        mc = k_coefficient_mc(t, K_PARAMS, n, rng)
        exact = k_coefficient_analytic(t, K_PARAMS).value
        parts.append(_Part(abs(mc.value - exact), n_sigma * mc.stderr, mc.stderr, label=f"c t={t}"))
        parts.append(_Part(mc.isotropy_residual, n_sigma * mc.isotropy_stderr, mc.isotropy_stderr,
                           label=f"isotropy t={t}"))
        rows.append({"t": t, "c_analytic": exact, "c_mc": mc.value, "stderr": mc.stderr})
    return _combine("k-matrix", parts, "K matrix sum rule: c(t) = N/(N+M) + M/(N+M) exp(-mu (N+M) t/(d M))",
                    {"rows": rows})


# ---------------------------------------------------------------------
# Moments
# ---------------------------------------------------------------------
def check_one_collision(ctx: _Context) -> CheckResult:
    rng = ctx.rng
    n = ctx.samples("moment_samples", 20_000)
    parts = []
    for d, beta in itertools.product((1, 2, 3), (0.5, 1.0, 2.0)):
        p = ThermostatParams(d=d, N=2, lam=1.0, mu=1.0, beta=beta)
        for which in ("thermostat", "cross", "internal"):
            label = f"{which} d={d} beta={beta}"
            try:
                mom = one_collision_moment(p, which, n_samples=n, rng=rng)
            except OracleMismatchError as exc:
                logger.warning("one-collision moments %s: %s", label, exc)
                parts.append(_Part(math.inf, 4.0, label=label))
                continue
            parts.append(_Part(mom.max_z, 4.0, label=label))
    return _combine("one-collision", parts, "energy lemma derivation: sigma- and partner-averaged reflection map")


THERMOSTAT_DSMC = ThermostatParams(d=3, N=50, lam=1.0, mu=1.0, beta=1.0)
RESERVOIR_DSMC = ReservoirParams(d=3, N=4, M=16, lam_s=1.0, lam_r=1.0, mu=1.0, beta=1.0)
DSMC_TIMES = np.linspace(0.0, 5.0, 11)
DSMC_INITIAL = IsotropicGaussian(n_particles=50, d=3, beta0=0.5, mean=(1.0, 0.0, 0.0))


def _z_parts(label: str, mean, oracle, stderr, n_sigma: float) -> List[_Part]:
    return [
        _Part(abs(float(m - o)), n_sigma * float(s), float(s), label=f"{label} t={t:g}")
        for t, m, o, s in zip(DSMC_TIMES, mean, oracle, stderr)
    ]


def check_thermostat_moments(ctx: _Context) -> CheckResult:
    n = ctx.samples("trajectories", 2000)
    n_sigma = ctx.tol("dsmc_sigma", 3.0)
    rate_tol = ctx.tol("rate_relative", 0.05)
    e0, p0 = DSMC_INITIAL.moments()
    parts, rates = [], {}
    for lam in (0.0, 1.0, 10.0):
        p = replace(THERMOSTAT_DSMC, lam=lam)
        ens = simulate(p, DSMC_INITIAL, float(DSMC_TIMES[-1]), DSMC_TIMES, n, seed=ctx.config.seed,
                       workers=ctx.workers)
        e_oracle = energy_oracle(p, DSMC_TIMES, e0)
        equilibrium = p.d * p.N / (2.0 * p.beta)
        rates[lam] = fit_exponential_rate(DSMC_TIMES, ens.e_system.mean, equilibrium)
        if lam == THERMOSTAT_DSMC.lam:
            parts += _z_parts("E", ens.e_system.mean, e_oracle, ens.e_system.stderr, n_sigma)
            p_oracle = momentum_oracle(p, DSMC_TIMES, p0)
            parts += _z_parts("p_x", ens.momentum.mean[:, 0], p_oracle[:, 0], ens.momentum.stderr[:, 0], n_sigma)
            fitted = fit_exponential_rate(DSMC_TIMES, ens.momentum.mean[:, 0])
            target = p.mu / p.d
            parts.append(_Part(abs(fitted - target) / target, rate_tol, label="momentum rate"))
    base = rates[THERMOSTAT_DSMC.lam]
    for lam, rate in rates.items():
        parts.append(_Part(abs(rate - base) / base, rate_tol, label=f"energy rate lambda={lam:g}"))
    return _combine("thermostat-moments", parts,
                    "energy lemma (generator-derived constants): E and p relax at rate mu/d, independent of lambda",
                    {"energy_rates": {str(k): v for k, v in rates.items()}})


def check_reservoir_moments(ctx: _Context) -> CheckResult:
    n = ctx.samples("trajectories", 2000)
    n_sigma = ctx.tol("dsmc_sigma", 3.0)
    p = RESERVOIR_DSMC
    system = IsotropicGaussian(n_particles=p.N, d=p.d, beta0=0.5 * p.beta)
    ens = simulate(p, WithReservoir(system, p.M, p.beta), float(DSMC_TIMES[-1]), DSMC_TIMES, n,
                   seed=ctx.config.seed, workers=ctx.workers)
    e0, _ = system.moments()
    oracle = energy_oracle(p, DSMC_TIMES, e0, p.M * p.d / (2.0 * p.beta))
    parts = _z_parts("E_S", ens.e_system.mean, oracle, ens.e_system.stderr, n_sigma)
    parts.append(_Part(ens.max_energy_drift, ctx.tol("energy_drift", 1e-10), label="E_S + E_R drift"))
    return _combine("reservoir-moments", parts, "reservoir lemma: total kinetic energy stays constant, E_S relaxes",
                    {"max_energy_drift": ens.max_energy_drift})


# ---------------------------------------------------------------------
# Ornstein-Uhlenbeck semigroup
# ---------------------------------------------------------------------
OU_BETA = 1.0
OU_TIMES = (0.1, 0.5)


def _ou_fields(beta: float = OU_BETA):
    f = GaussianComponent(np.array([0.2, -0.1]), np.array([[0.8, 0.1], [0.1, 1.2]]))
    g = GaussianComponent(np.array([-0.3, 0.1]), np.array([[1.1, -0.05], [-0.05, 0.9]]))
    return ScalarField.gaussian_ratio(f, beta), ScalarField.gaussian_ratio(g, beta)


def check_ou_semigroup(ctx: _Context) -> CheckResult:
    q = QuadratureSpec(order=24, beta=OU_BETA)
    tol = ctx.tol("ou", 1e-6)
    h, g = _ou_fields()
    parts = []
    for s in OU_TIMES:
        parts.append(_Part(check_semigroup(h, s, 0.3, q), tol, label=f"semigroup s={s}"))
        parts.append(_Part(check_self_adjoint(h, g, s, q), tol, label=f"self-adjoint s={s}"))
        parts.append(_Part(check_mean_preservation(h, s, q), tol, label=f"mean s={s}"))
    return _combine("ou-semigroup", parts, "Ornstein-Uhlenbeck semigroup: P_s P_t = P_{s+t}, self-adjoint in L^2(gamma)")


def check_ou_commutation(ctx: _Context) -> CheckResult:
    q = QuadratureSpec(order=24, beta=OU_BETA)
    tol = ctx.tol("ou", 1e-6)
    h, _ = _ou_fields()
    spec = CollisionOpSpec(d=1, n_particles=2, beta=OU_BETA)
    parts, residuals = [], {}
    for op in (OP_Q, OP_PAIR, OP_THERMOSTAT, OP_MARGINAL):
        for s in OU_TIMES:
            levels = commutation_refinement(h, s, op, spec, q)
            residuals[f"{op} s={s}"] = levels
            parts.append(_Part(levels[0], tol, label=f"{op} s={s}"))
            parts.append(_Part(max(0.0, levels[-1] - levels[0] - 1e-12), 0.0, label=f"{op} s={s} refinement"))
        parts.append(_Part(check_mass_preservation(h, op, spec, q), tol, label=f"{op} mass"))
    return _combine("ou-commutation", parts,
                    "OU semigroup commutes with the time evolution operator (and with the marginal)",
                    {"residuals": residuals})


def check_entropy_identity(ctx: _Context) -> CheckResult:
    beta = OU_BETA
    tol = ctx.tol("entropy_identity", 1e-4)
    parts = []
    for scale in (0.5, 2.0, 5.0):
        a = scale / beta
        g = GaussianComponent.isotropic(1, a)
        result = entropy_from_information(gaussian_information_curve(g, beta), beta)
        exact = entropy_gaussian_isotropic(a, beta, 1)
        parts.append(_Part(abs(result.value - exact) / exact, tol, label=f"a={scale}/beta"))
    return _combine("entropy-identity", parts, "entropy from information via the Ornstein-Uhlenbeck semigroup")


# ---------------------------------------------------------------------
# Functionals
# ---------------------------------------------------------------------
def check_dense_oracles(ctx: _Context) -> CheckResult:
    tol = ctx.tol("dense", 1e-8)
    beta = OU_BETA
    parts = []
    for n, a in itertools.product((1, 2), (0.5, 2.0)):
        def log_density(x, a=a, n=n):
            return -0.5 * np.sum(x * x, axis=1) / a - 0.5 * n * math.log(2.0 * math.pi * a)

        def score(x, a=a):
            return -x / a

        ent, info = relative_functionals_dense(log_density, score, beta, n)
        ent_exact = entropy_gaussian_isotropic(a, beta, n)
        info_exact = fisher_info_gaussian_isotropic(a, beta, n)
        parts.append(_Part(abs(ent - ent_exact) / max(1.0, ent_exact), tol, label=f"Ent n={n} a={a}"))
        parts.append(_Part(abs(info - info_exact) / max(1.0, info_exact), tol, label=f"I n={n} a={a}"))
    return _combine("dense-oracles", parts, "closed-form Gaussian entropy and information against dense quadrature")


def _test_gaussian() -> GaussianComponent:
    return GaussianComponent(np.array([0.3, -0.2]), np.array([[0.6, 0.15], [0.15, 1.8]]))


def check_mixture_mc(ctx: _Context) -> CheckResult:
    n = ctx.samples("mixture_samples", 20_000)
    n_sigma = ctx.tol("mixture_sigma", 3.0)
    beta = OU_BETA
    g = _test_gaussian()
    state = GaussianMixtureState.single(g, beta)
    parts = []
    for seed in range(3):
        rng = substream(ctx.config.seed, VERIFY_STREAM, ctx.index, seed)
        for name, estimator, exact in (("Ent", entropy_mixture_mc, entropy_gaussian(g, beta)),
                                       ("I", fisher_info_mixture_mc, fisher_info_gaussian(g, beta))):
            est = estimator(state, n, rng)
            parts.append(_Part(abs(est.value - exact), n_sigma * est.stderr, est.stderr, label=f"{name} seed={seed}"))
    return _combine("mixture-mc", parts, "mixture Monte Carlo against Gaussian closed forms")


def _decay_config(ctx: _Context, model: str, params: dict, times: Sequence[float]) -> ExperimentConfig:
    return ExperimentConfig(
        model=model,
        params=params,
        initial={"kind": "gaussian", "beta0": 2.0 * params["beta"]},
        time_grid=list(times),
        samples={
            "histories": ctx.samples("histories", 2000),
            "functional_samples": ctx.samples("functional_samples", 20_000),
        },
        seed=ctx.config.seed,
    ).validate()


def _decay_parts(ctx: _Context, config: ExperimentConfig, functionals) -> List[_Part]:
    n_sigma = ctx.tol("decay_sigma", 3.0)
    parts = []
    for functional in functionals:
        table = functional_curve(config, functional).table
        prefix = "I" if functional == INFORMATION else "Ent"
        for _, row in table.iterrows():
            stderr = float(row[f"{prefix}_stderr"])
            gap = max(0.0, float(row[f"{prefix}_mc"] - row["bound"]))
            parts.append(_Part(gap, n_sigma * stderr, stderr, label=f"{prefix} t={row['t']:g}"))
    return parts


def check_thermostat_decay(ctx: _Context) -> CheckResult:
    config = _decay_config(ctx, "thermostat", {"d": 2, "N": 3, "lambda": 1.0, "mu": 1.0, "beta": 1.0},
                           (0.0, 0.5, 1.0, 2.0))
    return _combine("thermostat-decay", _decay_parts(ctx, config, (INFORMATION, ENTROPY)),
                    envelope(THERMOSTAT_INFORMATION, config.model_params()).provenance)


def check_reservoir_decay(ctx: _Context) -> CheckResult:
    config = _decay_config(ctx, "reservoir", {"d": 2, "N": 2, "M": 6, "lambda_S": 1.0, "lambda_R": 1.0,
                                              "mu": 1.0, "beta": 1.0}, (0.0, 0.5, 1.0, 2.0))
    return _combine("reservoir-decay", _decay_parts(ctx, config, (INFORMATION, ENTROPY)),
                    envelope(RESERVOIR_INFORMATION, config.model_params()).provenance)


def check_m_infinity(ctx: _Context) -> CheckResult:
    tol = ctx.tol("m_infinity", 1e-3)
    times = np.linspace(0.0, 10.0, 101)
    thermo = envelope(THERMOSTAT_INFORMATION, ThermostatParams(d=2, N=2, lam=1.0, mu=1.0, beta=1.0))
    reservoir = envelope(RESERVOIR_INFORMATION,
                         ReservoirParams(d=2, N=2, M=10_000, lam_s=1.0, lam_r=1.0, mu=1.0, beta=1.0))
    gap = float(np.max(np.abs(thermo(times) - reservoir(times))))
    return _combine("m-infinity", [_Part(gap, tol, label="M=10^4")],
                    "reservoir envelope tends to the thermostat envelope as M grows")


def check_classic_kac(ctx: _Context) -> CheckResult:
    tol = ctx.tol("classic_kac", 1e-12)
    parts = []
    for n, m, d in ((2, 3, 1), (5, 20, 1), (3, 7, 2), (4, 4, 3)):
        env = envelope(CLASSIC_KAC_INFORMATION, classic_kac_params(d, n, m, 1.0))
        exponent = classic_kac_exponent(n, m, d)
        parts.append(_Part(abs(env.rate - exponent) / exponent, tol, label=f"N={n} M={m} d={d}"))
        if d == 1:
            printed = 2.0 * (n + m) / (n + m - 1)
            parts.append(_Part(abs(env.rate - printed) / printed, tol, label=f"printed N={n} M={m}"))
    return _combine("classic-kac", parts, envelope(CLASSIC_KAC_INFORMATION, classic_kac_params(1, 2, 3, 1.0)).provenance)


def check_collision_bounds(ctx: _Context) -> CheckResult:
    rng = ctx.rng
    n = ctx.samples("mixture_samples", 20_000)
    n_sigma = ctx.tol("mixture_sigma", 3.0)
    beta, d, n_particles = 1.0, 2, 3
    cov = np.diag([0.5, 0.7, 1.5, 2.0, 0.6, 1.2])
    cov[0, 2] = cov[2, 0] = 0.1
    g = GaussianComponent(np.array([0.4, 0.0, -0.2, 0.1, 0.0, 0.3]), cov)
    info = fisher_info_gaussian(g, beta)
    parts = []
    for _ in range(5):
        sigma = kinematics.sample_sigmas(d, 1, rng)[0]
        moved = fisher_info_gaussian(propagate_component_pair(g, 0, 2, sigma), beta)
        parts.append(_Part(abs(moved - info) / info, 1e-10, label="internal collision keeps I"))
    for j in range(n_particles):
        mix = thermostat_collision_mixture(g, beta, d, order=16, particle=j)
        est = fisher_info_mixture_mc(mix, n, rng)
        bound = info - fisher_info_gaussian_block(g, beta, j, d) / d
        parts.append(_Part(max(0.0, est.value - bound), n_sigma * est.stderr, est.stderr, label=f"T_{j}"))
    mix = thermostat_collision_mixture(g, beta, d, order=16)
    est = fisher_info_mixture_mc(mix, n, rng)
    bound = (1.0 - 1.0 / (d * n_particles)) * info
    parts.append(_Part(max(0.0, est.value - bound), n_sigma * est.stderr, est.stderr, label="T"))
    return _combine("collision-bounds", parts, "single-collision information bounds: I(T h) <= (1 - 1/(dN)) I(h)")


# ---------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------
CHECKS: Dict[str, Callable[[_Context], CheckResult]] = {
    "conservation": check_conservation,
    "symmetry": check_symmetry,
    "involution": check_involution,
    "lambda-alpha": check_lambda_alpha,
    "p-matrix": check_p_matrix,
    "k-matrix": check_k_matrix,
    "one-collision": check_one_collision,
    "thermostat-moments": check_thermostat_moments,
    "reservoir-moments": check_reservoir_moments,
    "ou-semigroup": check_ou_semigroup,
    "ou-commutation": check_ou_commutation,
    "entropy-identity": check_entropy_identity,
    "dense-oracles": check_dense_oracles,
    "mixture-mc": check_mixture_mc,
    "thermostat-decay": check_thermostat_decay,
    "reservoir-decay": check_reservoir_decay,
    "m-infinity": check_m_infinity,
    "classic-kac": check_classic_kac,
    "collision-bounds": check_collision_bounds,
}


def run_checks(config: ExperimentConfig, names: Optional[Sequence[str]] = None, workers: int = 1,
               on_result: Optional[Callable[[CheckResult], None]] = None) -> VerificationReport:
    """
    Run the named checks (config.checks, or the whole battery when empty).
    Check k always draws from substream(seed, 5, k), whatever else is selected.
    """
    names = list(names if names is not None else config.checks) or list(CHECKS)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise ValidationError(f"unknown checks {unknown}; expected names from {sorted(CHECKS)}", field="checks")
    order = list(CHECKS)
    results = []
    for name in names:
        result = CHECKS[name](_Context(config, order.index(name), workers))
        if result.status == INCONCLUSIVE:
            logger.warning("check %s inconclusive: %.3g vs tolerance %.3g", name, result.value, result.tolerance)
        results.append(result)
        if on_result is not None:
            on_result(result)
    return VerificationReport(results)
