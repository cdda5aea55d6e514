# app/kac_decay/assets/oracles.py
import itertools
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union

import numpy as np

from app.kac_decay.assets.errors import OracleMismatchError, ValidationError
from app.kac_decay.assets.helpers import require, substream
from app.kac_decay.assets.kinematics import UNIFORM_SPHERE, ScatteringSampler, reflect, sample_sigmas
from app.kac_decay.assets.simulators import ReservoirParams, ThermostatParams

logger = logging.getLogger(__name__)

MISMATCH_SIGMA = 4.0

# Envelope ids
THERMOSTAT_INFORMATION = "thermostat-information"
THERMOSTAT_ENTROPY = "thermostat-entropy"
RESERVOIR_INFORMATION = "reservoir-information"
RESERVOIR_ENTROPY = "reservoir-entropy"
CLASSIC_KAC_INFORMATION = "classic-kac-information"
CLASSIC_KAC_ENTROPY = "classic-kac-entropy"

PROVENANCE = {
    THERMOSTAT_INFORMATION: "thermostat information decay theorem: I(h_t) <= exp(-mu t/d) I(h_0)",
    THERMOSTAT_ENTROPY: "thermostat entropy decay theorem: Ent(f_t) <= exp(-mu t/d) Ent(f_0)",
    RESERVOIR_INFORMATION: (
        "reservoir information decay theorem: "
        "I(h_t) <= [N/(N+M) + M/(N+M) exp(-(mu/d)((N+M)/M) t)] I(h_0)"
    ),
    RESERVOIR_ENTROPY: (
        "reservoir entropy decay theorem: "
        "Ent(f_t) <= [N/(N+M) + M/(N+M) exp(-(mu/d)((N+M)/M) t)] Ent(f_0)"
    ),
    CLASSIC_KAC_INFORMATION: "classic Kac corollary (reservoir bound at substituted rates), information",
    CLASSIC_KAC_ENTROPY: "classic Kac corollary (reservoir bound at substituted rates), entropy",
}


# ---------------------------------------------------------------------
# Envelopes
# ---------------------------------------------------------------------
@dataclass(frozen=True)
class DecayEnvelope:
    theorem_id: str
    provenance: str
    curve: Callable[[np.ndarray], np.ndarray]
    limit: float
    rate: float

    def __call__(self, t):
        return self.curve(np.asarray(t, dtype=float))

    @property
    def initial(self) -> float:
        return float(self.curve(np.asarray(0.0)))


def classic_kac_params(d: int, N: int, M: int, beta: float) -> ReservoirParams:
    """
    Rates turning the reservoir model into the classic Kac model on N + M
    particles: every pair collides at rate 2/(N+M-1).
    """
    require(N >= 1 and M >= 2, "classic Kac needs N >= 1 and M >= 2", "N")
    denom = N + M - 1
    return ReservoirParams(
        d=d, N=N, M=M,
        lam_s=2.0 * (N - 1) / denom,
        lam_r=2.0 * (M - 1) / denom,
        mu=2.0 * M / denom,
        beta=beta,
    )


def classic_kac_exponent(N: int, M: int, d: int = 1) -> float:
    """2 (N+M) / (d (N+M-1)); reduces to 2 (N+M) / (N+M-1) at d = 1."""
    return 2.0 * (N + M) / (d * (N + M - 1))


def _reservoir_curve(p: ReservoirParams):
    total = p.N + p.M
    rate = p.mu * total / (p.d * p.M)
    floor = p.N / total
    return (lambda t: floor + (1.0 - floor) * np.exp(-rate * t)), floor, rate


def envelope(theorem_id: str, params: Union[ThermostatParams, ReservoirParams]) -> DecayEnvelope:
    if theorem_id not in PROVENANCE:
        raise ValidationError(f"unknown envelope {theorem_id!r}; expected one of {sorted(PROVENANCE)}",
                              field="theorem_id")
    if theorem_id in (THERMOSTAT_INFORMATION, THERMOSTAT_ENTROPY):
        require(isinstance(params, ThermostatParams), "thermostat envelope needs ThermostatParams", "params")
        rate = params.mu / params.d
        return DecayEnvelope(theorem_id, PROVENANCE[theorem_id], lambda t: np.exp(-rate * t), 0.0, rate)
    require(isinstance(params, ReservoirParams), "reservoir envelope needs ReservoirParams", "params")
    if theorem_id in (CLASSIC_KAC_INFORMATION, CLASSIC_KAC_ENTROPY):
        params = classic_kac_params(params.d, params.N, params.M, params.beta)
    curve, floor, rate = _reservoir_curve(params)
    return DecayEnvelope(theorem_id, PROVENANCE[theorem_id], curve, floor, rate)


# ---------------------------------------------------------------------
# One-collision moments
# ---------------------------------------------------------------------
COLLISION_KINDS = ("thermostat", "cross", "internal")


@dataclass
class OneCollisionMoment:
    """
    E|v*|^2 = energy_v |v|^2 + energy_w |w|^2 + energy_0 and
    E v*    = mean_v v + mean_w w, averaged over sigma (and the Maxwellian
    partner for `thermostat`, where the w-terms are folded into the constants).
    """

    which: str
    energy_v: float
    energy_w: float
    energy_0: float
    mean_v: float
    mean_w: float
    max_z: float = 0.0
    n_samples: int = 0


def _symbolic_moment(d: int, beta: float, which: str) -> OneCollisionMoment:
    keep = 1.0 - 1.0 / d
    if which == "thermostat":
        return OneCollisionMoment(which, keep, 0.0, 1.0 / beta, keep, 0.0)
    return OneCollisionMoment(which, keep, 1.0 / d, 0.0, keep, 1.0 / d)


def one_collision_moment(params: Union[ThermostatParams, ReservoirParams], which: str,
                         n_samples: int = 20_000, rng: Optional[np.random.Generator] = None,
                         n_directions: int = 3, sampler: ScatteringSampler = UNIFORM_SPHERE) -> OneCollisionMoment:
    """
    Affine one-collision update of |v_j|^2 and v_j, from the symbolic expansion
    of the reflection map and cross-checked by Monte Carlo along random directions.
    A disagreement beyond 4 standard errors raises OracleMismatchError.
    """
    if which not in COLLISION_KINDS:
        raise ValidationError(f"unknown collision kind {which!r}; expected one of {COLLISION_KINDS}", field="which")
    d, beta = params.d, params.beta
    sym = _symbolic_moment(d, beta, which)
    if n_samples <= 0:
        return sym
    rng = substream(0, 11) if rng is None else rng
    max_z = 0.0
    for _ in range(n_directions):
        v = rng.standard_normal(d)
        w = rng.standard_normal(d)
        sigma = sample_sigmas(d, n_samples, rng, sampler)
        if which == "thermostat":
            partners = rng.standard_normal((n_samples, d)) / math.sqrt(beta)
        else:
            partners = np.broadcast_to(w, (n_samples, d))
        v_star, w_star = reflect(np.broadcast_to(v, (n_samples, d)), partners, sigma)
        sq = np.sum(v_star * v_star, axis=1)
        if which == "thermostat":
            expected_sq = sym.energy_v * (v @ v) + sym.energy_0
            expected_mean = sym.mean_v * v
        else:
            expected_sq = sym.energy_v * (v @ v) + sym.energy_w * (w @ w)
            expected_mean = sym.mean_v * v + sym.mean_w * w
        checks = [(sq.mean(), sq.std(ddof=1), expected_sq)]
        for k in range(d):
            checks.append((v_star[:, k].mean(), v_star[:, k].std(ddof=1), expected_mean[k]))
        if which == "internal":
            total = sq + np.sum(w_star * w_star, axis=1)
            drift = float(np.max(np.abs(total - (v @ v + w @ w))))
            if drift > 1e-10 * max(1.0, v @ v + w @ w):
                raise OracleMismatchError(f"internal collision changed the pair energy by {drift:.3g}")
        for estimate, spread, expected in checks:
            stderr = spread / math.sqrt(n_samples)
            gap = abs(estimate - expected)
            if gap <= 1e-12:
                continue
            z = gap / stderr if stderr > 0 else math.inf
            max_z = max(max_z, z)
    if max_z > MISMATCH_SIGMA:
        raise OracleMismatchError(
            f"{which} collision moments: Monte Carlo disagrees with the symbolic update at {max_z:.2f} sigma"
        )
    sym.max_z = max_z
    sym.n_samples = n_samples * n_directions
    return sym


# ---------------------------------------------------------------------
# Moment ODEs
# ---------------------------------------------------------------------
@dataclass
class MomentODE:
    """
    x' = -A x + b for ensemble moments. A has a single nonzero eigenvalue
    `rate`, so x(t) = x_inf + e^{-rate t} (x0 - x_inf).
    """

    variables: Tuple[str, ...]
    rate_matrix: np.ndarray
    source: np.ndarray
    rate: float
    equilibrium: Callable[[np.ndarray], np.ndarray]

    def derivative(self, x) -> np.ndarray:
        return -self.rate_matrix @ np.asarray(x, dtype=float) + self.source

    def solve(self, t, x0) -> np.ndarray:
        """Rows per t, columns per variable."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        x0 = np.asarray(x0, dtype=float).reshape(-1)
        x_inf = self.equilibrium(x0)
        return x_inf[None, :] + np.exp(-self.rate * t)[:, None] * (x0 - x_inf)[None, :]


def moment_ode(params: Union[ThermostatParams, ReservoirParams], observable: str = "energy") -> MomentODE:
    """
    Moment equations rebuilt from the one-collision averages:
    thermostat events at rate mu N act on a uniform particle; cross events at
    rate mu N pair a uniform system particle with a uniform reservoir particle.
    Momentum equations are per velocity component.
    """
    if observable not in ("energy", "momentum"):
        raise ValidationError(f"unknown observable {observable!r}", field="observable")
    mom = _symbolic_moment(params.d, params.beta, "thermostat" if isinstance(params, ThermostatParams) else "cross")
    if isinstance(params, ThermostatParams):
        # each thermostat hit: Delta E = 1/2 [(energy_v - 1)|v_j|^2 + energy_0]
        rate = params.mu * (1.0 - mom.energy_v) if observable == "energy" else params.mu * (1.0 - mom.mean_v)
        if observable == "energy":
            source = params.mu * params.N * 0.5 * mom.energy_0
            names = ("E",)
        else:
            source = 0.0
            names = ("p",)
        a = np.array([[rate]])
        b = np.array([source])
        return MomentODE(names, a, b, rate, lambda x0: b / rate if rate > 0 else x0.copy())
    n, m = params.N, params.M
    coupling = params.mu * (1.0 - mom.energy_v if observable == "energy" else 1.0 - mom.mean_v) / m
    a = coupling * np.array([[m, -n], [-m, n]], dtype=float)
    rate = coupling * (n + m)
    names = ("E_S", "E_R") if observable == "energy" else ("p_S", "p_R")

    def equilibrium(x0):
        total = x0.sum()
        return np.array([n * total / (n + m), m * total / (n + m)])

    return MomentODE(names, a, np.zeros(2), rate, equilibrium)


def energy_oracle(params: Union[ThermostatParams, ReservoirParams], times, e_system0: float,
                  e_reservoir0: Optional[float] = None) -> np.ndarray:
    """Generator-derived system energy curve."""
    ode = moment_ode(params, "energy")
    if isinstance(params, ThermostatParams):
        return ode.solve(times, [e_system0])[:, 0]
    require(e_reservoir0 is not None, "reservoir energy oracle needs E_R(0)", "e_reservoir0")
    return ode.solve(times, [e_system0, e_reservoir0])[:, 0]


def momentum_oracle(params: Union[ThermostatParams, ReservoirParams], times, p_system0,
                    p_reservoir0=None) -> np.ndarray:
    """(len(times), d) system momentum curve, solved per component."""
    ode = moment_ode(params, "momentum")
    p0 = np.asarray(p_system0, dtype=float).reshape(-1)
    cols = []
    for k in range(p0.size):
        if isinstance(params, ThermostatParams):
            cols.append(ode.solve(times, [p0[k]])[:, 0])
        else:
            pr = np.asarray(p_reservoir0, dtype=float).reshape(-1)[k]
            cols.append(ode.solve(times, [p0[k], pr])[:, 0])
    return np.stack(cols, axis=1)


def printed_lemma_energy(params: Union[ThermostatParams, ReservoirParams], times, e_system0: float,
                         e_reservoir0: Optional[float] = None) -> np.ndarray:
    """
    Energy curves with the alternative printed constants:
    thermostat equilibrium dN/beta at rate mu/(2d); reservoir rate mu(N+M)/(2dM).
    Reported for comparison only.
    """
    t = np.atleast_1d(np.asarray(times, dtype=float))
    if isinstance(params, ThermostatParams):
        eq = params.d * params.N / params.beta
        return eq + (e_system0 - eq) * np.exp(-params.mu * t / (2.0 * params.d))
    require(e_reservoir0 is not None, "reservoir curve needs E_R(0)", "e_reservoir0")
    total = e_system0 + e_reservoir0
    eq = params.N * total / (params.N + params.M)
    rate = params.mu * (params.N + params.M) / (2.0 * params.d * params.M)
    return eq + (e_system0 - eq) * np.exp(-rate * t)


# ---------------------------------------------------------------------
# Dense quadrature of the relative functionals
# ---------------------------------------------------------------------
def _box_rule(n: int, half_width: float, order: int):
    knots, weights = np.polynomial.legendre.leggauss(order)
    knots = knots * half_width
    weights = weights * half_width
    x = np.array(list(itertools.product(knots, repeat=n)))
    w = np.prod(np.array(list(itertools.product(weights, repeat=n))), axis=1)
    return x.reshape(-1, n), w


def relative_functionals_dense(log_density: Callable[[np.ndarray], np.ndarray],
                               score: Callable[[np.ndarray], np.ndarray],
                               beta: float, n: int, half_width: float = 12.0,
                               order: int = 200) -> Tuple[float, float]:
    """
    (Ent, I) = (int f ln(f/gamma), int f |grad ln f + beta v|^2) by tensor
    Gauss-Legendre on [-L, L]^n; for n <= 2 only.
    """
    require(1 <= n <= 2, f"dense quadrature supports n <= 2, got {n}", "n")
    x, w = _box_rule(n, half_width, order)
    log_f = log_density(x)
    f = np.exp(log_f)
    log_gamma = 0.5 * n * math.log(beta / (2.0 * math.pi)) - 0.5 * beta * np.sum(x * x, axis=1)
    g = score(x) + beta * x
    return float(w @ (f * (log_f - log_gamma))), float(w @ (f * np.sum(g * g, axis=1)))
