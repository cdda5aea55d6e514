# app/kac_decay/assets/gaussian_states.py
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Union

import numpy as np
import scipy.linalg
from scipy.special import logsumexp

from app.kac_decay.assets.errors import ConditioningError, ValidationError
from app.kac_decay.assets.helpers import RunningMoments, require
from app.kac_decay.assets.histories import (
    POISSON_TAIL,
    sample_history,
    sample_history_lengths,
    sample_thermostat_history,
)
from app.kac_decay.assets.kinematics import (
    PairCollision,
    ScatteringAngle,
    apply_collision_rows,
    sigma_rule,
)
from app.kac_decay.assets.simulators import ReservoirParams, ThermostatParams

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-12
CONDITION_FLOOR = 1e12
DEFAULT_CHUNK = 256


# ---------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------
@dataclass
class GaussianComponent:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.asarray(self.covariance, dtype=float)
        n = self.mean.size
        require(cov.shape == (n, n), f"covariance must be {n}x{n}, got {cov.shape}", "covariance")
        scale = max(1.0, float(np.max(np.abs(cov))))
        if np.max(np.abs(cov - cov.T)) > SYMMETRY_TOL * scale:
            raise ValidationError("covariance must be symmetric", field="covariance")
        try:
            scipy.linalg.cholesky(cov, lower=True)
        except np.linalg.LinAlgError as exc:
            raise ConditioningError(f"covariance is not positive definite: {exc}") from exc
        self.covariance = 0.5 * (cov + cov.T)

    @classmethod
    def isotropic(cls, n: int, variance: float, mean=None) -> "GaussianComponent":
        require(variance > 0, f"variance must be > 0, got {variance}", "variance")
        m = np.zeros(n) if mean is None else np.broadcast_to(np.asarray(mean, dtype=float), (n,))
        return cls(m, variance * np.eye(n))

    @classmethod
    def maxwellian(cls, n: int, beta: float) -> "GaussianComponent":
        require(beta > 0, f"beta must be > 0, got {beta}", "beta")
        return cls.isotropic(n, 1.0 / beta)

    @property
    def dim(self) -> int:
        return self.mean.size

    def condition_number(self) -> float:
        eig = np.linalg.eigvalsh(self.covariance)
        return float(eig[-1] / eig[0]) if eig[0] > 0 else math.inf


@dataclass
class GaussianMixtureState:
    weights: np.ndarray
    components: List[GaussianComponent]
    beta_ref: float

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        require(len(self.components) >= 1, "mixture needs at least one component", "components")
        require(self.weights.size == len(self.components), "one weight per component", "weights")
        require(bool(np.all(self.weights >= 0)), "weights must be >= 0", "weights")
        require(abs(self.weights.sum() - 1.0) <= 1e-12, "weights must sum to 1", "weights")
        require(self.beta_ref > 0, "beta_ref must be > 0", "beta_ref")
        dims = {c.dim for c in self.components}
        require(len(dims) == 1, "components must share one dimension", "components")

    @classmethod
    def single(cls, g: GaussianComponent, beta_ref: float) -> "GaussianMixtureState":
        return cls(np.ones(1), [g], beta_ref)

    @classmethod
    def uniform(cls, components: Sequence[GaussianComponent], beta_ref: float) -> "GaussianMixtureState":
        n = len(components)
        return cls(np.full(n, 1.0 / n), list(components), beta_ref)

    @property
    def dim(self) -> int:
        return self.components[0].dim


@dataclass
class FunctionalEstimate:
    value: float
    stderr: float
    n_samples: int
    n_rejected: int = 0

    def __post_init__(self):
        require(self.stderr >= 0, "stderr must be >= 0", "stderr")


# ---------------------------------------------------------------------
# Propagation along collisions
# ---------------------------------------------------------------------
def _n_particles(g: GaussianComponent, d: int) -> int:
    require(g.dim % d == 0, f"dimension {g.dim} is not a multiple of d = {d}", "d")
    return g.dim // d


def propagate_component_pair(g: GaussianComponent, i: int, j: int, sigma: np.ndarray) -> GaussianComponent:
    """mean -> M mean, covariance -> M S M^T for M = M_sigma^{(i,j)}."""
    sigma = np.asarray(sigma, dtype=float)
    d = sigma.size
    n = _n_particles(g, d)
    require(0 <= i < j < n, f"pair ({i}, {j}) out of range for {n} particles", "pair")
    mean = g.mean.copy()
    apply_collision_rows(mean, i, j, sigma, d)
    cov = g.covariance.copy()
    apply_collision_rows(cov, i, j, sigma, d)
    cov = np.ascontiguousarray(cov.T)
    apply_collision_rows(cov, i, j, sigma, d)
    return GaussianComponent(mean, 0.5 * (cov + cov.T))


def propagate_component_internal(g: GaussianComponent, c: PairCollision) -> GaussianComponent:
    c.check_against(_n_particles(g, c.sigma.dim), c.sigma.dim)
    return propagate_component_pair(g, c.i, c.j, c.sigma.sigma)


def propagate_component_thermostat(g: GaussianComponent, j: int, sigma: Union[ScatteringAngle, np.ndarray],
                                   beta: float) -> GaussianComponent:
    """
    Collide particle j with a fresh Maxwellian(beta) partner and integrate the
    partner out. With P = sigma sigma^T, block j maps as v_j -> (I - P) v_j + P w.
    """
    require(beta > 0, f"beta must be > 0, got {beta}", "beta")
    sigma = sigma.sigma if isinstance(sigma, ScatteringAngle) else np.asarray(sigma, dtype=float)
    d = sigma.size
    n = _n_particles(g, d)
    require(0 <= j < n, f"particle {j} out of range for {n} particles", "j")
    proj = np.outer(sigma, sigma)
    keep = np.eye(d) - proj
    bj = slice(j * d, (j + 1) * d)
    mean = g.mean.copy()
    mean[bj] = keep @ mean[bj]
    cov = g.covariance.copy()
    cov[bj, :] = keep @ cov[bj, :]
    cov[:, bj] = cov[:, bj] @ keep
    cov[bj, bj] += proj / beta
    return GaussianComponent(mean, 0.5 * (cov + cov.T))


def marginalize_system(g: GaussianComponent, n_system: int, d: int) -> GaussianComponent:
    """Gaussian marginal on the first n_system particles."""
    n = _n_particles(g, d)
    require(1 <= n_system <= n, f"n_system must be in [1, {n}]", "n_system")
    k = n_system * d
    return GaussianComponent(g.mean[:k], g.covariance[:k, :k])


def joint_initial(system: GaussianComponent, M: int, d: int, beta: float) -> GaussianComponent:
    """System Gaussian extended by M independent Maxwellian(beta) reservoir particles."""
    n = system.dim + M * d
    cov = np.zeros((n, n))
    cov[:system.dim, :system.dim] = system.covariance
    cov[system.dim:, system.dim:] = np.eye(M * d) / beta
    return GaussianComponent(np.concatenate([system.mean, np.zeros(M * d)]), cov)


def propagate_thermostat_history(g: GaussianComponent, history, beta: float) -> GaussianComponent:
    for internal, (i, j), sigma in zip(history.internal, history.pairs, history.sigmas):
        if internal:
            g = propagate_component_pair(g, int(i), int(j), sigma)
        else:
            g = propagate_component_thermostat(g, int(i), sigma, beta)
    return g


def propagate_reservoir_history(g: GaussianComponent, history) -> GaussianComponent:
    for (i, j), sigma in zip(history.alphas, history.sigmas):
        g = propagate_component_pair(g, int(i), int(j), sigma)
    return g


def evolve_mixture(initial: GaussianComponent, params: Union[ThermostatParams, ReservoirParams],
                   t: float, n_histories: int, rng: np.random.Generator,
                   tail: float = POISSON_TAIL, marginal: bool = True) -> GaussianMixtureState:
    """
    Equal-weight mixture of the initial Gaussian pushed through n_histories
    sampled collision histories of Poisson length at time t.

    Thermostat: `initial` lives on the N system particles.
    Reservoir: `initial` is the joint N + M Gaussian; with `marginal` the
    system marginal is returned.
    """
    require(t >= 0, f"t must be >= 0, got {t}", "t")
    require(n_histories >= 1, "n_histories must be >= 1", "n_histories")
    is_reservoir = isinstance(params, ReservoirParams)
    expected = params.d * (params.N + params.M if is_reservoir else params.N)
    require(initial.dim == expected, f"initial Gaussian must have dimension {expected}", "initial")
    ks, _ = sample_history_lengths(t, params.total_rate, n_histories, rng, tail=tail)
    components = []
    for k in ks:
        if is_reservoir:
            g = propagate_reservoir_history(initial, sample_history(int(k), params, rng))
            if marginal:
                g = marginalize_system(g, params.N, params.d)
        else:
            g = propagate_thermostat_history(initial, sample_thermostat_history(int(k), params, rng), params.beta)
        components.append(g)
    logger.debug("evolved %d histories to t=%g (mean length %.2f)", n_histories, t, float(np.mean(ks)))
    return GaussianMixtureState.uniform(components, params.beta)


def thermostat_collision_mixture(g: GaussianComponent, beta: float, d: int, order: int,
                                 rng: Optional[np.random.Generator] = None,
                                 particle: Optional[int] = None) -> GaussianMixtureState:
    """
    T_j g averaged over a sigma rule, or the particle-averaged T g when
    `particle` is None.
    """
    n = _n_particles(g, d)
    sigmas, weights = sigma_rule(d, order, rng)
    particles = range(n) if particle is None else [particle]
    comps, w = [], []
    for j in particles:
        for sigma, weight in zip(sigmas, weights):
            comps.append(propagate_component_thermostat(g, j, sigma, beta))
            w.append(weight / len(particles))
    w = np.asarray(w)
    return GaussianMixtureState(w / w.sum(), comps, beta)


# ---------------------------------------------------------------------
# Closed forms
# ---------------------------------------------------------------------
def entropy_gaussian_isotropic(a: float, beta: float, n: int) -> float:
    """(n/2)(beta a - 1 - ln(beta a)) in nats."""
    if a <= 0:
        raise ValidationError(f"variance must be > 0, got {a}", field="a")
    require(beta > 0, "beta must be > 0", "beta")
    x = beta * a
    return 0.5 * n * (x - 1.0 - math.log(x))


def fisher_info_gaussian_isotropic(a: float, beta: float, n: int) -> float:
    """n a (1/a - beta)^2 for h = f/gamma with f ~ N(0, a I_n)."""
    if a <= 0:
        raise ValidationError(f"variance must be > 0, got {a}", field="a")
    require(beta > 0, "beta must be > 0", "beta")
    return n * a * (1.0 / a - beta) ** 2


def entropy_gaussian(g: GaussianComponent, beta: float) -> float:
    """1/2 [beta tr S + beta |m|^2 - n - ln det(beta S)]."""
    _, logdet = np.linalg.slogdet(beta * g.covariance)
    return 0.5 * (beta * np.trace(g.covariance) + beta * float(g.mean @ g.mean) - g.dim - logdet)


def _score_matrix(g: GaussianComponent, beta: float) -> np.ndarray:
    return beta * np.eye(g.dim) - scipy.linalg.inv(g.covariance)


def fisher_info_gaussian(g: GaussianComponent, beta: float) -> float:
    """tr(G S G) + beta^2 |m|^2 with G = beta I - S^{-1}."""
    gm = _score_matrix(g, beta)
    return float(np.trace(gm @ g.covariance @ gm) + beta ** 2 * (g.mean @ g.mean))


def fisher_info_gaussian_block(g: GaussianComponent, beta: float, j: int, d: int) -> float:
    """Information carried by the gradient in particle j only."""
    n = _n_particles(g, d)
    require(0 <= j < n, f"particle {j} out of range", "j")
    rows = _score_matrix(g, beta)[j * d:(j + 1) * d]
    mj = g.mean[j * d:(j + 1) * d]
    return float(np.trace(rows @ g.covariance @ rows.T) + beta ** 2 * (mj @ mj))


def fisher_info_plain(g: GaussianComponent) -> float:
    """Unweighted information of f itself, tr(S^{-1})."""
    return float(np.trace(scipy.linalg.inv(g.covariance)))


def info_transform_relation(info_f: float, e_kin: float, params) -> float:
    """I_gamma(h) = I(f) + 2 beta^2 (E - d N / beta)."""
    beta = params.beta
    return info_f + 2.0 * beta ** 2 * (e_kin - params.d * params.N / beta)


def mean_kinetic_energy(g: GaussianComponent) -> float:
    return 0.5 * float(np.trace(g.covariance) + g.mean @ g.mean)


# ---------------------------------------------------------------------
# Mixture Monte Carlo
# ---------------------------------------------------------------------
@dataclass
class _MixtureKernel:
    """Stacked component data for vectorised log density and score."""

    log_w: np.ndarray
    means: np.ndarray
    chol: np.ndarray
    precision: np.ndarray
    log_norm: np.ndarray
    n_rejected: int = 0

    @classmethod
    def build(cls, state: GaussianMixtureState, floor: float = CONDITION_FLOOR) -> "_MixtureKernel":
        keep = [k for k, c in enumerate(state.components)
                if state.weights[k] > 0 and c.condition_number() <= floor]
        rejected = sum(1 for k, c in enumerate(state.components) if state.weights[k] > 0) - len(keep)
        if rejected:
            logger.warning("rejected %d ill-conditioned components (floor %.0e)", rejected, floor)
        if not keep:
            raise ConditioningError("every mixture component exceeds the conditioning floor")
        covs = np.stack([state.components[k].covariance for k in keep])
        try:
            chol = np.linalg.cholesky(covs)
        except np.linalg.LinAlgError as exc:
            raise ConditioningError(f"Cholesky failed on a mixture component: {exc}") from exc
        w = state.weights[keep]
        n = state.dim
        logdet = 2.0 * np.sum(np.log(np.diagonal(chol, axis1=1, axis2=2)), axis=1)
        return cls(
            log_w=np.log(w / w.sum()),
            means=np.stack([state.components[k].mean for k in keep]),
            chol=chol,
            precision=np.linalg.inv(covs),
            log_norm=-0.5 * (logdet + n * math.log(2.0 * math.pi)),
            n_rejected=rejected,
        )

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        which = rng.choice(self.log_w.size, size=n, p=np.exp(self.log_w))
        z = rng.standard_normal((n, self.means.shape[1]))
        return self.means[which] + np.einsum("sij,sj->si", self.chol[which], z)

    def log_pdf_and_score(self, x: np.ndarray):
        diff = x[:, None, :] - self.means[None]
        solved = np.einsum("kij,skj->ski", self.precision, diff)
        log_k = self.log_w + self.log_norm - 0.5 * np.sum(diff * solved, axis=-1)
        log_f = logsumexp(log_k, axis=1)
        resp = np.exp(log_k - log_f[:, None])
        score = -np.einsum("sk,ski->si", resp, solved)
        return log_f, score


def _log_gamma(x: np.ndarray, beta: float) -> np.ndarray:
    n = x.shape[1]
    return 0.5 * n * math.log(beta / (2.0 * math.pi)) - 0.5 * beta * np.sum(x * x, axis=1)


def _mixture_functional(state: GaussianMixtureState, n_samples: int, rng: np.random.Generator,
                        integrand, chunk: int) -> FunctionalEstimate:
    require(n_samples >= 2, "n_samples must be >= 2", "n_samples")
    kernel = _MixtureKernel.build(state)
    acc = None
    for start in range(0, n_samples, chunk):
        x = kernel.sample(min(chunk, n_samples - start), rng)
        log_f, score = kernel.log_pdf_and_score(x)
        part = RunningMoments.from_samples(integrand(x, log_f, score))
        acc = part if acc is None else acc.merge(part)
    return FunctionalEstimate(float(acc.mean), float(acc.stderr), n_samples, kernel.n_rejected)


def entropy_mixture_mc(state: GaussianMixtureState, n_samples: int, rng: np.random.Generator,
                       chunk: int = DEFAULT_CHUNK) -> FunctionalEstimate:
    """E_f[ln f - ln gamma_beta] with log-sum-exp mixture densities."""
    beta = state.beta_ref
    return _mixture_functional(
        state, n_samples, rng, lambda x, log_f, score: log_f - _log_gamma(x, beta), chunk
    )


def fisher_info_mixture_mc(state: GaussianMixtureState, n_samples: int, rng: np.random.Generator,
                           chunk: int = DEFAULT_CHUNK) -> FunctionalEstimate:
    """E_f |grad ln f + beta v|^2, the ground-state form of the relative information."""
    beta = state.beta_ref

    def integrand(x, log_f, score):
        g = score + beta * x
        return np.sum(g * g, axis=1)

    return _mixture_functional(state, n_samples, rng, integrand, chunk)
