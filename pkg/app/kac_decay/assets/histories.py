# app/kac_decay/assets/histories.py
"""
Collision-history expansion of the reservoir semigroup.

e^{Lt} = e^{-Lambda t} sum_k (Lambda t)^k / k! * (sum_alpha lambda_alpha R^alpha)^k,
so a history is a Poisson number of pair collisions with pairs drawn from the
convex weights lambda_alpha. The K matrix is the history average of A^T A
where A is the system block of the collision product.
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from app.kac_decay.assets.errors import DenseSizeError, ValidationError
from app.kac_decay.assets.helpers import (
    RunningMoments,
    poisson_truncation,
    require,
    truncated_poisson_pmf,
)
from app.kac_decay.assets.kinematics import (
    DENSE_CAP,
    UNIFORM_SPHERE,
    ScatteringSampler,
    apply_collision_rows,
    sample_sigmas,
)
from app.kac_decay.assets.simulators import (
    RESERVOIR_CLASSES,
    ReservoirParams,
    ThermostatParams,
    draw_reservoir_pairs,
    draw_thermostat_events,
)

logger = logging.getLogger(__name__)

POISSON_TAIL = 1e-6


# ---------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------
@dataclass
class HistoryTerm:
    """k pair collisions (alphas[m], sigmas[m]) applied in order m = 0..k-1."""

    alphas: np.ndarray
    sigmas: np.ndarray
    classes: Optional[np.ndarray] = None

    def __post_init__(self):
        self.alphas = np.asarray(self.alphas, dtype=int).reshape(-1, 2)
        self.sigmas = np.asarray(self.sigmas, dtype=float)
        if self.sigmas.ndim == 1:
            self.sigmas = self.sigmas.reshape(len(self.alphas), -1)
        require(len(self.alphas) == len(self.sigmas), "alphas and sigmas must have equal length", "sigmas")
        if len(self.alphas):
            require(bool(np.all(self.alphas[:, 0] < self.alphas[:, 1])), "pairs must satisfy i < j", "alphas")
            require(bool(np.all(self.alphas[:, 0] >= 0)), "pair indices must be >= 0", "alphas")

    @property
    def k(self) -> int:
        return len(self.alphas)

    def check_against(self, n_particles: int, d: int) -> None:
        if self.k and int(self.alphas[:, 1].max()) >= n_particles:
            raise ValidationError(f"pair index out of range for {n_particles} particles", field="alphas")
        if self.k and self.sigmas.shape[1] != d:
            raise ValidationError(f"sigmas have dimension {self.sigmas.shape[1]}, expected {d}", field="sigmas")


@dataclass
class ThermostatHistory:
    """
    History of the thermostat model: internal pair collisions and thermostat
    collisions (j = -1) on a single particle i.
    """

    internal: np.ndarray
    pairs: np.ndarray
    sigmas: np.ndarray

    @property
    def k(self) -> int:
        return len(self.internal)


@dataclass(frozen=True)
class PMatrix:
    """One-step averaged map on (system, reservoir) mean-square pairs."""

    matrix: np.ndarray
    second_eigenvalue: float

    @classmethod
    def from_params(cls, p: ReservoirParams) -> "PMatrix":
        lam = p.total_rate
        require(lam > 0, "Lambda must be > 0", "total_rate")
        scale = p.mu / (p.d * lam * p.M)
        matrix = np.eye(2) - scale * np.array([[p.M, -p.M], [-p.N, p.N]], dtype=float)
        return cls(matrix=matrix, second_eigenvalue=1.0 - p.mu * (p.N + p.M) / (p.d * lam * p.M))

    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues in decreasing order."""
        return np.sort(np.linalg.eigvals(self.matrix).real)[::-1]

    def power(self, k: int) -> np.ndarray:
        return np.linalg.matrix_power(self.matrix, k)

    def first_component(self, k: int, n_system: int, n_reservoir: int) -> float:
        """(P^k (1, 0)^T)_1 = N/(N+M) + second_eigenvalue^k M/(N+M)."""
        total = n_system + n_reservoir
        return n_system / total + self.second_eigenvalue ** k * n_reservoir / total


@dataclass
class KCoefficient:
    t: float
    value: float
    stderr: float = 0.0
    n_samples: int = 0
    k_max: int = 0
    isotropy_residual: float = 0.0
    isotropy_stderr: float = 0.0

    def __post_init__(self):
        require(self.value >= 0, f"K coefficient must be >= 0, got {self.value}", "value")
        require(self.stderr >= 0, "stderr must be >= 0", "stderr")


# ---------------------------------------------------------------------
# Pair weights and history sampling
# ---------------------------------------------------------------------
def pair_class(pair: Tuple[int, int], p: ReservoirParams) -> str:
    i, j = int(pair[0]), int(pair[1])
    if not (0 <= i < j < p.N + p.M):
        raise ValidationError(f"pair {pair} not in the index set for N+M = {p.N + p.M}", field="pair")
    if j < p.N:
        return RESERVOIR_CLASSES[0]
    if i >= p.N:
        return RESERVOIR_CLASSES[1]
    return RESERVOIR_CLASSES[2]


def lambda_alpha(pair: Tuple[int, int], p: ReservoirParams) -> float:
    """
    Convex weight of pair alpha:
        lambda_S / (Lambda (N-1))   system pair
        lambda_R / (Lambda (M-1))   reservoir pair
        mu / (Lambda M)             cross pair
    """
    kind = pair_class(pair, p)
    lam = p.total_rate
    require(lam > 0, "Lambda must be > 0", "total_rate")
    if kind == RESERVOIR_CLASSES[0]:
        return p.lam_s / (lam * (p.N - 1))
    if kind == RESERVOIR_CLASSES[1]:
        return p.lam_r / (lam * (p.M - 1))
    return p.mu / (lam * p.M)


def all_pair_weights(p: ReservoirParams) -> np.ndarray:
    """(n_pairs, 3) rows (i, j, weight) over every pair i < j."""
    n = p.N + p.M
    rows = [(i, j, lambda_alpha((i, j), p)) for i in range(n) for j in range(i + 1, n)]
    return np.array(rows, dtype=float)


def sample_history(k: int, p: ReservoirParams, rng: np.random.Generator,
                   sampler: ScatteringSampler = UNIFORM_SPHERE) -> HistoryTerm:
    """k i.i.d. pairs with law lambda_alpha and k i.i.d. scattering angles."""
    require(k >= 0, f"history length must be >= 0, got {k}", "k")
    if k == 0:
        return HistoryTerm(np.zeros((0, 2), dtype=int), np.zeros((0, p.d)), np.zeros(0, dtype=int))
    cls, i, j = draw_reservoir_pairs(p, k, rng)
    return HistoryTerm(np.stack([i, j], axis=1), sample_sigmas(p.d, k, rng, sampler), cls)


def sample_history_lengths(t: float, rate: float, n: int, rng: np.random.Generator,
                           k_max: Optional[int] = None, tail: float = POISSON_TAIL) -> Tuple[np.ndarray, int]:
    """Poisson(rate t) lengths truncated at k_max (default: smallest k with tail < `tail`)."""
    mean = rate * t
    if k_max is None:
        k_max = poisson_truncation(mean, tail)
    pmf = truncated_poisson_pmf(mean, k_max, tail)
    return rng.choice(k_max + 1, size=n, p=pmf), k_max


# ---------------------------------------------------------------------
# Block products
# ---------------------------------------------------------------------
def _check_dense(p: ReservoirParams, cap: int) -> None:
    size = p.d * (p.N + p.M)
    if size > cap:
        raise DenseSizeError(f"d (N+M) = {size} exceeds dense cap {cap}", field="N")


def block_A(h: HistoryTerm, p: ReservoirParams, cap: int = DENSE_CAP) -> np.ndarray:
    """
    Top-left dN x dN block of M_k ... M_1, computed by pushing the first dN
    basis vectors through the collisions (only 2d rows touched per step).
    """
    _check_dense(p, cap)
    h.check_against(p.N + p.M, p.d)
    dn = p.d * p.N
    x = np.zeros((p.d * (p.N + p.M), dn))
    x[:dn] = np.eye(dn)
    for (i, j), sigma in zip(h.alphas, h.sigmas):
        apply_collision_rows(x, int(i), int(j), sigma, p.d)
    return x[:dn]


def _batched_blocks(ks: np.ndarray, p: ReservoirParams, rng: np.random.Generator,
                    sampler: ScatteringSampler = UNIFORM_SPHERE) -> np.ndarray:
    """A for a batch of histories with lengths ks; returns (B, dN, dN)."""
    b = ks.size
    n, d = p.N + p.M, p.d
    dn = d * p.N
    x = np.zeros((b, n, d, dn))
    x[:, :p.N] = np.eye(dn).reshape(p.N, d, dn)
    for step in range(int(ks.max(initial=0))):
        rows = np.flatnonzero(ks > step)
        _, i, j = draw_reservoir_pairs(p, rows.size, rng)
        sigma = sample_sigmas(d, rows.size, rng, sampler)
        xi = x[rows, i]
        xj = x[rows, j]
        proj = np.einsum("bd,bdk->bk", sigma, xi - xj)
        update = sigma[:, :, None] * proj[:, None, :]
        x[rows, i] = xi - update
        x[rows, j] = xj + update
    return x[:, :p.N].reshape(b, dn, dn)


def _gram_moments(ks: np.ndarray, p: ReservoirParams, rng: np.random.Generator,
                  block_size: int, sampler: ScatteringSampler) -> RunningMoments:
    acc = None
    for start in range(0, ks.size, block_size):
        a = _batched_blocks(ks[start:start + block_size], p, rng, sampler)
        gram = np.einsum("bki,bkj->bij", a, a)
        part = RunningMoments.from_samples(gram)
        acc = part if acc is None else acc.merge(part)
    return acc


def _isotropy(moments: RunningMoments) -> Tuple[float, float]:
    """Frobenius norm of the off-diagonal part of the mean Gram matrix and its null-scale stderr."""
    off = ~np.eye(moments.mean.shape[0], dtype=bool)
    residual = float(np.linalg.norm(moments.mean[off]))
    scale = float(np.sqrt(np.sum(moments.stderr[off] ** 2)))
    return residual, scale


def history_gram_mc(k: int, p: ReservoirParams, n_samples: int, rng: np.random.Generator,
                    block_size: int = 4096, sampler: ScatteringSampler = UNIFORM_SPHERE,
                    cap: int = DENSE_CAP) -> RunningMoments:
    """Moments of A_k^T A_k over histories of fixed length k."""
    require(k >= 0, "k must be >= 0", "k")
    require(n_samples >= 1, "n_samples must be >= 1", "n_samples")
    _check_dense(p, cap)
    return _gram_moments(np.full(n_samples, k), p, rng, block_size, sampler)


# ---------------------------------------------------------------------
# K coefficient
# ---------------------------------------------------------------------
def k_coefficient_analytic(t: float, p: ReservoirParams) -> KCoefficient:
    """c(t) = N/(N+M) + M/(N+M) exp(-mu (N+M) t / (d M))."""
    require(t >= 0, f"t must be >= 0, got {t}", "t")
    total = p.N + p.M
    value = p.N / total + (p.M / total) * math.exp(-p.mu * total * t / (p.d * p.M))
    return KCoefficient(t=t, value=value)


def k_coefficient_series(t: float, p: ReservoirParams, tail: float = POISSON_TAIL) -> float:
    """Poisson(Lambda t) average of (P^k (1,0)^T)_1 with prefactor e^{-Lambda t}."""
    require(t >= 0, f"t must be >= 0, got {t}", "t")
    pm = PMatrix.from_params(p)
    mean = p.total_rate * t
    k_max = poisson_truncation(mean, tail)
    pmf = truncated_poisson_pmf(mean, k_max, tail)
    return float(sum(w * pm.first_component(k, p.N, p.M) for k, w in enumerate(pmf)))


def k_coefficient_mc(t: float, p: ReservoirParams, n_samples: int, rng: np.random.Generator,
                     k_max: Optional[int] = None, tail: float = POISSON_TAIL,
                     block_size: int = 4096, sampler: ScatteringSampler = UNIFORM_SPHERE,
                     cap: int = DENSE_CAP) -> KCoefficient:
    """
    Monte Carlo K: k ~ Poisson(Lambda t) truncated at k_max, a history of length
    k, readout (1/(dN)) tr(A^T A). The off-diagonal part of the averaged Gram
    matrix is reported as the isotropy residual.
    """
    require(t >= 0, f"t must be >= 0, got {t}", "t")
    require(n_samples >= 2, "n_samples must be >= 2", "n_samples")
    _check_dense(p, cap)
    if t == 0:
        return KCoefficient(t=0.0, value=1.0, n_samples=n_samples)
    ks, k_max = sample_history_lengths(t, p.total_rate, n_samples, rng, k_max, tail)
    dn = p.d * p.N
    moments = None
    traces = []
    for start in range(0, n_samples, block_size):
        a = _batched_blocks(ks[start:start + block_size], p, rng, sampler)
        gram = np.einsum("bki,bkj->bij", a, a)
        traces.append(np.trace(gram, axis1=1, axis2=2) / dn)
        part = RunningMoments.from_samples(gram)
        moments = part if moments is None else moments.merge(part)
    readout = RunningMoments.from_samples(np.concatenate(traces))
    residual, scale = _isotropy(moments)
    logger.debug("K(t=%g): %d histories, k_max=%d", t, n_samples, k_max)
    return KCoefficient(
        t=t,
        value=float(readout.mean),
        stderr=float(readout.stderr),
        n_samples=n_samples,
        k_max=k_max,
        isotropy_residual=residual,
        isotropy_stderr=scale,
    )


# ---------------------------------------------------------------------
# Mean-square bookkeeping
# ---------------------------------------------------------------------
def single_step_update(m1: float, m2: float, cls: str, p: ReservoirParams) -> Tuple[float, float]:
    """
    Per-collision update of the (system, reservoir) pair of mean squares:
    only cross collisions mix, m1 - (m1 - m2)/d and m2 - (m2 - m1)/d.
    """
    if cls not in RESERVOIR_CLASSES:
        raise ValidationError(f"unknown collision class {cls!r}", field="class")
    if cls != RESERVOIR_CLASSES[2]:
        return m1, m2
    return m1 - (m1 - m2) / p.d, m2 - (m2 - m1) / p.d


def aggregate_step(m1: float, m2: float, p: ReservoirParams) -> Tuple[float, float]:
    """
    Class-weighted one-step map on particle-averaged mean squares; a cross
    collision moves one of N system and one of M reservoir particles.
    """
    rates = np.asarray(p.class_rates) / p.total_rate
    out1, out2 = 0.0, 0.0
    for weight, cls in zip(rates, RESERVOIR_CLASSES):
        n1, n2 = single_step_update(m1, m2, cls, p)
        out1 += weight * (m1 + (n1 - m1) / p.N)
        out2 += weight * (m2 + (n2 - m2) / p.M)
    return out1, out2


# ---------------------------------------------------------------------
# Thermostat histories
# ---------------------------------------------------------------------
def sample_thermostat_history(k: int, p: ThermostatParams, rng: np.random.Generator,
                              sampler: ScatteringSampler = UNIFORM_SPHERE) -> ThermostatHistory:
    require(k >= 0, f"history length must be >= 0, got {k}", "k")
    if k == 0:
        return ThermostatHistory(np.zeros(0, dtype=bool), np.zeros((0, 2), dtype=int), np.zeros((0, p.d)))
    internal, i, j = draw_thermostat_events(p, k, rng)
    return ThermostatHistory(internal, np.stack([i, j], axis=1), sample_sigmas(p.d, k, rng, sampler))


def thermostat_step_factor(p: ThermostatParams) -> float:
    """Information contraction per averaged step: 1 - mu/(d N (lambda + mu))."""
    require(p.total_rate > 0, "total rate must be > 0", "total_rate")
    return 1.0 - (p.thermostat_rate / p.total_rate) / (p.d * p.N)


def thermostat_envelope_series(t: float, p: ThermostatParams, tail: float = POISSON_TAIL) -> float:
    """Poisson((lambda+mu) N t) average of the step factor power; equals exp(-mu t/d)."""
    require(t >= 0, f"t must be >= 0, got {t}", "t")
    mean = p.total_rate * t
    k_max = poisson_truncation(mean, tail)
    pmf = truncated_poisson_pmf(mean, k_max, tail)
    factor = thermostat_step_factor(p)
    return float(np.sum(pmf * factor ** np.arange(k_max + 1)))
