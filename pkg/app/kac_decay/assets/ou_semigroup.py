# app/kac_decay/assets/ou_semigroup.py
"""
Ornstein-Uhlenbeck semigroup on functions over R^n,

    P_s h(v) = int h(e^{-s} v + sqrt(1 - e^{-2s}) x) dgamma_beta(x),

realised by tensor Gauss-Hermite quadrature (or Monte Carlo for larger n),
its generator L h = (1/beta) lap h - v . grad h, and numerical checks of the
semigroup, self-adjointness and commutation identities.
"""
import itertools
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from app.kac_decay.assets.errors import QuadratureError, ValidationError
from app.kac_decay.assets.gaussian_states import GaussianComponent, fisher_info_gaussian
from app.kac_decay.assets.helpers import require, substream
from app.kac_decay.assets.kinematics import sigma_rule

logger = logging.getLogger(__name__)

FD_STEP = 1e-5
MAX_BATCH = 2_000_000
HERMITE = "hermite"
MONTE_CARLO = "mc"


# ---------------------------------------------------------------------
# Quadrature rules
# ---------------------------------------------------------------------
def gauss_hermite(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gauss-Hermite knots and weights for the standard normal density
    (probabilists' convention).
    """
    knots, weights = np.polynomial.hermite.hermgauss(n)
    return knots * np.sqrt(2.0), weights / np.sqrt(np.pi)


def gauss_legendre(a: float, b: float, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre knots and weights on [a, b]."""
    knots, weights = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * knots + 0.5 * (b + a), 0.5 * (b - a) * weights


def gamma_nodes(n: int, beta: float, order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Tensor-product rule for gamma_beta on R^n: (order^n, n) nodes, summing weights."""
    knots, weights = gauss_hermite(order)
    knots = knots / math.sqrt(beta)
    nodes = np.array(list(itertools.product(knots, repeat=n)))
    w = np.prod(np.array(list(itertools.product(weights, repeat=n))), axis=1)
    return nodes.reshape(-1, n), w


@dataclass(frozen=True)
class QuadratureSpec:
    scheme: str = HERMITE
    order: int = 24
    beta: float = 1.0
    n_samples: int = 1_000_000
    seed: int = 0
    tol: float = 1e-8
    grid_order: int = 8
    verify: bool = False

    def __post_init__(self):
        require(self.scheme in (HERMITE, MONTE_CARLO), f"unknown quadrature scheme {self.scheme!r}", "scheme")
        require(self.order >= 1, f"order must be >= 1, got {self.order}", "order")
        require(self.beta > 0, f"beta must be > 0, got {self.beta}", "beta")
        require(self.grid_order >= 1, "grid_order must be >= 1", "grid_order")

    def refined(self, factor: int = 2) -> "QuadratureSpec":
        return QuadratureSpec(self.scheme, self.order * factor, self.beta, self.n_samples * factor,
                              self.seed, self.tol, self.grid_order, self.verify)

    def nodes(self, n: int) -> Tuple[np.ndarray, np.ndarray]:
        if self.scheme == HERMITE:
            return gamma_nodes(n, self.beta, self.order)
        x = substream(self.seed, n).standard_normal((self.n_samples, n)) / math.sqrt(self.beta)
        return x, np.full(self.n_samples, 1.0 / self.n_samples)


# ---------------------------------------------------------------------
# Scalar fields
# ---------------------------------------------------------------------
@dataclass
class ScalarField:
    """
    h: R^n -> R evaluated on (S, n) batches. `grad` and `laplacian` are
    optional analytic derivatives; central differences are used otherwise.
    """

    func: Callable[[np.ndarray], np.ndarray]
    n: int
    grad: Optional[Callable[[np.ndarray], np.ndarray]] = None
    laplacian: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        require(self.n >= 1, f"field dimension must be >= 1, got {self.n}", "n")

    def _points(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        x = x.reshape(-1, self.n) if x.ndim <= 1 else x
        if x.shape[1] != self.n:
            raise ValidationError(f"expected points in R^{self.n}, got shape {x.shape}", field="x")
        return x

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.func(self._points(x)), dtype=float)

    def gradient(self, x) -> np.ndarray:
        x = self._points(x)
        if self.grad is not None:
            return np.asarray(self.grad(x), dtype=float)
        out = np.empty_like(x)
        for k in range(self.n):
            step = FD_STEP * np.maximum(1.0, np.abs(x[:, k]))
            xp, xm = x.copy(), x.copy()
            xp[:, k] += step
            xm[:, k] -= step
            out[:, k] = (self.func(xp) - self.func(xm)) / (2.0 * step)
        return out

    def lap(self, x) -> np.ndarray:
        x = self._points(x)
        if self.laplacian is not None:
            return np.asarray(self.laplacian(x), dtype=float)
        centre = self.func(x)
        out = np.zeros(x.shape[0])
        for k in range(self.n):
            step = 1e-4 * np.maximum(1.0, np.abs(x[:, k]))
            xp, xm = x.copy(), x.copy()
            xp[:, k] += step
            xm[:, k] -= step
            out += (self.func(xp) - 2.0 * centre + self.func(xm)) / step ** 2
        return out

    @classmethod
    def constant(cls, n: int, value: float = 1.0) -> "ScalarField":
        return cls(
            lambda x: np.full(x.shape[0], value), n,
            grad=lambda x: np.zeros_like(x), laplacian=lambda x: np.zeros(x.shape[0]),
        )

    @classmethod
    def linear(cls, coeffs: Sequence[float]) -> "ScalarField":
        c = np.asarray(coeffs, dtype=float)
        return cls(lambda x: x @ c, c.size, grad=lambda x: np.broadcast_to(c, x.shape).copy(),
                   laplacian=lambda x: np.zeros(x.shape[0]))

    @classmethod
    def gaussian_ratio(cls, g: GaussianComponent, beta: float) -> "ScalarField":
        """h = f / gamma_beta for f = N(mean, S); grad ln h = G (v - m) + beta m, G = beta I - S^{-1}."""
        n = g.dim
        prec = np.linalg.inv(g.covariance)
        _, logdet = np.linalg.slogdet(g.covariance)
        const = -0.5 * logdet - 0.5 * n * math.log(beta)
        gmat = beta * np.eye(n) - prec
        trace_g = float(np.trace(gmat))

        def log_h(x):
            diff = x - g.mean
            return const - 0.5 * np.einsum("si,ij,sj->s", diff, prec, diff) + 0.5 * beta * np.sum(x * x, axis=1)

        def score(x):
            return (x - g.mean) @ gmat.T + beta * g.mean

        def func(x):
            return np.exp(log_h(x))

        def grad(x):
            return func(x)[:, None] * score(x)

        def laplacian(x):
            s = score(x)
            return func(x) * (np.sum(s * s, axis=1) + trace_g)

        return cls(func, n, grad=grad, laplacian=laplacian)


def _batched(field: ScalarField, points: np.ndarray) -> np.ndarray:
    """Evaluate on a (S, K, n) stack in chunks."""
    s, k, n = points.shape
    flat = points.reshape(-1, n)
    if flat.shape[0] <= MAX_BATCH:
        return field(flat).reshape(s, k)
    out = np.empty(flat.shape[0])
    for start in range(0, flat.shape[0], MAX_BATCH):
        out[start:start + MAX_BATCH] = field(flat[start:start + MAX_BATCH])
    return out.reshape(s, k)


def gaussian_expectation(field: ScalarField, q: QuadratureSpec) -> float:
    """int h dgamma_beta."""
    nodes, weights = q.nodes(field.n)
    return float(field(nodes) @ weights)


# ---------------------------------------------------------------------
# Semigroup and generator
# ---------------------------------------------------------------------
def _ou_field(h: ScalarField, s: float, q: QuadratureSpec) -> ScalarField:
    nodes, weights = q.nodes(h.n)
    decay = math.exp(-s)
    spread = math.sqrt(-math.expm1(-2.0 * s))

    def func(x):
        chunk = max(1, MAX_BATCH // nodes.shape[0])
        out = np.empty(x.shape[0])
        for start in range(0, x.shape[0], chunk):
            xs = x[start:start + chunk]
            pts = decay * xs[:, None, :] + spread * nodes[None, :, :]
            out[start:start + chunk] = _batched(h, pts) @ weights
        return out

    return ScalarField(func, h.n)


def ou_apply(h: ScalarField, s: float, beta: float, q: QuadratureSpec) -> ScalarField:
    """
    P_s h by quadrature; P_0 is the identity with no quadrature. With
    `q.verify` each evaluation is repeated at doubled order and a disagreement
    above `q.tol` raises QuadratureError.
    """
    require(s >= 0, f"s must be >= 0, got {s}", "s")
    if s == 0:
        return h
    if q.beta != beta:
        q = QuadratureSpec(q.scheme, q.order, beta, q.n_samples, q.seed, q.tol, q.grid_order, q.verify)
    base = _ou_field(h, s, q)
    if not q.verify:
        return base
    fine = _ou_field(h, s, q.refined())

    def checked(x):
        coarse = base.func(x)
        gap = float(np.max(np.abs(coarse - fine.func(x))))
        if gap > q.tol:
            raise QuadratureError(f"P_s quadrature under-resolved at order {q.order}: gap {gap:.3g} > {q.tol:g}")
        return coarse

    return ScalarField(checked, h.n)


def ou_evolve_gaussian(g: GaussianComponent, s: float, beta: float) -> GaussianComponent:
    """Closed form: P_s (f/gamma) = f_s/gamma with f_s = N(e^{-s} m, e^{-2s} S + (1 - e^{-2s})/beta I)."""
    require(s >= 0, f"s must be >= 0, got {s}", "s")
    decay = math.exp(-s)
    cov = decay ** 2 * g.covariance + (-math.expm1(-2.0 * s) / beta) * np.eye(g.dim)
    return GaussianComponent(decay * g.mean, cov)


def ou_generator_apply(h: ScalarField, beta: float) -> ScalarField:
    """L h = (1/beta) lap h - v . grad h."""
    require(beta > 0, f"beta must be > 0, got {beta}", "beta")

    def func(x):
        return h.lap(x) / beta - np.sum(x * h.gradient(x), axis=1)

    return ScalarField(func, h.n)


# ---------------------------------------------------------------------
# Residual norms
# ---------------------------------------------------------------------
def _grid(n: int, q: QuadratureSpec) -> Tuple[np.ndarray, np.ndarray]:
    return gamma_nodes(n, q.beta, q.grid_order)


def weighted_norm(values: np.ndarray, weights: np.ndarray) -> float:
    """sqrt(sum w r^2), the L^2(gamma) norm on the evaluation grid."""
    return float(np.sqrt(np.sum(weights * values * values)))


def check_semigroup(h: ScalarField, s: float, t: float, q: QuadratureSpec) -> float:
    """|| P_s P_t h - P_{s+t} h || on the evaluation grid."""
    x, w = _grid(h.n, q)
    lhs = ou_apply(ou_apply(h, t, q.beta, q), s, q.beta, q)(x)
    rhs = ou_apply(h, s + t, q.beta, q)(x)
    return weighted_norm(lhs - rhs, w)


def check_self_adjoint(f: ScalarField, g: ScalarField, s: float, q: QuadratureSpec) -> float:
    """| <P_s F, G>_gamma - <F, P_s G>_gamma |."""
    require(f.n == g.n, "fields must share a dimension", "n")
    x, w = q.nodes(f.n)
    left = ou_apply(f, s, q.beta, q)(x) * g(x)
    right = f(x) * ou_apply(g, s, q.beta, q)(x)
    return abs(float(w @ (left - right)))


def check_mean_preservation(h: ScalarField, s: float, q: QuadratureSpec) -> float:
    """| int P_s h dgamma - int h dgamma |."""
    return abs(gaussian_expectation(ou_apply(h, s, q.beta, q), q) - gaussian_expectation(h, q))


# ---------------------------------------------------------------------
# Collision operators in ground-state form
# ---------------------------------------------------------------------
@dataclass(frozen=True)
class CollisionOpSpec:
    """
    d: dimension; n_particles: particles carried by the field; beta: bath
    temperature; pair / particle select the collision; sigma_order and
    partner_order set the sigma and partner rules.
    """

    d: int
    n_particles: int
    beta: float
    pair: Tuple[int, int] = (0, 1)
    particle: int = 0
    sigma_order: int = 16
    partner_order: int = 24
    seed: int = 0
    n_keep: int = 1


OP_Q = "Q"
OP_THERMOSTAT = "T_j"
OP_PAIR = "R_ij"
OP_MARGINAL = "marginal"
OPERATORS = (OP_Q, OP_THERMOSTAT, OP_PAIR, OP_MARGINAL)


def _sigma_nodes(spec: CollisionOpSpec):
    return sigma_rule(spec.d, spec.sigma_order, substream(spec.seed, 7))


def _pair_average(h: ScalarField, pairs, spec: CollisionOpSpec) -> ScalarField:
    sigmas, sw = _sigma_nodes(spec)
    d = spec.d

    def func(x):
        total = np.zeros(x.shape[0])
        for i, j in pairs:
            bi, bj = slice(i * d, (i + 1) * d), slice(j * d, (j + 1) * d)
            for sigma, w in zip(sigmas, sw):
                y = x.copy()
                proj = ((y[:, bi] - y[:, bj]) @ sigma)[:, None] * sigma
                y[:, bi] -= proj
                y[:, bj] += proj
                total += w * h(y)
        return total / len(pairs)

    return ScalarField(func, h.n)


def _thermostat_op(h: ScalarField, spec: CollisionOpSpec) -> ScalarField:
    sigmas, sw = _sigma_nodes(spec)
    partners, pw = gamma_nodes(spec.d, spec.beta, spec.partner_order)
    d, j = spec.d, spec.particle
    bj = slice(j * d, (j + 1) * d)

    def func(x):
        total = np.zeros(x.shape[0])
        for sigma, w in zip(sigmas, sw):
            proj = np.outer(sigma, sigma)
            kept = x[:, bj] @ (np.eye(d) - proj)
            pts = np.repeat(x[:, None, :], partners.shape[0], axis=1)
            pts[:, :, bj] = kept[:, None, :] + (partners @ proj)[None, :, :]
            total += w * (_batched(h, pts) @ pw)
        return total

    return ScalarField(func, h.n)


def _marginal_op(h: ScalarField, spec: CollisionOpSpec) -> ScalarField:
    """Integrate out every particle beyond the first n_keep against the Maxwellian."""
    keep = spec.n_keep * spec.d
    rest = h.n - keep
    require(rest >= 1, "nothing to integrate out", "n_keep")
    nodes, w = gamma_nodes(rest, spec.beta, spec.partner_order)

    def func(x):
        pts = np.concatenate(
            [np.repeat(x[:, None, :], nodes.shape[0], axis=1),
             np.broadcast_to(nodes, (x.shape[0],) + nodes.shape)],
            axis=2,
        )
        return _batched(h, pts) @ w

    return ScalarField(func, keep)


def collision_operator(op: str, h: ScalarField, spec: CollisionOpSpec) -> ScalarField:
    """
    Q: average of h o M over all pairs and sigma; T_j: thermostat collision on
    `particle` with a Maxwellian partner integrated out; R_ij: single pair
    `pair`; marginal: Gaussian marginal onto the first n_keep particles.
    """
    require(h.n == spec.d * spec.n_particles, "field dimension must be d * n_particles", "n_particles")
    if op == OP_Q:
        require(spec.n_particles >= 2, "Q needs at least two particles", "n_particles")
        pairs = list(itertools.combinations(range(spec.n_particles), 2))
        return _pair_average(h, pairs, spec)
    if op == OP_PAIR:
        i, j = spec.pair
        require(0 <= i < j < spec.n_particles, f"pair {spec.pair} out of range", "pair")
        return _pair_average(h, [(i, j)], spec)
    if op == OP_THERMOSTAT:
        require(0 <= spec.particle < spec.n_particles, "particle out of range", "particle")
        return _thermostat_op(h, spec)
    if op == OP_MARGINAL:
        return _marginal_op(h, spec)
    raise ValidationError(f"unknown collision operator {op!r}; expected one of {OPERATORS}", field="op")


def check_commutation(h: ScalarField, s: float, op: str, spec: CollisionOpSpec, q: QuadratureSpec) -> float:
    """|| P_s(op h) - op(P_s h) || on the evaluation grid of op's output space."""
    require(s >= 0, f"s must be >= 0, got {s}", "s")
    if s == 0:
        return 0.0
    q = QuadratureSpec(q.scheme, q.order, spec.beta, q.n_samples, q.seed, q.tol, q.grid_order, False)
    lhs = ou_apply(collision_operator(op, h, spec), s, spec.beta, q)
    rhs = collision_operator(op, ou_apply(h, s, spec.beta, q), spec)
    x, w = _grid(lhs.n, q)
    residual = weighted_norm(lhs(x) - rhs(x), w)
    logger.debug("commutation %s at s=%g, order %d: %.3e", op, s, q.order, residual)
    return residual


def commutation_refinement(h: ScalarField, s: float, op: str, spec: CollisionOpSpec,
                           q: QuadratureSpec, levels: int = 2) -> list:
    """Residuals at order, 2 order, ... for a convergence read-out."""
    out = []
    for _ in range(levels):
        out.append(check_commutation(h, s, op, spec, q))
        q = q.refined()
    return out


def check_mass_preservation(h: ScalarField, op: str, spec: CollisionOpSpec, q: QuadratureSpec) -> float:
    """| int op h dgamma - int h dgamma |."""
    q = QuadratureSpec(q.scheme, q.order, spec.beta, q.n_samples, q.seed, q.tol, q.grid_order, False)
    return abs(gaussian_expectation(collision_operator(op, h, spec), q) - gaussian_expectation(h, q))


# ---------------------------------------------------------------------
# Entropy from information
# ---------------------------------------------------------------------
@dataclass
class EntropyFromInformation:
    value: float
    integral: float
    tail: float
    s_max: float
    n_nodes: int


def _legendre_integral(curve: Callable[[float], float], s_max: float, n: int) -> float:
    knots, weights = gauss_legendre(0.0, s_max, n)
    return float(sum(w * curve(float(s)) for s, w in zip(knots, weights)))


def entropy_from_information(info_curve: Callable[[float], float], beta: float, s_max: float = 12.0,
                             n_nodes: int = 64, tol: float = 1e-9) -> EntropyFromInformation:
    """
    (1/beta) int_0^inf I(P_s h) ds: Gauss-Legendre on [0, s_max] checked by
    doubling the node count, plus the tail of a c e^{-2s} fit through I(s_max).
    """
    require(beta > 0, f"beta must be > 0, got {beta}", "beta")
    require(s_max > 0, f"s_max must be > 0, got {s_max}", "s_max")
    end, mid = float(info_curve(s_max)), float(info_curve(0.5 * s_max))
    if not (math.isfinite(end) and math.isfinite(mid)) or end < 0 or (end > mid and end > tol):
        raise QuadratureError(f"information curve does not decay: I({s_max / 2:g})={mid:.3g}, I({s_max:g})={end:.3g}")
    coarse = _legendre_integral(info_curve, s_max, n_nodes)
    fine = _legendre_integral(info_curve, s_max, 2 * n_nodes)
    if abs(fine - coarse) > tol * max(1.0, abs(fine)):
        raise QuadratureError(f"information integral under-resolved with {n_nodes} nodes: {coarse!r} vs {fine!r}")
    tail = 0.5 * end
    return EntropyFromInformation(
        value=(fine + tail) / beta, integral=fine / beta, tail=tail / beta, s_max=s_max, n_nodes=2 * n_nodes,
    )


def gaussian_information_curve(g: GaussianComponent, beta: float) -> Callable[[float], float]:
    """s -> I(P_s h) for h = f/gamma with Gaussian f, in closed form."""
    return lambda s: fisher_info_gaussian(ou_evolve_gaussian(g, s, beta), beta)


def quadrature_information_curve(h: ScalarField, beta: float, q: QuadratureSpec) -> Callable[[float], float]:
    """s -> int |grad P_s h|^2 / P_s h dgamma, with grad P_s h = e^{-s} P_s(grad h)."""
    nodes, weights = gamma_nodes(h.n, beta, q.order)
    q = QuadratureSpec(q.scheme, q.order, beta, q.n_samples, q.seed, q.tol, q.grid_order, False)

    def curve(s: float) -> float:
        ph = ou_apply(h, s, beta, q)(nodes)
        grads = np.stack([
            ou_apply(ScalarField(lambda x, k=k: h.gradient(x)[:, k], h.n), s, beta, q)(nodes)
            for k in range(h.n)
        ], axis=1) * math.exp(-s)
        return float(weights @ (np.sum(grads * grads, axis=1) / ph))

    return curve
