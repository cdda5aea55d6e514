# app/kac_decay/assets/kinematics.py
from dataclasses import dataclass
from typing import Protocol, Tuple

import numpy as np

from app.kac_decay.assets.errors import DenseSizeError, ValidationError
from app.kac_decay.assets.helpers import require

# ---------------------------------------------------------------------
# Constants
# ---------------------------------------------------------------------
# Largest matrix side d * n materialised densely, so at most 64 x 64 entries.
# Counted in components, not particles.
DENSE_CAP = 64
UNIT_NORM_TOL = 1e-12


# ---------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------
@dataclass(frozen=True)
class ScatteringAngle:
    sigma: np.ndarray

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=float).reshape(-1)
        require(sigma.size >= 1, "scattering angle needs dimension >= 1", "sigma")
        if abs(np.linalg.norm(sigma) - 1.0) > UNIT_NORM_TOL:
            raise ValidationError(
                f"scattering angle must be a unit vector, |sigma| = {np.linalg.norm(sigma)!r}",
                field="sigma",
            )
        object.__setattr__(self, "sigma", sigma)

    @property
    def dim(self) -> int:
        return self.sigma.size

    def projector(self) -> np.ndarray:
        """sigma (x) sigma, the only part of sigma the dynamics sees."""
        return np.outer(self.sigma, self.sigma)


@dataclass
class MasterState:
    """Velocities of n particles in R^d, stored particle-major in one flat vector."""

    dim: int
    n_particles: int
    velocities: np.ndarray

    def __post_init__(self):
        require(self.dim >= 1, f"dim must be >= 1, got {self.dim}", "dim")
        require(self.n_particles >= 1, f"n_particles must be >= 1, got {self.n_particles}", "n_particles")
        v = np.ascontiguousarray(self.velocities, dtype=float).reshape(-1)
        require(
            v.size == self.dim * self.n_particles,
            f"expected {self.dim * self.n_particles} velocity components, got {v.size}",
            "velocities",
        )
        require(bool(np.all(np.isfinite(v))), "velocities must be finite", "velocities")
        self.velocities = v

    @classmethod
    def from_blocks(cls, blocks) -> "MasterState":
        blocks = np.atleast_2d(np.asarray(blocks, dtype=float))
        return cls(dim=blocks.shape[1], n_particles=blocks.shape[0], velocities=blocks.reshape(-1))

    def blocks(self) -> np.ndarray:
        """(n_particles, dim) view on the flat vector."""
        return self.velocities.reshape(self.n_particles, self.dim)

    def block(self, k: int) -> np.ndarray:
        return self.velocities[k * self.dim:(k + 1) * self.dim]

    def copy(self) -> "MasterState":
        return MasterState(self.dim, self.n_particles, self.velocities.copy())


@dataclass(frozen=True)
class PairCollision:
    i: int
    j: int
    sigma: ScatteringAngle

    def __post_init__(self):
        require(0 <= self.i < self.j, f"pair must satisfy 0 <= i < j, got ({self.i}, {self.j})", "pair")

    def check_against(self, n_particles: int, dim: int) -> None:
        if self.j >= n_particles:
            raise ValidationError(
                f"particle index {self.j} out of range for {n_particles} particles", field="pair"
            )
        if self.sigma.dim != dim:
            raise ValidationError(
                f"sigma has dimension {self.sigma.dim}, state has dimension {dim}", field="sigma"
            )


# ---------------------------------------------------------------------
# Scattering measures
# ---------------------------------------------------------------------
class ScatteringSampler(Protocol):
    """Any law on S^{d-1} whose second moment is (1/d) * Identity."""

    def sample(self, d: int, size: int, rng: np.random.Generator) -> np.ndarray:
        ...


class UniformSphereSampler:
    """Uniform surface measure: normalised standard normals."""

    def sample(self, d: int, size: int, rng: np.random.Generator) -> np.ndarray:
        if d == 1:
            return rng.choice(np.array([-1.0, 1.0]), size=(size, 1))
        x = rng.standard_normal((size, d))
        norms = np.linalg.norm(x, axis=1, keepdims=True)
        # redraw zero-norm rows
        bad = norms[:, 0] == 0.0
        while np.any(bad):
            x[bad] = rng.standard_normal((int(bad.sum()), d))
            norms = np.linalg.norm(x, axis=1, keepdims=True)
            bad = norms[:, 0] == 0.0
        return x / norms


class AxisSampler:
    """Uniform on the 2d signed coordinate axes; same second moment as the sphere."""

    def sample(self, d: int, size: int, rng: np.random.Generator) -> np.ndarray:
        axes = rng.integers(0, d, size=size)
        signs = rng.choice(np.array([-1.0, 1.0]), size=size)
        out = np.zeros((size, d))
        out[np.arange(size), axes] = signs
        return out


UNIFORM_SPHERE = UniformSphereSampler()


def sample_sigmas(d: int, size: int, rng: np.random.Generator,
                  sampler: ScatteringSampler = UNIFORM_SPHERE) -> np.ndarray:
    """(size, d) array of scattering angles."""
    require(d >= 1, f"dimension must be >= 1, got {d}", "d")
    return sampler.sample(d, size, rng)


def sample_scattering_angle(d: int, rng: np.random.Generator,
                            sampler: ScatteringSampler = UNIFORM_SPHERE) -> ScatteringAngle:
    return ScatteringAngle(sample_sigmas(d, 1, rng, sampler)[0])


# ---------------------------------------------------------------------
# Collision mechanics
# ---------------------------------------------------------------------
def reflect(v: np.ndarray, w: np.ndarray, sigma: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Reflection map on stacked arrays of shape (..., d):
        v* = v - (sigma . (v - w)) sigma
        w* = w + (sigma . (v - w)) sigma
    """
    proj = np.sum(sigma * (v - w), axis=-1, keepdims=True) * sigma
    return v - proj, w + proj


def apply_reflection(v, w, sigma: ScatteringAngle) -> Tuple[np.ndarray, np.ndarray]:
    v = np.asarray(v, dtype=float).reshape(-1)
    w = np.asarray(w, dtype=float).reshape(-1)
    if not (v.size == w.size == sigma.dim):
        raise ValidationError(
            f"dimension mismatch: |v|={v.size}, |w|={w.size}, |sigma|={sigma.dim}", field="sigma"
        )
    return reflect(v, w, sigma.sigma)


def apply_pair_collision(state: MasterState, c: PairCollision) -> MasterState:
    """Acts as M_sigma^{(i,j)}: blocks i and j reflected, all others untouched."""
    c.check_against(state.n_particles, state.dim)
    out = state.copy()
    blocks = out.blocks()
    blocks[c.i], blocks[c.j] = reflect(blocks[c.i], blocks[c.j], c.sigma.sigma)
    return out


def collision_matrix_dense(c: PairCollision, n_particles: int, d: int, cap: int = DENSE_CAP) -> np.ndarray:
    """
    Explicit (d n) x (d n) matrix of the pair collision; desk-scale only.
    `cap` bounds the side d n, so the matrix holds at most cap**2 entries.
    """
    size = d * n_particles
    if size > cap:
        raise DenseSizeError(f"dense collision matrix of size {size} exceeds cap {cap}", field="n_particles")
    c.check_against(n_particles, d)
    m = np.eye(size)
    p = c.sigma.projector()
    bi = slice(c.i * d, (c.i + 1) * d)
    bj = slice(c.j * d, (c.j + 1) * d)
    m[bi, bi] -= p
    m[bj, bj] -= p
    m[bi, bj] = p
    m[bj, bi] = p
    return m


def apply_collision_rows(x: np.ndarray, i: int, j: int, sigma: np.ndarray, d: int) -> None:
    """
    In-place left multiplication x <- M_sigma^{(i,j)} x for x of shape (d n,) or (d n, k).
    Only the 2d affected rows are touched.
    """
    bi = slice(i * d, (i + 1) * d)
    bj = slice(j * d, (j + 1) * d)
    diff = sigma @ (x[bi] - x[bj])
    update = np.multiply.outer(sigma, diff)
    x[bi] -= update
    x[bj] += update


def kinetic_energy(velocities: np.ndarray) -> float:
    """1/2 |v|^2 of a flat velocity vector (or blocks)."""
    v = np.asarray(velocities, dtype=float)
    return 0.5 * float(np.sum(v * v))


def sigma_rule(d: int, order: int, rng: np.random.Generator = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Nodes and weights averaging functions of sigma (x) sigma over the sphere:
    exact in d = 1, an equispaced half-circle grid in d = 2, Monte Carlo for d >= 3.
    """
    require(d >= 1, f"dimension must be >= 1, got {d}", "d")
    require(order >= 1, f"order must be >= 1, got {order}", "order")
    if d == 1:
        return np.ones((1, 1)), np.ones(1)
    if d == 2:
        theta = np.pi * (np.arange(order) + 0.5) / order
        return np.stack([np.cos(theta), np.sin(theta)], axis=1), np.full(order, 1.0 / order)
    if rng is None:
        raise ValidationError("a random generator is required for d >= 3", field="rng")
    return sample_sigmas(d, order, rng), np.full(order, 1.0 / order)
