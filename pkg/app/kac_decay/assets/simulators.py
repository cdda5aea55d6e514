# app/kac_decay/assets/simulators.py
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np

from app.kac_decay.assets.errors import ValidationError
from app.kac_decay.assets.helpers import (
    RunningMoments,
    block_ranges,
    merge_in_order,
    require,
    substream,
)
from app.kac_decay.assets.kinematics import (
    MasterState,
    PairCollision,
    ScatteringAngle,
    apply_pair_collision,
    reflect,
    sample_sigmas,
)

logger = logging.getLogger(__name__)

# Event classes
INTERNAL = "internal"
THERMOSTAT = "thermostat"
SYSTEM = "system"
RESERVOIR = "reservoir"
CROSS = "cross"
RESERVOIR_CLASSES = (SYSTEM, RESERVOIR, CROSS)

DEFAULT_BLOCK_SIZE = 256


# ---------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------
@dataclass(frozen=True)
class ThermostatParams:
    d: int
    N: int
    lam: float
    mu: float
    beta: float

    def __post_init__(self):
        require(self.d >= 1, f"d must be >= 1, got {self.d}", "d")
        require(self.N >= 1, f"N must be >= 1, got {self.N}", "N")
        require(self.lam >= 0, f"lambda must be >= 0, got {self.lam}", "lam")
        require(self.mu >= 0, f"mu must be >= 0, got {self.mu}", "mu")
        require(self.beta > 0, f"beta must be > 0, got {self.beta}", "beta")

    @property
    def internal_rate(self) -> float:
        # Q = 1 for a single particle
        return self.lam * self.N if self.N >= 2 else 0.0

    @property
    def thermostat_rate(self) -> float:
        return self.mu * self.N

    @property
    def total_rate(self) -> float:
        return self.internal_rate + self.thermostat_rate

    @property
    def n_particles(self) -> int:
        return self.N


@dataclass(frozen=True)
class ReservoirParams:
    d: int
    N: int
    M: int
    lam_s: float
    lam_r: float
    mu: float
    beta: float

    def __post_init__(self):
        require(self.d >= 1, f"d must be >= 1, got {self.d}", "d")
        require(self.N >= 1, f"N must be >= 1, got {self.N}", "N")
        require(self.M >= 2, f"M must be >= 2, got {self.M}", "M")
        for name in ("lam_s", "lam_r", "mu"):
            value = getattr(self, name)
            require(value >= 0, f"{name} must be >= 0, got {value}", name)
        require(self.beta > 0, f"beta must be > 0, got {self.beta}", "beta")

    @property
    def class_rates(self) -> Tuple[float, float, float]:
        """(system, reservoir, cross) rates; the system class is empty when N = 1."""
        system = self.lam_s * self.N / 2.0 if self.N >= 2 else 0.0
        return system, self.lam_r * self.M / 2.0, self.mu * self.N

    @property
    def total_rate(self) -> float:
        """Lambda = lam_s N/2 + lam_r M/2 + mu N."""
        return float(sum(self.class_rates))

    @property
    def n_particles(self) -> int:
        return self.N + self.M


Params = Union[ThermostatParams, ReservoirParams]


# ---------------------------------------------------------------------
# Observables and records
# ---------------------------------------------------------------------
@dataclass
class Observables:
    e_system: float
    momentum: np.ndarray
    e_reservoir: Optional[float] = None

    @property
    def e_kin(self) -> float:
        return self.e_system


def observables(state: MasterState, n_system: Optional[int] = None) -> Observables:
    """
    Kinetic energy 1/2 |v|^2 and momentum sum v_i of the system block.
    With `n_system` given, particles beyond it form the reservoir.
    """
    blocks = state.blocks()
    n_system = state.n_particles if n_system is None else n_system
    require(1 <= n_system <= state.n_particles, "n_system out of range", "n_system")
    system = blocks[:n_system]
    e_system = 0.5 * float(np.sum(system * system))
    e_reservoir = None
    if n_system < state.n_particles:
        reservoir = blocks[n_system:]
        e_reservoir = 0.5 * float(np.sum(reservoir * reservoir))
    return Observables(e_system=e_system, momentum=system.sum(axis=0), e_reservoir=e_reservoir)


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    e_system: np.ndarray
    momentum: np.ndarray
    e_reservoir: Optional[np.ndarray] = None
    snapshots: Optional[np.ndarray] = None
    n_events: int = 0

    def __post_init__(self):
        require(len(self.times) > 0 and float(self.times[0]) >= 0.0, "times must start at >= 0", "times")
        require(bool(np.all(np.diff(self.times) > 0)), "times must be strictly increasing", "times")
        require(len(self.e_system) == len(self.times), "e_system length mismatch", "e_system")
        require(len(self.momentum) == len(self.times), "momentum length mismatch", "momentum")
        if self.e_reservoir is not None:
            require(len(self.e_reservoir) == len(self.times), "e_reservoir length mismatch", "e_reservoir")


@dataclass
class Ensemble:
    """Ensemble means and standard errors on the record grid."""

    times: np.ndarray
    n_trajectories: int
    e_system: RunningMoments
    momentum: RunningMoments
    n_events: RunningMoments
    e_reservoir: Optional[RunningMoments] = None
    max_energy_drift: float = 0.0
    records: List[TrajectoryRecord] = field(default_factory=list)

    @property
    def e_system_mean(self) -> np.ndarray:
        return self.e_system.mean

    @property
    def e_system_stderr(self) -> np.ndarray:
        return self.e_system.stderr


# ---------------------------------------------------------------------
# Initial samplers
# ---------------------------------------------------------------------
class InitialSampler(Protocol):
    n_particles: int
    d: int

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """(n, n_particles, d) array of initial velocities."""
        ...


@dataclass(frozen=True)
class PointMass:
    velocities: Tuple[Tuple[float, ...], ...]

    @classmethod
    def from_array(cls, blocks) -> "PointMass":
        blocks = np.atleast_2d(np.asarray(blocks, dtype=float))
        return cls(tuple(tuple(float(x) for x in row) for row in blocks))

    @property
    def n_particles(self) -> int:
        return len(self.velocities)

    @property
    def d(self) -> int:
        return len(self.velocities[0])

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.velocities), (n, self.n_particles, self.d)).copy()

    def moments(self) -> Tuple[float, np.ndarray]:
        v = np.asarray(self.velocities)
        return 0.5 * float(np.sum(v * v)), v.sum(axis=0)


@dataclass(frozen=True)
class IsotropicGaussian:
    """Independent N(mean, (1/beta0) I) blocks; `mean` is shared by every particle."""

    n_particles: int
    d: int
    beta0: float
    mean: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        require(self.beta0 > 0, f"beta0 must be > 0, got {self.beta0}", "beta0")
        if self.mean is not None:
            require(len(self.mean) == self.d, "mean must have d components", "mean")

    def _mean(self) -> np.ndarray:
        return np.zeros(self.d) if self.mean is None else np.asarray(self.mean, dtype=float)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        x = rng.standard_normal((n, self.n_particles, self.d)) / math.sqrt(self.beta0)
        return x + self._mean()

    def moments(self) -> Tuple[float, np.ndarray]:
        m = self._mean()
        energy = self.n_particles * (self.d / (2.0 * self.beta0) + 0.5 * float(m @ m))
        return energy, self.n_particles * m


@dataclass(frozen=True)
class EnergySphere:
    """Uniform on the sphere 1/2 |v|^2 = energy in R^{d n}."""

    n_particles: int
    d: int
    energy: float

    def __post_init__(self):
        require(self.energy >= 0, f"energy must be >= 0, got {self.energy}", "energy")

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        x = rng.standard_normal((n, self.n_particles * self.d))
        x /= np.linalg.norm(x, axis=1, keepdims=True)
        x *= math.sqrt(2.0 * self.energy)
        return x.reshape(n, self.n_particles, self.d)

    def moments(self) -> Tuple[float, np.ndarray]:
        return self.energy, np.zeros(self.d)


@dataclass(frozen=True)
class WithReservoir:
    """System sampler followed by M Maxwellian(beta) reservoir particles."""

    system: InitialSampler
    M: int
    beta: float

    @property
    def n_particles(self) -> int:
        return self.system.n_particles + self.M

    @property
    def d(self) -> int:
        return self.system.d

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        sys_part = self.system.sample(n, rng)
        res_part = rng.standard_normal((n, self.M, self.d)) / math.sqrt(self.beta)
        return np.concatenate([sys_part, res_part], axis=1)


# ---------------------------------------------------------------------
# Event sampling
# ---------------------------------------------------------------------
def _distinct_pair(n: int, size: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Uniform unordered pairs i < j from range(n)."""
    a = rng.integers(0, n, size=size)
    b = rng.integers(0, n - 1, size=size)
    b = b + (b >= a)
    return np.minimum(a, b), np.maximum(a, b)


def draw_thermostat_events(p: ThermostatParams, size: int, rng: np.random.Generator):
    """
    Vectorised event draw: (internal, i, j). Internal events carry a uniform
    pair i < j; thermostat events a uniform particle i and j = -1.
    """
    require(p.total_rate > 0, "no events at zero total rate", "total_rate")
    internal = rng.random(size) < p.internal_rate / p.total_rate
    if p.N >= 2:
        i, j = _distinct_pair(p.N, size, rng)
    else:
        i, j = np.zeros(size, dtype=int), np.zeros(size, dtype=int)
    i = np.where(internal, i, rng.integers(0, p.N, size=size))
    j = np.where(internal, j, -1)
    return internal, i, j


def draw_reservoir_pairs(p: ReservoirParams, size: int, rng: np.random.Generator):
    """
    Vectorised event draw: (cls, i, j) with cls 0/1/2 for system/reservoir/cross,
    drawn proportionally to the class rates, and the pair uniform inside the class.
    Reservoir particles are indexed N..N+M-1.
    """
    require(p.total_rate > 0, "no events at zero total rate", "total_rate")
    rates = np.asarray(p.class_rates)
    cls = np.searchsorted(np.cumsum(rates), rng.random(size) * rates.sum(), side="right")
    cls = np.minimum(cls, 2)
    if p.N >= 2:
        si, sj = _distinct_pair(p.N, size, rng)
    else:
        si = sj = np.zeros(size, dtype=int)
    ri, rj = _distinct_pair(p.M, size, rng)
    ci = rng.integers(0, p.N, size=size)
    cj = rng.integers(0, p.M, size=size)
    i = np.select([cls == 0, cls == 1], [si, ri + p.N], ci)
    j = np.select([cls == 0, cls == 1], [sj, rj + p.N], cj + p.N)
    return cls, i, j


def sample_thermostat_event(p: ThermostatParams, rng: np.random.Generator):
    """(kind, i, j): j is -1 for a thermostat event on particle i."""
    internal, i, j = draw_thermostat_events(p, 1, rng)
    return (INTERNAL if internal[0] else THERMOSTAT), int(i[0]), int(j[0])


def sample_reservoir_event(p: ReservoirParams, rng: np.random.Generator):
    cls, i, j = draw_reservoir_pairs(p, 1, rng)
    return RESERVOIR_CLASSES[int(cls[0])], int(i[0]), int(j[0])


# ---------------------------------------------------------------------
# Single-trajectory stepping
# ---------------------------------------------------------------------
def step_thermostat(state: MasterState, p: ThermostatParams, rng: np.random.Generator):
    """One Gillespie step of the thermostat model; dt = inf when nothing can happen."""
    require(state.n_particles == p.N and state.dim == p.d, "state does not match parameters", "state")
    if p.total_rate <= 0:
        return state.copy(), math.inf
    dt = float(rng.exponential(1.0 / p.total_rate))
    kind, i, j = sample_thermostat_event(p, rng)
    sigma = ScatteringAngle(sample_sigmas(p.d, 1, rng)[0])
    if kind == INTERNAL:
        return apply_pair_collision(state, PairCollision(i, j, sigma)), dt
    out = state.copy()
    partner = rng.standard_normal(p.d) / math.sqrt(p.beta)
    out.blocks()[i], _ = reflect(out.blocks()[i], partner, sigma.sigma)
    return out, dt


def step_reservoir(state: MasterState, p: ReservoirParams, rng: np.random.Generator):
    """One Gillespie step of the heat-reservoir model on N + M particles."""
    require(state.n_particles == p.N + p.M and state.dim == p.d, "state must hold N + M particles", "state")
    if p.total_rate <= 0:
        return state.copy(), math.inf
    dt = float(rng.exponential(1.0 / p.total_rate))
    _, i, j = sample_reservoir_event(p, rng)
    sigma = ScatteringAngle(sample_sigmas(p.d, 1, rng)[0])
    return apply_pair_collision(state, PairCollision(i, j, sigma)), dt


def simulate_trajectory(params: Params, state: MasterState, record_times: Sequence[float],
                        rng: np.random.Generator, keep_snapshots: bool = False) -> TrajectoryRecord:
    """
    Reference (unvectorised) trajectory: the value at each grid time is the
    last state before it, so sample paths stay piecewise constant.
    """
    grid = _check_grid(record_times, float(record_times[-1]))
    stepper = step_reservoir if isinstance(params, ReservoirParams) else step_thermostat
    n_system = params.N
    rows, snaps = [], []
    t, k, events = 0.0, 0, 0
    while k < len(grid):
        nxt, dt = stepper(state, params, rng)
        t_new = t + dt
        while k < len(grid) and grid[k] < t_new:
            rows.append(observables(state, n_system))
            if keep_snapshots:
                snaps.append(state.velocities.copy())
            k += 1
        if math.isinf(dt):
            break
        if t_new <= grid[-1]:
            events += 1
        state, t = nxt, t_new
    return TrajectoryRecord(
        times=grid,
        e_system=np.array([r.e_system for r in rows]),
        momentum=np.array([r.momentum for r in rows]),
        e_reservoir=None if rows[0].e_reservoir is None else np.array([r.e_reservoir for r in rows]),
        snapshots=np.array(snaps) if keep_snapshots else None,
        n_events=events,
    )


# ---------------------------------------------------------------------
# Vectorised block engine
# ---------------------------------------------------------------------
def _check_grid(record_times: Sequence[float], t_end: float) -> np.ndarray:
    grid = np.asarray(record_times, dtype=float).reshape(-1)
    if grid.size == 0:
        raise ValidationError("record grid is empty", field="record_times")
    if not np.all(np.isfinite(grid)) or grid[0] < 0 or grid[-1] > t_end:
        raise ValidationError(f"record grid must lie in [0, {t_end}]", field="record_times")
    if np.any(np.diff(grid) <= 0):
        raise ValidationError("record grid must be strictly increasing", field="record_times")
    return grid


def _jump_thermostat(v: np.ndarray, rows: np.ndarray, p: ThermostatParams, rng: np.random.Generator) -> None:
    b = rows.size
    internal, i, j = draw_thermostat_events(p, b, rng)
    jj = np.maximum(j, 0)
    sigma = sample_sigmas(p.d, b, rng)
    partner = rng.standard_normal((b, p.d)) / math.sqrt(p.beta)
    partner = np.where(internal[:, None], v[rows, jj], partner)
    vi, wj = reflect(v[rows, i], partner, sigma)
    v[rows, i] = vi
    v[rows[internal], jj[internal]] = wj[internal]


def _jump_reservoir(v: np.ndarray, rows: np.ndarray, p: ReservoirParams, rng: np.random.Generator) -> None:
    _, i, j = draw_reservoir_pairs(p, rows.size, rng)
    sigma = sample_sigmas(p.d, rows.size, rng)
    vi, vj = reflect(v[rows, i], v[rows, j], sigma)
    v[rows, i] = vi
    v[rows, j] = vj


def _simulate_block(params: Params, sampler: InitialSampler, grid: np.ndarray, t_end: float,
                    n: int, rng: np.random.Generator, keep_records: bool):
    is_reservoir = isinstance(params, ReservoirParams)
    n_sys = params.N
    v = sampler.sample(n, rng)
    require(v.shape[1:] == (params.n_particles, params.d), "initial sampler does not match parameters", "initial")
    g = grid.size
    e_sys = np.empty((n, g))
    e_res = np.empty((n, g)) if is_reservoir else None
    mom = np.empty((n, g, params.d))
    snaps = np.empty((n, g) + v.shape[1:]) if keep_records else None
    e_total0 = 0.5 * np.sum(v * v, axis=(1, 2))
    t = np.zeros(n)
    next_k = np.zeros(n, dtype=int)
    n_events = np.zeros(n, dtype=int)
    active = np.arange(n)
    drift = 0.0
    rate = params.total_rate
    jump = _jump_reservoir if is_reservoir else _jump_thermostat

    while active.size:
        if rate > 0:
            t_new = t[active] + rng.exponential(1.0 / rate, size=active.size)
        else:
            t_new = np.full(active.size, math.inf)
        # record pre-jump state at every grid time passed by this jump
        while True:
            k = next_k[active]
            pending = k < g
            hit = pending & (grid[np.minimum(k, g - 1)] < t_new)
            if not hit.any():
                break
            rows, cols = active[hit], k[hit]
            blk = v[rows]
            sys_blk = blk[:, :n_sys]
            e_sys[rows, cols] = 0.5 * np.sum(sys_blk * sys_blk, axis=(1, 2))
            mom[rows, cols] = sys_blk.sum(axis=1)
            if is_reservoir:
                res_blk = blk[:, n_sys:]
                e_res[rows, cols] = 0.5 * np.sum(res_blk * res_blk, axis=(1, 2))
            if keep_records:
                snaps[rows, cols] = blk
            next_k[rows] += 1
        alive = t_new <= t_end
        rows = active[alive]
        if rows.size:
            jump(v, rows, params, rng)
            t[rows] = t_new[alive]
            n_events[rows] += 1
            if is_reservoir:
                # after every jump, not only on the record grid
                e_now = 0.5 * np.sum(v[rows] * v[rows], axis=(1, 2))
                e_ref = np.maximum(e_total0[rows], 1e-300)
                drift = max(drift, float(np.max(np.abs(e_now - e_total0[rows]) / e_ref)))
        active = rows

    records = []
    if keep_records:
        for r in range(n):
            records.append(TrajectoryRecord(
                times=grid, e_system=e_sys[r], momentum=mom[r],
                e_reservoir=None if e_res is None else e_res[r],
                snapshots=snaps[r].reshape(g, -1), n_events=int(n_events[r]),
            ))
    return (
        RunningMoments.from_samples(e_sys),
        None if e_res is None else RunningMoments.from_samples(e_res),
        RunningMoments.from_samples(mom),
        RunningMoments.from_samples(n_events.astype(float)),
        drift,
        records,
    )


def _run_block(args):
    params, sampler, grid, t_end, seed, block, n, keep_records = args
    return _simulate_block(params, sampler, grid, t_end, n, substream(seed, 1, block), keep_records)


def simulate(params: Params, initial_sampler: InitialSampler, t_end: float,
             record_times: Sequence[float], n_trajectories: int, seed: int,
             workers: int = 1, block_size: int = DEFAULT_BLOCK_SIZE,
             keep_records: bool = False) -> Ensemble:
    """
    Ensemble of independent trajectories reduced on the record grid.

    Trajectories are cut into fixed blocks of `block_size`; block b draws from
    substream(seed, 1, b) and the block moments are merged in block order,
    so the result is identical for any `workers`.
    """
    require(t_end >= 0, f"t_end must be >= 0, got {t_end}", "t_end")
    require(n_trajectories >= 1, "n_trajectories must be >= 1", "n_trajectories")
    require(workers >= 1, "workers must be >= 1", "workers")
    grid = _check_grid(record_times, t_end)
    tasks = [
        (params, initial_sampler, grid, t_end, seed, b, stop - start, keep_records)
        for b, start, stop in block_ranges(n_trajectories, block_size)
    ]
    logger.info("simulating %d trajectories in %d blocks (workers=%d)", n_trajectories, len(tasks), workers)
    if workers == 1 or len(tasks) == 1:
        results = [_run_block(task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_block, tasks))

    e_sys = merge_in_order([r[0] for r in results])
    e_res = merge_in_order([r[1] for r in results]) if results[0][1] is not None else None
    mom = merge_in_order([r[2] for r in results])
    events = merge_in_order([r[3] for r in results])
    records: List[TrajectoryRecord] = []
    for r in results:
        records.extend(r[5])
    return Ensemble(
        times=grid,
        n_trajectories=n_trajectories,
        e_system=e_sys,
        momentum=mom,
        n_events=events,
        e_reservoir=e_res,
        max_energy_drift=max(r[4] for r in results),
        records=records,
    )
