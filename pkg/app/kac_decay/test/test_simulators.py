# app/kac_decay/test/test_simulators.py
import math

import numpy as np
import pytest
from scipy import stats

from app.kac_decay.assets import simulators
from app.kac_decay.assets.errors import ValidationError
from app.kac_decay.assets.helpers import substream
from app.kac_decay.assets.kinematics import MasterState, kinetic_energy
from app.kac_decay.assets.oracles import energy_oracle
from app.kac_decay.assets.simulators import (
    EnergySphere,
    IsotropicGaussian,
    PointMass,
    ReservoirParams,
    ThermostatParams,
    WithReservoir,
    draw_reservoir_pairs,
    draw_thermostat_events,
    observables,
    simulate,
    simulate_trajectory,
    step_reservoir,
    step_thermostat,
)


def _sample_gaussian(p, beta0=0.5):
    return IsotropicGaussian(n_particles=p.N, d=p.d, beta0=beta0)


def test_thermostat_rates():
    p = ThermostatParams(d=2, N=3, lam=1.0, mu=2.0, beta=1.0)
    assert p.internal_rate == 3.0
    assert p.thermostat_rate == 6.0
    assert p.total_rate == 9.0
    single = ThermostatParams(d=2, N=1, lam=5.0, mu=2.0, beta=1.0)
    assert single.internal_rate == 0.0
    assert single.total_rate == 2.0


def test_reservoir_class_rates_and_empty_system_class():
    p = ReservoirParams(d=1, N=1, M=4, lam_s=2.0, lam_r=1.0, mu=3.0, beta=1.0)
    assert p.class_rates == (0.0, 2.0, 3.0)
    assert p.total_rate == 5.0
    p = ReservoirParams(d=1, N=4, M=2, lam_s=1.0, lam_r=1.0, mu=0.5, beta=1.0)
    assert p.total_rate == pytest.approx(4 / 2 + 2 / 2 + 0.5 * 4)


def test_parameter_validation_names_the_field():
    with pytest.raises(ValidationError) as exc:
        ReservoirParams(d=1, N=2, M=1, lam_s=1.0, lam_r=1.0, mu=1.0, beta=1.0)
    assert exc.value.field == "M"
    with pytest.raises(ValidationError) as exc:
        ThermostatParams(d=2, N=2, lam=1.0, mu=1.0, beta=0.0)
    assert exc.value.field == "beta"
    with pytest.raises(ValidationError) as exc:
        ThermostatParams(d=0, N=2, lam=1.0, mu=1.0, beta=1.0)
    assert exc.value.field == "d"


def test_zero_rate_step_never_moves(rng):
    p = ThermostatParams(d=2, N=2, lam=0.0, mu=0.0, beta=1.0)
    state = MasterState(2, 2, rng.standard_normal(4))
    moved, dt = step_thermostat(state, p, rng)
    assert math.isinf(dt)
    assert np.array_equal(moved.velocities, state.velocities)


def test_reservoir_steps_conserve_total_energy(rng, reservoir_params):
    p = reservoir_params
    state = MasterState(p.d, p.N + p.M, rng.standard_normal(p.d * (p.N + p.M)))
    e0 = kinetic_energy(state.velocities)
    for _ in range(200):
        state, dt = step_reservoir(state, p, rng)
        assert dt > 0
    assert kinetic_energy(state.velocities) == pytest.approx(e0, rel=1e-12)


def test_thermostat_event_draws(rng):
    p = ThermostatParams(d=2, N=4, lam=1.0, mu=1.0, beta=1.0)
    internal, i, j = draw_thermostat_events(p, 5000, rng)
    assert np.all(j[~internal] == -1)
    assert np.all(i[internal] < j[internal])
    assert np.all((i >= 0) & (i < p.N))
    assert abs(internal.mean() - 0.5) < 0.05

    no_internal = ThermostatParams(d=2, N=4, lam=0.0, mu=1.0, beta=1.0)
    internal, _, j = draw_thermostat_events(no_internal, 1000, rng)
    assert not internal.any()
    assert np.all(j == -1)


def test_reservoir_pair_draws_respect_classes(rng):
    p = ReservoirParams(d=2, N=3, M=4, lam_s=1.0, lam_r=2.0, mu=1.0, beta=1.0)
    cls, i, j = draw_reservoir_pairs(p, 20_000, rng)
    assert np.all(i < j)
    assert np.all(j[cls == 0] < p.N)
    assert np.all(i[cls == 1] >= p.N)
    assert np.all((i[cls == 2] < p.N) & (j[cls == 2] >= p.N))
    expected = np.asarray(p.class_rates) / p.total_rate
    observed = np.bincount(cls, minlength=3) / cls.size
    assert np.allclose(observed, expected, atol=0.02)


def test_simulate_is_identical_for_any_worker_count(thermostat_params):
    p = thermostat_params
    grid = np.array([0.0, 0.5, 1.0])
    kwargs = dict(n_trajectories=600, seed=11, block_size=200)
    one = simulate(p, _sample_gaussian(p), 1.0, grid, workers=1, **kwargs)
    two = simulate(p, _sample_gaussian(p), 1.0, grid, workers=2, **kwargs)
    assert np.array_equal(one.e_system.mean, two.e_system.mean)
    assert np.array_equal(one.e_system.stderr, two.e_system.stderr)
    assert np.array_equal(one.momentum.mean, two.momentum.mean)


def test_simulate_is_deterministic_per_seed(thermostat_params):
    p = thermostat_params
    grid = np.array([0.0, 1.0])
    a = simulate(p, _sample_gaussian(p), 1.0, grid, 300, seed=5)
    b = simulate(p, _sample_gaussian(p), 1.0, grid, 300, seed=5)
    c = simulate(p, _sample_gaussian(p), 1.0, grid, 300, seed=6)
    assert np.array_equal(a.e_system.mean, b.e_system.mean)
    assert not np.array_equal(a.e_system.mean, c.e_system.mean)


def test_thermostat_energy_follows_moment_ode(thermostat_params):
    p = thermostat_params
    grid = np.array([0.0, 0.5, 1.0, 2.0])
    initial = _sample_gaussian(p)
    ens = simulate(p, initial, 2.0, grid, 4000, seed=21)
    e0, _ = initial.moments()
    oracle = energy_oracle(p, grid, e0)
    z = np.abs(ens.e_system.mean - oracle) / ens.e_system.stderr
    assert np.all(z < 4.5), f"energy z-scores {z}"


def test_reservoir_ensemble_keeps_total_energy(reservoir_params):
    p = reservoir_params
    sampler = WithReservoir(_sample_gaussian(p), p.M, p.beta)
    ens = simulate(p, sampler, 2.0, np.linspace(0.0, 2.0, 5), 300, seed=3)
    assert ens.e_reservoir is not None
    assert ens.max_energy_drift <= 1e-10


def test_pure_internal_dynamics_keep_point_mass_energy():
    p = ThermostatParams(d=2, N=3, lam=2.0, mu=0.0, beta=1.0)
    start = PointMass.from_array([[1.0, 0.0], [0.0, 2.0], [-1.0, 1.0]])
    e0, p0 = start.moments()
    ens = simulate(p, start, 3.0, np.array([0.0, 1.0, 3.0]), 200, seed=1)
    assert np.allclose(ens.e_system.mean, e0, rtol=1e-12)
    assert np.allclose(ens.momentum.mean, p0[None, :], atol=1e-12)
    assert ens.n_events.mean > 0


def test_reference_trajectory_is_recorded_on_the_grid(rng, reservoir_params):
    p = reservoir_params
    blocks = WithReservoir(_sample_gaussian(p), p.M, p.beta).sample(1, rng)[0]
    state = MasterState.from_blocks(blocks)
    start = observables(state, p.N)
    record = simulate_trajectory(p, state, [0.0, 0.5, 1.5], rng, keep_snapshots=True)
    assert record.e_system[0] == start.e_system
    assert record.snapshots.shape == (3, p.d * (p.N + p.M))
    total = record.e_system + record.e_reservoir
    assert np.allclose(total, total[0], rtol=1e-12)


def test_record_grid_outside_run_is_rejected(thermostat_params):
    p = thermostat_params
    with pytest.raises(ValidationError) as exc:
        simulate(p, _sample_gaussian(p), 1.0, [0.0, 2.0], 10, seed=0)
    assert exc.value.field == "record_times"
    with pytest.raises(ValidationError):
        simulate(p, _sample_gaussian(p), 1.0, [0.5, 0.5], 10, seed=0)


def test_kept_records_carry_snapshots(thermostat_params):
    p = thermostat_params
    ens = simulate(p, _sample_gaussian(p), 1.0, [0.0, 1.0], 5, seed=2, keep_records=True)
    assert len(ens.records) == 5
    assert ens.records[0].snapshots.shape == (2, p.d * p.N)


def test_energy_sphere_sampler_hits_the_shell():
    sampler = EnergySphere(n_particles=3, d=2, energy=4.5)
    x = sampler.sample(50, substream(1, 2))
    energies = 0.5 * np.sum(x * x, axis=(1, 2))
    assert np.allclose(energies, 4.5)


def test_thermostat_waiting_times_are_exponential(rng, thermostat_params):
    p = thermostat_params
    state = MasterState.from_blocks(_sample_gaussian(p).sample(1, rng)[0])
    waits = []
    for _ in range(2000):
        state, dt = step_thermostat(state, p, rng)
        waits.append(dt)
    assert p.total_rate == pytest.approx((p.lam + p.mu) * p.N)
    result = stats.kstest(waits, stats.expon(scale=1.0 / p.total_rate).cdf)
    assert result.pvalue > 1e-3


def test_thermostat_event_counts_are_poisson(thermostat_params):
    p = thermostat_params
    n = 2000
    ens = simulate(p, _sample_gaussian(p), 1.0, [0.0, 1.0], n, seed=31, keep_records=True)
    counts = np.array([r.n_events for r in ens.records], dtype=float)
    expected = p.total_rate * 1.0
    assert abs(counts.mean() - expected) <= 4.5 * math.sqrt(expected / n)
    # sd of the sample variance of Poisson(6) over 2000 draws is about 0.2
    assert abs(counts.var(ddof=1) - expected) <= 1.0


def test_reservoir_drift_is_tracked_between_record_points(monkeypatch, reservoir_params):
    p = reservoir_params
    sampler = WithReservoir(_sample_gaussian(p), p.M, p.beta)
    clean = simulate(p, sampler, 2.0, [0.0], 50, seed=4)
    assert clean.max_energy_drift <= 1e-10
    real_reflect = simulators.reflect

    def heating_reflect(v, w, sigma):
        vi, wj = real_reflect(v, w, sigma)
        return 1.1 * vi, 1.1 * wj

    monkeypatch.setattr(simulators, "reflect", heating_reflect)
    heated = simulate(p, sampler, 2.0, [0.0], 50, seed=4)
    assert heated.max_energy_drift > 0.01


def test_observables_of_a_single_particle():
    obs = observables(MasterState(2, 1, [3.0, 4.0]))
    assert obs.e_system == pytest.approx(12.5)
    assert np.allclose(obs.momentum, [3.0, 4.0])


def test_equilibrium_sampler_has_equipartition_energy(rng):
    d, n_particles, beta = 3, 4, 2.0
    sampler = IsotropicGaussian(n_particles=n_particles, d=d, beta0=beta)
    expected = d * n_particles / (2.0 * beta)
    assert sampler.moments()[0] == pytest.approx(expected)
    x = sampler.sample(20_000, rng)
    energies = 0.5 * np.sum(x * x, axis=(1, 2))
    stderr = energies.std(ddof=1) / math.sqrt(energies.size)
    assert abs(energies.mean() - expected) <= 4.5 * stderr


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__]))
