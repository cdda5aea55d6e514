# app/kac_decay/test/test_oracles.py
import math

import numpy as np
import pytest

from app.kac_decay.assets.errors import ValidationError
from app.kac_decay.assets.gaussian_states import entropy_gaussian_isotropic, fisher_info_gaussian_isotropic
from app.kac_decay.assets.oracles import (
    CLASSIC_KAC_ENTROPY,
    CLASSIC_KAC_INFORMATION,
    RESERVOIR_INFORMATION,
    THERMOSTAT_ENTROPY,
    THERMOSTAT_INFORMATION,
    classic_kac_exponent,
    classic_kac_params,
    energy_oracle,
    envelope,
    moment_ode,
    momentum_oracle,
    one_collision_moment,
    printed_lemma_energy,
    relative_functionals_dense,
)
from app.kac_decay.assets.simulators import ReservoirParams, ThermostatParams


def test_thermostat_envelope():
    p = ThermostatParams(d=3, N=4, lam=2.0, mu=1.5, beta=1.0)
    env = envelope(THERMOSTAT_ENTROPY, p)
    assert env.initial == pytest.approx(1.0)
    assert env.rate == pytest.approx(0.5)
    assert env.limit == 0.0
    assert env(2.0) == pytest.approx(math.exp(-1.0))
    assert "thermostat entropy" in env.provenance


def test_reservoir_envelope(reservoir_params):
    p = reservoir_params
    env = envelope(RESERVOIR_INFORMATION, p)
    assert env.initial == pytest.approx(1.0)
    assert env.limit == pytest.approx(p.N / (p.N + p.M))
    assert env.rate == pytest.approx(p.mu * (p.N + p.M) / (p.d * p.M))
    assert env(500.0) == pytest.approx(env.limit)


def test_envelope_rejects_unknown_ids_and_wrong_models(reservoir_params, thermostat_params):
    with pytest.raises(ValidationError) as exc:
        envelope("bogus", reservoir_params)
    assert exc.value.field == "theorem_id"
    with pytest.raises(ValidationError):
        envelope(THERMOSTAT_INFORMATION, reservoir_params)
    with pytest.raises(ValidationError):
        envelope(RESERVOIR_INFORMATION, thermostat_params)


def test_classic_kac_exponent_carries_the_dimension():
    assert classic_kac_exponent(2, 3) == pytest.approx(2.5)
    assert classic_kac_exponent(2, 3, d=2) == pytest.approx(1.25)
    for n, m, d in ((2, 3, 1), (3, 7, 2), (4, 4, 3)):
        env = envelope(CLASSIC_KAC_INFORMATION, classic_kac_params(d, n, m, 1.0))
        assert env.rate == pytest.approx(classic_kac_exponent(n, m, d))
    # the classic-kac envelope substitutes its own rates
    p = ReservoirParams(d=1, N=2, M=3, lam_s=9.0, lam_r=9.0, mu=9.0, beta=1.0)
    assert envelope(CLASSIC_KAC_ENTROPY, p).rate == pytest.approx(2.5)


def test_large_reservoir_envelope_approaches_thermostat():
    times = np.linspace(0.0, 10.0, 51)
    thermo = envelope(THERMOSTAT_INFORMATION, ThermostatParams(d=2, N=2, lam=1.0, mu=1.0, beta=1.0))
    big = envelope(RESERVOIR_INFORMATION, ReservoirParams(d=2, N=2, M=10_000, lam_s=1.0, lam_r=1.0,
                                                         mu=1.0, beta=1.0))
    assert np.max(np.abs(thermo(times) - big(times))) < 1e-3


def test_thermostat_moment_ode():
    p = ThermostatParams(d=3, N=5, lam=1.0, mu=2.0, beta=0.5)
    energy = moment_ode(p, "energy")
    assert energy.rate == pytest.approx(p.mu / p.d)
    x0 = np.array([1.0])
    equilibrium = p.d * p.N / (2.0 * p.beta)
    assert energy.solve([1e3], x0)[0, 0] == pytest.approx(equilibrium)
    assert energy.derivative([equilibrium])[0] == pytest.approx(0.0, abs=1e-12)
    assert moment_ode(p, "momentum").rate == pytest.approx(p.mu / p.d)


def test_energy_oracle_is_flat_without_thermostat():
    p = ThermostatParams(d=2, N=3, lam=1.0, mu=0.0, beta=1.0)
    assert np.allclose(energy_oracle(p, [0.0, 1.0, 5.0], 4.2), 4.2)


def test_reservoir_moment_ode_conserves_total(reservoir_params):
    p = reservoir_params
    ode = moment_ode(p, "energy")
    assert ode.rate == pytest.approx(p.mu * (p.N + p.M) / (p.d * p.M))
    sol = ode.solve(np.linspace(0.0, 4.0, 9), [6.0, 1.5])
    assert np.allclose(sol.sum(axis=1), 7.5)
    late = ode.solve([200.0], [6.0, 1.5])[0]
    assert late[0] == pytest.approx(7.5 * p.N / (p.N + p.M))


def test_momentum_oracle_decays_per_component(thermostat_params):
    p = thermostat_params
    curve = momentum_oracle(p, [0.0, 1.0], [1.0, -2.0])
    assert curve.shape == (2, 2)
    assert np.allclose(curve[1], np.array([1.0, -2.0]) * math.exp(-p.mu / p.d))


def test_printed_constants_differ_from_generator_constants(thermostat_params):
    p = thermostat_params
    times = np.array([0.0, 1.0, 3.0])
    printed = printed_lemma_energy(p, times, 1.0)
    derived = energy_oracle(p, times, 1.0)
    assert printed[0] == pytest.approx(derived[0])
    assert not np.isclose(printed[-1], derived[-1])


def test_one_collision_moment_symbolic():
    p = ThermostatParams(d=2, N=2, lam=1.0, mu=1.0, beta=0.5)
    thermo = one_collision_moment(p, "thermostat", n_samples=0)
    assert thermo.energy_v == pytest.approx(0.5)
    assert thermo.energy_0 == pytest.approx(2.0)
    cross = one_collision_moment(p, "cross", n_samples=0)
    assert (cross.energy_v, cross.energy_w, cross.mean_w) == pytest.approx((0.5, 0.5, 0.5))


def test_one_collision_moment_monte_carlo_cross_check(rng):
    p = ThermostatParams(d=3, N=2, lam=1.0, mu=1.0, beta=1.0)
    for which in ("thermostat", "cross", "internal"):
        mom = one_collision_moment(p, which, n_samples=20_000, rng=rng, n_directions=1)
        assert mom.max_z <= 4.0
        assert mom.n_samples == 20_000
    with pytest.raises(ValidationError):
        one_collision_moment(p, "elastic")


def test_dense_functionals_match_closed_forms():
    beta = 1.0
    for n in (1, 2):
        a = 0.5

        def log_density(x):
            return -0.5 * np.sum(x * x, axis=1) / a - 0.5 * n * math.log(2.0 * math.pi * a)

        ent, info = relative_functionals_dense(log_density, lambda x: -x / a, beta, n)
        assert ent == pytest.approx(entropy_gaussian_isotropic(a, beta, n), abs=1e-8)
        assert info == pytest.approx(fisher_info_gaussian_isotropic(a, beta, n), abs=1e-8)
    with pytest.raises(ValidationError):
        relative_functionals_dense(log_density, lambda x: -x, beta, 3)


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__]))
