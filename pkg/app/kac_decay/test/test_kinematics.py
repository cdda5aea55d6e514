# app/kac_decay/test/test_kinematics.py
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from app.kac_decay.assets.errors import DenseSizeError, ValidationError
from app.kac_decay.assets.kinematics import (
    AxisSampler,
    MasterState,
    PairCollision,
    ScatteringAngle,
    apply_collision_rows,
    apply_pair_collision,
    apply_reflection,
    collision_matrix_dense,
    kinetic_energy,
    reflect,
    sample_scattering_angle,
    sample_sigmas,
    sigma_rule,
)

velocity = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False, allow_infinity=False)
direction = st.floats(min_value=-1.0, max_value=1.0, allow_nan=False, allow_infinity=False)


@st.composite
def collisions(draw):
    d = draw(st.integers(min_value=1, max_value=4))
    v = draw(arrays(np.float64, d, elements=velocity))
    w = draw(arrays(np.float64, d, elements=velocity))
    raw = draw(arrays(np.float64, d, elements=direction).filter(lambda x: np.linalg.norm(x) > 1e-3))
    return v, w, raw / np.linalg.norm(raw)


def _sample_state(rng, n_particles=3, d=2):
    return MasterState(dim=d, n_particles=n_particles, velocities=rng.standard_normal(n_particles * d))


@settings(max_examples=200, deadline=None)
@given(collisions())
def test_reflection_conserves_energy_and_momentum(case):
    v, w, sigma = case
    v_star, w_star = reflect(v, w, sigma)
    before = v @ v + w @ w
    after = v_star @ v_star + w_star @ w_star
    assert after == pytest.approx(before, rel=1e-10, abs=1e-8)
    assert np.allclose(v_star + w_star, v + w, atol=1e-8)


@settings(max_examples=200, deadline=None)
@given(collisions())
def test_reflection_is_an_involution(case):
    v, w, sigma = case
    v1, w1 = reflect(v, w, sigma)
    v2, w2 = reflect(v1, w1, sigma)
    assert np.allclose(v2, v, atol=1e-8)
    assert np.allclose(w2, w, atol=1e-8)


def test_reflection_only_depends_on_sigma_up_to_sign(rng):
    v, w = rng.standard_normal(3), rng.standard_normal(3)
    sigma = sample_sigmas(3, 1, rng)[0]
    plus = reflect(v, w, sigma)
    minus = reflect(v, w, -sigma)
    assert np.allclose(plus[0], minus[0])
    assert np.allclose(plus[1], minus[1])


def test_dense_matrix_is_orthogonal_symmetric_with_det_minus_one(rng):
    for d in (1, 2, 3):
        c = PairCollision(0, 2, sample_scattering_angle(d, rng))
        m = collision_matrix_dense(c, 3, d)
        eye = np.eye(3 * d)
        assert np.allclose(m @ m, eye, atol=1e-12)
        assert np.allclose(m.T @ m, eye, atol=1e-12)
        assert np.allclose(m, m.T)
        assert np.linalg.det(m) == pytest.approx(-1.0, abs=1e-12)


def test_dense_matrix_matches_pair_collision(rng):
    state = _sample_state(rng, n_particles=4, d=2)
    c = PairCollision(1, 3, sample_scattering_angle(2, rng))
    moved = apply_pair_collision(state, c)
    m = collision_matrix_dense(c, 4, 2)
    assert np.allclose(moved.velocities, m @ state.velocities)
    # untouched particles stay bit-identical
    assert np.array_equal(moved.block(0), state.block(0))
    assert np.array_equal(moved.block(2), state.block(2))
    assert kinetic_energy(moved.velocities) == pytest.approx(kinetic_energy(state.velocities), rel=1e-13)


def test_collision_rows_match_dense_matrix(rng):
    d, n = 3, 3
    c = PairCollision(0, 1, sample_scattering_angle(d, rng))
    x = rng.standard_normal((d * n, 5))
    expected = collision_matrix_dense(c, n, d) @ x
    apply_collision_rows(x, 0, 1, c.sigma.sigma, d)
    assert np.allclose(x, expected)


def test_dense_matrix_respects_cap(rng):
    c = PairCollision(0, 1, sample_scattering_angle(2, rng))
    with pytest.raises(DenseSizeError):
        collision_matrix_dense(c, 40, 2)


def test_dense_cap_bounds_the_matrix_side(rng):
    c = PairCollision(0, 1, sample_scattering_angle(1, rng))
    m = collision_matrix_dense(c, 64, 1)
    assert m.shape == (64, 64)
    with pytest.raises(DenseSizeError) as exc:
        collision_matrix_dense(c, 65, 1)
    assert exc.value.field == "n_particles"
    assert collision_matrix_dense(c, 4, 1, cap=4).size == 16


def test_invalid_inputs_raise_validation_errors(rng):
    with pytest.raises(ValidationError) as exc:
        ScatteringAngle(np.array([1.0, 1.0]))
    assert exc.value.field == "sigma"

    with pytest.raises(ValidationError) as exc:
        PairCollision(2, 2, ScatteringAngle(np.array([1.0])))
    assert exc.value.field == "pair"

    state = _sample_state(rng, n_particles=3, d=2)
    with pytest.raises(ValidationError):
        apply_pair_collision(state, PairCollision(0, 3, ScatteringAngle(np.array([1.0, 0.0]))))
    with pytest.raises(ValidationError):
        apply_pair_collision(state, PairCollision(0, 1, ScatteringAngle(np.array([0.0, 0.0, 1.0]))))
    with pytest.raises(ValidationError):
        apply_reflection([1.0, 2.0], [3.0], ScatteringAngle(np.array([1.0, 0.0])))
    with pytest.raises(ValidationError):
        MasterState(dim=2, n_particles=3, velocities=np.zeros(5))


def test_samplers_return_unit_vectors(rng):
    for d in (1, 2, 5):
        sigmas = sample_sigmas(d, 1000, rng)
        assert sigmas.shape == (1000, d)
        assert np.allclose(np.linalg.norm(sigmas, axis=1), 1.0)
    axes = sample_sigmas(3, 500, rng, AxisSampler())
    assert np.allclose(np.abs(axes).sum(axis=1), 1.0)
    assert np.allclose(np.linalg.norm(axes, axis=1), 1.0)


def test_sigma_rule_averages_projector_to_identity_over_d():
    sigmas, weights = sigma_rule(2, 8)
    assert weights.sum() == pytest.approx(1.0)
    second = np.einsum("k,ki,kj->ij", weights, sigmas, sigmas)
    assert np.allclose(second, np.eye(2) / 2, atol=1e-14)

    sigmas, weights = sigma_rule(1, 5)
    assert sigmas.shape == (1, 1) and weights.tolist() == [1.0]


def test_sigma_rule_needs_generator_above_two_dimensions():
    with pytest.raises(ValidationError) as exc:
        sigma_rule(3, 16)
    assert exc.value.field == "rng"


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__]))
