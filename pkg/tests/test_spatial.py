import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aghfplan.spatial import (PlueckerTransform, SpatialInertia, axis_angle, inertia_apply,
                              inv_xform_motion, spatial_cross, transform_matrix_congruence,
                              transpose_force, xform_force, xform_motion)
from conftest import dense_crm, dense_force, dense_inertia, dense_motion


def random_rotation(rng):
    Q, R = np.linalg.qr(rng.normal(size=(3, 3)))
    Q = Q * np.sign(np.diag(R))
    if np.linalg.det(Q) < 0:
        Q[:, 0] = -Q[:, 0]
    return Q


def random_transform(rng):
    return PlueckerTransform(random_rotation(rng), rng.normal(size=3))


def random_inertia(rng):
    A = rng.normal(size=(3, 3))
    return SpatialInertia.from_com_inertia(rng.uniform(0.5, 3), rng.normal(size=3),
                                           A @ A.T + 0.1 * np.eye(3))


def test_identity_transform_is_noop(rng):
    X = PlueckerTransform.identity()
    m = rng.normal(size=6)
    assert np.array_equal(xform_motion(X, m), m)
    assert np.array_equal(xform_force(X, m), m)


def test_unit_translation_motion_example():
    X = PlueckerTransform(np.eye(3), np.array([1.0, 0, 0]))
    out = xform_motion(X, np.array([0, 0, 1.0, 0, 0, 0]))
    assert np.allclose(out, [0, 0, 1, 0, 1, 0], atol=1e-15)


def test_unit_translation_force_example():
    X = PlueckerTransform(np.eye(3), np.array([1.0, 0, 0]))
    f = np.array([0, 0, 0, 0, 1.0, 0])
    out = xform_force(X, f)
    assert np.allclose(out, dense_force(X) @ f, atol=1e-15)
    assert np.allclose(out[:3], [0, 0, -1])


def test_transforms_match_dense_oracle(rng):
    worst = 0.0
    for _ in range(1000):
        X = random_transform(rng)
        m = rng.normal(size=6)
        f = rng.normal(size=6)
        for got, want in ((xform_motion(X, m), dense_motion(X) @ m),
                          (xform_force(X, f), dense_force(X) @ f),
                          (inv_xform_motion(X, m), np.linalg.solve(dense_motion(X), m)),
                          (transpose_force(X, f), dense_motion(X).T @ f)):
            worst = max(worst, np.abs(got - want).max() / (1 + np.abs(want).max()))
    assert worst < 1e-12


def test_composition_and_inverse(rng):
    for _ in range(100):
        X1, X2 = random_transform(rng), random_transform(rng)
        m = rng.normal(size=6)
        a = xform_motion(X1.compose(X2), m)
        b = xform_motion(X1, xform_motion(X2, m))
        assert np.allclose(a, b, rtol=0, atol=1e-12 * (1 + np.abs(b).max()))
        back = xform_motion(X1.inverse(), xform_motion(X1, m))
        assert np.allclose(back, m, atol=1e-12 * (1 + np.abs(m).max()))


def test_composition_associative(rng):
    X1, X2, X3 = (random_transform(rng) for _ in range(3))
    A = dense_motion(X1.compose(X2).compose(X3))
    B = dense_motion(X1.compose(X2.compose(X3)))
    assert np.allclose(A, B, atol=1e-12)


def test_force_motion_duality(rng):
    for _ in range(200):
        X = random_transform(rng)
        m, f = rng.normal(size=6), rng.normal(size=6)
        assert abs(xform_force(X, f) @ xform_motion(X, m) - f @ m) < 1e-12 * (1 + abs(f @ m)) * 10


def test_batched_transform_matches_loop(rng):
    Xs = [random_transform(rng) for _ in range(5)]
    Xb = PlueckerTransform(np.stack([X.rotation for X in Xs]),
                           np.stack([X.translation for X in Xs]))
    m = rng.normal(size=(5, 6))
    loop = np.stack([xform_motion(X, mi) for X, mi in zip(Xs, m)])
    assert np.allclose(xform_motion(Xb, m), loop, atol=1e-14)


def test_validity_flags(rng):
    assert random_transform(rng).is_valid()
    assert not PlueckerTransform(2 * np.eye(3), np.zeros(3)).is_valid()
    assert not PlueckerTransform(-np.eye(3), np.zeros(3)).is_valid()


def test_cross_self_and_antisymmetry(rng):
    for _ in range(100):
        v, w = rng.normal(size=6), rng.normal(size=6)
        assert np.abs(spatial_cross(v, v)).max() < 1e-14
        assert np.abs(spatial_cross(v, w) + spatial_cross(w, v)).max() < 1e-14 * 10


def test_cross_matches_dense_and_duality(rng):
    for _ in range(200):
        v, m, f = rng.normal(size=(3, 6))
        assert np.allclose(spatial_cross(v, m, "motion"), dense_crm(v) @ m, atol=1e-13)
        assert np.allclose(spatial_cross(v, f, "force"), -dense_crm(v).T @ f, atol=1e-13)
        lhs = spatial_cross(v, f, "force") @ m
        rhs = -(f @ spatial_cross(v, m, "motion"))
        assert abs(lhs - rhs) < 1e-12 * (1 + abs(rhs))


def test_cross_rejects_unknown_mode():
    with pytest.raises(ValueError):
        spatial_cross(np.zeros(6), np.zeros(6), "twist")


def test_inertia_zero_motion_and_point_mass(rng):
    I = random_inertia(rng)
    assert np.array_equal(inertia_apply(I, np.zeros(6)), np.zeros(6))
    pm = SpatialInertia(2.5, np.zeros(3), np.zeros((3, 3)))
    a = np.array([1.0, -2.0, 0.5])
    out = inertia_apply(pm, np.concatenate((np.zeros(3), a)))
    assert np.allclose(out, np.concatenate((np.zeros(3), 2.5 * a)))


def test_inertia_matches_dense_and_is_psd(rng):
    for _ in range(1000):
        I = random_inertia(rng)
        m = rng.normal(size=6)
        want = dense_inertia(I.mass, I.com, I.rot_inertia) @ m
        assert np.abs(inertia_apply(I, m) - want).max() < 1e-12 * (1 + np.abs(want).max())
    M = I.matrix()
    assert np.allclose(M, M.T, atol=1e-14)
    assert np.linalg.eigvalsh(M).min() > -1e-12


def test_inertia_invariants():
    with pytest.raises(ValueError):
        SpatialInertia(0.0, np.zeros(3), np.eye(3))
    with pytest.raises(ValueError):
        SpatialInertia(1.0, np.zeros(3), np.array([[1, 0.5, 0], [0, 1, 0], [0, 0, 1]]))


def test_congruence_matches_dense(rng):
    X = random_transform(rng)
    I = random_inertia(rng).matrix()
    D = dense_motion(X)
    assert np.allclose(transform_matrix_congruence(X, I), D.T @ I @ D, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(-10, 10), st.lists(st.floats(-1, 1), min_size=3, max_size=3))
def test_axis_angle_is_rotation(theta, axis):
    axis = np.asarray(axis)
    if np.linalg.norm(axis) < 1e-3:
        axis = np.array([0.0, 0.0, 1.0])
    axis = axis / np.linalg.norm(axis)
    R = axis_angle(axis, theta)
    assert np.allclose(R.T @ R, np.eye(3), atol=1e-12)
    assert abs(np.linalg.det(R) - 1) < 1e-12
    assert np.allclose(R @ axis, axis, atol=1e-12)
