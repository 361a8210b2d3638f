import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation as SciRot

from tactile_placing import so3
from tactile_placing.errors import DegenerateRotationError

X, Y, Z = np.eye(3)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
vec3 = st.tuples(finite, finite, finite).map(np.array).filter(lambda v: np.linalg.norm(v) > 1e-3)
unit3 = vec3.map(lambda v: v / np.linalg.norm(v))
seeds = st.integers(0, 2**32 - 1)


def rand_rot(seed):
    return SciRot.random(random_state=seed).as_matrix()


def test_elementary_rotations_match_scipy():
    for ang in (-2.0, 0.3, np.pi / 2):
        assert np.allclose(so3.rot_x(ang), SciRot.from_euler("x", ang).as_matrix(), atol=1e-15)
        assert np.allclose(so3.rot_y(ang), SciRot.from_euler("y", ang).as_matrix(), atol=1e-15)
        assert np.allclose(so3.rot_z(ang), SciRot.from_euler("z", ang).as_matrix(), atol=1e-15)


@given(seeds)
def test_compose_identity_and_inverse(seed):
    r = rand_rot(seed)
    assert np.allclose(so3.compose(np.eye(3), r), r, atol=1e-12)
    assert np.allclose(so3.compose(r, r.T), np.eye(3), atol=1e-9)


def test_compose_quarter_turns():
    r = so3.compose(so3.rot_z(np.pi / 2), so3.rot_z(np.pi / 2))
    assert np.allclose(r, np.diag([-1.0, -1.0, 1.0]), atol=1e-12)


def test_compose_reorthonormalizes_drift():
    r = so3.rot_z(0.4)
    drifted = r + 1e-6 * np.arange(9).reshape(3, 3)
    out = so3.compose(drifted, np.eye(3))
    assert so3.is_rotation(out)
    assert np.allclose(out, r, atol=1e-5)


def test_placing_normal_examples():
    assert np.allclose(so3.placing_normal(np.eye(3), np.eye(3)), Z)
    assert np.allclose(so3.placing_normal(np.eye(3), so3.rot_x(np.pi / 2)), [0, -1, 0], atol=1e-15)
    assert np.allclose(so3.placing_normal(so3.rot_x(np.pi / 2), so3.rot_x(-np.pi / 2)), Z, atol=1e-15)


def test_project_surface_normal_examples():
    assert np.allclose(so3.project_surface_normal(np.eye(3)), Z)
    assert np.allclose(so3.project_surface_normal(so3.rot_x(np.pi / 2)), [0, 1, 0], atol=1e-15)
    for ang in np.linspace(-3, 3, 7):
        assert np.allclose(so3.project_surface_normal(so3.rot_z(ang)), Z, atol=1e-15)


def test_axis_angle_matches_scipy():
    rng = np.random.default_rng(3)
    for _ in range(50):
        axis = so3.random_unit_vector(rng)
        ang = rng.uniform(-np.pi, np.pi)
        ref = SciRot.from_rotvec(axis * ang).as_matrix()
        assert np.allclose(so3.axis_angle_to_matrix(axis, ang), ref, atol=1e-12)


def test_corrective_rotation_examples():
    assert np.allclose(so3.corrective_rotation(Z, Z), np.eye(3))
    r = so3.corrective_rotation(X, Z)
    assert np.allclose(r, SciRot.from_rotvec([0, -np.pi / 2, 0]).as_matrix(), atol=1e-12)
    r = so3.corrective_rotation(-Z, Z)
    assert np.allclose(r @ -Z, Z, atol=1e-12)
    assert so3.is_rotation(r)


def test_corrective_rotation_is_minimal():
    # the rotation angle equals the angle between the two vectors
    rng = np.random.default_rng(9)
    for _ in range(100):
        a, b = so3.random_unit_vector(rng), so3.random_unit_vector(rng)
        r = so3.corrective_rotation(a, b)
        angle = np.linalg.norm(SciRot.from_matrix(r).as_rotvec())
        assert abs(angle - np.arccos(np.clip(a @ b, -1, 1))) < 1e-7


@settings(max_examples=300)
@given(unit3, unit3)
def test_corrective_rotation_postcondition(a, b):
    r = so3.corrective_rotation(a, b)
    assert so3.is_rotation(r)
    assert np.abs(r @ a - b).max() < 1e-9


@settings(max_examples=200)
@given(unit3, st.floats(0, 1e-6), st.booleans(), seeds)
def test_corrective_rotation_near_parallel_and_antiparallel(a, eps, anti, seed):
    perp = so3._orthogonal_axis(a)
    perp = so3.axis_angle_to_matrix(a, np.random.default_rng(seed).uniform(0, 2 * np.pi)) @ perp
    b = np.cos(eps) * a + np.sin(eps) * perp
    if anti:
        b = -b
    r = so3.corrective_rotation(a, b)
    assert so3.is_rotation(r)
    assert np.abs(r @ a - b).max() < 1e-9


def test_antiparallel_tie_break_axis():
    # half-turn about world-x projected onto the plane orthogonal to zp
    r = so3.corrective_rotation(Z, -Z)
    assert np.allclose(r, so3.rot_x(np.pi), atol=1e-12)
    # zp along world-x: fallback to world-y
    r = so3.corrective_rotation(X, -X)
    assert np.allclose(r, so3.rot_y(np.pi), atol=1e-12)


def test_sixd_examples():
    assert np.allclose(so3.sixd_to_rotation([1, 0, 0], [0, 1, 0]), np.eye(3))
    assert np.allclose(so3.sixd_to_rotation([2, 0, 0], [1, 1, 0]), np.eye(3))
    r = so3.sixd_to_rotation([0, 1, 0], [0, 0, 1])
    assert np.allclose(r, np.column_stack([Y, Z, X]))
    assert abs(np.linalg.det(r) - 1) < 1e-12
    assert np.allclose(so3.sixd_to_rotation([1, 0, 0, 0, 1, 0]), np.eye(3))


@pytest.mark.parametrize("a1,a2", [([0, 0, 0], [0, 1, 0]), ([1e-12, 0, 0], [0, 1, 0]),
                                   ([1, 0, 0], [3, 0, 0]), ([1, 2, 3], [-2, -4, -6]),
                                   ([np.nan, 0, 0], [0, 1, 0])])
def test_sixd_degenerate(a1, a2):
    with pytest.raises(DegenerateRotationError):
        so3.sixd_to_rotation(a1, a2)


@given(seeds)
def test_sixd_round_trip(seed):
    r = rand_rot(seed)
    assert np.abs(so3.sixd_to_rotation(so3.rotation_to_sixd(r)) - r).max() < 1e-9


@given(seeds, st.floats(1e-3, 1e3), st.floats(-10, 10))
def test_sixd_invariances(seed, scale, shear):
    rng = np.random.default_rng(seed)
    a1, a2 = rng.normal(size=3), rng.normal(size=3)
    perp = a2 - (a1 @ a2) / (a1 @ a1) * a1
    if np.linalg.norm(perp) < 1e-3 * np.linalg.norm(a2):
        return
    r = so3.sixd_to_rotation(a1, a2)
    assert so3.is_rotation(r)
    assert np.abs(so3.sixd_to_rotation(scale * a1, a2 + shear * a1) - r).max() < 1e-9


def test_angular_loss_examples():
    r_wg = so3.rot_x(0.7)
    z_gt = r_wg @ so3.rot_y(0.2) @ Z
    assert so3.angular_loss(so3.rot_y(0.2), r_wg, z_gt) < 1e-7
    assert abs(so3.angular_loss(so3.rot_y(0.2 + np.pi), r_wg, z_gt) - np.pi) < 1e-7
    assert abs(so3.angular_loss(so3.rot_y(0.2 + np.pi / 2), r_wg, z_gt) - np.pi / 2) < 1e-12


@given(seeds, seeds, st.floats(-np.pi, np.pi))
def test_angular_loss_bounds_and_normal_twist(s1, s2, twist):
    pred, r_wg = rand_rot(s1), rand_rot(s2)
    z_gt = so3.random_unit_vector(np.random.default_rng(s1 ^ s2))
    loss = so3.angular_loss(pred, r_wg, z_gt)
    assert 0 <= loss <= np.pi
    twisted = pred @ so3.rot_z(twist)  # spin about the predicted normal
    assert abs(so3.angular_loss(twisted, r_wg, z_gt) - loss) < 1e-7
    exact = so3.angular_loss(pred, r_wg, r_wg @ pred @ Z)
    assert exact < 1e-7


def test_random_rotation_is_haar_like():
    rng = np.random.default_rng(0)
    zs = np.array([so3.random_rotation(rng) @ Z for _ in range(4000)])
    assert all(so3.is_rotation(so3.random_rotation(rng)) for _ in range(100))
    # uniform on the sphere: mean 0, E[z_i^2] = 1/3
    assert np.abs(zs.mean(axis=0)).max() < 0.05
    assert np.abs((zs ** 2).mean(axis=0) - 1 / 3).max() < 0.03


def test_random_tilted_rotation_respects_cap():
    rng = np.random.default_rng(1)
    tilts = [so3.angle_between(so3.random_tilted_rotation(rng, 1.0) @ Z, Z) for _ in range(2000)]
    assert max(tilts) <= 1.0 + 1e-12
    # uniform on the cap: cos(tilt) uniform on [cos 1, 1]
    assert abs(np.mean(np.cos(tilts)) - (1 + np.cos(1.0)) / 2) < 0.01


def test_inhand_angle_inverts_rot_y():
    for ang in np.linspace(-3, 3, 13):
        assert abs(so3.inhand_angle(so3.rot_y(ang)) - ang) < 1e-12
