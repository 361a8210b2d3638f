"""Rotation-group helpers: frame composition, the 6D parameterization,
the angular placing loss and the corrective gripper rotation.

Rotations are plain ``(3, 3)`` float arrays; unit vectors are ``(3,)`` arrays.
The table normal is world +z throughout.
"""

import numpy as np

from .errors import DegenerateRotationError

Z_AXIS = np.array([0.0, 0.0, 1.0])
ORTHO_TOL = 1e-9


def rot_x(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def orthogonality_error(m):
    """Largest violation of the rotation invariants (``m.T m = I``, ``det m = 1``)."""
    m = np.asarray(m, dtype=float)
    return max(np.abs(m.T @ m - np.eye(3)).max(), abs(np.linalg.det(m) - 1.0))


def is_rotation(m, tol=ORTHO_TOL):
    m = np.asarray(m, dtype=float)
    return m.shape == (3, 3) and bool(np.all(np.isfinite(m))) and orthogonality_error(m) < tol


def orthonormalize(m):
    """Gram-Schmidt on the first two columns; the third is their cross product."""
    m = np.asarray(m, dtype=float)
    return sixd_to_rotation(m[:, 0], m[:, 1])


def compose(a, b):
    """Matrix product ``a @ b``, re-orthonormalized if round-off has drifted."""
    r = np.asarray(a, dtype=float) @ np.asarray(b, dtype=float)
    if orthogonality_error(r) > ORTHO_TOL:
        r = orthonormalize(r)
    return r


def placing_normal(r_world_gripper, r_gripper_placing):
    """Object placing normal in the world frame."""
    return compose(r_world_gripper, r_gripper_placing) @ Z_AXIS


def project_surface_normal(r_world_gripper):
    """Table normal (world +z) expressed in the gripper frame."""
    return np.asarray(r_world_gripper, dtype=float).T @ Z_AXIS


def skew(v):
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def axis_angle_to_matrix(axis, angle):
    """Rodrigues' formula. ``axis`` is normalized here."""
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n < 1e-15:
        return np.eye(3)
    k = skew(axis / n)
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def _orthogonal_axis(v):
    # world-x projected onto the plane orthogonal to v, world-y as fallback
    for ref in (np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])):
        p = ref - (ref @ v) * v
        n = np.linalg.norm(p)
        if n > 1e-6:
            return p / n
    raise AssertionError("unreachable for unit v")


def corrective_rotation(zp_gripper, zs_gripper):
    """Rotation ``R`` with ``R @ zp_gripper == zs_gripper``.

    The axis is ``zp x zs`` and the angle ``acos(zp . zs)``; the angle is
    evaluated as ``atan2(|zp x zs|, zp . zs)``, which is the same quantity
    without the loss of precision near 0 and pi. For (nearly) antiparallel
    inputs the axis is undefined, so the result is a half-turn about an axis
    orthogonal to ``zp`` followed by the small residual alignment.
    """
    zp = np.asarray(zp_gripper, dtype=float)
    zs = np.asarray(zs_gripper, dtype=float)
    zp = zp / np.linalg.norm(zp)
    zs = zs / np.linalg.norm(zs)
    dot = float(np.clip(zp @ zs, -1.0, 1.0))
    if dot <= -1.0 + 1e-12:
        flip = axis_angle_to_matrix(_orthogonal_axis(zp), np.pi)
        return compose(corrective_rotation(flip @ zp, zs), flip)
    axis = np.cross(zp, zs)
    sin_theta = np.linalg.norm(axis)
    if sin_theta < 1e-15:
        return np.eye(3)
    return axis_angle_to_matrix(axis, np.arctan2(sin_theta, dot))


def sixd_to_rotation(a1, a2=None):
    """Gram-Schmidt map from two (unconstrained) columns to a rotation.

    Accepts either a 6-vector ``[a1, a2]`` or the two 3-vectors separately.
    """
    if a2 is None:
        p = np.asarray(a1, dtype=float).reshape(6)
        a1, a2 = p[:3], p[3:]
    a1 = np.asarray(a1, dtype=float)
    a2 = np.asarray(a2, dtype=float)
    n1 = np.linalg.norm(a1)
    if not np.isfinite(n1) or n1 <= 1e-9:
        raise DegenerateRotationError(f"first column has norm {n1:.3g}")
    c1 = a1 / n1
    b = a2 - (c1 @ a2) * c1
    n2 = np.linalg.norm(b)
    if not np.isfinite(n2) or n2 <= 1e-9:
        raise DegenerateRotationError("second column is parallel to the first")
    c2 = b / n2
    return np.column_stack([c1, c2, np.cross(c1, c2)])


def rotation_to_sixd(r):
    r = np.asarray(r, dtype=float)
    return np.concatenate([r[:, 0], r[:, 1]])


def angular_loss(pred, r_world_gripper, z_gt_world):
    """Angle (rad) between the predicted and the true world placing normal."""
    z_pred = np.asarray(r_world_gripper, dtype=float) @ (np.asarray(pred, dtype=float) @ Z_AXIS)
    return float(np.arccos(np.clip(z_pred @ np.asarray(z_gt_world, dtype=float), -1.0, 1.0)))


def angle_between(u, v):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return float(np.arctan2(np.linalg.norm(np.cross(u, v)), u @ v))


def random_unit_vector(rng):
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def random_rotation(rng):
    """Haar-uniform rotation via a normalized random quaternion."""
    q = rng.normal(size=4)
    w, x, y, z = q / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def random_tilted_rotation(rng, max_tilt):
    """Random rotation whose z-axis lies within ``max_tilt`` of world +z.

    The z-axis is uniform over the spherical cap; yaw is uniform.
    """
    cos_tilt = rng.uniform(np.cos(max_tilt), 1.0)
    tilt = np.arccos(cos_tilt)
    azimuth = rng.uniform(-np.pi, np.pi)
    yaw = rng.uniform(-np.pi, np.pi)
    return rot_z(azimuth) @ rot_y(tilt) @ rot_z(yaw)


def inhand_angle(r_gripper_placing):
    """In-plane angle of the placing normal in the gripper x-z plane."""
    r = np.asarray(r_gripper_placing, dtype=float)
    return float(np.arctan2(r[0, 2], r[2, 2]))
