"""Rotation toolkit tour: the corrective rotation, the 6D encoding and the angular loss.

Run: python demos/01_rotations.py
"""

import numpy as np

from tactile_placing import so3

np.set_printoptions(precision=4, suppress=True)

# The gripper is tilted and holds the object with a 0.6 rad in-hand rotation.
r_wg = so3.rot_x(0.4) @ so3.rot_z(1.1)
r_gp = so3.rot_y(0.6)
z_gt = so3.placing_normal(r_wg, r_gp)
print("placing normal in world:", z_gt)

# Suppose an estimator is off by 0.1 rad about the gripper y-axis.
estimate = so3.rot_y(0.7)
print("angular error of the estimate: %.4f rad" % so3.angular_loss(estimate, r_wg, z_gt))

# The corrective rotation turns the estimated normal onto the table normal.
zp = estimate @ so3.Z_AXIS
zs = so3.project_surface_normal(r_wg)
r_corr = so3.corrective_rotation(zp, zs)
after = so3.compose(r_wg, r_corr) @ r_gp @ so3.Z_AXIS
print("true normal after correction:", after)
print("residual tilt: %.4f rad (equals the estimation error)" % so3.angle_between(after, so3.Z_AXIS))

# Exactly opposite vectors still give a proper rotation.
flip = so3.corrective_rotation(so3.Z_AXIS, -so3.Z_AXIS)
print("half-turn for antiparallel input:\n", flip)

# A network emits six numbers; Gram-Schmidt turns them into a rotation.
raw = np.array([1.3, 0.2, -0.1, 0.4, 0.9, 0.3])
r = so3.sixd_to_rotation(raw)
print("6D output", raw, "->\n", r)
print("round trip back to 6D:", so3.rotation_to_sixd(r))
