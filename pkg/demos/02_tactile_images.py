"""Synthetic tactile frames and the two classical line estimators.

Renders a cylinder and a cuboid at the same in-hand angle, prints the left
sensor as a coarse text heat map and compares the PCA and Hough axes.

Run: python demos/02_tactile_images.py
"""

import numpy as np

from tactile_placing import estimators as es, so3, tactile_sim as ts
from tactile_placing.catalog import OBJECTS

SHADES = " .:-=+*#%@"


def show(img):
    for row in img:
        print("    " + "".join(SHADES[min(int(v * len(SHADES)), len(SHADES) - 1)] * 2 for v in row))


angle = 0.5
for name in ("cylinder", "cuboid"):
    obj = OBJECTS[name]
    frame = ts.render_tactile(obj, angle, (0.002, -0.004), noise_std=0.02, seed=1)
    img = es.fuse_images(frame)
    print(f"{name}, in-hand angle {angle} rad, fused image:")
    show(img)
    truth = so3.rot_y(angle)
    for est in (es.PCAEstimator(), es.HoughEstimator()):
        r = est.estimate(frame)
        err = so3.angle_between(r @ so3.Z_AXIS, truth @ so3.Z_AXIS)
        print(f"  {est.kind:6s} normal error {err:.3f} rad")
    print()

# A cuboid pressed flat loads its rim more than its center, so the
# footprint is a hollow rectangle and the line fit has less to go on.
left = ts.render_tactile(OBJECTS["cuboid"], 0.0, (0, 0)).left
print("cuboid row 8 force profile:", np.round(left[8], 2))
