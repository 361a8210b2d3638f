"""One placing trial, phase by phase, with a perfect and a poor estimate.

Run: python demos/04_placing_trial.py
"""

import numpy as np

from tactile_placing import estimators as es, placing as pl, so3
from tactile_placing.catalog import OBJECTS


class Skewed:
    """Ground truth turned by a fixed angle about the gripper y-axis."""

    kind = "skewed"

    def __init__(self, angle):
        self.angle = angle

    def estimate(self, tactile=None, wrench=None, *, truth=None, seed=0):
        return so3.rot_y(self.angle) @ truth


obj = OBJECTS["cheez_it"]
r_wg = so3.rot_x(0.5) @ so3.rot_z(0.3)
r_gp = so3.rot_y(-0.4)
print(f"{obj.name}: critical tilt {pl.critical_tilt(obj):.3f} rad across the wide side, "
      f"{pl.critical_tilt(obj, np.pi / 2):.3f} rad across the narrow side")

for est in (es.OracleEstimator(), Skewed(0.15), Skewed(0.6)):
    res = pl.run_placing(est, obj, r_wg, r_gp, seed=5)
    print(f"\n{est.kind}{'' if est.kind == 'oracle' else f' {est.angle}'}:")
    print("  phases:", " -> ".join(p.value for p in res.phases))
    print(f"  estimation error {res.angular_error:.3f} rad")
    print(f"  normal after correction {np.round(res.normal_after_correction, 3)}")
    print(f"  contact at step {res.contact_step} (geometry says {res.geometric_contact_step})")
    print(f"  outcome: {res.reason}, final tilt {res.verdict.tilt_angle:.3f} rad")
