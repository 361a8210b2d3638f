"""Four-phase placing loop over a free-floating gripper, a quasi-static
stability check, and the paired evaluation grid.

Object frames: the placing frame has its origin at the center of the
placing face, z along the placing normal (into the object), x across the
object in the sensor plane and y along the jaw axis.
"""

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import so3
from .errors import PlacingError
from .tactile_sim import render_grasp, render_tactile, sample_seed, synth_wrench, com_offset_in_object
from .utils import atomic_write_text


class PlacingPhase(enum.Enum):
    ESTIMATE_NORMAL = "EstimateNormal"
    CORRECTIVE_MOTION = "CorrectiveMotion"
    PLACING_MOTION = "PlacingMotion"
    RELEASE_RETRACT = "ReleaseRetract"


PHASE_ORDER = tuple(PlacingPhase)


@dataclass
class StabilityVerdict:
    success: bool
    tilt_angle: float
    reason: str  # stable | tipped | supported-by-gripper

    def __post_init__(self):
        if self.success != (self.reason == "stable"):
            raise ValueError("success must coincide with reason 'stable'")


@dataclass
class SimConfig:
    noise_std: float = 0.02
    wrench_noise_std: float = 0.3
    release_offset_std: float = 0.002
    step: float = 0.001
    threshold_ratio: float = 1.5
    clearance_range: tuple = (0.015, 0.03)
    contact_gain: float = 1.0
    max_extra_steps: int = 30


def support_reach(obj, azimuth=0.0):
    """Distance from the face center to the face boundary along ``azimuth``."""
    if obj.shape == "cylinder":
        return obj.dimensions[0]
    a, b = obj.half_width, obj.half_depth
    c, s = abs(math.cos(azimuth)), abs(math.sin(azimuth))
    return min(a / c if c > 1e-12 else math.inf, b / s if s > 1e-12 else math.inf)


def critical_tilt(obj, azimuth=0.0):
    """Largest tilt at which the center of mass still projects onto the face."""
    return math.atan2(support_reach(obj, azimuth), obj.com_height)


def stability_oracle(obj, final_normal_tilt, release_offset=(0.0, 0.0), azimuth=0.0):
    """Quasi-static verdict after release.

    The support polygon is the placing face projected onto the table; the
    object stays if the gravity line through its center of mass pierces it.
    ``azimuth`` is the downhill direction in the face frame; the release
    offset (m) is counted against the margin regardless of its direction.
    """
    tilt = float(final_normal_tilt)
    if not 0 <= tilt <= math.pi:
        raise ValueError("tilt must lie in [0, pi]")
    if tilt >= math.pi / 2:
        return StabilityVerdict(False, tilt, "tipped")
    shift = obj.com_height * math.tan(tilt) + float(np.hypot(*release_offset)) / math.cos(tilt)
    stable = shift < support_reach(obj, azimuth)
    return StabilityVerdict(stable, tilt, "stable" if stable else "tipped")


def contact_detector(stream, threshold_ratio=1.5):
    """First index whose value exceeds ``threshold_ratio`` times the first value."""
    stream = np.asarray(stream, dtype=float)
    if stream.size == 0:
        raise ValueError("empty tactile stream")
    hits = np.flatnonzero(stream > threshold_ratio * stream[0])
    return int(hits[0]) if hits.size else None


def object_points(obj, n_rim=72):
    """Surface points in the placing frame used for the lowest-point query."""
    length = obj.length
    if obj.shape == "cylinder":
        r = obj.dimensions[0]
        ang = np.linspace(0, 2 * np.pi, n_rim, endpoint=False)
        rim = np.stack([r * np.cos(ang), r * np.sin(ang), np.zeros_like(ang)], axis=1)
        return np.vstack([rim, rim + [0, 0, length]])
    a, b = obj.half_width, obj.half_depth
    return np.array([[sx * a, sy * b, z] for sx in (-1, 1) for sy in (-1, 1) for z in (0, length)])


def object_in_gripper(obj, grasp):
    """Placing-frame points expressed in the gripper frame."""
    r_go = so3.rot_y(grasp.in_hand_angle)
    center = np.array([grasp.grasp_offset[0], 0.0, grasp.grasp_offset[1]])
    face = center - obj.length / 2 * (r_go @ so3.Z_AXIS)
    return object_points(obj) @ r_go.T + face


@dataclass
class PlacingResult:
    verdict: StabilityVerdict | None
    angular_error: float
    estimate: np.ndarray | None
    phases: list = field(default_factory=list)
    normal_after_correction: np.ndarray | None = None
    contact_step: int | None = None
    geometric_contact_step: int | None = None
    failure: str = ""

    @property
    def success(self):
        return self.verdict is not None and self.verdict.success

    @property
    def reason(self):
        return self.verdict.reason if self.verdict is not None else self.failure.split(":")[0]


def run_placing(estimator, obj, r_world_gripper, r_gripper_placing_gt, cfg=None, seed=0):
    """One placing trial: estimate, correct, descend until contact, release."""
    cfg = cfg or SimConfig()
    rng = np.random.default_rng(seed)
    r_wg = np.asarray(r_world_gripper, dtype=float)
    r_gt = np.asarray(r_gripper_placing_gt, dtype=float)
    z_gt = so3.placing_normal(r_wg, r_gt)
    result = PlacingResult(None, math.nan, None)

    # EstimateNormal
    result.phases.append(PlacingPhase.ESTIMATE_NORMAL)
    grasp, frame = render_grasp(obj, rng, so3.inhand_angle(r_gt), cfg.noise_std)
    wrench = synth_wrench(obj, r_wg, r_gt, com_offset_in_object(obj, grasp), cfg.wrench_noise_std, rng)
    try:
        estimate = estimator.estimate(frame, wrench, truth=r_gt, seed=seed)
    except PlacingError as exc:
        result.failure = f"{type(exc).__name__}: {exc}"
        return result
    result.estimate = estimate
    result.angular_error = so3.angular_loss(estimate, r_wg, z_gt)

    # CorrectiveMotion
    result.phases.append(PlacingPhase.CORRECTIVE_MOTION)
    r_gg = so3.corrective_rotation(estimate @ so3.Z_AXIS, so3.project_surface_normal(r_wg))
    r_wg = so3.compose(r_wg, r_gg)
    r_wo = so3.compose(r_wg, r_gt)
    normal = r_wo @ so3.Z_AXIS
    result.normal_after_correction = normal

    # PlacingMotion: straight down in fixed steps until the tactile spike
    result.phases.append(PlacingPhase.PLACING_MOTION)
    heights = object_in_gripper(obj, grasp) @ r_wg.T[:, 2]
    clearance = rng.uniform(*cfg.clearance_range)
    start = clearance - heights.min()
    result.geometric_contact_step = math.ceil(clearance / cfg.step - 1e-9)
    stream = []
    max_steps = result.geometric_contact_step + cfg.max_extra_steps
    for k in range(max_steps + 1):
        lowest = start - k * cfg.step + heights.min()
        load = 1.0
        if lowest <= 0:
            load += cfg.contact_gain * (1.0 - lowest / cfg.step)
        amp = min(grasp.amplitude * load, 10.0)
        f = render_tactile(obj, grasp.in_hand_angle, grasp.grasp_offset, cfg.noise_std,
                           seed=int(rng.integers(2**63)), amplitude=amp, gradient=grasp.gradient)
        stream.append(f.total())
        hit = contact_detector(stream, cfg.threshold_ratio)
        if hit is not None:
            result.contact_step = hit
            break
    if result.contact_step is None:
        result.failure = "no-contact: descent ended without a tactile spike"
        return result

    # ReleaseRetract
    result.phases.append(PlacingPhase.RELEASE_RETRACT)
    tilt = so3.angle_between(normal, so3.Z_AXIS)
    downhill = normal * normal[2] - so3.Z_AXIS
    if np.linalg.norm(downhill) > 1e-12:
        d_obj = r_wo.T @ downhill
        azimuth = math.atan2(d_obj[1], d_obj[0])
        d_grip = r_wg.T @ downhill
    else:
        azimuth, d_grip = 0.0, np.zeros(3)
    offset = rng.normal(0.0, cfg.release_offset_std, 2)
    verdict = stability_oracle(obj, tilt, offset, azimuth)
    if not verdict.success and abs(d_grip[1]) > abs(d_grip[0]):
        # leaning across the jaws: the opened finger catches it
        verdict = StabilityVerdict(False, tilt, "supported-by-gripper")
    result.verdict = verdict
    return result


@dataclass
class TrialRow:
    method: str
    object: str
    arm_pose: int
    inhand_pose: int
    success: bool
    reason: str
    angular_error: float
    tilt: float
    estimate: np.ndarray | None
    r_world_gripper: np.ndarray
    z_gt_world: np.ndarray


REPORT_COLUMNS = ("method", "object", "trials", "successes", "success_rate", "ang_err_mean", "ang_err_std")


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)

    def methods(self):
        return list(dict.fromkeys(r.method for r in self.rows))

    def objects(self):
        return list(dict.fromkeys(r.object for r in self.rows))

    def cell(self, method, obj):
        rows = [r for r in self.rows if r.method == method and r.object == obj]
        errs = np.array([r.angular_error for r in rows if math.isfinite(r.angular_error)])
        successes = sum(r.success for r in rows)
        return {
            "method": method, "object": obj, "trials": len(rows), "successes": successes,
            "success_rate": successes / len(rows) if rows else math.nan,
            "ang_err_mean": float(errs.mean()) if errs.size else math.nan,
            "ang_err_std": float(errs.std()) if errs.size else math.nan,
        }

    def average(self, method):
        """Average over objects of the per-object figures."""
        cells = [self.cell(method, o) for o in self.objects()]
        cells = [c for c in cells if c["trials"]]
        return {
            "method": method, "object": "average",
            "trials": sum(c["trials"] for c in cells), "successes": sum(c["successes"] for c in cells),
            "success_rate": float(np.mean([c["success_rate"] for c in cells])),
            "ang_err_mean": float(np.nanmean([c["ang_err_mean"] for c in cells])),
            "ang_err_std": float(np.nanmean([c["ang_err_std"] for c in cells])),
        }

    def summary(self):
        out = []
        for m in self.methods():
            out += [self.cell(m, o) for o in self.objects()]
            out.append(self.average(m))
        return out

    def to_table(self):
        lines = ["\t".join(REPORT_COLUMNS)]
        for c in self.summary():
            lines.append("\t".join([c["method"], c["object"], str(c["trials"]), str(c["successes"]),
                                    f"{c['success_rate']:.4f}", f"{c['ang_err_mean']:.6f}",
                                    f"{c['ang_err_std']:.6f}"]))
        return "\n".join(lines) + "\n"

    def write(self, path):
        atomic_write_text(path, self.to_table())


def read_report(path):
    """Parse a written report table into a list of dicts."""
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if tuple(header) != REPORT_COLUMNS:
            raise ValueError(f"{path}: unexpected report header {header}")
        rows = []
        for line in fh:
            vals = line.rstrip("\n").split("\t")
            rows.append({"method": vals[0], "object": vals[1], "trials": int(vals[2]),
                         "successes": int(vals[3]), "success_rate": float(vals[4]),
                         "ang_err_mean": float(vals[5]), "ang_err_std": float(vals[6])})
    return rows


def evaluation_grid(objects, n_arm_poses=5, n_inhand_poses=4, seed=0,
                    inhand_range=np.radians(160), max_tilt=np.radians(60)):
    """Paired trial grid: ``(object index, i, j, r_world_gripper, r_gripper_placing, trial seed)``."""
    grid = []
    for k, obj in enumerate(objects):
        for i in range(n_arm_poses):
            pose_rng = np.random.default_rng(sample_seed(seed, 1000 + k, i))
            r_wg = so3.random_tilted_rotation(pose_rng, max_tilt)
            for j in range(n_inhand_poses):
                angle = pose_rng.uniform(-inhand_range / 2, inhand_range / 2)
                grid.append((k, i, j, r_wg, so3.rot_y(angle), sample_seed(seed, 1000 + k, i, j + 1)))
    return grid


def run_evaluation(methods, objects, n_arm_poses=5, n_inhand_poses=4, seed=0, cfg=None, names=None):
    """Run every method on the same factorial grid of arm and in-hand poses."""
    if not methods or not objects:
        raise ValueError("need at least one method and one object")
    names = names or [m.kind for m in methods]
    grid = evaluation_grid(objects, n_arm_poses, n_inhand_poses, seed)
    report = EvalReport()
    for name, method in zip(names, methods):
        for k, i, j, r_wg, r_gt, trial_seed in grid:
            res = run_placing(method, objects[k], r_wg, r_gt, cfg, trial_seed)
            report.rows.append(TrialRow(
                name, objects[k].name, i, j, res.success, res.reason, res.angular_error,
                res.verdict.tilt_angle if res.verdict else math.nan, res.estimate, r_wg,
                so3.placing_normal(r_wg, r_gt)))
    return report
