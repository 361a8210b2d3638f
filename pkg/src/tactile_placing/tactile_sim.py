"""Synthetic stand-in for a pair of 16x16 piezo-resistive taxel arrays.

The grasped object's contact footprint is projected analytically onto both
sensor planes: cylinders leave a band whose force falls off smoothly across
its width, cuboids a filled rectangle whose force concentrates at the long
edges. The in-hand pose is one rotation angle in the sensor plane plus a 2-D
translation.

Sensor-plane coordinates are ``(x, z)`` of the gripper frame; image columns
run along gripper x and image rows along gripper z. The jaws close along
gripper y. At in-hand angle 0 the object's main axis (its placing normal) is
gripper +z, i.e. a vertical band in the image, and the ground-truth placing
rotation is ``rot_y(in_hand_angle)``.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import so3
from .errors import EmptyContactError
from .utils import atomic_write_text

N_TAXELS = 16
PITCH = 0.005  # m, 16 taxels span 8 cm
RAW_MAX = 4095
GRAVITY = 9.81
SUPERSAMPLE = 4

# constant wrist-side load: an end effector of ~1.5 kg, far heavier than any object
EE_BIAS_FORCE = np.array([0.82, -1.13, -14.21])
EE_BIAS_TORQUE = np.array([0.047, 0.214, -0.018])
TORQUE_NOISE_LEVER = 0.1  # m; torque noise std = force noise std * lever

CUBOID_BASE_LEVEL = 0.2


@dataclass(frozen=True)
class ObjectPrimitive:
    """Graspable primitive.

    ``dimensions`` is ``(radius, length)`` for a cylinder and
    ``(width, depth, length)`` for a cuboid, where ``width`` lies in the
    sensor plane, ``depth`` spans the jaws and ``length`` runs along the
    placing normal. ``com_fraction`` is the height of the center of mass
    above the placing face as a fraction of ``length``.
    """

    shape: str
    dimensions: tuple
    mass: float
    stiffness_profile: float = 0.3
    com_fraction: float = 0.5
    name: str = ""

    def __post_init__(self):
        expected = {"cylinder": 2, "cuboid": 3}
        if self.shape not in expected:
            raise ValueError(f"unknown shape {self.shape!r}")
        dims = tuple(float(d) for d in self.dimensions)
        if len(dims) != expected[self.shape]:
            raise ValueError(f"{self.shape} needs {expected[self.shape]} dimensions, got {len(dims)}")
        if min(dims) <= 0 or self.mass <= 0:
            raise ValueError("dimensions and mass must be strictly positive")
        if self.stiffness_profile < 0:
            raise ValueError("stiffness_profile must be >= 0")
        if not 0 < self.com_fraction < 1:
            raise ValueError("com_fraction must lie in (0, 1)")
        object.__setattr__(self, "dimensions", dims)
        if not self.name:
            object.__setattr__(self, "name", self.shape)

    @property
    def length(self):
        return self.dimensions[-1]

    @property
    def half_width(self):
        """Half extent of the placing face along the sensor plane."""
        return self.dimensions[0] if self.shape == "cylinder" else self.dimensions[0] / 2

    @property
    def half_depth(self):
        """Half extent of the placing face across the jaws."""
        return self.dimensions[0] if self.shape == "cylinder" else self.dimensions[1] / 2

    @property
    def com_height(self):
        return self.com_fraction * self.length


@dataclass
class TactileFrame:
    left: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        self.left = np.asarray(self.left, dtype=float)
        self.right = np.asarray(self.right, dtype=float)
        for side in (self.left, self.right):
            if side.shape != (N_TAXELS, N_TAXELS):
                raise ValueError(f"taxel grid must be {N_TAXELS}x{N_TAXELS}, got {side.shape}")
            if not np.all(np.isfinite(side)) or side.min() < 0 or side.max() > 1:
                raise ValueError("taxel values must lie in [0, 1]")

    def stacked(self):
        """``(16, 16, 2)`` array with left/right as channels."""
        return np.stack([self.left, self.right], axis=-1)

    def total(self):
        return float(self.left.sum() + self.right.sum())


@dataclass
class Wrench:
    force: np.ndarray
    torque: np.ndarray

    def __post_init__(self):
        self.force = np.asarray(self.force, dtype=float).reshape(3)
        self.torque = np.asarray(self.torque, dtype=float).reshape(3)
        if not (np.all(np.isfinite(self.force)) and np.all(np.isfinite(self.torque))):
            raise ValueError("wrench components must be finite")

    def as_vector(self):
        return np.concatenate([self.force, self.torque])


@dataclass
class Sample:
    tactile: TactileFrame
    wrench: Wrench
    r_world_gripper: np.ndarray
    r_gripper_placing_gt: np.ndarray
    z_gt_world: np.ndarray
    object_id: str
    seed: int = 0

    def label_error(self):
        z = so3.placing_normal(self.r_world_gripper, self.r_gripper_placing_gt)
        return float(np.abs(z - self.z_gt_world).max())

    def validate(self, tol=1e-9):
        for r in (self.r_world_gripper, self.r_gripper_placing_gt):
            if not so3.is_rotation(r):
                raise ValueError("sample holds a non-rotation matrix")
        if abs(np.linalg.norm(self.z_gt_world) - 1.0) > tol:
            raise ValueError("z_gt_world is not a unit vector")
        if self.label_error() > tol:
            raise ValueError("z_gt_world disagrees with the stored rotations")


def taxel_centers():
    """Sensor-plane ``(x, z)`` coordinates of every taxel center, shape ``(16, 16)`` each."""
    idx = (np.arange(N_TAXELS) - (N_TAXELS - 1) / 2) * PITCH
    z, x = np.meshgrid(idx, idx, indexing="ij")
    return x, z


def _subsample_grid():
    x, z = taxel_centers()
    k = ((np.arange(SUPERSAMPLE) + 0.5) / SUPERSAMPLE - 0.5) * PITCH
    dz, dx = np.meshgrid(k, k, indexing="ij")
    return x[:, :, None, None] + dx, z[:, :, None, None] + dz


_SUB_X, _SUB_Z = _subsample_grid()


def contact_profile(obj, in_hand_angle, grasp_offset, amplitude=0.6, gradient=(0.0, 0.0)):
    """Noise-free force image on the left sensor (taxel-area averaged).

    ``gradient`` is the relative pressure change per array half-width along
    and across the main axis, as left by a slightly misaligned pad. Contact
    spread grows with the square root of the grip amplitude (Hertz-like).
    """
    ox, oz = np.asarray(grasp_offset, dtype=float)
    sa, ca = np.sin(in_hand_angle), np.cos(in_hand_angle)
    px, pz = _SUB_X - ox, _SUB_Z - oz
    s = px * sa + pz * ca   # along the main axis
    t = px * ca - pz * sa   # across it
    along = np.abs(s) < obj.length / 2
    spread = np.sqrt(amplitude / 0.6)
    if obj.shape == "cylinder":
        w = max(0.5 * PITCH, obj.stiffness_profile * obj.dimensions[0] * spread)
        inside = along & (np.abs(t) < w)
        force = np.where(inside, np.cos(np.pi * t / (2 * w)) ** 2, 0.0)
    else:
        hw = obj.dimensions[0] / 2
        ridge_width = max(0.5 * PITCH, obj.stiffness_profile * hw * spread)
        inside = along & (np.abs(t) < hw)
        ridge = np.exp(-0.5 * ((hw - np.abs(t)) / ridge_width) ** 2)
        force = np.where(inside, CUBOID_BASE_LEVEL + (1 - CUBOID_BASE_LEVEL) * ridge, 0.0)
    half = N_TAXELS * PITCH / 2
    tilt = np.clip(1.0 + gradient[0] * s / half + gradient[1] * t / half, 0.0, None)
    return amplitude * (force * tilt).mean(axis=(2, 3))


def render_tactile(obj, in_hand_angle, grasp_offset, noise_std=0.0, seed=0, amplitude=0.6,
                   gradient=(0.0, 0.0)):
    """Render both sensor images for one grasp.

    The right image is the left one mirrored about the vertical taxel axis,
    each side receiving independent Gaussian noise before clamping to [0, 1].
    Raises ``EmptyContactError`` if the footprint misses the array.
    """
    if abs(in_hand_angle) > np.pi:
        raise ValueError("in_hand_angle must lie in [-pi, pi]")
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    clean = contact_profile(obj, in_hand_angle, grasp_offset, amplitude, gradient)
    if clean.max() < 1e-3 * amplitude:
        raise EmptyContactError(f"{obj.name}: footprint misses the taxel array")
    rng = np.random.default_rng(seed)
    left = clean + rng.normal(0.0, noise_std, clean.shape) if noise_std > 0 else clean.copy()
    right = clean[:, ::-1]
    if noise_std > 0:
        right = right + rng.normal(0.0, noise_std, clean.shape)
    return TactileFrame(np.clip(left, 0.0, 1.0), np.clip(right, 0.0, 1.0))


def to_raw_counts(frame):
    """Quantize a normalized frame to the sensor's integer range [0, 4095]."""
    return (np.rint(frame.left * RAW_MAX).astype(np.int64),
            np.rint(frame.right * RAW_MAX).astype(np.int64))


def normalize_raw(left_raw, right_raw):
    left_raw = np.asarray(left_raw)
    right_raw = np.asarray(right_raw)
    for raw in (left_raw, right_raw):
        if raw.min() < 0 or raw.max() > RAW_MAX:
            raise ValueError(f"raw readings must lie in [0, {RAW_MAX}]")
    return TactileFrame(left_raw / RAW_MAX, right_raw / RAW_MAX)


def synth_wrench(obj, r_world_gripper, r_gripper_object, com_offset, noise_std=0.0, rng=None):
    """Wrist wrench in the gripper frame.

    ``com_offset`` is the object's center of mass relative to the sensor
    origin, in the object frame. The object's gravity wrench is added to a
    constant end-effector bias an order of magnitude larger.
    """
    force = obj.mass * (np.asarray(r_world_gripper).T @ np.array([0.0, 0.0, -GRAVITY]))
    com = np.asarray(r_gripper_object) @ np.asarray(com_offset, dtype=float)
    torque = np.cross(com, force)
    force = force + EE_BIAS_FORCE
    torque = torque + EE_BIAS_TORQUE
    if noise_std > 0:
        rng = rng if rng is not None else np.random.default_rng()
        force = force + rng.normal(0.0, noise_std, 3)
        torque = torque + rng.normal(0.0, noise_std * TORQUE_NOISE_LEVER, 3)
    return Wrench(force, torque)


@dataclass
class GraspDraw:
    """Random quantities of one in-hand pose."""

    in_hand_angle: float
    grasp_offset: np.ndarray
    amplitude: float
    gradient: tuple = (0.0, 0.0)
    axial: float = 0.0


def draw_grasp(rng, in_hand_angle, max_lateral=0.01, max_axial=0.04, max_gradient=0.3):
    """Random grasp offset (expressed in sensor-plane x, z), grip amplitude and pad misalignment."""
    lateral = rng.uniform(-max_lateral, max_lateral)
    axial = rng.uniform(-max_axial, max_axial)
    sa, ca = np.sin(in_hand_angle), np.cos(in_hand_angle)
    offset = np.array([lateral * ca + axial * sa, -lateral * sa + axial * ca])
    amplitude = rng.uniform(0.5, 0.7)
    gradient = tuple(rng.uniform(-max_gradient, max_gradient, 2))
    return GraspDraw(in_hand_angle, offset, amplitude, gradient, axial)


def com_offset_in_object(obj, grasp):
    """Center of mass relative to the sensor origin, in the object frame."""
    r_go = so3.rot_y(grasp.in_hand_angle)
    center = np.array([grasp.grasp_offset[0], 0.0, grasp.grasp_offset[1]])
    com_gripper = center + (obj.com_fraction - 0.5) * obj.length * (r_go @ so3.Z_AXIS)
    return r_go.T @ com_gripper


def render_grasp(obj, rng, in_hand_angle, noise_std, retries=20):
    """Draw a grasp that touches the array and render it; returns ``(grasp, frame)``."""
    for _ in range(retries):
        grasp = draw_grasp(rng, in_hand_angle)
        try:
            frame = render_tactile(obj, in_hand_angle, grasp.grasp_offset, noise_std,
                                   seed=int(rng.integers(2**63)), amplitude=grasp.amplitude,
                                   gradient=grasp.gradient)
        except EmptyContactError:
            continue
        return grasp, frame
    raise EmptyContactError(f"{obj.name}: no touching grasp after {retries} draws")


def sample_seed(seed, *index):
    return int(np.random.SeedSequence([seed, *index]).generate_state(1, np.uint64)[0] >> 1)


def make_sample(obj, r_world_gripper, in_hand_angle, noise_std, wrench_noise_std, seed):
    rng = np.random.default_rng(seed)
    grasp, frame = render_grasp(obj, rng, in_hand_angle, noise_std)
    r_gp = so3.rot_y(in_hand_angle)
    wrench = synth_wrench(obj, r_world_gripper, r_gp, com_offset_in_object(obj, grasp),
                          wrench_noise_std, rng)
    return Sample(frame, wrench, r_world_gripper, r_gp,
                  so3.placing_normal(r_world_gripper, r_gp), obj.name, seed)


def generate_dataset(objects, n_arm_poses=80, n_inhand_per_pose=10, inhand_range=np.radians(160),
                     noise_std=0.02, seed=0, max_tilt=np.radians(60), wrench_noise_std=0.3):
    """Labeled samples over random arm poses and in-hand angles.

    For every object, ``n_arm_poses`` random gripper orientations (z-axis
    within ``max_tilt`` of vertical) each receive ``n_inhand_per_pose``
    in-hand angles drawn uniformly in ``+-inhand_range / 2``.
    """
    if n_arm_poses < 1 or n_inhand_per_pose < 1:
        raise ValueError("n_arm_poses and n_inhand_per_pose must be >= 1")
    if not objects:
        raise ValueError("need at least one object")
    samples = []
    for k, obj in enumerate(objects):
        for i in range(n_arm_poses):
            pose_rng = np.random.default_rng(sample_seed(seed, k, i))
            r_wg = so3.random_tilted_rotation(pose_rng, max_tilt)
            for j in range(n_inhand_per_pose):
                angle = pose_rng.uniform(-inhand_range / 2, inhand_range / 2)
                samples.append(make_sample(obj, r_wg, angle, noise_std, wrench_noise_std,
                                           sample_seed(seed, k, i, j + 1)))
    return samples


RECORD_FIELDS = ("object_id", "tactile_left", "tactile_right", "wrench", "r_world_gripper",
                 "r_gripper_placing_gt", "z_gt_world", "seed")


def sample_to_record(s):
    return {
        "object_id": s.object_id,
        "tactile_left": s.tactile.left.ravel().tolist(),
        "tactile_right": s.tactile.right.ravel().tolist(),
        "wrench": s.wrench.as_vector().tolist(),
        "r_world_gripper": np.asarray(s.r_world_gripper).ravel().tolist(),
        "r_gripper_placing_gt": np.asarray(s.r_gripper_placing_gt).ravel().tolist(),
        "z_gt_world": np.asarray(s.z_gt_world).ravel().tolist(),
        "seed": int(s.seed),
    }


def record_to_sample(rec):
    missing = set(RECORD_FIELDS) - rec.keys()
    extra = rec.keys() - set(RECORD_FIELDS)
    if missing or extra:
        raise ValueError(f"bad record fields: missing {sorted(missing)}, unexpected {sorted(extra)}")
    shape = (N_TAXELS, N_TAXELS)
    wrench = np.asarray(rec["wrench"], dtype=float)
    if wrench.shape != (6,):
        raise ValueError("wrench needs 6 values")
    s = Sample(
        tactile=TactileFrame(np.reshape(rec["tactile_left"], shape), np.reshape(rec["tactile_right"], shape)),
        wrench=Wrench(wrench[:3], wrench[3:]),
        r_world_gripper=np.reshape(np.asarray(rec["r_world_gripper"], dtype=float), (3, 3)),
        r_gripper_placing_gt=np.reshape(np.asarray(rec["r_gripper_placing_gt"], dtype=float), (3, 3)),
        z_gt_world=np.reshape(np.asarray(rec["z_gt_world"], dtype=float), 3),
        object_id=str(rec["object_id"]),
        seed=int(rec["seed"]),
    )
    s.validate()
    return s


def write_dataset(samples, path):
    lines = [json.dumps(sample_to_record(s), separators=(",", ":")) for s in samples]
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_dataset(path):
    with open(path) as fh:
        return [record_to_sample(json.loads(line)) for line in fh if line.strip()]


def stack_samples(samples):
    """Arrays for batched training: tactile ``(N,16,16,2)``, aux ``(N,6)``, rotations, normals."""
    return {
        "tactile": np.stack([s.tactile.stacked() for s in samples]),
        "aux": np.stack([s.wrench.as_vector() for s in samples]),
        "r_world_gripper": np.stack([s.r_world_gripper for s in samples]),
        "z_gt_world": np.stack([s.z_gt_world for s in samples]),
    }
