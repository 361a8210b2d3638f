"""Placing-normal estimators behind one ``estimate`` interface.

Classical estimators fuse both sensor images, fit the object's main axis as a
line in the taxel plane (force-weighted PCA or a binary Hough transform) and
turn the line angle into an in-plane rotation about the jaw axis. Image
coordinates are ``x = column``, ``y = row``; angles are measured from the
x axis towards y and reported modulo pi.
"""

import math

import numpy as np

from . import nn, so3
from .errors import DegenerateAxisError, NoLineFoundError

KINDS = ("nn-tactile", "nn-ft", "nn-tactile-ft", "pca", "hough", "oracle")
DEFAULT_THRESHOLD = 0.05


def fuse_images(frame):
    """Mean of the left image and the mirrored right image."""
    return 0.5 * (frame.left + frame.right[:, ::-1])


def _active(img, threshold):
    img = np.asarray(img, dtype=float)
    rows, cols = np.nonzero(img > threshold)
    return cols.astype(float), rows.astype(float), img[rows, cols]


def pca_axis(img, threshold=DEFAULT_THRESHOLD):
    """Orientation in [0, pi) of the major axis of the force-weighted taxel cloud."""
    x, y, w = _active(img, threshold)
    if len(w) < 2:
        raise NoLineFoundError(f"only {len(w)} taxel(s) above threshold {threshold}")
    w = w / w.sum()
    mx, my = w @ x, w @ y
    dx, dy = x - mx, y - my
    cov = np.array([[w @ (dx * dx), w @ (dx * dy)], [w @ (dx * dy), w @ (dy * dy)]])
    evals, evecs = np.linalg.eigh(cov)
    if evals[1] - evals[0] < 1e-9:
        raise DegenerateAxisError("isotropic taxel covariance")
    vx, vy = evecs[:, 1]
    return float(np.arctan2(vy, vx) % np.pi)


def hough_accumulator(binary, n_theta_bins=180, n_rho_bins=None):
    """Vote counts over (psi, rho) with ``rho = x cos(psi) + y sin(psi)``.

    ``psi`` spans [0, pi) in ``n_theta_bins`` steps. ``rho`` bins are centered
    on a symmetric grid over +-ceil(image diagonal); the default count gives
    one-taxel resolution. Returns ``(acc, psi, rho_max)``.
    """
    binary = np.asarray(binary, dtype=bool)
    rows, cols = np.nonzero(binary)
    rho_max = math.ceil(math.hypot(binary.shape[0] - 1, binary.shape[1] - 1))
    if n_rho_bins is None:
        n_rho_bins = 2 * rho_max + 1
    psi = np.arange(n_theta_bins) * np.pi / n_theta_bins
    rho = np.outer(cols, np.cos(psi)) + np.outer(rows, np.sin(psi))
    r_idx = np.rint((rho + rho_max) * (n_rho_bins - 1) / (2 * rho_max)).astype(np.int64)
    t_idx = np.broadcast_to(np.arange(n_theta_bins), r_idx.shape)
    acc = np.bincount((t_idx * n_rho_bins + r_idx).ravel(), minlength=n_theta_bins * n_rho_bins)
    return acc.reshape(n_theta_bins, n_rho_bins), psi, rho_max


def hough_axis(img, noise_threshold=DEFAULT_THRESHOLD, n_theta_bins=180, n_rho_bins=None):
    """Angle in [0, pi) of the most-voted line in the binarized image.

    Ties go to the lowest (psi, rho) bin index. The line runs perpendicular
    to its normal, so its angle is ``psi + pi/2`` modulo pi.
    """
    binary = np.asarray(img) > noise_threshold
    if binary.sum() < 2:
        raise NoLineFoundError(f"only {int(binary.sum())} taxel(s) above threshold {noise_threshold}")
    acc, psi, _ = hough_accumulator(binary, n_theta_bins, n_rho_bins)
    best_t, _ = np.unravel_index(np.argmax(acc), acc.shape)
    return float((psi[best_t] + np.pi / 2) % np.pi)


def line_angle_to_rotation(angle):
    """In-plane rotation whose placing normal runs along the fitted line.

    A zero in-hand angle shows up as a vertical line (``pi/2``) and maps to
    the identity. Lines are directionless, so the normal is taken on the side
    of gripper +z.
    """
    return so3.rot_y(np.pi / 2 - angle)


class Estimator:
    kind = ""

    def estimate(self, tactile=None, wrench=None, *, truth=None, seed=0):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.kind})"


class NeuralEstimator(Estimator):
    def __init__(self, params):
        self.params = params
        self.kind = params.kind
        self.last_output = None

    @classmethod
    def from_checkpoint(cls, path, kind=None):
        return cls(nn.load_checkpoint(path, expected_kind=kind))

    def raw_output(self, tactile=None, wrench=None):
        return nn.forward(self.params, tactile if self.params.uses_tactile else None,
                          wrench if self.params.uses_aux else None)

    def estimate(self, tactile=None, wrench=None, *, truth=None, seed=0):
        self.last_output = self.raw_output(tactile, wrench)
        return so3.sixd_to_rotation(self.last_output)


class PCAEstimator(Estimator):
    kind = "pca"

    def __init__(self, threshold=DEFAULT_THRESHOLD):
        self.threshold = threshold

    def axis(self, tactile):
        return pca_axis(fuse_images(tactile), self.threshold)

    def estimate(self, tactile=None, wrench=None, *, truth=None, seed=0):
        return line_angle_to_rotation(self.axis(tactile))


class HoughEstimator(Estimator):
    kind = "hough"

    def __init__(self, threshold=DEFAULT_THRESHOLD, n_theta_bins=180, n_rho_bins=None):
        self.threshold = threshold
        self.n_theta_bins = n_theta_bins
        self.n_rho_bins = n_rho_bins

    def axis(self, tactile):
        return hough_axis(fuse_images(tactile), self.threshold, self.n_theta_bins, self.n_rho_bins)

    def estimate(self, tactile=None, wrench=None, *, truth=None, seed=0):
        return line_angle_to_rotation(self.axis(tactile))


class OracleEstimator(Estimator):
    """Returns the ground truth, optionally perturbed like a motion-capture reading.

    With ``noise_std > 0`` the truth is rotated about a random axis by a
    Gaussian angle; the perturbation is seeded per call.
    """

    kind = "oracle"

    def __init__(self, noise_std=0.0):
        self.noise_std = noise_std

    def estimate(self, tactile=None, wrench=None, *, truth=None, seed=0):
        if truth is None:
            raise ValueError("the oracle estimator needs the ground-truth rotation")
        truth = np.asarray(truth, dtype=float)
        if self.noise_std == 0:
            return truth.copy()
        rng = np.random.default_rng(seed)
        noise = so3.axis_angle_to_matrix(so3.random_unit_vector(rng), rng.normal(0.0, self.noise_std))
        return so3.compose(noise, truth)


def make_estimator(kind, checkpoint=None, **options):
    """Build an estimator from a config record (kind + checkpoint or classical parameters)."""
    if kind in nn.ARCHITECTURES:
        if checkpoint is None:
            raise ValueError(f"{kind} needs a checkpoint path")
        return NeuralEstimator.from_checkpoint(checkpoint, kind)
    if kind == "pca":
        return PCAEstimator(**options)
    if kind == "hough":
        return HoughEstimator(**options)
    if kind == "oracle":
        return OracleEstimator(**options)
    raise ValueError(f"unknown estimator kind {kind!r}; choose from {', '.join(KINDS)}")
