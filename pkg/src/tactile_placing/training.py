"""Minibatch training with the windowed-test-loss checkpoint rule."""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import nn, so3
from .errors import TrainingDiverged
from .tactile_sim import stack_samples
from .utils import atomic_write_text

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    arch: str = "nn-tactile"
    epochs: int = 40
    test_fraction: float = 0.2
    batch_size: int = 32
    lr: float = 1e-3
    momentum: float = 0.9
    seed: int = 0
    window: int = 10
    clip_norm: float = 10.0
    dropout: float = 0.2
    conv_channels: tuple = (16, 32)
    hidden: tuple = (128, 128)

    def __post_init__(self):
        if self.arch not in nn.ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.arch!r}; choose from {', '.join(nn.ARCHITECTURES)}")
        if not 0 < self.test_fraction < 1:
            raise ValueError("test_fraction must lie in (0, 1)")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.window < 1 or self.batch_size < 1:
            raise ValueError("window and batch_size must be >= 1")


@dataclass
class TrainLog:
    train: list = field(default_factory=list)        # (epoch, batch, loss)
    evaluations: list = field(default_factory=list)  # (epoch, windowed test loss)
    checkpoints: list = field(default_factory=list)  # (epoch, batch, windowed test loss)

    @property
    def best(self):
        return self.checkpoints[-1][2] if self.checkpoints else math.inf

    def to_text(self):
        lines = [f"train epoch={e} batch={b} loss={loss!r}" for e, b, loss in self.train]
        lines += [f"eval epoch={e} windowed_test_loss={v!r}" for e, v in self.evaluations]
        lines += [f"checkpoint epoch={e} batch={b} windowed_test_loss={v!r}" for e, b, v in self.checkpoints]
        return "\n".join(lines) + "\n"

    def write(self, path):
        atomic_write_text(path, self.to_text())


def split(samples, test_fraction=0.2, seed=0):
    """Deterministic shuffled split; the test side gets ``ceil(fraction * n)`` samples."""
    if not samples:
        raise ValueError("cannot split an empty dataset")
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must lie in (0, 1)")
    n = len(samples)
    n_test = min(max(1, math.ceil(test_fraction * n - 1e-9)), n - 1) if n > 1 else 1
    order = np.random.default_rng(seed).permutation(n)
    test = [samples[i] for i in sorted(order[:n_test])]
    train = [samples[i] for i in sorted(order[n_test:])]
    return train, test


def _inputs(params, arrays, idx):
    return (arrays["tactile"][idx] if params.uses_tactile else None,
            arrays["aux"][idx] if params.uses_aux else None)


def batch_losses(params, arrays, idx):
    """Per-sample inference-mode angular losses (exact clamp, as in evaluation)."""
    tactile, aux = _inputs(params, arrays, idx)
    out = nn.forward(params, tactile, aux)
    losses, _, valid = nn.sixd_loss_grad(out, arrays["r_world_gripper"][idx], arrays["z_gt_world"][idx],
                                         margin=0.0)
    return np.where(valid, losses, np.pi)


def windowed_test_loss(params, arrays, batch_size, window):
    """Mean loss of the last ``window`` test batches of one pass over the test set."""
    n = len(arrays["z_gt_world"])
    means = [batch_losses(params, arrays, np.arange(s, min(s + batch_size, n))).mean()
             for s in range(0, n, batch_size)]
    return float(np.mean(means[-window:]))


def train(cfg, data, test=None):
    """Train on ``data`` (split internally unless ``test`` is given).

    After every epoch the windowed test loss is refreshed and the parameters
    are snapshotted whenever it improves; the best snapshot is returned.
    """
    if test is None:
        train_set, test = split(data, cfg.test_fraction, cfg.seed)
    else:
        train_set = data
    if len(train_set) < 2:
        raise ValueError("need at least two training samples")
    tr = stack_samples(train_set)
    te = stack_samples(test)
    params = nn.init_params(cfg.arch, cfg.seed, conv_channels=cfg.conv_channels,
                            hidden=cfg.hidden, dropout=cfg.dropout)
    nn.set_aux_normalization(params, tr["aux"])
    opt = nn.MomentumSGD(cfg.lr, cfg.momentum)
    log_ = TrainLog()
    best = params.copy()
    n = len(train_set)
    step = 0
    for epoch in range(cfg.epochs):
        order = np.random.default_rng([cfg.seed, epoch]).permutation(n)
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            tactile, aux = _inputs(params, tr, idx)
            loss, grads = nn.loss_and_grads(params, tactile, aux, tr["r_world_gripper"][idx],
                                            tr["z_gt_world"][idx], rng_seed=(cfg.seed << 20) + step)
            if not math.isfinite(loss):
                raise TrainingDiverged(epoch, b, loss)
            opt.step(params, nn.clip_by_global_norm(grads, cfg.clip_norm))
            log_.train.append((epoch, b, loss))
            step += 1
        value = windowed_test_loss(params, te, cfg.batch_size, cfg.window)
        log_.evaluations.append((epoch, value))
        if value < log_.best:
            log_.checkpoints.append((epoch, step, value))
            best = params.copy()
        log.info("epoch %d: train %.4f, windowed test %.4f", epoch, loss, value)
    return best, log_


def evaluate_loss(params, samples):
    """Mean and std of the angular loss in inference mode."""
    if not samples:
        raise ValueError("need at least one sample")
    losses = np.array([so3.angular_loss(predict(params, s), s.r_world_gripper, s.z_gt_world)
                       for s in samples])
    return float(losses.mean()), float(losses.std())


def predict(params, sample):
    """Rotation estimate for one sample. Anything with an ``estimate`` method works too."""
    if hasattr(params, "estimate"):
        return params.estimate(sample.tactile, sample.wrench, truth=sample.r_gripper_placing_gt)
    out = nn.forward(params, sample.tactile if params.uses_tactile else None,
                     sample.wrench if params.uses_aux else None)
    return so3.sixd_to_rotation(out)
