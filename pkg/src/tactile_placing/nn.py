"""Small numpy network with hand-written reverse-mode differentiation.

Supports exactly what the placing estimator needs: valid 3x3 convolutions
over the two stacked taxel images, dense layers, ReLU, dropout, and an
optional wrench input concatenated in front of the MLP. The output is a 6D
rotation parameterization; ``loss_and_grads`` differentiates the angular
placing loss through acos, the normal extraction and Gram-Schmidt.

Layout is NHWC: a tactile batch is ``(B, 16, 16, 2)``.
"""

import hashlib
import json
import logging
import struct
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import FingerprintMismatchError
from .utils import atomic_write_bytes

log = logging.getLogger(__name__)

ARCHITECTURES = ("nn-tactile", "nn-ft", "nn-tactile-ft")
AUX_DIM = 6
IDENTITY_6D = np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])
LOSS_CLAMP = 1e-7

CHECKPOINT_MAGIC = b"TPLACKPT"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    name: str = ""
    size: tuple = ()
    p: float = 0.0

    def as_dict(self):
        return {"kind": self.kind, "name": self.name, "size": list(self.size), "p": self.p}


def build_architecture(kind, conv_channels=(16, 32), hidden=(128, 128), dropout=0.2,
                       image_size=16, kernel=3):
    """Layer sequence for one of the three estimator variants."""
    if kind not in ARCHITECTURES:
        raise ValueError(f"unknown architecture {kind!r}; choose from {', '.join(ARCHITECTURES)}")
    if not 0 <= dropout < 1:
        raise ValueError("dropout probability must lie in [0, 1)")
    layers = []
    features = 0
    if kind != "nn-ft":
        cin, side = 2, image_size
        for i, cout in enumerate(conv_channels, 1):
            layers += [LayerSpec("conv2d", f"conv{i}", (cin, cout, kernel)), LayerSpec("relu")]
            cin, side = cout, side - kernel + 1
        features = side * side * cin
        layers.append(LayerSpec("flatten", size=(features,)))
    if kind != "nn-tactile":
        layers.append(LayerSpec("concat-aux", "aux", (AUX_DIM,)))
        features += AUX_DIM
    for i, units in enumerate(hidden, 1):
        layers += [LayerSpec("dense", f"fc{i}", (features, units)), LayerSpec("relu")]
        features = units
    layers.append(LayerSpec("dropout", p=float(dropout)))
    layers.append(LayerSpec("dense", "head", (features, 6)))
    return tuple(layers)


def fingerprint(kind, layers):
    blob = json.dumps({"kind": kind, "layers": [s.as_dict() for s in layers]}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class NetworkParams:
    """Named tensors in declaration order plus the layer table they belong to.

    ``aux.shift`` / ``aux.scale`` standardize the wrench input and are not
    trained; every other tensor is.
    """

    kind: str
    layers: tuple
    tensors: dict

    @property
    def fingerprint(self):
        return fingerprint(self.kind, self.layers)

    @property
    def uses_tactile(self):
        return self.kind != "nn-ft"

    @property
    def uses_aux(self):
        return self.kind != "nn-tactile"

    def trainable(self):
        return [k for k in self.tensors if not k.startswith("aux.")]

    def copy(self):
        return NetworkParams(self.kind, self.layers, {k: v.copy() for k, v in self.tensors.items()})

    def n_parameters(self):
        return sum(self.tensors[k].size for k in self.trainable())


def init_params(kind, seed=0, **arch):
    """Glorot-uniform weights, zero biases, head bias at the identity rotation."""
    layers = build_architecture(kind, **arch)
    rng = np.random.default_rng(seed)
    tensors = {}
    for spec in layers:
        if spec.kind == "conv2d":
            cin, cout, k = spec.size
            bound = np.sqrt(6.0 / (k * k * (cin + cout)))
            tensors[f"{spec.name}.weight"] = rng.uniform(-bound, bound, (k, k, cin, cout))
            tensors[f"{spec.name}.bias"] = np.zeros(cout)
        elif spec.kind == "dense":
            fan_in, fan_out = spec.size
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            tensors[f"{spec.name}.weight"] = rng.uniform(-bound, bound, (fan_in, fan_out))
            tensors[f"{spec.name}.bias"] = IDENTITY_6D.copy() if spec.name == "head" else np.zeros(fan_out)
        elif spec.kind == "concat-aux":
            tensors["aux.shift"] = np.zeros(AUX_DIM)
            tensors["aux.scale"] = np.ones(AUX_DIM)
    return NetworkParams(kind, layers, tensors)


def set_aux_normalization(params, aux):
    """Standardize the wrench input with statistics of ``aux`` (N, 6)."""
    if not params.uses_aux:
        return params
    aux = np.asarray(aux, dtype=float)
    params.tensors["aux.shift"] = aux.mean(axis=0)
    params.tensors["aux.scale"] = np.maximum(aux.std(axis=0), 1e-6)
    return params


def _as_batch(params, tactile, aux):
    from .tactile_sim import TactileFrame, Wrench

    single = isinstance(tactile, TactileFrame) or isinstance(aux, Wrench)
    if isinstance(tactile, TactileFrame):
        tactile = tactile.stacked()[None]
    if isinstance(aux, Wrench):
        aux = aux.as_vector()[None]
    if params.uses_tactile != (tactile is not None) or params.uses_aux != (aux is not None):
        raise ValueError(
            f"{params.kind} expects tactile={'yes' if params.uses_tactile else 'no'}, "
            f"wrench={'yes' if params.uses_aux else 'no'}")
    if tactile is not None:
        tactile = np.asarray(tactile, dtype=float)
        if tactile.ndim == 3:
            tactile, single = tactile[None], True
    if aux is not None:
        aux = np.asarray(aux, dtype=float)
        if aux.ndim == 1:
            aux, single = aux[None], True
    return tactile, aux, single


def _forward(params, tactile, aux, training, rng):
    t = params.tensors
    h = tactile
    caches = []
    for spec in params.layers:
        if spec.kind == "conv2d":
            cin, cout, k = spec.size
            b, height, width, _ = h.shape
            ho, wo = height - k + 1, width - k + 1
            cols = sliding_window_view(h, (k, k), axis=(1, 2)).transpose(0, 1, 2, 4, 5, 3)
            cols = cols.reshape(b * ho * wo, k * k * cin)
            w = t[f"{spec.name}.weight"].reshape(k * k * cin, cout)
            caches.append((cols, h.shape))
            h = (cols @ w + t[f"{spec.name}.bias"]).reshape(b, ho, wo, cout)
        elif spec.kind == "relu":
            mask = h > 0
            caches.append(mask)
            h = h * mask
        elif spec.kind == "flatten":
            caches.append(h.shape)
            h = h.reshape(h.shape[0], -1)
        elif spec.kind == "concat-aux":
            a = (aux - t["aux.shift"]) / t["aux.scale"]
            caches.append(None if h is None else h.shape[1])
            h = a if h is None else np.concatenate([h, a], axis=1)
        elif spec.kind == "dense":
            caches.append(h)
            h = h @ t[f"{spec.name}.weight"] + t[f"{spec.name}.bias"]
        elif spec.kind == "dropout":
            if training and spec.p > 0:
                keep = (rng.random(h.shape) >= spec.p) / (1.0 - spec.p)
                caches.append(keep)
                h = h * keep
            else:
                caches.append(None)
        else:
            raise ValueError(f"unknown layer kind {spec.kind!r}")
    return h, caches


def _backward(params, caches, grad_out):
    t = params.tensors
    grads = {}
    g = grad_out
    first_conv = next((i for i, s in enumerate(params.layers) if s.kind == "conv2d"), None)
    for i in range(len(params.layers) - 1, -1, -1):
        spec, cache = params.layers[i], caches[i]
        if spec.kind == "dense":
            grads[f"{spec.name}.weight"] = cache.T @ g
            grads[f"{spec.name}.bias"] = g.sum(axis=0)
            g = g @ t[f"{spec.name}.weight"].T
        elif spec.kind == "relu":
            g = g * cache
        elif spec.kind == "dropout":
            if cache is not None:
                g = g * cache
        elif spec.kind == "concat-aux":
            if cache is None:
                return grads
            g = g[:, :cache]
        elif spec.kind == "flatten":
            g = g.reshape(cache)
        elif spec.kind == "conv2d":
            cin, cout, k = spec.size
            cols, in_shape = cache
            b, ho, wo, _ = g.shape
            g2 = g.reshape(-1, cout)
            grads[f"{spec.name}.weight"] = (cols.T @ g2).reshape(k, k, cin, cout)
            grads[f"{spec.name}.bias"] = g2.sum(axis=0)
            if i == first_conv:
                return grads
            dcols = (g2 @ t[f"{spec.name}.weight"].reshape(k * k * cin, cout).T)
            dcols = dcols.reshape(b, ho, wo, k, k, cin)
            dx = np.zeros(in_shape)
            for di in range(k):
                for dj in range(k):
                    dx[:, di:di + ho, dj:dj + wo, :] += dcols[:, :, :, di, dj, :]
            g = dx
    return grads


def forward(params, tactile=None, aux=None, training_mode=False, rng_seed=0):
    """Raw 6D output(s). Single inputs give shape ``(6,)``, batches ``(B, 6)``."""
    tactile, aux, single = _as_batch(params, tactile, aux)
    out, _ = _forward(params, tactile, aux, training_mode, np.random.default_rng(rng_seed))
    return out[0] if single else out


def sixd_loss_grad(out, r_world_gripper, z_gt_world, margin=LOSS_CLAMP):
    """Per-sample angular loss of 6D outputs and its gradient w.r.t. the outputs.

    Returns ``(loss, grad, valid)``; samples whose 6D output cannot be
    orthonormalized are flagged invalid and get zero gradient.
    """
    out = np.asarray(out, dtype=float)
    a1, a2 = out[:, :3], out[:, 3:]
    n1 = np.linalg.norm(a1, axis=1)
    valid = n1 > 1e-9
    c1 = a1 / np.where(valid, n1, 1.0)[:, None]
    proj = np.einsum("bi,bi->b", c1, a2)
    bvec = a2 - proj[:, None] * c1
    n2 = np.linalg.norm(bvec, axis=1)
    valid &= n2 > 1e-9
    c2 = bvec / np.where(n2 > 1e-9, n2, 1.0)[:, None]
    c3 = np.cross(c1, c2)
    # the loss only sees the z-column, rotated into the world
    target = np.einsum("bji,bj->bi", r_world_gripper, z_gt_world)
    dot = np.einsum("bi,bi->b", c3, target)
    dc = np.clip(dot, -1.0 + margin, 1.0 - margin)
    loss = np.arccos(dc)
    inside = (dot > -1.0 + margin) & (dot < 1.0 - margin)
    g_dot = np.where(inside, -1.0 / np.sqrt(1.0 - dc * dc), 0.0)
    g_c3 = g_dot[:, None] * target
    g_c1 = np.cross(c2, g_c3)
    g_c2 = np.cross(g_c3, c1)
    g_b = (g_c2 - np.einsum("bi,bi->b", c2, g_c2)[:, None] * c2) / np.where(n2 > 1e-9, n2, 1.0)[:, None]
    cg = np.einsum("bi,bi->b", c1, g_b)
    g_a2 = g_b - cg[:, None] * c1
    g_c1 = g_c1 - proj[:, None] * g_b - cg[:, None] * a2
    g_a1 = (g_c1 - np.einsum("bi,bi->b", c1, g_c1)[:, None] * c1) / np.where(valid, n1, 1.0)[:, None]
    grad = np.concatenate([g_a1, g_a2], axis=1) * valid[:, None]
    return loss, grad, valid


def loss_and_grads(params, tactile, aux, r_world_gripper, z_gt_world, training_mode=True, rng_seed=0):
    """Mean angular loss over a batch and its gradient for every trainable tensor.

    Degenerate 6D outputs are dropped from the mean with a logged warning.
    """
    tactile, aux, _ = _as_batch(params, tactile, aux)
    r_world_gripper = np.asarray(r_world_gripper, dtype=float).reshape(-1, 3, 3)
    z_gt_world = np.asarray(z_gt_world, dtype=float).reshape(-1, 3)
    out, caches = _forward(params, tactile, aux, training_mode, np.random.default_rng(rng_seed))
    losses, g_out, valid = sixd_loss_grad(out, r_world_gripper, z_gt_world)
    n = int(valid.sum())
    if n < len(valid):
        log.warning("skipping %d sample(s) with degenerate 6D output: %s",
                    len(valid) - n, np.flatnonzero(~valid).tolist())
    if n == 0:
        return float("nan"), {k: np.zeros_like(params.tensors[k]) for k in params.trainable()}
    grads = _backward(params, caches, g_out / n)
    return float(losses[valid].mean()), grads


def backward(params, batch, rng_seed=0):
    """Loss and gradients for a list of ``((tactile, wrench), r_world_gripper, z_gt_world)``."""
    frames = [b[0][0] for b in batch]
    wrenches = [b[0][1] for b in batch]
    tactile = None if frames[0] is None else np.stack(
        [f.stacked() if hasattr(f, "stacked") else np.asarray(f) for f in frames])
    aux = None if wrenches[0] is None else np.stack(
        [w.as_vector() if hasattr(w, "as_vector") else np.asarray(w) for w in wrenches])
    return loss_and_grads(params, tactile, aux, np.stack([b[1] for b in batch]),
                          np.stack([b[2] for b in batch]), rng_seed=rng_seed)


def global_norm(grads):
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_by_global_norm(grads, max_norm):
    norm = global_norm(grads)
    if norm <= max_norm or norm == 0:
        return grads
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}


class MomentumSGD:
    """``v <- momentum * v + g``;  ``p <- p - lr * v``."""

    def __init__(self, lr=1e-3, momentum=0.9):
        if lr <= 0:
            raise ValueError("lr must be > 0")
        self.lr = lr
        self.momentum = momentum
        self.velocity = {}

    def step(self, params, grads):
        for name, g in grads.items():
            p = params.tensors[name]
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} does not match {name} {p.shape}")
            v = self.velocity.get(name)
            v = g.copy() if v is None else self.momentum * v + g
            self.velocity[name] = v
            params.tensors[name] = p - self.lr * v
        return params


def sgd_step(params, grads, lr, momentum=0.0, optimizer=None):
    """One update; pass the same ``optimizer`` across calls to carry velocity."""
    optimizer = optimizer or MomentumSGD(lr, momentum)
    return optimizer.step(params, grads)


def save_checkpoint(params, path):
    """Header (magic, version, fingerprint, JSON layer table) then float64 LE arrays."""
    table = {
        "kind": params.kind,
        "layers": [s.as_dict() for s in params.layers],
        "tensors": [[name, list(arr.shape)] for name, arr in params.tensors.items()],
    }
    header = json.dumps(table, sort_keys=True).encode()
    parts = [CHECKPOINT_MAGIC, struct.pack("<I", CHECKPOINT_VERSION), params.fingerprint.encode("ascii"),
             struct.pack("<I", len(header)), header]
    parts += [np.ascontiguousarray(arr, dtype="<f8").tobytes() for arr in params.tensors.values()]
    atomic_write_bytes(path, b"".join(parts))


def load_checkpoint(path, expected_kind=None, expected_fingerprint=None):
    """Read a checkpoint; raises ``FingerprintMismatchError`` on architecture mismatch."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    (version,) = struct.unpack_from("<I", blob, 8)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    stored = blob[12:76].decode("ascii")
    (hlen,) = struct.unpack_from("<I", blob, 76)
    table = json.loads(blob[80:80 + hlen])
    layers = tuple(LayerSpec(d["kind"], d["name"], tuple(d["size"]), d["p"]) for d in table["layers"])
    kind = table["kind"]
    if fingerprint(kind, layers) != stored:
        raise FingerprintMismatchError(f"{path}: stored fingerprint does not match its layer table")
    if expected_kind is not None and kind != expected_kind:
        raise FingerprintMismatchError(f"{path}: checkpoint holds {kind}, expected {expected_kind}")
    if expected_fingerprint is not None and stored != expected_fingerprint:
        raise FingerprintMismatchError(f"{path}: architecture fingerprint mismatch")
    tensors = {}
    offset = 80 + hlen
    for name, shape in table["tensors"]:
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape)
        tensors[name] = arr.astype(float)
        offset += 8 * count
    if offset != len(blob):
        raise ValueError(f"{path}: trailing or missing weight data")
    return NetworkParams(kind, layers, tensors)
