"""Command-line driver: gen-data, train, eval, infer, bench.

Configuration is a flat ``key = value`` text file with dotted keys; ``#``
starts a comment and list values are whitespace separated. ``--override``
values win over the file, ``--seed`` wins over both. Relative paths resolve
against the output directory.

Exit codes: 0 ok, 2 usage, 3 domain error, 4 I/O error.
"""

import argparse
import json
import math
import os
import sys
import time
from importlib import resources

import numpy as np

from . import catalog, estimators, nn, placing, so3, tactile_sim, training
from .errors import PlacingError

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN, EXIT_IO = 0, 2, 3, 4
PRESETS = ("default", "seen-objects", "unseen-objects")


class UsageError(Exception):
    pass


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _list(text):
    return text.split()


def _floats(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


def _ints(text):
    return tuple(int(v) for v in text.replace(",", " ").split())


def _opt_int(text):
    return None if text.strip().lower() in ("", "none") else int(text)


# key -> (parser, default)
SCHEMA = {
    "seed": (int, None),
    "data.path": (str, "dataset.jsonl"),
    "data.objects": (_list, ["cylinder", "cuboid"]),
    "data.n_arm_poses": (int, 80),
    "data.n_inhand_per_pose": (int, 10),
    "data.inhand_range_deg": (float, 160.0),
    "data.max_tilt_deg": (float, 60.0),
    "data.noise_std": (float, 0.02),
    "data.wrench_noise_std": (float, 0.3),
    "train.arch": (str, "nn-tactile"),
    "train.epochs": (int, 40),
    "train.test_fraction": (float, 0.2),
    "train.batch_size": (int, 32),
    "train.lr": (float, 1e-3),
    "train.momentum": (float, 0.9),
    "train.window": (int, 10),
    "train.clip_norm": (float, 10.0),
    "train.dropout": (float, 0.2),
    "train.conv_channels": (_ints, (16, 32)),
    "train.hidden": (_ints, (128, 128)),
    "eval.methods": (_list, ["oracle", "nn-tactile", "nn-tactile-ft", "nn-ft", "pca", "hough"]),
    "eval.objects": (_list, ["cylinder", "cuboid"]),
    "eval.n_arm_poses": (int, 5),
    "eval.n_inhand_poses": (int, 4),
    "eval.report": (str, "report.tsv"),
    "estimator.oracle.noise_std": (float, 0.0),
    "estimator.pca.threshold": (float, estimators.DEFAULT_THRESHOLD),
    "estimator.hough.threshold": (float, estimators.DEFAULT_THRESHOLD),
    "estimator.hough.n_theta_bins": (int, 180),
    "estimator.hough.n_rho_bins": (_opt_int, None),
    "sim.noise_std": (float, 0.02),
    "sim.wrench_noise_std": (float, 0.3),
    "sim.release_offset_std": (float, 0.002),
    "sim.step": (float, 0.001),
    "sim.threshold_ratio": (float, 1.5),
    "sim.clearance_range": (_floats, (0.015, 0.03)),
    "sim.contact_gain": (float, 1.0),
    "infer.method": (str, "nn-tactile"),
    "infer.index": (int, 0),
    "infer.record": (str, ""),
    "infer.raw_counts": (_bool, False),
    "bench.batch_size": (int, 32),
    "bench.repeats": (int, 20),
}
for _kind in nn.ARCHITECTURES:
    SCHEMA[f"checkpoint.{_kind}"] = (str, f"model-{_kind}.ckpt")


def parse_config_text(text, origin="<config>"):
    """``key = value`` lines into a raw string dict; unknown keys are rejected."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{origin}:{n}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in SCHEMA:
            raise UsageError(f"{origin}:{n}: unknown config key {key!r}")
        out[key] = value
    return out


def preset_text(name):
    return resources.files("tactile_placing.presets").joinpath(f"{name}.cfg").read_text()


def load_config(path=None, overrides=(), seed=None):
    """Typed config dict from an optional file (or preset name), overrides and seed."""
    raw = {}
    if path:
        if path in PRESETS:
            raw.update(parse_config_text(preset_text(path), path))
        else:
            with open(path) as fh:
                raw.update(parse_config_text(fh.read(), path))
    for item in overrides:
        if "=" not in item:
            raise UsageError(f"--override expects key=value, got {item!r}")
        key, value = (part.strip() for part in item.split("=", 1))
        if key not in SCHEMA:
            raise UsageError(f"unknown config key {key!r}")
        raw[key] = value
    if seed is not None:
        raw["seed"] = str(seed)
    cfg = {}
    for key, (conv, default) in SCHEMA.items():
        if key in raw:
            try:
                cfg[key] = conv(raw[key])
            except ValueError as exc:
                raise UsageError(f"bad value for {key}: {exc}") from None
        else:
            cfg[key] = default
    return cfg


def _path(out, name):
    return name if os.path.isabs(name) else os.path.join(out, name)


def _objects(names, key):
    if not names:
        raise UsageError(f"{key} is empty: name at least one object")
    try:
        return [catalog.parse_object(n) for n in names]
    except (ValueError, TypeError) as exc:
        raise UsageError(f"{key}: {exc}") from None


def _sim_config(cfg):
    return placing.SimConfig(
        noise_std=cfg["sim.noise_std"], wrench_noise_std=cfg["sim.wrench_noise_std"],
        release_offset_std=cfg["sim.release_offset_std"], step=cfg["sim.step"],
        threshold_ratio=cfg["sim.threshold_ratio"], clearance_range=cfg["sim.clearance_range"],
        contact_gain=cfg["sim.contact_gain"])


def build_estimator(kind, cfg, out):
    if kind in nn.ARCHITECTURES:
        return estimators.make_estimator(kind, _path(out, cfg[f"checkpoint.{kind}"]))
    if kind == "oracle":
        return estimators.OracleEstimator(cfg["estimator.oracle.noise_std"])
    if kind == "pca":
        return estimators.PCAEstimator(cfg["estimator.pca.threshold"])
    if kind == "hough":
        return estimators.HoughEstimator(cfg["estimator.hough.threshold"], cfg["estimator.hough.n_theta_bins"],
                                         cfg["estimator.hough.n_rho_bins"])
    raise UsageError(f"unknown method {kind!r}; choose from {', '.join(estimators.KINDS)}")


def _need_seed(cfg, command):
    if cfg["seed"] is None:
        raise UsageError(f"{command} needs a seed (--seed or 'seed' in the config)")
    return cfg["seed"]


def cmd_gen_data(cfg, out):
    seed = _need_seed(cfg, "gen-data")
    objects = _objects(cfg["data.objects"], "data.objects")
    samples = tactile_sim.generate_dataset(
        objects, cfg["data.n_arm_poses"], cfg["data.n_inhand_per_pose"],
        math.radians(cfg["data.inhand_range_deg"]), cfg["data.noise_std"], seed,
        math.radians(cfg["data.max_tilt_deg"]), cfg["data.wrench_noise_std"])
    worst = max(s.label_error() for s in samples)
    path = _path(out, cfg["data.path"])
    tactile_sim.write_dataset(samples, path)
    print(f"wrote {len(samples)} samples to {path}")
    print(f"label consistency: {'ok' if worst < 1e-9 else 'FAILED'} (max |R_wg R_gp z - z_gt| = {worst:.2e})")
    return EXIT_OK


def train_config(cfg):
    arch = cfg["train.arch"]
    if arch not in nn.ARCHITECTURES:
        raise UsageError(f"invalid architecture {arch!r}; valid kinds: {', '.join(nn.ARCHITECTURES)}")
    try:
        return training.TrainConfig(
            arch=arch, epochs=cfg["train.epochs"], test_fraction=cfg["train.test_fraction"],
            batch_size=cfg["train.batch_size"], lr=cfg["train.lr"], momentum=cfg["train.momentum"],
            seed=cfg["seed"], window=cfg["train.window"], clip_norm=cfg["train.clip_norm"],
            dropout=cfg["train.dropout"], conv_channels=cfg["train.conv_channels"], hidden=cfg["train.hidden"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_train(cfg, out):
    _need_seed(cfg, "train")
    tcfg = train_config(cfg)
    data = tactile_sim.read_dataset(_path(out, cfg["data.path"]))
    best, log = training.train(tcfg, data)
    ckpt = _path(out, cfg[f"checkpoint.{tcfg.arch}"])
    nn.save_checkpoint(best, ckpt)
    log.write(_path(out, f"metrics-{tcfg.arch}.log"))
    print(f"{tcfg.arch}: best windowed test loss {log.best:.4f} rad; checkpoint {ckpt}")
    return EXIT_OK


def cmd_eval(cfg, out):
    seed = _need_seed(cfg, "eval")
    methods = cfg["eval.methods"]
    if not methods:
        raise UsageError("eval.methods is empty: name at least one method")
    objects = _objects(cfg["eval.objects"], "eval.objects")
    ests = [build_estimator(m, cfg, out) for m in methods]
    report = placing.run_evaluation(ests, objects, cfg["eval.n_arm_poses"], cfg["eval.n_inhand_poses"],
                                    seed, _sim_config(cfg), names=methods)
    path = _path(out, cfg["eval.report"])
    report.write(path)
    print(f"{len(report.rows)} trials; report {path}")
    print("\t".join(placing.REPORT_COLUMNS))
    for m in report.methods():
        c = report.average(m)
        print(f"{m}\taverage\t{c['trials']}\t{c['successes']}\t{c['success_rate']:.4f}\t"
              f"{c['ang_err_mean']:.6f}\t{c['ang_err_std']:.6f}")
    return EXIT_OK


def load_record(path, raw_counts=False):
    """First record of a JSON / JSON-lines file; labels are optional.

    Returns ``(tactile, wrench, r_world_gripper, r_gripper_placing_gt, z_gt_world)``
    with ``None`` for absent labels.
    """
    with open(path) as fh:
        line = next((ln for ln in fh if ln.strip()), None)
    if line is None:
        raise UsageError(f"{path}: no record")
    rec = json.loads(line)
    try:
        left = np.reshape(np.asarray(rec["tactile_left"], dtype=float), (16, 16))
        right = np.reshape(np.asarray(rec["tactile_right"], dtype=float), (16, 16))
    except (KeyError, ValueError) as exc:
        raise UsageError(f"{path}: record needs tactile_left/right with 256 values ({exc})") from None
    if raw_counts:
        tactile = tactile_sim.normalize_raw(left, right)
    else:
        tactile = tactile_sim.TactileFrame(left, right)
    w = np.asarray(rec.get("wrench", np.zeros(6)), dtype=float)
    wrench = tactile_sim.Wrench(w[:3], w[3:])
    r_wg = np.reshape(rec["r_world_gripper"], (3, 3)) if "r_world_gripper" in rec else None
    r_gt = np.reshape(rec["r_gripper_placing_gt"], (3, 3)) if "r_gripper_placing_gt" in rec else None
    z_gt = np.asarray(rec["z_gt_world"], dtype=float) if "z_gt_world" in rec else None
    if z_gt is None and r_wg is not None and r_gt is not None:
        z_gt = so3.placing_normal(r_wg, r_gt)
    return tactile, wrench, r_wg, r_gt, z_gt


def cmd_infer(cfg, out):
    method = cfg["infer.method"]
    est = build_estimator(method, cfg, out)
    if cfg["infer.record"]:
        tactile, wrench, r_wg, r_gt, z_gt = load_record(cfg["infer.record"], cfg["infer.raw_counts"])
    else:
        data = tactile_sim.read_dataset(_path(out, cfg["data.path"]))
        idx = cfg["infer.index"]
        if not 0 <= idx < len(data):
            raise UsageError(f"index {idx} out of range for {len(data)} samples")
        s = data[idx]
        tactile, wrench, r_wg, r_gt, z_gt = (s.tactile, s.wrench, s.r_world_gripper,
                                             s.r_gripper_placing_gt, s.z_gt_world)
    estimate = est.estimate(tactile, wrench, truth=r_gt, seed=cfg["seed"] or 0)
    print("estimate R_gripper_placing:")
    print(np.array2string(estimate, precision=6, suppress_small=True))
    if isinstance(est, estimators.NeuralEstimator):
        print("raw 6D output: " + " ".join(f"{v:.6f}" for v in est.last_output))
    if r_wg is not None and z_gt is not None:
        print(f"angular error: {so3.angular_loss(estimate, r_wg, z_gt):.6e} rad")
    else:
        print("angular error: n/a (record has no labels)")
    return EXIT_OK


def cmd_bench(cfg, out):
    seed = cfg["seed"] or 0
    rng = np.random.default_rng(seed)
    n, reps = cfg["bench.batch_size"], cfg["bench.repeats"]
    params = nn.init_params("nn-tactile", seed)
    tactile = rng.uniform(0, 1, (n, 16, 16, 2))
    r_wg = np.stack([so3.random_rotation(rng) for _ in range(n)])
    z_gt = np.stack([so3.random_unit_vector(rng) for _ in range(n)])

    def rate(fn, count):
        fn()
        t0 = time.perf_counter()
        for _ in range(reps):
            fn()
        return count * reps / (time.perf_counter() - t0)

    fwd = rate(lambda: nn.forward(params, tactile), n)
    bwd = rate(lambda: nn.loss_and_grads(params, tactile, None, r_wg, z_gt), n)
    img = rng.uniform(0, 1, (16, 16)) > 0.7
    hough = rate(lambda: estimators.hough_accumulator(img), 1)
    print(f"forward (nn-tactile, batch {n}): {fwd:.1f} samples/s")
    print(f"forward+backward (nn-tactile, batch {n}): {bwd:.1f} samples/s")
    print(f"hough accumulation (16x16, 180 angles): {hough:.1f} images/s")
    return EXIT_OK


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval, "infer": cmd_infer,
            "bench": cmd_bench}


def build_parser():
    parser = argparse.ArgumentParser(prog="tactile-placing", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help=f"config file or preset name ({', '.join(PRESETS)})")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", default=".", help="output directory (default: current)")
        p.add_argument("--threads", type=int, help="cap on BLAS threads; results do not depend on it")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
        if name == "train":
            p.add_argument("--arch", help="shorthand for --override train.arch=...")
        if name in ("eval", "infer"):
            p.add_argument("--method", action="append", help="method kind (repeatable)")
        if name == "infer":
            p.add_argument("--index", type=int)
            p.add_argument("--record", help="JSON record file instead of a dataset index")
            p.add_argument("--raw-counts", action="store_true", help="record tactile values are 0..4095 counts")
    return parser


def _flag_overrides(args):
    extra = []
    if getattr(args, "arch", None):
        extra.append(f"train.arch={args.arch}")
    methods = getattr(args, "method", None)
    if methods:
        key = "eval.methods" if args.command == "eval" else "infer.method"
        extra.append(f"{key}={' '.join(methods)}")
    if getattr(args, "index", None) is not None:
        extra.append(f"infer.index={args.index}")
    if getattr(args, "record", None):
        extra.append(f"infer.record={args.record}")
    if getattr(args, "raw_counts", False):
        extra.append("infer.raw_counts=true")
    return extra


def _run(args):
    cfg = load_config(args.config, list(args.override) + _flag_overrides(args), args.seed)
    os.makedirs(args.out, exist_ok=True)
    return COMMANDS[args.command](cfg, args.out)


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        if args.threads:
            from threadpoolctl import threadpool_limits
            with threadpool_limits(limits=args.threads):
                return _run(args)
        return _run(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PlacingError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (OSError, json.JSONDecodeError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        # malformed dataset/checkpoint contents
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
