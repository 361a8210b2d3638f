import json
import subprocess
import sys

import pytest

from tactile_placing import cli, nn, tactile_sim as ts, training as tr

SMALL_CFG = """\
# reduced pipeline for tests
data.n_arm_poses = 4
data.n_inhand_per_pose = 3
train.epochs = 2
train.batch_size = 8
train.window = 2
train.conv_channels = 2 3
train.hidden = 8 8
eval.methods = oracle pca hough
eval.n_arm_poses = 2
eval.n_inhand_poses = 2
"""


@pytest.fixture()
def cfg_file(tmp_path):
    path = tmp_path / "small.cfg"
    path.write_text(SMALL_CFG)
    return str(path)


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def test_config_parsing(tmp_path):
    cfg = cli.load_config(None)
    assert cfg["seed"] is None and cfg["train.hidden"] == (128, 128)
    cfg = cli.load_config("default", ["train.lr=0.5", "eval.methods = pca  hough"], seed=9)
    assert cfg["seed"] == 9 and cfg["train.lr"] == 0.5 and cfg["eval.methods"] == ["pca", "hough"]
    assert cli.load_config("seen-objects")["estimator.oracle.noise_std"] == 0.005
    assert len(cli.load_config("unseen-objects")["eval.objects"]) == 7
    with pytest.raises(cli.UsageError, match="unknown config key"):
        cli.parse_config_text("train.speed = 3")
    with pytest.raises(cli.UsageError):
        cli.parse_config_text("just words")
    with pytest.raises(cli.UsageError, match="bad value"):
        cli.load_config(None, ["train.epochs=many"])


def test_gen_data_writes_and_is_reproducible(tmp_path, cfg_file, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    code, out, _ = run(capsys, "gen-data", "--config", cfg_file, "--seed", 4, "--out", a)
    assert code == 0 and "wrote 24 samples" in out and "label consistency: ok" in out
    run(capsys, "gen-data", "--config", cfg_file, "--seed", 4, "--out", b, "--threads", 1)
    assert (a / "dataset.jsonl").read_bytes() == (b / "dataset.jsonl").read_bytes()
    assert len(ts.read_dataset(a / "dataset.jsonl")) == 24
    # atomic writes leave no temporary files behind
    assert sorted(p.name for p in a.iterdir()) == ["dataset.jsonl"]


def test_usage_errors(tmp_path, cfg_file, capsys):
    code, _, err = run(capsys, "gen-data", "--config", cfg_file, "--out", tmp_path)
    assert code == 2 and "seed" in err
    code, _, err = run(capsys, "gen-data", "--config", cfg_file, "--seed", 0, "--out", tmp_path,
                       "--override", "data.objects=")
    assert code == 2 and "data.objects" in err
    code, _, err = run(capsys, "gen-data", "--seed", 0, "--out", tmp_path, "--override", "bogus.key=1")
    assert code == 2 and "unknown config key" in err
    code, _, err = run(capsys, "train", "--config", cfg_file, "--seed", 0, "--out", tmp_path, "--arch", "resnet")
    assert code == 2 and "nn-tactile, nn-ft, nn-tactile-ft" in err
    code, _, err = run(capsys, "eval", "--config", cfg_file, "--seed", 0, "--out", tmp_path,
                       "--override", "eval.methods=")
    assert code == 2 and "eval.methods" in err
    code, _, _ = run(capsys, "bench", "--threads", 0)
    assert code == 2


def test_missing_files_are_io_errors(tmp_path, cfg_file, capsys):
    code, _, err = run(capsys, "train", "--config", cfg_file, "--seed", 0, "--out", tmp_path)
    assert code == 4 and "I/O error" in err
    code, _, _ = run(capsys, "eval", "--config", cfg_file, "--seed", 0, "--out", tmp_path,
                     "--method", "nn-tactile")
    assert code == 4
    code, _, _ = run(capsys, "gen-data", "--config", tmp_path / "nope.cfg", "--seed", 0)
    assert code == 4


@pytest.fixture()
def trained(tmp_path, cfg_file, capsys):
    run(capsys, "gen-data", "--config", cfg_file, "--seed", 1, "--out", tmp_path)
    code, out, _ = run(capsys, "train", "--config", cfg_file, "--seed", 1, "--out", tmp_path)
    assert code == 0 and "best windowed test loss" in out
    return tmp_path


def test_train_outputs(trained):
    assert (trained / "model-nn-tactile.ckpt").exists()
    lines = (trained / "metrics-nn-tactile.log").read_text().splitlines()
    assert lines[0].startswith("train epoch=0 batch=0 loss=")
    params = nn.load_checkpoint(trained / "model-nn-tactile.ckpt", "nn-tactile")
    assert params.tensors["conv1.weight"].shape[-1] == 2 and params.tensors["conv2.weight"].shape[-1] == 3


def test_eval_report(trained, cfg_file, capsys):
    code, out, _ = run(capsys, "eval", "--config", cfg_file, "--seed", 2, "--out", trained,
                       "--method", "oracle", "--method", "nn-tactile")
    assert code == 0 and "16 trials" in out
    table = (trained / "report.tsv").read_text().splitlines()
    assert table[0].split("\t")[0] == "method" and len(table) == 1 + 2 * 3
    oracle_avg = next(line for line in table if line.startswith("oracle\taverage"))
    assert oracle_avg.split("\t")[4] == "1.0000"


def test_eval_mismatched_checkpoint_is_domain_error(trained, cfg_file, capsys):
    code, _, err = run(capsys, "eval", "--config", cfg_file, "--seed", 2, "--out", trained,
                       "--method", "nn-ft", "--override", "checkpoint.nn-ft=model-nn-tactile.ckpt")
    assert code == 3 and "FingerprintMismatch" in err


def test_infer_on_dataset_index(trained, cfg_file, capsys):
    code, out, _ = run(capsys, "infer", "--config", cfg_file, "--out", trained, "--method", "oracle",
                       "--index", 5)
    assert code == 0
    err = float(out.split("angular error:")[1].split()[0])
    assert err < 1e-6
    code, out, _ = run(capsys, "infer", "--config", cfg_file, "--out", trained, "--index", 5)
    assert code == 0 and "raw 6D output" in out
    data = ts.read_dataset(trained / "dataset.jsonl")
    params = nn.load_checkpoint(trained / "model-nn-tactile.ckpt", "nn-tactile")
    expected = tr.evaluate_loss(params, [data[5]])[0]
    got = float(out.split("angular error:")[1].split()[0])
    assert got == pytest.approx(expected, rel=1e-6, abs=1e-12)
    code, _, err = run(capsys, "infer", "--config", cfg_file, "--out", trained, "--index", 999)
    assert code == 2


def test_infer_on_record(tmp_path, capsys):
    s = ts.generate_dataset([ts.ObjectPrimitive("cylinder", (0.02, 0.1), 0.1)], 1, 1, seed=3)[0]
    left, right = ts.to_raw_counts(s.tactile)
    rec = {"tactile_left": left.ravel().tolist(), "tactile_right": right.ravel().tolist()}
    path = tmp_path / "rec.json"
    path.write_text(json.dumps(rec))
    code, out, _ = run(capsys, "infer", "--out", tmp_path, "--method", "pca", "--record", path, "--raw-counts")
    assert code == 0 and "n/a" in out
    zero = {"tactile_left": [0.0] * 256, "tactile_right": [0.0] * 256}
    path.write_text(json.dumps(zero))
    code, _, err = run(capsys, "infer", "--out", tmp_path, "--method", "pca", "--record", path)
    assert code == 3 and "NoLineFoundError" in err
    path.write_text("{not json")
    code, _, _ = run(capsys, "infer", "--out", tmp_path, "--method", "pca", "--record", path)
    assert code == 4
    path.write_text(json.dumps({"tactile_left": [0.0] * 10}))
    code, _, _ = run(capsys, "infer", "--out", tmp_path, "--method", "pca", "--record", path)
    assert code == 2


def test_bench_runs(capsys):
    code, out, _ = run(capsys, "bench", "--override", "bench.batch_size=4", "--override", "bench.repeats=2")
    assert code == 0
    assert "forward" in out and "forward+backward" in out and "hough" in out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "tactile_placing", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "gen-data" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "tactile_placing"], capture_output=True, text=True)
    assert proc.returncode == 2
