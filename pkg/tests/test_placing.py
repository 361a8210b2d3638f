import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tactile_placing import estimators as es, placing as pl, so3
from tactile_placing.catalog import OBJECTS, TRAINING_OBJECTS, UNSEEN_OBJECTS, parse_object
from tactile_placing.tactile_sim import ObjectPrimitive

from support_sweep import brute_critical_tilt

CYL, BOX = OBJECTS["cylinder"], OBJECTS["cuboid"]


class Stub:
    kind = "stub"

    def __init__(self, fn):
        self.fn = fn

    def estimate(self, tactile=None, wrench=None, *, truth=None, seed=0):
        return self.fn(truth)


@pytest.mark.parametrize("name", list(OBJECTS))
def test_stability_matches_brute_force_sweep(name):
    obj = OBJECTS[name]
    for azimuth in (0.0, 0.6, math.pi / 2, 2.5):
        brute = brute_critical_tilt(obj, azimuth)
        assert abs(brute - pl.critical_tilt(obj, azimuth)) < 0.01
        assert pl.stability_oracle(obj, max(brute - 0.01, 0), azimuth=azimuth).success
        assert not pl.stability_oracle(obj, brute + 0.01, azimuth=azimuth).success


def test_stability_examples():
    v = pl.stability_oracle(BOX, 0.0)
    assert v.success and v.reason == "stable" and v.tilt_angle == 0.0
    assert pl.stability_oracle(BOX, math.pi / 2).reason == "tipped"
    assert pl.stability_oracle(BOX, math.pi).reason == "tipped"
    # a release offset beyond the face always tips
    assert not pl.stability_oracle(BOX, 0.0, (BOX.half_width + 1e-3, 0)).success
    with pytest.raises(ValueError):
        pl.stability_oracle(BOX, -0.1)
    with pytest.raises(ValueError):
        pl.StabilityVerdict(True, 0.0, "tipped")
    with pytest.raises(ValueError):
        pl.StabilityVerdict(False, 0.0, "stable")


@settings(max_examples=200)
@given(st.sampled_from(list(OBJECTS)), st.floats(0, math.pi), st.floats(0, math.pi), st.floats(0, 0.02),
       st.floats(-math.pi, math.pi))
def test_stability_is_monotone(name, t1, t2, off, azimuth):
    obj = OBJECTS[name]
    lo, hi = sorted((t1, t2))
    if pl.stability_oracle(obj, hi, (off, 0), azimuth).success:
        assert pl.stability_oracle(obj, lo, (off, 0), azimuth).success
        assert pl.stability_oracle(obj, hi, (off / 2, 0), azimuth).success


def test_contact_detector_examples():
    assert pl.contact_detector([1, 1, 1, 2]) == 3
    assert pl.contact_detector([1, 1.5, 1.5]) is None
    assert pl.contact_detector([2, 2.9, 3.1, 9]) == 2
    assert pl.contact_detector([1, 3], threshold_ratio=4) is None
    with pytest.raises(ValueError):
        pl.contact_detector([])


def test_oracle_trial_succeeds():
    r_wg = so3.rot_x(0.5) @ so3.rot_z(1.2)
    r_gt = so3.rot_y(0.7)
    res = pl.run_placing(es.OracleEstimator(), BOX, r_wg, r_gt, seed=3)
    assert res.success and res.reason == "stable"
    assert res.angular_error < 1e-6
    assert res.phases == list(pl.PHASE_ORDER)
    assert [p.value for p in res.phases] == ["EstimateNormal", "CorrectiveMotion", "PlacingMotion",
                                             "ReleaseRetract"]
    assert np.abs(res.normal_after_correction - so3.Z_AXIS).max() < 1e-9


def test_wrong_estimate_tips_the_object():
    r_wg, r_gt = so3.rot_x(0.3), so3.rot_y(-0.2)
    # error about the gripper y-axis: the object leans within the sensor plane, away from the fingers
    res = pl.run_placing(Stub(lambda t: so3.rot_y(0.8) @ t), BOX, r_wg, r_gt, seed=1)
    assert not res.success and res.reason == "tipped"
    assert res.angular_error == pytest.approx(0.8, abs=1e-9)
    # error about the gripper x-axis: the lean points into a jaw
    res = pl.run_placing(Stub(lambda t: so3.rot_x(0.8) @ t), BOX, r_wg, r_gt, seed=1)
    assert res.reason == "supported-by-gripper"


def test_estimator_failure_is_reported():
    res = pl.run_placing(es.HoughEstimator(threshold=0.99), CYL, np.eye(3), np.eye(3), seed=0)
    assert not res.success and res.verdict is None
    assert res.reason == "NoLineFoundError"
    assert res.phases == [pl.PlacingPhase.ESTIMATE_NORMAL]


def test_descent_detects_contact_near_the_geometric_step():
    rng = np.random.default_rng(4)
    for k in range(40):
        obj = OBJECTS[list(OBJECTS)[k % len(OBJECTS)]]
        r_wg = so3.random_tilted_rotation(rng, np.radians(60))
        r_gt = so3.rot_y(rng.uniform(-1.4, 1.4))
        res = pl.run_placing(es.OracleEstimator(), obj, r_wg, r_gt, seed=k)
        assert res.contact_step is not None
        assert abs(res.contact_step - res.geometric_contact_step) <= 2


def test_no_contact_without_load_gain():
    cfg = pl.SimConfig(contact_gain=0.0, max_extra_steps=3)
    res = pl.run_placing(es.OracleEstimator(), CYL, np.eye(3), np.eye(3), cfg, seed=0)
    assert res.reason == "no-contact" and res.verdict is None


@pytest.fixture(scope="module")
def small_report():
    methods = [es.OracleEstimator(), es.PCAEstimator(), es.HoughEstimator()]
    objs = [CYL, OBJECTS["lipstick"]]
    return pl.run_evaluation(methods, objs, n_arm_poses=3, n_inhand_poses=2, seed=7), methods, objs


def test_evaluation_is_paired_and_deterministic(small_report):
    report, methods, objs = small_report
    assert len(report.rows) == 3 * 2 * 3 * 2
    by_method = {m: [r for r in report.rows if r.method == m] for m in report.methods()}
    assert list(by_method) == ["oracle", "pca", "hough"]
    ref = by_method["oracle"]
    for rows in by_method.values():
        for a, b in zip(ref, rows):
            assert (a.object, a.arm_pose, a.inhand_pose) == (b.object, b.arm_pose, b.inhand_pose)
            assert np.array_equal(a.r_world_gripper, b.r_world_gripper)
            assert np.array_equal(a.z_gt_world, b.z_gt_world)
    again = pl.run_evaluation(methods, objs, n_arm_poses=3, n_inhand_poses=2, seed=7)
    assert again.to_table() == report.to_table()
    assert [r.angular_error for r in again.rows] == [r.angular_error for r in report.rows]


def test_reported_error_is_the_angle_to_the_true_normal(small_report):
    report, _, _ = small_report
    for r in report.rows:
        if r.estimate is None:
            continue
        n = r.r_world_gripper @ r.estimate @ so3.Z_AXIS
        ref = math.acos(max(-1.0, min(1.0, float(n @ r.z_gt_world))))
        assert abs(r.angular_error - ref) < 1e-9
    oracle = [r for r in report.rows if r.method == "oracle"]
    assert all(r.success and r.angular_error < 1e-6 for r in oracle)


def test_report_aggregates_and_round_trip(small_report, tmp_path):
    report, _, _ = small_report
    cell = report.cell("pca", "cylinder")
    rows = [r for r in report.rows if r.method == "pca" and r.object == "cylinder"]
    assert cell["trials"] == 6 and cell["successes"] == sum(r.success for r in rows)
    avg = report.average("pca")
    assert avg["success_rate"] == pytest.approx(
        np.mean([report.cell("pca", o)["success_rate"] for o in ("cylinder", "lipstick")]))
    path = tmp_path / "eval.report"
    report.write(path)
    back = pl.read_report(path)
    assert len(back) == 3 * 3
    assert back[2]["object"] == "average" and back[0]["trials"] == 6
    assert back[0]["success_rate"] == pytest.approx(report.cell("oracle", "cylinder")["success_rate"], abs=1e-4)
    path.write_text("bad\theader\n")
    with pytest.raises(ValueError):
        pl.read_report(path)


def test_full_grid_row_counts():
    seen = pl.evaluation_grid([OBJECTS[n] for n in TRAINING_OBJECTS])
    unseen = pl.evaluation_grid([OBJECTS[n] for n in UNSEEN_OBJECTS])
    assert len(seen) * 6 == 240 and len(unseen) * 4 == 560
    report = pl.run_evaluation([es.OracleEstimator()] * 4, [OBJECTS[n] for n in UNSEEN_OBJECTS],
                               names=["a", "b", "c", "d"])
    assert len(report.rows) == 560
    assert all(report.cell("a", n)["success_rate"] == 1.0 for n in UNSEEN_OBJECTS)
    with pytest.raises(ValueError):
        pl.run_evaluation([], [CYL])


def test_parse_object():
    assert parse_object("pringles") is OBJECTS["pringles"]
    obj = parse_object("cuboid:0.04,0.03,0.1:0.2:0.3@box")
    assert obj.name == "box" and obj.dimensions == (0.04, 0.03, 0.1) and obj.mass == 0.2
    assert isinstance(parse_object("cylinder:0.02,0.1:0.1"), ObjectPrimitive)
    with pytest.raises(ValueError):
        parse_object("teapot")
    with pytest.raises(ValueError):
        parse_object("sphere:0.1:1")
