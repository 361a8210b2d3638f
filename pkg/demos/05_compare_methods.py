"""Paired comparison of the classical estimators against the oracle.

Every method sees the same arm poses, in-hand angles and noise draws, so
differences come from the estimators alone. Add trained networks with
``make_estimator("nn-tactile", "model-nn-tactile.ckpt")``.

Run: python demos/05_compare_methods.py
"""

from tactile_placing import estimators as es, placing as pl
from tactile_placing.catalog import OBJECTS, TRAINING_OBJECTS, UNSEEN_OBJECTS

methods = [es.OracleEstimator(0.005), es.PCAEstimator(), es.HoughEstimator()]
for title, names in (("seen", TRAINING_OBJECTS), ("unseen", UNSEEN_OBJECTS)):
    report = pl.run_evaluation(methods, [OBJECTS[n] for n in names], seed=0)
    print(f"{title} objects ({len(report.rows)} trials)")
    print(f"  {'method':8s}" + "".join(f"{n[:10]:>11s}" for n in names) + f"{'average':>11s}")
    for m in report.methods():
        rates = [report.cell(m, n)["success_rate"] for n in names] + [report.average(m)["success_rate"]]
        print(f"  {m:8s}" + "".join(f"{r:11.0%}" for r in rates))
    print()
