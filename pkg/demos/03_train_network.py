"""Train the tactile network on a small synthetic dataset and inspect the log.

A reduced run that takes a few seconds on one core. The command-line ``train``
command uses the full 1600-sample default.

Run: python demos/03_train_network.py
"""

from tactile_placing import nn, tactile_sim as ts, training as tr
from tactile_placing.catalog import OBJECTS

data = ts.generate_dataset([OBJECTS["cylinder"], OBJECTS["cuboid"]], n_arm_poses=30, n_inhand_per_pose=8,
                           seed=0)
train_set, test_set = tr.split(data, 0.2, seed=0)
print(f"{len(data)} samples: {len(train_set)} train, {len(test_set)} test")

untrained = nn.init_params("nn-tactile", seed=0)
print("untrained test loss: %.3f rad" % tr.evaluate_loss(untrained, test_set)[0])

cfg = tr.TrainConfig(arch="nn-tactile", epochs=60, seed=0)
best, log = tr.train(cfg, data)
for epoch, loss in log.evaluations[::5]:
    marker = " <- checkpoint" if any(e == epoch for e, _, _ in log.checkpoints) else ""
    print(f"epoch {epoch:2d} windowed test loss {loss:.4f}{marker}")
mean, std = tr.evaluate_loss(best, test_set)
print(f"best parameters on the test split: {mean:.4f} +- {std:.4f} rad")
