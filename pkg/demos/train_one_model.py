"""
Training a QGAT on small molecules
==================================

Sample ten molecules with at most nine atoms from the bundled fixture,
train a single-model QGAT and look at the learned attention.
"""

import numpy as np

from qgat.experiments import ExperimentConfig, run_experiment

cfg = ExperimentConfig(kind="qgat", aggregation="single", max_atoms=9, samples=10, seed=0)
cfg.train.epochs = 60

model, report, metrics, split = run_experiment(cfg)

print("molecules:", split.ids)
print("size histogram:", split.size_histogram())
print("parameters:", report.num_params, report.param_breakdown)
for rec in report.epochs[::10]:
    print(f"epoch {rec.epoch:3d}  loss {rec.loss:.5f}  r2 {rec.r2:.4f}  lr {rec.lr:.4f}")
print("final:", metrics)

# predictions back in the original target units
norm = split.normalization
pred = norm.invert_target(model.predict(split.graphs))
true = norm.invert_target(split.targets)
for gid, p, t in zip(split.ids, pred, true):
    print(f"{gid}: predicted {p:8.3f}  target {t:8.3f}")

# attention over the neighbours of each atom in the largest molecule
g = max(split.graphs, key=lambda g: g.num_atoms)
for v, alpha in model.attention_coefficients(g).items():
    print(v, g.neighbors(v).tolist(), np.round(alpha, 3).tolist())
