"""
Anatomy of the convolution/pooling circuit
==========================================

Lay out the 8-qubit circuit used as a node update, count its parameters and
show that discarding qubits at the end gives the same answer as tracing them
out as soon as they are pooled.
"""

import numpy as np

from qgat import oracle
from qgat.circuits import build_qgcn, conv_pairs, survivor_observable
from qgat.qsim import StateVector, expectation_on_survivors

spec, plan = build_qgcn(8, [3, 1, 1], trainable_scales=True)
print("trainable parameters:", spec.num_trainable)
print("gates:", len(spec.gates))
for i, step in enumerate(plan.steps):
    print(f"pool {i}: discard {step.discarded}, keep {step.survivors}")

# brick-wall pairs alternate between even and odd offsets
for j in range(3):
    print(f"conv step {j}:", conv_pairs(8, j))

# the first lines of the text dump
print("\n".join(spec.dump().splitlines()[:12]))

# on four qubits the dense oracle can track the reduced state directly
small, small_plan = build_qgcn(4, [1, 1], include_feature_map=False)
rng = np.random.default_rng(1)
angles = small.bind(rng.uniform(-np.pi, np.pi, small.num_trainable))
obs = survivor_observable(small_plan)
late = expectation_on_survivors(StateVector(4, small.program.run(angles)), obs, set(small_plan.discarded))
early = oracle.density_pipeline_expectation(small, angles, obs, small_plan.discarded)
print(f"measure survivors at the end: {late:.12f}")
print(f"trace out while pooling:      {early:.12f}")
