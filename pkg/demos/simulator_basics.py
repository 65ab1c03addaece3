"""
Statevector basics
==================

Build a small circuit, evaluate a magnetization observable and check the
adjoint gradient against finite differences.
"""

import numpy as np

from qgat import oracle
from qgat.qsim import Gate, Observable, Program, StateVector, apply_gate, expectation, rg_matrix

# single gates act on a StateVector; qubit 0 is the lowest bit of the index
psi = StateVector.zero(2)
psi = apply_gate(psi, Gate("RY", (0,), ("a",)), [np.pi / 2])
psi = apply_gate(psi, Gate("CX", (0, 1)))
print("Bell-like amplitudes:", np.round(psi.amplitudes, 3))
print("<Z0>:", expectation(psi, Observable.magnetization([0])))

# the general rotation composes RX . RZ . RX
print("RG(pi/2, pi/2, pi/2) =\n", np.round(rg_matrix(np.pi / 2, np.pi / 2, np.pi / 2), 3))

# a compiled program evaluates a whole batch of angle vectors at once
gates = [Gate("RG", (0,), ("a", "b", "c")), Gate("RY", (1,), ("d",)), Gate("CZ", (0, 1)), Gate("RX", (1,), ("e",))]
slots = ["a", "b", "c", "d", "e"]
program = Program.compile(2, gates, slots)
diag = Observable.magnetization([1]).diagonal(2)

rng = np.random.default_rng(0)
angles = rng.uniform(-np.pi, np.pi, (4, len(slots)))
values, grads = program.expectation_and_gradient(angles, diag)
print("batched <Z1>:", np.round(values, 4))


class _Circuit:
    num_qubits, gates, slot_names = 2, gates, slots


# compare one row with central differences through the dense-matrix oracle
f = lambda p: float((diag * np.abs(oracle.dense_state(_Circuit, p)) ** 2).sum())
fd = oracle.finite_difference_gradient(f, angles[0])
print("adjoint vs finite differences, max gap:", np.abs(grads[0] - fd).max())
