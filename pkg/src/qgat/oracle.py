"""Brute-force references for testing the fast paths.

Everything here is deliberately naive: full ``2**n x 2**n`` matrices built
by Kronecker products, matrix exponentials by eigendecomposition, explicit
partial traces. Nothing is shared with the kernels in :mod:`qgat.qsim`
beyond the gate/observable records themselves.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .qsim import DensityMatrix, Gate, Observable, StateVector

MAX_ORACLE_QUBITS = 5
MAX_PRODUCT_REGISTERS = 2
MAX_REGISTER_QUBITS = 3

_I2 = np.eye(2, dtype=complex)
_P0 = np.diag([1.0, 0.0]).astype(complex)
_P1 = np.diag([0.0, 1.0]).astype(complex)
_PAULI = {
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


class OracleError(ValueError):
    pass


def expm_hermitian(h: np.ndarray) -> np.ndarray:
    """``exp(-i h)`` for Hermitian ``h`` via eigendecomposition."""
    vals, vecs = np.linalg.eigh(h)
    return (vecs * np.exp(-1j * vals)) @ vecs.conj().T


def single_qubit_unitary(gate: Gate, angles: Sequence[float]) -> np.ndarray:
    if gate.kind in ("RX", "RY", "RZ"):
        return expm_hermitian(_PAULI[gate.kind[1]] * angles[0] / 2)
    if gate.kind == "RG":
        t1, t2, t3 = angles
        return (expm_hermitian(_PAULI["X"] * t1 / 2)
                @ expm_hermitian(_PAULI["Z"] * t2 / 2)
                @ expm_hermitian(_PAULI["X"] * t3 / 2))
    raise OracleError(f"{gate.kind} is not a single-qubit gate")


def embed(ops: dict[int, np.ndarray], n: int) -> np.ndarray:
    """Kronecker product placing ``ops[q]`` on qubit ``q`` (qubit 0 rightmost)."""
    out = np.eye(1, dtype=complex)
    for q in reversed(range(n)):
        out = np.kron(out, ops.get(q, _I2))
    return out


def gate_unitary(gate: Gate, angles: Sequence[float], n: int) -> np.ndarray:
    if gate.kind == "CZ":
        a, b = gate.targets
        return embed({}, n) - 2 * embed({a: _P1, b: _P1}, n)
    if gate.kind == "CX":
        c, t = gate.targets
        return embed({c: _P0}, n) + embed({c: _P1, t: _PAULI["X"]}, n)
    return embed({gate.targets[0]: single_qubit_unitary(gate, angles)}, n)


def _gate_angles(gate: Gate, values: dict[str, float]) -> list[float]:
    return [values[s] for s in gate.param_slots]


def dense_circuit_matrix(circuit, params: Sequence[float]) -> np.ndarray:
    """Full unitary of ``circuit`` with ``params`` given per slot name order."""
    n = circuit.num_qubits
    if n > MAX_ORACLE_QUBITS:
        raise OracleError(f"oracle handles at most {MAX_ORACLE_QUBITS} qubits, got {n}")
    values = dict(zip(circuit.slot_names, params))
    u = np.eye(2**n, dtype=complex)
    for gate in circuit.gates:
        u = gate_unitary(gate, _gate_angles(gate, values), n) @ u
    return u


def dense_state(circuit, params: Sequence[float], init: np.ndarray | None = None) -> np.ndarray:
    u = dense_circuit_matrix(circuit, params)
    if init is None:
        init = np.zeros(2**circuit.num_qubits, dtype=complex)
        init[0] = 1
    return u @ init


def observable_matrix(obs: Observable, n: int) -> np.ndarray:
    total = np.zeros((2**n, 2**n), dtype=complex)
    for q, w in obs.terms:
        total += w * embed({q: _PAULI["Z"]}, n)
    return total / obs.normalization


def partial_trace(rho: DensityMatrix, keep: Sequence[int]) -> DensityMatrix:
    """Trace out every qubit not in ``keep``.

    The result's qubit ``j`` is the ``j``-th smallest kept label.
    """
    keep = sorted(set(keep))
    n = rho.num_qubits
    if not keep:
        raise OracleError("keep set must be nonempty")
    if keep[0] < 0 or keep[-1] >= n:
        raise OracleError(f"keep {keep} out of range for {n} qubits")
    t = rho.entries.reshape((2,) * (2 * n))
    # row axes list qubits in descending label order; column axes mirror them
    remaining = list(range(n))
    for q in [q for q in range(n) if q not in keep]:
        order = sorted(remaining, reverse=True)
        a = order.index(q)
        m = len(order)
        t = np.trace(t, axis1=a, axis2=m + a)
        remaining.remove(q)
    k = len(keep)
    return DensityMatrix(k, t.reshape(2**k, 2**k))


def expectation_dm(rho: DensityMatrix, obs: Observable) -> float:
    return float(np.trace(rho.entries @ observable_matrix(obs, rho.num_qubits)).real)


def density_pipeline_expectation(circuit, params: Sequence[float], obs: Observable,
                                 discarded: Sequence[int], init: np.ndarray | None = None) -> float:
    """Run ``circuit`` on a density matrix, tracing each discarded qubit out
    immediately after the last gate that touches it, then measure ``obs``
    on the survivors.
    """
    n = circuit.num_qubits
    if n > MAX_ORACLE_QUBITS + 1:
        raise OracleError(f"too many qubits for the density pipeline: {n}")
    values = dict(zip(circuit.slot_names, params))
    if init is None:
        init = np.zeros(2**n, dtype=complex)
        init[0] = 1
    rho = np.outer(init, init.conj())
    live = list(range(n))
    last_touch = {q: -1 for q in discarded}
    for i, g in enumerate(circuit.gates):
        for q in g.targets:
            if q in last_touch:
                last_touch[q] = i

    def trace_ready(upto):
        nonlocal rho, live
        for q in [q for q in discarded if last_touch[q] <= upto and q in live]:
            keep_pos = [j for j, lbl in enumerate(live) if lbl != q]
            rho = partial_trace(DensityMatrix(len(live), rho), keep_pos).entries
            live = [lbl for lbl in live if lbl != q]

    trace_ready(-1)
    for i, g in enumerate(circuit.gates):
        pos = {lbl: j for j, lbl in enumerate(live)}
        local = Gate(g.kind, tuple(pos[q] for q in g.targets), g.param_slots)
        u = gate_unitary(local, _gate_angles(g, values), len(live))
        rho = u @ rho @ u.conj().T
        trace_ready(i)
    pos = {lbl: j for j, lbl in enumerate(live)}
    local_obs = Observable(tuple((pos[q], w) for q, w in obs.terms), obs.normalization)
    return expectation_dm(DensityMatrix(len(live), rho), local_obs)


def finite_difference_gradient(f: Callable[[np.ndarray], float], params: Sequence[float],
                               step: float = 1e-4) -> np.ndarray:
    """Central differences of scalar ``f`` at ``params``."""
    params = np.asarray(params, dtype=float)
    grad = np.zeros_like(params)
    for k in range(params.size):
        e = np.zeros_like(params)
        e[k] = step
        grad[k] = (f(params + e) - f(params - e)) / (2 * step)
    return grad


def feature_state(features: Sequence[float], alpha: float) -> np.ndarray:
    """``RX(alpha x_q)`` on each qubit of ``|0...0>``, as a dense vector."""
    n = len(features)
    ops = {q: expm_hermitian(_PAULI["X"] * alpha * features[q] / 2) for q in range(n)}
    zero = np.zeros(2**n, dtype=complex)
    zero[0] = 1
    return embed(ops, n) @ zero


def product_state_equivalence(neighbor_features: Sequence[Sequence[float]], alphas: Sequence[float],
                              ansatz, params: Sequence[float], obs: Observable,
                              discarded: Sequence[int] = ()) -> dict:
    """Compare the joint product-state evaluation with per-neighbour evaluation.

    Each neighbour ``w`` gets its own register prepared in
    ``|F(alpha_w x_w)>``; the same ansatz acts on every register. The joint
    observable is the register-average of ``obs``. The joint expectation is
    computed on the full tensor-product density matrix and compared with the
    mean of per-register expectations.
    """
    regs = len(neighbor_features)
    k = ansatz.num_qubits
    if regs < 1 or regs > MAX_PRODUCT_REGISTERS:
        raise OracleError(f"supports 1..{MAX_PRODUCT_REGISTERS} neighbours, got {regs}")
    if k > MAX_REGISTER_QUBITS:
        raise OracleError(f"supports at most {MAX_REGISTER_QUBITS} qubits per register, got {k}")
    if len(alphas) != regs:
        raise OracleError("one attention weight per neighbour")
    for x in neighbor_features:
        if len(x) != k:
            raise OracleError(f"each neighbour needs {k} features")

    singles = []
    for x, a in zip(neighbor_features, alphas):
        singles.append(density_pipeline_expectation(ansatz, params, obs, discarded,
                                                    init=feature_state(x, a)))

    # register w occupies qubits [w*k, (w+1)*k); register 0 is least significant
    n = regs * k
    init = np.ones(1, dtype=complex)
    for x, a in reversed(list(zip(neighbor_features, alphas))):
        init = np.kron(init, feature_state(x, a))
    gates, disc, terms = [], [], []
    for w in range(regs):
        off = w * k
        gates += [Gate(g.kind, tuple(q + off for q in g.targets), tuple(f"r{w}.{s}" for s in g.param_slots))
                  for g in ansatz.gates]
        disc += [q + off for q in discarded]
        terms += [(q + off, wt) for q, wt in obs.terms]

    class _Joint:
        num_qubits = n

    joint = _Joint()
    joint.gates = gates
    joint.slot_names = [f"r{w}.{s}" for w in range(regs) for s in ansatz.slot_names]
    joint_params = list(params) * regs
    joint_obs = Observable(tuple(terms), obs.normalization * regs)
    value = density_pipeline_expectation(joint, joint_params, joint_obs, disc, init=init)
    mean = float(np.mean(singles))
    return {
        "joint": value,
        "per_register": singles,
        "mean_of_registers": mean,
        "abs_error": abs(value - mean),
    }
