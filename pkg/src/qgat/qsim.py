"""Exact statevector simulation for small parameterized circuits.

Conventions:
    * qubit 0 is the least significant bit of the amplitude index, so the
      basis state ``|q_{n-1} ... q_1 q_0>`` sits at index ``sum(q_k << k)``;
    * rotations are ``R_P(theta) = exp(-i theta P / 2)``;
    * ``RG(t1, t2, t3) = RX(t1) . RZ(t2) . RX(t3)`` as a matrix product, so
      ``RX(t3)`` hits the state first.

The production path never builds a density matrix. Discarded (pooled) qubits
are handled by leaving them out of the observable, which is exact for the
diagonal Pauli-Z observables used here.

The vectorised kernels accept a leading batch axis: states of shape
``(B, 2**n)`` and angles of shape ``(B, n_slots)``. This is what the
training loop uses to push a whole molecule batch through one circuit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

MAX_QUBITS = 12
MAX_DENSITY_QUBITS = 6

ROTATIONS = ("RX", "RY", "RZ")
GATE_KINDS = ("RX", "RY", "RZ", "CZ", "CX", "RG")
_N_SLOTS = {"RX": 1, "RY": 1, "RZ": 1, "CZ": 0, "CX": 0, "RG": 3}
_N_TARGETS = {"RX": 1, "RY": 1, "RZ": 1, "CZ": 2, "CX": 2, "RG": 1}

_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)
_PAULI = {"X": _X, "Y": _Y, "Z": _Z}


class CircuitError(ValueError):
    """Raised for malformed gates, circuits, states or observables."""


@dataclass(frozen=True)
class Gate:
    """One gate of a circuit.

    ``targets`` lists qubit indices; for ``CX`` the first entry is the
    control. ``param_slots`` names the angles the gate reads, in order
    (``RG`` reads ``theta1, theta2, theta3``).
    """

    kind: str
    targets: tuple[int, ...]
    param_slots: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise CircuitError(f"unknown gate kind {self.kind!r}")
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        object.__setattr__(self, "param_slots", tuple(self.param_slots))
        if len(self.targets) != _N_TARGETS[self.kind]:
            raise CircuitError(
                f"{self.kind} takes {_N_TARGETS[self.kind]} target(s), got {len(self.targets)}"
            )
        if len(self.param_slots) != _N_SLOTS[self.kind]:
            raise CircuitError(
                f"{self.kind} takes {_N_SLOTS[self.kind]} slot(s), got {len(self.param_slots)}"
            )
        if len(set(self.targets)) != len(self.targets):
            raise CircuitError(f"{self.kind} targets must be distinct: {self.targets}")
        if min(self.targets) < 0:
            raise CircuitError(f"negative qubit index in {self.targets}")


@dataclass(frozen=True)
class StateVector:
    num_qubits: int
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not 1 <= self.num_qubits <= MAX_QUBITS:
            raise CircuitError(f"num_qubits must be in 1..{MAX_QUBITS}, got {self.num_qubits}")
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (2**self.num_qubits,):
            raise CircuitError(
                f"expected {2**self.num_qubits} amplitudes, got shape {amps.shape}"
            )
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def zero(cls, num_qubits: int) -> "StateVector":
        amps = np.zeros(2**num_qubits, dtype=complex)
        amps[0] = 1.0
        return cls(num_qubits, amps)

    @classmethod
    def basis(cls, bits: str) -> "StateVector":
        """Basis state from a ket label written ``q_{n-1} ... q_0``.

        >>> StateVector.basis("01").amplitudes.argmax()
        1
        """
        n = len(bits)
        amps = np.zeros(2**n, dtype=complex)
        amps[int(bits, 2)] = 1.0
        return cls(n, amps)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


@dataclass(frozen=True)
class Observable:
    """Weighted average magnetization ``(1/N) sum_i w_i <Z_i>``."""

    terms: tuple[tuple[int, float], ...]
    normalization: int = 1

    def __post_init__(self):
        terms = tuple((int(q), float(w)) for q, w in self.terms)
        object.__setattr__(self, "terms", terms)
        qubits = [q for q, _ in terms]
        if len(set(qubits)) != len(qubits):
            raise CircuitError(f"observable qubits must be unique: {qubits}")
        if self.normalization < 1:
            raise CircuitError("normalization must be >= 1")

    @classmethod
    def magnetization(cls, qubits: Iterable[int], weights: Sequence[float] | None = None):
        qubits = list(qubits)
        if weights is None:
            weights = [1.0] * len(qubits)
        return cls(tuple(zip(qubits, weights)), normalization=len(qubits))

    @property
    def qubits(self) -> tuple[int, ...]:
        return tuple(q for q, _ in self.terms)

    def bound(self) -> float:
        return max((abs(w) for _, w in self.terms), default=0.0)

    def check(self, num_qubits: int) -> None:
        for q in self.qubits:
            if not 0 <= q < num_qubits:
                raise CircuitError(f"observable qubit {q} out of range for {num_qubits} qubits")

    def diagonal(self, num_qubits: int) -> np.ndarray:
        """The observable as a real diagonal over the computational basis."""
        self.check(num_qubits)
        diag = np.zeros(2**num_qubits)
        for q, w in self.terms:
            diag += w * _z_signs(num_qubits, q)
        return diag / self.normalization


@dataclass(frozen=True)
class DensityMatrix:
    num_qubits: int
    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not 1 <= self.num_qubits <= MAX_DENSITY_QUBITS:
            raise CircuitError(
                f"density matrices support 1..{MAX_DENSITY_QUBITS} qubits, got {self.num_qubits}"
            )
        rho = np.asarray(self.entries, dtype=complex)
        dim = 2**self.num_qubits
        if rho.shape != (dim, dim):
            raise CircuitError(f"expected {dim}x{dim} matrix, got {rho.shape}")
        rho.setflags(write=False)
        object.__setattr__(self, "entries", rho)

    @classmethod
    def from_state(cls, state: StateVector) -> "DensityMatrix":
        psi = state.amplitudes
        return cls(state.num_qubits, np.outer(psi, psi.conj()))

    def trace(self) -> complex:
        return complex(np.trace(self.entries))

    def is_valid(self, atol: float = 1e-10) -> bool:
        rho = self.entries
        if not np.allclose(rho, rho.conj().T, atol=atol):
            return False
        if abs(np.trace(rho) - 1) > atol:
            return False
        return bool(np.linalg.eigvalsh(rho).min() >= -1e-9)


# ---------------------------------------------------------------------------
# small matrices


def rotation_matrix(axis: str, theta: float) -> np.ndarray:
    """``exp(-i theta P / 2)`` for ``P`` in X, Y, Z."""
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return c * np.eye(2, dtype=complex) - 1j * s * _PAULI[axis]


def rg_matrix(theta1: float, theta2: float, theta3: float) -> np.ndarray:
    """General single-qubit rotation ``RX(theta1) RZ(theta2) RX(theta3)``."""
    return rotation_matrix("X", theta1) @ rotation_matrix("Z", theta2) @ rotation_matrix("X", theta3)


# ---------------------------------------------------------------------------
# vectorised kernels on (B, 2**n) arrays


@lru_cache(maxsize=None)
def _z_signs(n: int, q: int) -> np.ndarray:
    bits = (np.arange(2**n) >> q) & 1
    signs = 1.0 - 2.0 * bits
    signs.setflags(write=False)
    return signs


@lru_cache(maxsize=None)
def _cz_signs(n: int, a: int, b: int) -> np.ndarray:
    idx = np.arange(2**n)
    both = ((idx >> a) & 1) & ((idx >> b) & 1)
    signs = (1.0 - 2.0 * both).astype(complex)
    signs.setflags(write=False)
    return signs


@lru_cache(maxsize=None)
def _cx_perm(n: int, control: int, target: int) -> np.ndarray:
    idx = np.arange(2**n)
    perm = np.where((idx >> control) & 1, idx ^ (1 << target), idx)
    perm.setflags(write=False)
    return perm


def _split(psi: np.ndarray, n: int, q: int) -> np.ndarray:
    return psi.reshape(psi.shape[0], 2 ** (n - q - 1), 2, 2**q)


def _rotate(psi: np.ndarray, n: int, axis: str, q: int, theta) -> np.ndarray:
    """Apply ``exp(-i theta P/2)`` to qubit ``q``; ``theta`` scalar or shape (B,)."""
    theta = np.asarray(theta, dtype=float)
    if theta.ndim:
        theta = theta[:, None, None]
    v = _split(psi, n, q)
    a, b = v[:, :, 0, :], v[:, :, 1, :]
    out = np.empty_like(v)
    if axis == "Z":
        phase = np.exp(-0.5j * theta)
        out[:, :, 0, :] = phase * a
        out[:, :, 1, :] = phase.conj() * b
    else:
        c, s = np.cos(theta / 2), np.sin(theta / 2)
        if axis == "X":
            out[:, :, 0, :] = c * a - 1j * s * b
            out[:, :, 1, :] = c * b - 1j * s * a
        else:
            out[:, :, 0, :] = c * a - s * b
            out[:, :, 1, :] = c * b + s * a
    return out.reshape(psi.shape)


def _pauli(psi: np.ndarray, n: int, axis: str, q: int) -> np.ndarray:
    v = _split(psi, n, q)
    a, b = v[:, :, 0, :], v[:, :, 1, :]
    out = np.empty_like(v)
    if axis == "X":
        out[:, :, 0, :], out[:, :, 1, :] = b, a
    elif axis == "Y":
        out[:, :, 0, :], out[:, :, 1, :] = -1j * b, 1j * a
    else:
        out[:, :, 0, :], out[:, :, 1, :] = a, -b
    return out.reshape(psi.shape)


# ---------------------------------------------------------------------------
# compiled programs


@dataclass(frozen=True)
class Program:
    """A gate list lowered to primitive ops over a flat angle vector.

    Each op is ``(kind, qubits, slot)`` with ``kind`` one of ``"X"``,
    ``"Y"``, ``"Z"`` (rotations), ``"CZ"`` or ``"CX"``; ``slot`` indexes the
    angle vector and is ``-1`` for fixed gates.
    """

    num_qubits: int
    num_slots: int
    ops: tuple[tuple[str, tuple[int, ...], int], ...]

    @classmethod
    def compile(cls, num_qubits: int, gates: Sequence[Gate], slot_names: Sequence[str]) -> "Program":
        if not 1 <= num_qubits <= MAX_QUBITS:
            raise CircuitError(f"num_qubits must be in 1..{MAX_QUBITS}, got {num_qubits}")
        index = {name: i for i, name in enumerate(slot_names)}
        if len(index) != len(slot_names):
            raise CircuitError("duplicate slot names")
        ops = []
        for gate in gates:
            if max(gate.targets) >= num_qubits:
                raise CircuitError(f"{gate.kind} target {gate.targets} out of range for {num_qubits} qubits")
            try:
                slots = [index[s] for s in gate.param_slots]
            except KeyError as exc:
                raise CircuitError(f"gate reads unknown slot {exc.args[0]!r}") from None
            if gate.kind in ROTATIONS:
                ops.append((gate.kind[1], gate.targets, slots[0]))
            elif gate.kind == "RG":
                q = gate.targets
                ops += [("X", q, slots[2]), ("Z", q, slots[1]), ("X", q, slots[0])]
            else:
                ops.append((gate.kind, gate.targets, -1))
        return cls(num_qubits, len(slot_names), tuple(ops))

    def _prepare(self, angles, init):
        angles = np.asarray(angles, dtype=float)
        batched = angles.ndim == 2
        if angles.shape[-1] != self.num_slots:
            raise CircuitError(f"expected {self.num_slots} angles, got {angles.shape[-1]}")
        batch = angles.shape[0] if batched else 1
        dim = 2**self.num_qubits
        if init is None:
            psi = np.zeros((batch, dim), dtype=complex)
            psi[:, 0] = 1.0
        else:
            init = np.asarray(init, dtype=complex)
            psi = np.broadcast_to(init.reshape(-1, dim), (batch, dim)).astype(complex)
        return angles.reshape(batch, -1).T, psi, batched

    def _step(self, psi, op, cols, inverse=False):
        kind, qs, slot = op
        n = self.num_qubits
        if slot >= 0:
            theta = cols[slot]
            return _rotate(psi, n, kind, qs[0], -theta if inverse else theta)
        if kind == "CZ":
            return psi * _cz_signs(n, *qs)
        return psi[:, _cx_perm(n, *qs)]

    def run(self, angles, init=None) -> np.ndarray:
        """Final statevector(s); shape ``(2**n,)`` or ``(B, 2**n)`` following ``angles``."""
        cols, psi, batched = self._prepare(angles, init)
        for op in self.ops:
            psi = self._step(psi, op, cols)
        return psi if batched else psi[0]

    def expectation_and_gradient(self, angles, diagonal: np.ndarray, init=None, return_state=False):
        """Expectation of a diagonal observable and its gradient by adjoint sweep.

        Returns ``(values, grads)`` with ``grads[..., k] = d<O>/d angle_k``,
        plus the final state(s) when ``return_state`` is set. One forward
        pass plus one reverse pass, independent of slot count.
        """
        cols, psi, batched = self._prepare(angles, init)
        for op in self.ops:
            psi = self._step(psi, op, cols)
        final = psi
        values = (diagonal * (psi.real**2 + psi.imag**2)).sum(axis=1)
        lam = diagonal * psi
        batch = psi.shape[0]
        grads = np.zeros((self.num_slots, batch))
        n = self.num_qubits
        both = np.concatenate([psi, lam])
        for op in reversed(self.ops):
            kind, qs, slot = op
            if slot >= 0:
                p_psi = _pauli(both[:batch], n, kind, qs[0])
                grads[slot] += np.einsum("bi,bi->b", both[batch:].conj(), p_psi).imag
                theta = cols[slot]
                both = _rotate(both, n, kind, qs[0], -np.concatenate([theta, theta]) if theta.ndim else -theta)
            else:
                both = self._step(both, op, cols)
        grads = grads.T
        if not batched:
            out = (float(values[0]), grads[0], final[0])
        else:
            out = (values, grads, final)
        return out if return_state else out[:2]


# ---------------------------------------------------------------------------
# public single-state operations


def apply_gate(state: StateVector, gate: Gate, angles: Sequence[float] = ()) -> StateVector:
    """Return ``gate`` applied to ``state``.

    Raises:
        CircuitError: a target is out of range or ``angles`` does not match
            the gate's slot count.
    """
    angles = list(angles)
    if len(angles) != len(gate.param_slots):
        raise CircuitError(f"{gate.kind} needs {len(gate.param_slots)} angle(s), got {len(angles)}")
    if max(gate.targets) >= state.num_qubits:
        raise CircuitError(f"{gate.kind} target {gate.targets} out of range for {state.num_qubits} qubits")
    program = Program.compile(state.num_qubits, [gate], list(gate.param_slots))
    return StateVector(state.num_qubits, program.run(angles, init=state.amplitudes))


def expectation(state: StateVector, obs: Observable) -> float:
    """Exact ``(1/N) sum_i w_i <Z_i>`` on ``state``."""
    return float(np.dot(obs.diagonal(state.num_qubits), state.probabilities()))


def marginal_probabilities(state: StateVector, keep: Sequence[int]) -> np.ndarray:
    """Born probabilities of the qubits in ``keep`` with the rest summed out.

    The result is indexed like a ``len(keep)``-qubit register whose qubit
    ``j`` is ``keep[j]`` (sorted ascending).
    """
    n = state.num_qubits
    keep = sorted(keep)
    probs = state.probabilities().reshape((2,) * n)
    # array axis a holds qubit n-1-a
    drop = tuple(n - 1 - q for q in range(n) if q not in keep)
    return probs.sum(axis=drop).reshape(-1)


def expectation_on_survivors(state: StateVector, obs: Observable, discarded: Iterable[int]) -> float:
    """Expectation after discarding qubits, with measurements deferred to the end.

    Equal to ``Tr[O rho_survivors]`` where ``rho_survivors`` is the partial
    trace over ``discarded``.

    Raises:
        CircuitError: the observable touches a discarded qubit.
    """
    n = state.num_qubits
    discarded = set(discarded)
    obs.check(n)
    for q in discarded:
        if not 0 <= q < n:
            raise CircuitError(f"discarded qubit {q} out of range")
    clash = discarded.intersection(obs.qubits)
    if clash:
        raise CircuitError(f"observable acts on discarded qubits {sorted(clash)}")
    keep = [q for q in range(n) if q not in discarded]
    marg = marginal_probabilities(state, keep)
    relabel = {q: j for j, q in enumerate(keep)}
    local = Observable(tuple((relabel[q], w) for q, w in obs.terms), obs.normalization)
    return float(np.dot(local.diagonal(len(keep)), marg))


def gradient(circuit, params: Sequence[float], init: StateVector | None, obs: Observable,
             discarded: Iterable[int] = ()) -> np.ndarray:
    """``d<O>/d theta_k`` for every slot of ``circuit``, in ``circuit.slot_names`` order.

    ``circuit`` is anything with ``num_qubits``, ``gates`` and ``slot_names``
    (normally a :class:`qgat.circuits.CircuitSpec`). Discarded qubits must
    not carry observable terms.
    """
    params = np.asarray(params, dtype=float)
    if params.shape != (len(circuit.slot_names),):
        raise CircuitError(f"expected {len(circuit.slot_names)} params, got {params.shape}")
    clash = set(discarded).intersection(obs.qubits)
    if clash:
        raise CircuitError(f"observable acts on discarded qubits {sorted(clash)}")
    program = Program.compile(circuit.num_qubits, circuit.gates, circuit.slot_names)
    amps = None if init is None else init.amplitudes
    _, grads = program.expectation_and_gradient(params, obs.diagonal(circuit.num_qubits), init=amps)
    return grads
