import numpy as np
import pytest

from qgat.graph import MolecularGraph
from qgat.qsim import Gate


def random_circuit(rng, n, n_gates, max_slots=None):
    """Random gate list over fresh slots; returns (gates, slot_names)."""
    gates, slots = [], []
    kinds = ["RX", "RY", "RZ", "RG", "CZ", "CX"] if n > 1 else ["RX", "RY", "RZ", "RG"]
    for _ in range(n_gates):
        kind = kinds[rng.integers(len(kinds))]
        need = {"RG": 3, "CZ": 0, "CX": 0}.get(kind, 1)
        if max_slots is not None and len(slots) + need > max_slots:
            kind, need = ("CZ", 0) if n > 1 else ("RZ", 0)
            if n == 1:
                break
        if kind in ("CZ", "CX"):
            a, b = rng.choice(n, size=2, replace=False)
            gates.append(Gate(kind, (int(a), int(b))))
        else:
            names = tuple(f"s{len(slots) + k}" for k in range(need))
            slots += names
            gates.append(Gate(kind, (int(rng.integers(n)),), names))
    return gates, slots


class Circuit:
    """Minimal circuit record for qsim/oracle functions."""

    def __init__(self, n, gates, slot_names):
        self.num_qubits = n
        self.gates = list(gates)
        self.slot_names = list(slot_names)


def random_state(rng, n):
    amps = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return amps / np.linalg.norm(amps)


def path_graph(features, target=0.0, gid="path"):
    n = len(features)
    adj = np.zeros((n, n), dtype=bool)
    for i in range(n - 1):
        adj[i, i + 1] = adj[i + 1, i] = True
    return MolecularGraph(gid, np.asarray(features, dtype=float), adj, target)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_graphs():
    rng = np.random.default_rng(5)
    graphs = []
    for i, n in enumerate([1, 2, 3, 4, 3]):
        feats = rng.uniform(0, np.pi, size=(n, 7))
        adj = np.zeros((n, n), dtype=bool)
        for v in range(1, n):
            u = int(rng.integers(v))
            adj[u, v] = adj[v, u] = True
        graphs.append(MolecularGraph(f"g{i}", feats, adj, float(rng.uniform())))
    return graphs
