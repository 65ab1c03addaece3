"""Circuit components: Fourier feature map, W convolution cell, pooling, QGCN.

A :class:`CircuitSpec` is a flat gate list over named angle slots. Each slot
is bound either to a trainable parameter or to an input feature (optionally
multiplied by a trainable per-qubit scale). Trainable parameters are
addressed by ``CircuitSpec.trainable_names``.

Slot names follow ``l{layer}.j{step}.w{cell}.{k}`` for W cells (``k`` in
0..14), ``fm{q}`` for feature-map angles and ``scale{q}`` for encoding
scales.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .qsim import CircuitError, Gate, Observable, Program

W_CELL_SLOTS = 15
POOL_GATES = ("CX", "CZ", "none")


@dataclass(frozen=True)
class SlotBinding:
    """Where a slot's angle comes from.

    ``source == "trainable"``: angle is ``theta[param]``.
    ``source == "feature"``: angle is ``x[feature] * theta[scale]``, or just
    ``x[feature]`` when ``scale`` is None.
    """

    source: str
    param: int | None = None
    feature: int | None = None
    scale: int | None = None


@dataclass(frozen=True)
class PoolStep:
    discarded: tuple[int, ...]
    survivors: tuple[int, ...]
    gates: tuple[Gate, ...]


@dataclass(frozen=True)
class PoolPlan:
    steps: tuple[PoolStep, ...]

    @property
    def discarded(self) -> tuple[int, ...]:
        return tuple(sorted(q for s in self.steps for q in s.discarded))

    @property
    def survivors(self) -> tuple[int, ...]:
        return self.steps[-1].survivors if self.steps else ()


@dataclass(frozen=True)
class FeatureMapSpec:
    num_qubits: int
    trainable: bool
    gates: tuple[Gate, ...]
    angle_slots: tuple[str, ...]
    scale_names: tuple[str, ...]

    def angles(self, x, scales=None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.num_qubits:
            raise CircuitError(f"feature map expects {self.num_qubits} features, got {x.shape[-1]}")
        if not self.trainable or scales is None:
            return x
        return x * np.asarray(scales, dtype=float)


@dataclass(frozen=True)
class CircuitSpec:
    num_qubits: int
    gates: tuple[Gate, ...]
    slot_names: tuple[str, ...]
    slot_bindings: dict = field(compare=False)
    trainable_names: tuple[str, ...] = ()
    observable_qubits: tuple[int, ...] = ()
    num_features: int = 0

    def __post_init__(self):
        used = {s for g in self.gates for s in g.param_slots}
        if len(set(self.slot_names)) != len(self.slot_names):
            raise CircuitError("slot names must be unique")
        if used != set(self.slot_names):
            raise CircuitError("slot_names must list exactly the slots read by gates")
        if set(self.slot_bindings) != set(self.slot_names):
            raise CircuitError("every slot needs a binding")
        self._lower()

    def _lower(self):
        names = self.slot_names
        train = [(i, self.slot_bindings[s].param) for i, s in enumerate(names)
                 if self.slot_bindings[s].source == "trainable"]
        feat = [(i, self.slot_bindings[s]) for i, s in enumerate(names)
                if self.slot_bindings[s].source == "feature"]
        cache = {
            "program": Program.compile(self.num_qubits, self.gates, names),
            "train_slots": np.array([i for i, _ in train], dtype=int),
            "train_params": np.array([p for _, p in train], dtype=int),
            "feat_slots": np.array([i for i, _ in feat], dtype=int),
            "feat_index": np.array([b.feature for _, b in feat], dtype=int),
            "feat_scale": np.array([-1 if b.scale is None else b.scale for _, b in feat], dtype=int),
        }
        object.__setattr__(self, "_cache", cache)

    @property
    def program(self) -> Program:
        return self._cache["program"]

    @property
    def num_trainable(self) -> int:
        return len(self.trainable_names)

    def bind(self, theta, x=None) -> np.ndarray:
        """Slot angle vector(s) from trainable ``theta`` and features ``x``.

        ``x`` of shape ``(B, num_features)`` gives angles of shape
        ``(B, n_slots)``; a 1-D ``x`` gives a 1-D result.
        """
        c = self._cache
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.num_trainable,):
            raise CircuitError(f"expected {self.num_trainable} trainable values, got {theta.shape}")
        if x is None:
            if len(c["feat_slots"]):
                raise CircuitError("circuit has feature slots; x is required")
            angles = np.zeros(len(self.slot_names))
            angles[c["train_slots"]] = theta[c["train_params"]]
            return angles
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[1] != self.num_features:
            raise CircuitError(f"expected {self.num_features} features, got {x.shape[1]}")
        angles = np.zeros((x.shape[0], len(self.slot_names)))
        angles[:, c["train_slots"]] = theta[c["train_params"]]
        angles[:, c["feat_slots"]] = x[:, c["feat_index"]] * self._scales(theta)
        return angles[0] if single else angles

    def _scales(self, theta) -> np.ndarray:
        idx = self._cache["feat_scale"]
        return np.where(idx >= 0, theta[np.maximum(idx, 0)], 1.0)

    def bind_vjp(self, theta, x, d_angles):
        """Pull slot-angle cotangents back to ``(d_theta, d_x)``.

        ``d_angles`` has shape ``(B, n_slots)``; ``d_theta`` is summed over the
        batch, ``d_x`` keeps it.
        """
        c = self._cache
        theta = np.asarray(theta, dtype=float)
        x = np.atleast_2d(np.asarray(x, dtype=float))
        d_angles = np.atleast_2d(d_angles)
        d_theta = np.zeros(self.num_trainable)
        np.add.at(d_theta, c["train_params"], d_angles[:, c["train_slots"]].sum(axis=0))
        d_feat = d_angles[:, c["feat_slots"]]
        d_x = np.zeros_like(x)
        np.add.at(d_x.T, c["feat_index"], (d_feat * self._scales(theta)).T)
        scaled = c["feat_scale"] >= 0
        if scaled.any():
            contrib = (d_feat * x[:, c["feat_index"]]).sum(axis=0)
            np.add.at(d_theta, c["feat_scale"][scaled], contrib[scaled])
        return d_theta, d_x

    def dump(self) -> str:
        """Stable text form: one gate per line, ``KIND targets slots``."""
        lines = [f"# qubits={self.num_qubits} slots={len(self.slot_names)} trainable={self.num_trainable}"]
        for g in self.gates:
            targets = ",".join(str(t) for t in g.targets)
            slots = ",".join(g.param_slots) or "-"
            lines.append(f"{g.kind} {targets} {slots}")
        return "\n".join(lines) + "\n"


def parse_dump(text: str) -> list[Gate]:
    """Inverse of :meth:`CircuitSpec.dump` for the gate lines."""
    gates = []
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        kind, targets, slots = line.split()
        gates.append(Gate(kind, tuple(int(t) for t in targets.split(",")),
                          () if slots == "-" else tuple(slots.split(","))))
    return gates


# ---------------------------------------------------------------------------
# building blocks


def build_feature_map(num_qubits: int, trainable: bool = False) -> FeatureMapSpec:
    """One RX per qubit; angle ``x_q`` or ``scale_q * x_q`` in trainable mode."""
    if num_qubits < 1:
        raise CircuitError("feature map needs at least one qubit")
    slots = tuple(f"fm{q}" for q in range(num_qubits))
    gates = tuple(Gate("RX", (q,), (slots[q],)) for q in range(num_qubits))
    scales = tuple(f"scale{q}" for q in range(num_qubits)) if trainable else ()
    return FeatureMapSpec(num_qubits, trainable, gates, slots, scales)


def conv_pairs(n_live: int, j: int) -> list[tuple[int, int]]:
    """Nearest-neighbour positions ``(i, i+1)`` with ``i = j (mod 2)``."""
    if n_live < 2:
        raise CircuitError(f"convolution needs at least 2 live qubits, got {n_live}")
    return [(i, i + 1) for i in range(j % 2, n_live - 1, 2)]


def build_w_cell(pair: tuple[int, int], prefix: str) -> tuple[list[Gate], list[str]]:
    """Two-qubit W cell with 15 fresh slots ``{prefix}.0 .. {prefix}.14``.

    Layout: RG on both wires, CZ, RZ (low) and RY (high), CZ, RY (high), CZ,
    RG on both wires.
    """
    lo, hi = pair
    if lo == hi:
        raise CircuitError("W cell needs two distinct qubits")
    s = [f"{prefix}.{k}" for k in range(W_CELL_SLOTS)]
    gates = [
        Gate("RG", (lo,), s[0:3]),
        Gate("RG", (hi,), s[3:6]),
        Gate("CZ", (lo, hi)),
        Gate("RZ", (lo,), s[6:7]),
        Gate("RY", (hi,), s[7:8]),
        Gate("CZ", (lo, hi)),
        Gate("RY", (hi,), s[8:9]),
        Gate("CZ", (lo, hi)),
        Gate("RG", (lo,), s[9:12]),
        Gate("RG", (hi,), s[12:15]),
    ]
    return gates, s


def build_conv_layer(live, r: int, layer: int = 0, share: bool = False) -> tuple[list[Gate], list[str]]:
    """Depth-``r`` convolution over the live qubits.

    ``live`` is a count (positions are labels) or an explicit list of qubit
    labels. With ``share=True`` every cell of the layer reads the same 15
    slots.
    """
    labels = list(range(live)) if isinstance(live, int) else list(live)
    if len(labels) % 2:
        raise CircuitError(f"convolution acts on an even number of qubits, got {len(labels)}")
    if r < 1:
        raise CircuitError("convolution depth must be >= 1")
    gates: list[Gate] = []
    slots: list[str] = []
    for j in range(r):
        for w, (a, b) in enumerate(conv_pairs(len(labels), j)):
            prefix = f"l{layer}" if share else f"l{layer}.j{j}.w{w}"
            cell, names = build_w_cell((labels[a], labels[b]), prefix)
            gates += cell
            slots += [n for n in names if n not in slots] if share else names
    return gates, slots


def build_pool_layer(live: Sequence[int], gate: str = "CX") -> PoolStep:
    """Discard even positions; each discarded qubit first controls its right neighbour."""
    live = list(live)
    if len(live) % 2:
        raise CircuitError(f"pooling needs an even number of live qubits, got {len(live)}")
    if gate not in POOL_GATES:
        raise CircuitError(f"pool gate must be one of {POOL_GATES}")
    discarded = tuple(live[0::2])
    survivors = tuple(live[1::2])
    gates = () if gate == "none" else tuple(Gate(gate, (d, s)) for d, s in zip(discarded, survivors))
    return PoolStep(discarded, survivors, gates)


def build_qgcn(num_qubits: int, depths: Sequence[int], *, trainable_scales: bool = False,
               share_cells: bool = False, pool_gate: str = "CX",
               include_feature_map: bool = True) -> tuple[CircuitSpec, PoolPlan]:
    """Feature map followed by alternating convolution and pooling layers.

    Trainable parameters are ordered: W-cell slots, then (optionally) the
    per-qubit encoding scales. With ``include_feature_map=False`` the
    returned circuit is the bare ansatz acting on whatever state it is given.
    """
    depths = list(depths)
    if not depths:
        raise CircuitError("need at least one layer")
    if num_qubits % (2 ** len(depths)):
        raise CircuitError(f"{num_qubits} qubits cannot be halved {len(depths)} times")
    gates: list[Gate] = []
    bindings: dict[str, SlotBinding] = {}
    slot_names: list[str] = []
    trainable: list[str] = []

    fm = build_feature_map(num_qubits, trainable_scales)
    live = list(range(num_qubits))
    steps = []
    for layer, r in enumerate(depths):
        conv, names = build_conv_layer(live, r, layer, share_cells)
        gates += conv
        for name in names:
            bindings[name] = SlotBinding("trainable", param=len(trainable))
            trainable.append(name)
        slot_names += names
        step = build_pool_layer(live, pool_gate)
        gates += step.gates
        steps.append(step)
        live = list(step.survivors)

    if include_feature_map:
        scale_index = {}
        for name in fm.scale_names:
            scale_index[name] = len(trainable)
            trainable.append(name)
        for q, name in enumerate(fm.angle_slots):
            scale = scale_index[fm.scale_names[q]] if fm.trainable else None
            bindings[name] = SlotBinding("feature", feature=q, scale=scale)
        gates = list(fm.gates) + gates
        slot_names = list(fm.angle_slots) + slot_names

    spec = CircuitSpec(
        num_qubits=num_qubits,
        gates=tuple(gates),
        slot_names=tuple(slot_names),
        slot_bindings=bindings,
        trainable_names=tuple(trainable),
        observable_qubits=tuple(live),
        num_features=num_qubits if include_feature_map else 0,
    )
    return spec, PoolPlan(tuple(steps))


def survivor_observable(plan: PoolPlan, weights: Sequence[float] | None = None) -> Observable:
    return Observable.magnetization(plan.survivors, weights)
