"""Forward and reverse passes for (Q)GNN / (Q)GAT molecule regressors.

Per molecule, atoms are visited in index order. At atom ``v`` the neighbour
feature rows are scaled by their attention coefficients and averaged, the
previous atom's output is appended, and the 8-vector goes through a
sub-model (an 8-qubit QGCN circuit or a small MLP). The molecule prediction
is the mean of the atom outputs.

``single`` aggregation reuses one sub-model at every step; ``multi`` gives
step ``v`` its own sub-model ``v``.

All molecules of a batch advance through step ``v`` together, so each
circuit evaluation is one vectorised call over the batch. Gradients are
exact: adjoint differentiation inside circuits, hand-written reverse mode
everywhere else.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .circuits import build_qgcn
from .graph import NUM_FEATURES, MolecularGraph

INPUT_WIDTH = NUM_FEATURES + 1
ATTENTION_MODES = ("none", "free", "softmax", "feature_based")
LEAKY_SLOPE = 0.2
CHECKPOINT_FORMAT = "qgat-checkpoint/1"


class ModelError(ValueError):
    pass


# ---------------------------------------------------------------------------
# small pieces


def relu(x):
    return np.maximum(x, 0.0)


def leaky_relu(x, slope: float = LEAKY_SLOPE):
    return np.where(x > 0, x, slope * x)


def softmax(scores) -> np.ndarray:
    scores = np.asarray(scores, dtype=float)
    z = np.exp(scores - scores.max())
    return z / z.sum()


def classical_attention(h_v, neighbors, score_vector) -> np.ndarray:
    """GAT coefficients ``softmax_u(LeakyReLU(a . [h_v || h_u]))`` over the neighbours."""
    neighbors = np.atleast_2d(np.asarray(neighbors, dtype=float))
    if neighbors.shape[0] == 0 or neighbors.size == 0:
        raise ModelError("attention needs at least one neighbour")
    h_v = np.asarray(h_v, dtype=float)
    a = np.asarray(score_vector, dtype=float)
    width = h_v.shape[0]
    if a.shape != (2 * width,):
        raise ModelError(f"score vector must have length {2 * width}")
    scores = leaky_relu(a[:width] @ h_v + neighbors @ a[width:])
    return softmax(scores)


def aggregate_mean(rows, weights) -> np.ndarray:
    """Element-wise mean of ``weights[u] * rows[u]``."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (rows.shape[0],):
        raise ModelError(f"expected {rows.shape[0]} weights, got {weights.shape}")
    return (weights[:, None] * rows).mean(axis=0)


def multi_head_concat(embeddings) -> np.ndarray:
    """Concatenate per-head embeddings and apply ReLU."""
    parts = [np.atleast_1d(np.asarray(e, dtype=float)) for e in embeddings]
    if not parts:
        raise ModelError("need at least one head")
    return relu(np.concatenate(parts))


# ---------------------------------------------------------------------------
# sub-models


class QuantumSubModel:
    """Feature map plus QGCN ansatz, read out as survivor magnetization.

    Parameter layout: W-cell slots, encoding scales (if trainable), then
    observable weights (if trainable).
    """

    kind = "quantum"

    def __init__(self, num_qubits: int = INPUT_WIDTH, depths: Sequence[int] = (3, 1, 1),
                 trainable_scales: bool = False, trainable_weights: bool = False,
                 share_cells: bool = False, pool_gate: str = "CX", init_spread: float = np.pi):
        self.spec, self.plan = build_qgcn(num_qubits, depths, trainable_scales=trainable_scales,
                                          share_cells=share_cells, pool_gate=pool_gate)
        self.trainable_weights = trainable_weights
        self.init_spread = init_spread
        self.survivors = self.plan.survivors
        self.n_circuit = self.spec.num_trainable
        self.n_weights = len(self.survivors) if trainable_weights else 0
        self.num_params = self.n_circuit + self.n_weights
        self._signs = np.stack([1.0 - 2.0 * ((np.arange(2**num_qubits) >> q) & 1) for q in self.survivors])
        self.input_width = num_qubits

    def segments(self) -> dict[str, int]:
        n_scales = sum(1 for n in self.spec.trainable_names if n.startswith("scale"))
        out = {"circuit": self.n_circuit - n_scales, "encoding": n_scales}
        if self.n_weights:
            out["observable"] = self.n_weights
        return out

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        theta = np.empty(self.num_params)
        names = self.spec.trainable_names
        for i, name in enumerate(names):
            theta[i] = 1.0 if name.startswith("scale") else rng.uniform(-self.init_spread, self.init_spread)
        theta[self.n_circuit:] = 1.0
        return theta

    def _weights(self, params):
        return params[self.n_circuit:] if self.n_weights else np.ones(len(self.survivors))

    def forward(self, params, x):
        theta = params[:self.n_circuit]
        angles = self.spec.bind(theta, x)
        weights = self._weights(params)
        diag = weights @ self._signs / len(self.survivors)
        values, jac, psi = self.spec.program.expectation_and_gradient(angles, diag, return_state=True)
        cache = {"x": x, "jac": jac}
        if self.n_weights:
            probs = psi.real**2 + psi.imag**2
            cache["z"] = probs @ self._signs.T / len(self.survivors)
        return values, cache

    def backward(self, params, cache, g_out):
        theta = params[:self.n_circuit]
        d_angles = g_out[:, None] * cache["jac"]
        d_theta, d_x = self.spec.bind_vjp(theta, cache["x"], d_angles)
        if self.n_weights:
            d_theta = np.concatenate([d_theta, g_out @ cache["z"]])
        return d_theta, d_x


class MLPSubModel:
    """Fully connected net, ReLU on hidden layers, identity output."""

    kind = "classical"

    def __init__(self, widths: Sequence[int] = (INPUT_WIDTH, 8, 1)):
        widths = list(widths)
        if len(widths) < 2 or widths[-1] != 1:
            raise ModelError("MLP widths need an input width and a final width of 1")
        self.widths = widths
        self.input_width = widths[0]
        self.shapes = list(zip(widths[:-1], widths[1:]))
        self.num_params = sum(i * o + o for i, o in self.shapes)

    def segments(self) -> dict[str, int]:
        return {"mlp": self.num_params}

    def _unpack(self, params):
        layers, k = [], 0
        for i, o in self.shapes:
            w = params[k:k + i * o].reshape(i, o)
            k += i * o
            b = params[k:k + o]
            k += o
            layers.append((w, b))
        return layers

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        parts = []
        for i, o in self.shapes:
            bound = 1.0 / np.sqrt(i)
            parts += [rng.uniform(-bound, bound, i * o), rng.uniform(-bound, bound, o)]
        return np.concatenate(parts)

    def forward(self, params, x):
        acts = [x]
        h = x
        layers = self._unpack(params)
        for k, (w, b) in enumerate(layers):
            h = h @ w + b
            if k < len(layers) - 1:
                h = relu(h)
            acts.append(h)
        return h[:, 0], acts

    def backward(self, params, acts, g_out):
        layers = self._unpack(params)
        grads = []
        g = g_out[:, None]
        for k in reversed(range(len(layers))):
            w, _ = layers[k]
            if k < len(layers) - 1:
                g = g * (acts[k + 1] > 0)
            grads.append((acts[k].T @ g, g.sum(axis=0)))
            g = g @ w.T
        flat = []
        for gw, gb in reversed(grads):
            flat += [gw.ravel(), gb]
        return np.concatenate(flat), g


# ---------------------------------------------------------------------------
# configuration and parameter storage


@dataclass
class ModelConfig:
    """What to build. ``hops`` is the number of sub-models in multi mode."""

    kind: str = "quantum"
    aggregation: str = "single"
    attention: str = "none"
    hops: int = 9
    depths: tuple[int, ...] = (3, 1, 1)
    widths: tuple[int, ...] = (INPUT_WIDTH, 8, 1)
    trainable_scales: bool = False
    trainable_weights: bool = False
    share_cells: bool = False
    pool_gate: str = "CX"
    init_spread: float = float(np.pi)

    def __post_init__(self):
        if self.kind not in ("quantum", "classical"):
            raise ModelError(f"kind must be quantum or classical, got {self.kind!r}")
        if self.aggregation not in ("single", "multi"):
            raise ModelError(f"aggregation must be single or multi, got {self.aggregation!r}")
        if self.attention not in ATTENTION_MODES:
            raise ModelError(f"attention must be one of {ATTENTION_MODES}, got {self.attention!r}")
        if self.hops < 1:
            raise ModelError("hops must be >= 1")
        self.depths = tuple(int(d) for d in self.depths)
        self.widths = tuple(int(w) for w in self.widths)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ParameterStore:
    """Flat parameter vector with named contiguous segments."""

    values: np.ndarray
    segments: dict[str, tuple[int, int]] = field(default_factory=dict)

    @classmethod
    def build(cls, parts: list[tuple[str, np.ndarray]]) -> "ParameterStore":
        segments, k = {}, 0
        for name, arr in parts:
            segments[name] = (k, k + len(arr))
            k += len(arr)
        values = np.concatenate([a for _, a in parts]) if parts else np.zeros(0)
        return cls(values.astype(float), segments)

    def view(self, name: str, values=None) -> np.ndarray:
        a, b = self.segments[name]
        return (self.values if values is None else values)[a:b]

    def __len__(self):
        return len(self.values)


# ---------------------------------------------------------------------------
# batches


@dataclass
class GraphBatch:
    """Molecules padded to a common size for step-synchronous evaluation."""

    ids: list[str]
    sizes: np.ndarray
    features: np.ndarray
    adjacency: np.ndarray
    degree: np.ndarray
    edge_b: np.ndarray
    edge_v: np.ndarray
    edge_u: np.ndarray
    edge_param: np.ndarray

    @property
    def width(self) -> int:
        return self.features.shape[1]

    def __len__(self):
        return len(self.ids)


def _build_batch(graphs: Sequence[MolecularGraph], edge_offsets: dict[str, int] | None) -> GraphBatch:
    if not graphs:
        raise ModelError("empty batch")
    m = max(g.num_atoms for g in graphs)
    b = len(graphs)
    feats = np.zeros((b, m, NUM_FEATURES))
    adj = np.zeros((b, m, m))
    eb, ev, eu, ep = [], [], [], []
    for i, g in enumerate(graphs):
        n = g.num_atoms
        feats[i, :n] = g.features
        adj[i, :n, :n] = g.adjacency
        for k, (v, u) in enumerate(g.directed_edges()):
            eb.append(i)
            ev.append(v)
            eu.append(u)
            if edge_offsets is not None:
                if g.id not in edge_offsets:
                    raise ModelError(f"no attention parameters for molecule {g.id!r}")
                ep.append(edge_offsets[g.id] + k)
    as_int = lambda xs: np.asarray(xs, dtype=int)
    return GraphBatch([g.id for g in graphs], np.array([g.num_atoms for g in graphs]), feats, adj,
                      adj.sum(axis=2), as_int(eb), as_int(ev), as_int(eu), as_int(ep))


# ---------------------------------------------------------------------------
# the model


class ModelInstance:
    """A trainable (Q)GNN/(Q)GAT molecule regressor.

    Per-edge attention modes (``free`` and ``softmax``) keep one parameter per
    directed edge of each molecule passed at construction, so only those
    molecules can be evaluated. ``feature_based`` attention is inductive.
    """

    def __init__(self, config: ModelConfig, graphs: Sequence[MolecularGraph] = (), seed: int = 0):
        self.config = config
        if config.kind == "quantum":
            self.sub = QuantumSubModel(INPUT_WIDTH, config.depths, config.trainable_scales,
                                       config.trainable_weights, config.share_cells,
                                       config.pool_gate, config.init_spread)
        else:
            if config.widths[0] != INPUT_WIDTH:
                raise ModelError(f"MLP input width must be {INPUT_WIDTH}")
            self.sub = MLPSubModel(config.widths)
        self.n_hops = config.hops if config.aggregation == "multi" else 1
        rng = np.random.default_rng(seed)
        first = self.sub.init_params(rng)
        parts = [("hop0", first)]
        for h in range(1, self.n_hops):
            parts.append((f"hop{h}", self.sub.init_params(rng)))

        self.edge_offsets: dict[str, int] | None = None
        if config.attention in ("free", "softmax"):
            self.edge_offsets = {}
            k = 0
            for g in graphs:
                self.edge_offsets[g.id] = k
                k += len(g.directed_edges())
            # free weights start at 1; softmax logits at 0 (uniform)
            init = 1.0 if config.attention == "free" else 0.0
            parts.append(("attention", np.full(k, init)))
        elif config.attention == "feature_based":
            parts.append(("attention", np.zeros(2 * NUM_FEATURES)))
        self.store = ParameterStore.build(parts)

    # -- bookkeeping ------------------------------------------------------

    @property
    def params(self) -> np.ndarray:
        return self.store.values

    @params.setter
    def params(self, values):
        values = np.asarray(values, dtype=float)
        if values.shape != self.store.values.shape:
            raise ModelError(f"expected {self.store.values.shape} params, got {values.shape}")
        self.store.values = values.copy()

    def hop_index(self, step: int) -> int:
        if self.config.aggregation == "single":
            return 0
        if step >= self.n_hops:
            raise ModelError(f"molecule needs step {step} but the model has {self.n_hops} sub-models")
        return step

    def batch(self, graphs: Sequence[MolecularGraph]) -> GraphBatch:
        return _build_batch(graphs, self.edge_offsets)

    # -- attention --------------------------------------------------------

    def _alpha(self, params, batch: GraphBatch):
        """Dense coefficients ``alpha[b, v, u]`` (zero off-edge) and a tape."""
        mode = self.config.attention
        alpha = batch.adjacency.copy()
        if mode == "none" or not len(batch.edge_b):
            return alpha, None
        idx = (batch.edge_b, batch.edge_v, batch.edge_u)
        attn = self.store.view("attention", params)
        if mode == "free":
            alpha[idx] = attn[batch.edge_param]
            return alpha, None
        if mode == "softmax":
            scores = np.full(alpha.shape, -np.inf)
            scores[idx] = attn[batch.edge_param]
            pre = None
        else:
            w = NUM_FEATURES
            src = batch.features @ attn[:w]
            dst = batch.features @ attn[w:]
            pre = src[:, :, None] + dst[:, None, :]
            scores = np.full(alpha.shape, -np.inf)
            scores[idx] = leaky_relu(pre[idx])
        top = np.max(scores, axis=2, keepdims=True)
        top = np.where(np.isfinite(top), top, 0.0)
        ex = np.exp(scores - top)
        denom = ex.sum(axis=2, keepdims=True)
        alpha = np.divide(ex, denom, out=np.zeros_like(ex), where=denom > 0)
        return alpha, pre

    def _alpha_vjp(self, params, batch: GraphBatch, alpha, pre, g_alpha) -> np.ndarray:
        mode = self.config.attention
        grad = np.zeros(len(self.store.view("attention", params)))
        idx = (batch.edge_b, batch.edge_v, batch.edge_u)
        if mode == "free":
            np.add.at(grad, batch.edge_param, g_alpha[idx])
            return grad
        # softmax rows: dL/ds_u = alpha_u (g_u - sum_w alpha_w g_w)
        inner = (alpha * g_alpha).sum(axis=2, keepdims=True)
        g_scores = alpha * (g_alpha - inner)
        if mode == "softmax":
            np.add.at(grad, batch.edge_param, g_scores[idx])
            return grad
        g_pre = np.zeros_like(pre)
        g_pre[idx] = g_scores[idx] * np.where(pre[idx] > 0, 1.0, LEAKY_SLOPE)
        w = NUM_FEATURES
        grad[:w] = np.einsum("bvu,bvf->f", g_pre, batch.features)
        grad[w:] = np.einsum("bvu,buf->f", g_pre, batch.features)
        return grad

    def attention_coefficients(self, graph: MolecularGraph, params=None) -> dict[int, np.ndarray]:
        """``{v: alpha over graph.neighbors(v)}`` for inspection."""
        params = self.params if params is None else params
        batch = self.batch([graph])
        alpha, _ = self._alpha(params, batch)
        return {v: alpha[0, v, graph.neighbors(v)] for v in range(graph.num_atoms)}

    # -- forward / backward -----------------------------------------------

    def forward(self, params, batch: GraphBatch):
        """Molecule predictions ``(B,)`` and a tape for :meth:`backward`."""
        params = np.asarray(params, dtype=float)
        alpha, pre = self._alpha(params, batch)
        b, m = len(batch), batch.width
        prev = np.zeros(b)
        outs = np.zeros((b, m))
        steps = []
        for v in range(m):
            act = np.flatnonzero(batch.sizes > v)
            deg = batch.degree[act, v]
            weighted = np.einsum("bu,buf->bf", alpha[act, v, :], batch.features[act])
            agg = weighted / np.maximum(deg, 1.0)[:, None]
            x = np.concatenate([agg, prev[act, None]], axis=1)
            hop = self.hop_index(v)
            out, cache = self.sub.forward(self.store.view(f"hop{hop}", params), x)
            outs[act, v] = out
            prev[act] = out
            steps.append((act, hop, cache))
        preds = outs.sum(axis=1) / batch.sizes
        return preds, {"alpha": alpha, "pre": pre, "steps": steps, "outs": outs}

    def backward(self, params, batch: GraphBatch, tape, g_preds) -> np.ndarray:
        """Gradient of ``sum(g_preds * preds)`` with respect to all parameters."""
        params = np.asarray(params, dtype=float)
        grad = np.zeros_like(params)
        b = len(batch)
        g_node = np.asarray(g_preds, dtype=float) / batch.sizes
        g_alpha = np.zeros_like(tape["alpha"])
        g_prev = np.zeros(b)
        for v in reversed(range(batch.width)):
            act, hop, cache = tape["steps"][v]
            g_out = g_node[act] + g_prev[act]
            d_theta, d_x = self.sub.backward(self.store.view(f"hop{hop}", params), cache, g_out)
            a, z = self.store.segments[f"hop{hop}"]
            grad[a:z] += d_theta
            g_prev = np.zeros(b)
            g_prev[act] = d_x[:, NUM_FEATURES]
            deg = np.maximum(batch.degree[act, v], 1.0)
            g_agg = d_x[:, :NUM_FEATURES] / deg[:, None]
            g_alpha[act, v, :] += np.einsum("buf,bf->bu", batch.features[act], g_agg)
        if self.config.attention != "none" and "attention" in self.store.segments:
            a, z = self.store.segments["attention"]
            grad[a:z] += self._alpha_vjp(params, batch, tape["alpha"], tape["pre"], g_alpha)
        return grad

    def predict(self, graphs: Sequence[MolecularGraph], params=None) -> np.ndarray:
        params = self.params if params is None else params
        preds, _ = self.forward(params, self.batch(graphs))
        return preds

    # -- persistence ------------------------------------------------------

    def checkpoint(self) -> dict:
        return {
            "format": CHECKPOINT_FORMAT,
            "config": self.config.to_dict(),
            "attention_graphs": self.edge_offsets,
            "segments": [
                {"name": name, "values": self.store.values[a:z].tolist()}
                for name, (a, z) in self.store.segments.items()
            ],
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.checkpoint(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def from_checkpoint(cls, doc: dict, graphs: Sequence[MolecularGraph] = ()) -> "ModelInstance":
        if doc.get("format") != CHECKPOINT_FORMAT:
            raise ModelError(f"unknown checkpoint format {doc.get('format')!r}")
        config = ModelConfig(**doc["config"])
        order = doc.get("attention_graphs") or {}
        by_id = {g.id: g for g in graphs}
        missing = [gid for gid in order if gid not in by_id]
        if missing:
            raise ModelError(f"checkpoint needs molecules {missing[:3]}...")
        ordered = [by_id[gid] for gid in sorted(order, key=order.get)]
        model = cls(config, ordered)
        values = np.concatenate([np.asarray(s["values"], dtype=float) for s in doc["segments"]])
        model.params = values
        return model

    @classmethod
    def load(cls, path, graphs: Sequence[MolecularGraph] = ()) -> "ModelInstance":
        return cls.from_checkpoint(json.loads(Path(path).read_text(encoding="utf-8")), graphs)


# ---------------------------------------------------------------------------
# operation-level helpers


def node_update(agg, prev_out: float, model: ModelInstance, hop: int = 0, params=None) -> float:
    """One application of the step-``hop`` sub-model to ``concat(agg, prev_out)``."""
    agg = np.asarray(agg, dtype=float)
    if agg.shape != (NUM_FEATURES,):
        raise ModelError(f"aggregate must have width {NUM_FEATURES}, got {agg.shape}")
    params = model.params if params is None else params
    x = np.concatenate([agg, [prev_out]])[None, :]
    out, _ = model.sub.forward(model.store.view(f"hop{model.hop_index(hop)}", params), x)
    return float(out[0])


def forward_molecule(graph: MolecularGraph, model: ModelInstance, params=None) -> float:
    return float(model.predict([graph], params)[0])


def count_params(model: ModelInstance) -> tuple[int, dict[str, int]]:
    """Total trainable parameter count and a per-segment breakdown."""
    breakdown: dict[str, int] = {}
    for name, size in model.sub.segments().items():
        breakdown[name] = size * model.n_hops
    if "attention" in model.store.segments:
        a, z = model.store.segments["attention"]
        breakdown["attention"] = z - a
    total = sum(breakdown.values())
    assert total == len(model.store)
    return total, breakdown
