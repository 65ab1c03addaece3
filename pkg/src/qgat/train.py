"""Loss, metrics, Adam and the full-batch training loop."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .graph import DatasetSplit

REPORT_COLUMNS = ("epoch", "loss", "r2", "lr")


class TrainingError(RuntimeError):
    pass


def smooth_l1(pred, target, beta: float = 1.0):
    """Quadratic below ``beta``, linear above (elementwise)."""
    d = np.abs(np.asarray(pred, dtype=float) - np.asarray(target, dtype=float))
    out = np.where(d < beta, 0.5 * d**2 / beta, d - 0.5 * beta)
    return float(out) if out.ndim == 0 else out


def smooth_l1_grad(pred, target, beta: float = 1.0):
    d = np.asarray(pred, dtype=float) - np.asarray(target, dtype=float)
    return np.where(np.abs(d) < beta, d / beta, np.sign(d))


def r2_score(preds, targets) -> float:
    """``1 - SS_res / SS_tot``; undefined (ValueError) for constant targets."""
    preds = np.asarray(preds, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if preds.shape != targets.shape or preds.size < 2:
        raise ValueError("need matching prediction/target arrays of length >= 2")
    ss_tot = float(((targets - targets.mean()) ** 2).sum())
    if ss_tot == 0.0:
        raise ValueError("R2 is undefined for constant targets")
    return 1.0 - float(((targets - preds) ** 2).sum()) / ss_tot


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(params, grads, state: AdamState, lr: float, beta1: float = 0.9,
              beta2: float = 0.9, eps: float = 1e-8):
    """One bias-corrected Adam update; returns ``(new_params, new_state)``."""
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if params.shape != grads.shape or state.m.shape != params.shape:
        raise ValueError(f"shape mismatch: params {params.shape}, grads {grads.shape}, state {state.m.shape}")
    t = state.t + 1
    m = beta1 * state.m + (1 - beta1) * grads
    v = beta2 * state.v + (1 - beta2) * grads**2
    m_hat = m / (1 - beta1**t)
    v_hat = v / (1 - beta2**t)
    return params - lr * m_hat / (np.sqrt(v_hat) + eps), AdamState(m, v, t)


@dataclass
class TrainConfig:
    epochs: int = 300
    lr0: float = 0.03
    decay: float = 0.99
    beta1: float = 0.9
    beta2: float = 0.9
    eps: float = 1e-8
    seed: int = 0
    loss: str = "smooth_l1"
    smooth_l1_beta: float = 1.0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.lr0 <= 0:
            raise ValueError("lr0 must be positive")
        if not 0 < self.decay <= 1:
            raise ValueError("decay must be in (0, 1]")
        if self.loss != "smooth_l1":
            raise ValueError(f"unsupported loss {self.loss!r}")


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    r2: float
    lr: float
    wall_ms: int


@dataclass
class TrainReport:
    epochs: list[EpochRecord] = field(default_factory=list)
    num_params: int = 0
    param_breakdown: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    predictions: list[float] = field(default_factory=list)
    targets: list[float] = field(default_factory=list)

    @property
    def final(self) -> EpochRecord:
        return self.epochs[-1]

    def to_csv(self, include_timing: bool = False) -> str:
        """Per-epoch table. Timing is opt-in so the default output is reproducible."""
        cols = REPORT_COLUMNS + (("wall_ms",) if include_timing else ())
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(cols)
        for rec in self.epochs:
            writer.writerow([repr(getattr(rec, c)) if isinstance(getattr(rec, c), float)
                             else getattr(rec, c) for c in cols])
        return buf.getvalue()

    def summary(self) -> dict:
        last = self.final
        return {
            "epochs": len(self.epochs),
            "final_loss": last.loss,
            "final_r2": last.r2,
            "final_lr": last.lr,
            "num_params": self.num_params,
            "param_breakdown": self.param_breakdown,
            "total_wall_ms": sum(r.wall_ms for r in self.epochs),
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=1, sort_keys=True) + "\n"


def _safe_r2(preds, targets) -> float:
    try:
        return r2_score(preds, targets)
    except ValueError:
        return float("nan")


def loss_and_grad(model, params, batch, targets, beta: float = 1.0):
    """Mean smooth-L1 loss over the batch, its gradient and the predictions."""
    preds, tape = model.forward(params, batch)
    loss = float(np.mean(smooth_l1(preds, targets, beta)))
    g_preds = smooth_l1_grad(preds, targets, beta) / len(targets)
    return loss, model.backward(params, batch, tape, g_preds), preds


def train(model, split: DatasetSplit, config: TrainConfig, callback=None) -> TrainReport:
    """Full-batch Adam on the split; the model's parameters are updated in place.

    Each row reports the loss and R2 of the parameters *entering* that
    epoch's update, and the learning rate used for it.

    Raises:
        TrainingError: the loss or gradient becomes non-finite.
    """
    from .models import count_params

    if not split.graphs:
        raise TrainingError("empty split")
    batch = model.batch(split.graphs)
    targets = split.targets
    params = model.params.copy()
    state = AdamState.zeros(len(params))
    total, breakdown = count_params(model)
    report = TrainReport(num_params=total, param_breakdown=breakdown,
                         config={"train": asdict(config), "model": model.config.to_dict(),
                                 "molecules": split.ids})
    lr = config.lr0
    for epoch in range(1, config.epochs + 1):
        start = time.perf_counter()
        loss, grad, preds = loss_and_grad(model, params, batch, targets, config.smooth_l1_beta)
        if not math.isfinite(loss) or not np.isfinite(grad).all():
            raise TrainingError(f"non-finite loss/gradient at epoch {epoch}")
        params, state = adam_step(params, grad, state, lr, config.beta1, config.beta2, config.eps)
        rec = EpochRecord(epoch, loss, _safe_r2(preds, targets), lr,
                          int(round((time.perf_counter() - start) * 1000)))
        report.epochs.append(rec)
        if callback is not None:
            callback(rec)
        lr *= config.decay
    model.params = params
    final_preds = model.predict(split.graphs)
    report.predictions = final_preds.tolist()
    report.targets = targets.tolist()
    return report


def evaluate(model, split: DatasetSplit, beta: float = 1.0) -> dict:
    preds = model.predict(split.graphs)
    return {
        "loss": float(np.mean(smooth_l1(preds, split.targets, beta))),
        "r2": _safe_r2(preds, split.targets),
    }
