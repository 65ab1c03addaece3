"""Experiment configs and the single-vs-multi reproduction grid.

Model kinds map onto :class:`qgat.models.ModelConfig` as follows:

=======  =========  ==============  =========================
kind     sub-model  attention       encoding
=======  =========  ==============  =========================
gnn      MLP        none            -
gat      MLP        softmax         -
qgnn     QGCN       none            plain Fourier feature map
qgat     QGCN       feature_based   trainable per-qubit scales
=======  =========  ==============  =========================

Single models default to QGCN depths ``[3, 1, 1]`` / MLP hidden ``[8]``,
multi models to ``[1, 1, 1]`` / ``[2, 2]`` per step.
"""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import graph as graph_mod
from .models import ModelConfig, ModelInstance
from .train import TrainConfig, evaluate, train

KINDS = ("gnn", "gat", "qgnn", "qgat")
QUANTUM_KINDS = ("qgnn", "qgat")
AGGREGATIONS = ("single", "multi")
BUCKETS = (9, 16, 20, 25)
GRID_ORDER = ("gnn", "qgnn", "gat", "qgat")
DEFAULT_ATTENTION = {"gnn": "none", "gat": "softmax", "qgnn": "none", "qgat": "feature_based"}
DEFAULT_DEPTHS = {"single": (3, 1, 1), "multi": (1, 1, 1)}
DEFAULT_WIDTHS = {"single": (8, 8, 1), "multi": (8, 2, 2, 1)}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    kind: str = "qgat"
    aggregation: str = "single"
    max_atoms: int = 9
    samples: int = 10
    seed: int = 0
    depths: tuple[int, ...] | None = None
    widths: tuple[int, ...] | None = None
    attention: str | None = None
    target_key: str | None = None
    dataset: str | None = None
    output_dir: str = "runs/experiment"
    train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=150))

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.aggregation not in AGGREGATIONS:
            raise ConfigError(f"aggregation must be one of {AGGREGATIONS}, got {self.aggregation!r}")
        quantum = self.kind in QUANTUM_KINDS
        if quantum and self.widths is not None:
            raise ConfigError(f"{self.kind} is a quantum model; use 'depths', not 'widths'")
        if not quantum and self.depths is not None:
            raise ConfigError(f"{self.kind} is a classical model; use 'widths', not 'depths'")
        if quantum:
            self.depths = tuple(self.depths or DEFAULT_DEPTHS[self.aggregation])
        else:
            self.widths = tuple(self.widths or DEFAULT_WIDTHS[self.aggregation])
        if self.max_atoms < 1 or self.samples < 2:
            raise ConfigError("max_atoms must be >= 1 and samples >= 2")
        if isinstance(self.train, dict):
            try:
                self.train = TrainConfig(**self.train)
            except TypeError as exc:
                raise ConfigError(f"bad train section: {exc}") from None

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**doc)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg}, line {exc.lineno})") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["train"] = asdict(self.train)
        return out

    def model_config(self) -> ModelConfig:
        quantum = self.kind in QUANTUM_KINDS
        return ModelConfig(
            kind="quantum" if quantum else "classical",
            aggregation=self.aggregation,
            attention=self.attention or DEFAULT_ATTENTION[self.kind],
            hops=self.max_atoms,
            depths=self.depths if quantum else DEFAULT_DEPTHS["single"],
            widths=self.widths if not quantum else DEFAULT_WIDTHS["single"],
            trainable_scales=self.kind == "qgat",
        )


def load_graphs(dataset: str | None, target_key: str | None = None):
    if dataset is None:
        return graph_mod.load_fixture(target_key)
    return graph_mod.load_dataset(dataset, target_key)


def prepare_split(cfg: ExperimentConfig, graphs=None):
    graphs = load_graphs(cfg.dataset, cfg.target_key) if graphs is None else graphs
    split = graph_mod.filter_and_sample(graphs, cfg.max_atoms, cfg.samples, cfg.seed)
    return graph_mod.normalize(split)


def run_experiment(cfg: ExperimentConfig, graphs=None):
    """Train one model; returns ``(model, report, final_metrics, split)``."""
    split = prepare_split(cfg, graphs)
    model = ModelInstance(cfg.model_config(), split.graphs, seed=cfg.seed)
    report = train(model, split, cfg.train)
    report.config["experiment"] = cfg.to_dict()
    return model, report, evaluate(model, split, cfg.train.smooth_l1_beta), split


def write_run(out_dir, model, report, metrics) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(report.to_csv(), encoding="utf-8")
    summary = report.summary()
    summary["final_metrics"] = metrics
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    model.save(out / "checkpoint.json")


# ---------------------------------------------------------------------------
# reproduction grid


def grid_columns(kinds=GRID_ORDER) -> list[str]:
    return [f"{k}_{a}_{m}" for k in kinds for a in AGGREGATIONS for m in ("loss", "r2")]


def _grid_cell(args):
    cfg_dict, dataset = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    graphs = load_graphs(dataset, cfg.target_key)
    _, report, metrics, _ = run_experiment(cfg, graphs)
    curve = [(r.epoch, r.loss, r.r2) for r in report.epochs]
    return cfg.kind, cfg.aggregation, cfg.max_atoms, metrics, curve


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def reproduce(out_dir, dataset: str | None = None, buckets=BUCKETS, kinds=GRID_ORDER,
              samples: int = 10, epochs: int = 150, seed: int = 0, workers: int | None = None,
              log=None) -> Path:
    """Run every kind x aggregation x bucket cell and write ``grid.csv``.

    Per-run learning curves go to ``curves/{kind}_{aggregation}_le{bucket}.csv``.
    Cells are independent; ``workers`` (default: ``$QGAT_THREADS`` or 1)
    processes run them, and results are merged in a fixed order.
    """
    out = Path(out_dir)
    (out / "curves").mkdir(parents=True, exist_ok=True)
    jobs = []
    for bucket in buckets:
        for kind in kinds:
            for agg in AGGREGATIONS:
                cfg = ExperimentConfig(kind=kind, aggregation=agg, max_atoms=bucket, samples=samples,
                                       seed=seed, dataset=dataset,
                                       train=TrainConfig(epochs=epochs, seed=seed))
                jobs.append((cfg.to_dict(), dataset))
    if workers is None:
        workers = int(os.environ.get("QGAT_THREADS", "1") or 1)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_grid_cell, jobs))
    else:
        results = []
        for job in jobs:
            results.append(_grid_cell(job))
            if log:
                kind, agg, bucket, metrics, _ = results[-1]
                log(f"<= {bucket:2d} atoms  {kind:>4s} {agg:<6s}  loss {metrics['loss']:.5f}  r2 {metrics['r2']:.4f}")

    table = {}
    for kind, agg, bucket, metrics, curve in results:
        table[(bucket, kind, agg)] = metrics
        (out / "curves" / f"{kind}_{agg}_le{bucket}.csv").write_text(
            _csv_text(("epoch", "loss", "r2"), curve), encoding="utf-8")
    rows = []
    for bucket in buckets:
        row = [bucket]
        for kind in kinds:
            for agg in AGGREGATIONS:
                m = table[(bucket, kind, agg)]
                row += [m["loss"], m["r2"]]
        rows.append(row)
    path = out / "grid.csv"
    path.write_text(_csv_text(["max_atoms"] + grid_columns(kinds), rows), encoding="utf-8")
    return path


def read_grid(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (int(v) if k == "max_atoms" else float(v)) for k, v in r.items()} for r in rows]
