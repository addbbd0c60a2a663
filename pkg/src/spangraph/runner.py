"""Training orchestration: single runs, baselines, and comparisons.

A run trains one model for ``epochs`` full-batch steps.  Three modes:

* ``spangnn``: the scheduler grows the spanning subgraph each epoch and
  the model trains on the grown subgraph's propagation matrix.
* ``dropedge``: each epoch trains on an independent uniform subset of the
  ORIGINAL edge set that keeps a (1 - beta) fraction; nothing carries
  over between epochs.
* ``full``: every epoch trains on the full graph.

Evaluation always uses the full-graph propagation matrix.  One metrics
row is emitted per epoch; timing columns hold integer milliseconds from a
monotonic clock and can be suppressed (written as 0) for byte-identical
reproducibility comparisons.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .diagnostics import embedding_variance, gradient_noise, memory_proxy
from .errors import ConfigError
from .gnn import (
    GCN,
    LAYER_TYPES,
    GnnModel,
    TrainState,
    forward,
    init_model,
    save_weights,
    train_step,
)
from .graphstore import Graph, SpanningSubgraph, build_propagation, load_dataset, load_graph
from .sampler import SAMPLER_KINDS, make_weights
from .scheduler import ScheduleConfig, init_schedule, step_epoch
from .seeding import derive_seed, spawn_rng
from .synthetic import GeneratorSpec, make_graph

BASELINES = ("spangnn", "dropedge", "full")

METRIC_COLUMNS = (
    "epoch", "loss", "train_acc", "val_acc", "val_macro_f1", "edge_ratio",
    "active_edges", "sampling_time_ms", "train_time_ms", "peak_edges_so_far",
)

DIAG_FIXED_COLUMNS = ("epoch", "sampler")
DIAG_TAIL_COLUMNS = ("z_diff_norm", "var_xi", "peak_edges")

VARIANT_NAMES = ("spangnn-vm", "spangnn-gnr", "spangnn-uniform", "dropedge", "full")


@dataclass(frozen=True)
class RunConfig:
    """Everything one training run needs.

    Exactly one of ``data_dir`` / explicit file paths / ``generator`` must
    describe the dataset.
    """

    data_dir: str | None = None
    edges_path: str | None = None
    features_path: str | None = None
    labels_path: str | None = None
    splits_path: str | None = None
    generator: GeneratorSpec | None = None

    model: str = GCN
    hidden_dim: int = 64
    num_layers: int = 2
    learning_rate: float = 0.2
    epochs: int = 200

    alpha_up: float = 0.5
    beta: float = 0.1
    s1: int | None = None       # default: |E| // 10
    s2: int | None = None       # default: |E| // 40
    sampler_kind: str = "vm"
    baseline: str = "spangnn"

    seed: int = 0
    out_dir: str | None = None
    timings: bool = True
    diag_every: int = 0         # 0 disables diagnostics rows
    diag_samples: int = 16

    def validate(self) -> None:
        if self.model not in LAYER_TYPES and self.model != "sage":
            raise ConfigError(f"unknown model {self.model!r}")
        if self.baseline not in BASELINES:
            raise ConfigError(f"unknown baseline {self.baseline!r}")
        if self.sampler_kind not in SAMPLER_KINDS:
            raise ConfigError(f"unknown sampler {self.sampler_kind!r}")
        if self.hidden_dim < 1 or self.num_layers < 1:
            raise ConfigError("hidden_dim and num_layers must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning rate must be positive")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if not (0.0 <= self.beta < 1.0):
            raise ConfigError(f"beta must be in [0, 1), got {self.beta}")
        sources = [
            self.data_dir is not None,
            self.edges_path is not None,
            self.generator is not None,
        ]
        if sum(sources) != 1:
            raise ConfigError(
                "configure exactly one dataset source: a data directory, "
                "explicit file paths, or a generator spec"
            )
        if self.edges_path is not None:
            missing = [
                name for name, val in (
                    ("features", self.features_path),
                    ("labels", self.labels_path),
                    ("splits", self.splits_path),
                ) if val is None
            ]
            if missing:
                raise ConfigError(f"missing dataset paths: {', '.join(missing)}")

    @property
    def layer_type(self) -> str:
        return "sage-mean" if self.model == "sage" else self.model


@dataclass
class EpochMetrics:
    epoch: int
    loss: float
    train_acc: float
    val_acc: float
    val_macro_f1: float
    edge_ratio: float
    active_edges: int
    sampling_time_ms: int
    train_time_ms: int
    peak_edges_so_far: int

    def row(self, timings: bool = True) -> list:
        return [
            self.epoch,
            repr(self.loss),
            f"{self.train_acc:.6f}",
            f"{self.val_acc:.6f}",
            f"{self.val_macro_f1:.6f}",
            repr(self.edge_ratio),
            self.active_edges,
            self.sampling_time_ms if timings else 0,
            self.train_time_ms if timings else 0,
            self.peak_edges_so_far,
        ]


@dataclass
class RunResult:
    config: RunConfig
    metrics: list[EpochMetrics]
    model: GnnModel
    best_val_acc: float
    best_val_macro_f1: float
    peak_directed_edges: int
    diagnostics: list[dict] = field(default_factory=list)

    @property
    def mean_sampling_time_ms(self) -> float:
        if not self.metrics:
            return 0.0
        return float(np.mean([m.sampling_time_ms for m in self.metrics]))


def load_run_graph(cfg: RunConfig) -> Graph:
    if cfg.generator is not None:
        return make_graph(cfg.generator)
    if cfg.data_dir is not None:
        return load_dataset(cfg.data_dir)
    return load_graph(cfg.edges_path, cfg.features_path, cfg.labels_path,
                      cfg.splits_path)


def resolve_sample_sizes(cfg: RunConfig, num_edges: int) -> tuple[int, int]:
    """Fill in defaults; explicit values are left for validation to reject."""
    s1 = cfg.s1 if cfg.s1 is not None else max(1, num_edges // 10)
    s2 = cfg.s2 if cfg.s2 is not None else max(1, min(s1, num_edges // 40))
    return s1, s2


def _now_ms() -> int:
    return time.perf_counter_ns() // 1_000_000


def _dropedge_subgraph(g: Graph, beta: float, seed, epoch: int) -> SpanningSubgraph:
    rng = spawn_rng(seed, epoch, "dropedge")
    m = g.num_edges
    drop = int(math.floor(beta * m + 1e-9))
    keep = rng.permutation(m)[: m - drop]
    return SpanningSubgraph.from_indices(g, keep)


def run_training(cfg: RunConfig, graph: Graph | None = None) -> RunResult:
    """Run one training configuration end to end.

    Pass ``graph`` to reuse an already-loaded dataset (the compare driver
    does this so every variant sees identical data).
    """
    cfg.validate()
    g = graph if graph is not None else load_run_graph(cfg)
    if g.num_edges == 0 and cfg.baseline != "full":
        raise ConfigError("edge sampling requires a graph with at least one edge")

    layer_type = cfg.layer_type
    p_full = build_propagation(SpanningSubgraph.full(g), kind_for_model(layer_type))
    model = init_model(layer_type, g.feature_dim, cfg.hidden_dim,
                       max(g.num_classes, 2), cfg.num_layers, seed=cfg.seed)
    state = TrainState(model=model, learning_rate=cfg.learning_rate, seed=cfg.seed)

    probs = None
    sched_state = None
    sched_cfg = None
    if cfg.baseline == "spangnn":
        probs = make_weights(cfg.sampler_kind, g, p_full)
        s1, s2 = resolve_sample_sizes(cfg, g.num_edges)
        sched_cfg = ScheduleConfig(
            alpha_up=cfg.alpha_up, beta=cfg.beta, s1=s1, s2=s2,
            sampler_kind=cfg.sampler_kind, epochs=cfg.epochs, seed=cfg.seed,
        )
        sched_state = init_schedule(g, sched_cfg)

    metrics: list[EpochMetrics] = []
    diagnostics: list[dict] = []
    active_history: list[int] = []
    best_acc = 0.0
    best_f1 = 0.0
    has_val = bool(g.val_mask.any())

    for epoch in range(cfg.epochs):
        t0 = _now_ms()
        if cfg.baseline == "spangnn":
            sched_state = step_epoch(sched_state, g, probs, sched_cfg)
            sub = sched_state.subgraph
        elif cfg.baseline == "dropedge":
            sub = _dropedge_subgraph(g, cfg.beta, cfg.seed, epoch)
        else:
            sub = SpanningSubgraph.full(g)
        t1 = _now_ms()

        p_train = build_propagation(sub, kind_for_model(layer_type))
        loss = train_step(state, p_train, g.features, g.labels, g.train_mask)
        t2 = _now_ms()

        logits_full, _ = forward(model, p_full, g.features)
        pred = np.argmax(logits_full, axis=1)
        train_acc = float(np.mean(pred[g.train_mask] == g.labels[g.train_mask]))
        if has_val:
            val_acc, val_f1 = _masked_scores(pred, g.labels, g.val_mask)
        else:
            val_acc, val_f1 = 0.0, 0.0
        best_acc = max(best_acc, val_acc)
        best_f1 = max(best_f1, val_f1)

        active = sub.active_count
        active_history.append(active)
        peak = memory_proxy(active_history, g.num_nodes,
                            per_edge_bytes=8 * cfg.hidden_dim)
        metrics.append(EpochMetrics(
            epoch=epoch,
            loss=loss,
            train_acc=train_acc,
            val_acc=val_acc,
            val_macro_f1=val_f1,
            edge_ratio=active / g.num_edges if g.num_edges else 0.0,
            active_edges=active,
            sampling_time_ms=int(t1 - t0),
            train_time_ms=int(t2 - t1),
            peak_edges_so_far=peak.peak_directed_edges,
        ))

        if cfg.diag_every and (epoch % cfg.diag_every == 0 or epoch == cfg.epochs - 1):
            diagnostics.append(_diagnostics_row(
                cfg, g, model, sub, probs, epoch, peak.peak_directed_edges))

    proxy = memory_proxy(active_history, g.num_nodes, per_edge_bytes=8 * cfg.hidden_dim)
    result = RunResult(
        config=cfg,
        metrics=metrics,
        model=model,
        best_val_acc=best_acc,
        best_val_macro_f1=best_f1,
        peak_directed_edges=proxy.peak_directed_edges,
        diagnostics=diagnostics,
    )
    if cfg.out_dir is not None:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_metrics_csv(out / "metrics.csv", metrics, timings=cfg.timings)
        save_weights(out / "checkpoint.spgw", model)
        if diagnostics:
            write_diagnostics_csv(out / "diagnostics.csv", diagnostics, cfg.num_layers)
    return result


def kind_for_model(layer_type: str) -> str:
    from .graphstore import GCN_SYMMETRIC, MEAN_ROW
    return GCN_SYMMETRIC if layer_type == GCN else MEAN_ROW


def _masked_scores(pred: np.ndarray, labels: np.ndarray,
                   mask: np.ndarray) -> tuple[float, float]:
    from .gnn import macro_f1
    rows = np.flatnonzero(mask)
    truth = labels[rows]
    picked = pred[rows]
    return float(np.mean(picked == truth)), macro_f1(truth, picked)


def _diagnostics_row(cfg: RunConfig, g: Graph, model: GnnModel,
                     sub: SpanningSubgraph, probs, epoch: int,
                     peak: int) -> dict:
    report = gradient_noise(model, g, sub, g.features, g.labels,
                            g.train_mask, epoch_index=epoch)
    budget = max(1, sub.active_count)
    if probs is not None:
        var_probs = probs
    else:
        from .sampler import uniform_weights
        var_probs = uniform_weights(g)
    var = embedding_variance(
        g, var_probs, budget, cfg.diag_samples, g.features,
        model.weights[0][: g.feature_dim, :],
        kind=model.propagation_kind,
        seed=derive_seed(cfg.seed, epoch, "diag"),
    )
    return {
        "epoch": epoch,
        "sampler": cfg.sampler_kind if cfg.baseline == "spangnn" else cfg.baseline,
        "noise_norms": report.noise_norms,
        "z_diff_norm": report.total_z_diff_norm,
        "var_xi": var.estimator_variance,
        "peak_edges": peak,
    }


def write_metrics_csv(path, metrics: list[EpochMetrics], timings: bool = True) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(METRIC_COLUMNS) + "\n")
        for m in metrics:
            fh.write(",".join(str(x) for x in m.row(timings=timings)) + "\n")


def diag_columns(num_layers: int) -> list[str]:
    cols = list(DIAG_FIXED_COLUMNS)
    cols += [f"noise_norm_l{i}" for i in range(num_layers)]
    cols += list(DIAG_TAIL_COLUMNS)
    return cols


def write_diagnostics_csv(path, rows: list[dict], num_layers: int) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(diag_columns(num_layers)) + "\n")
        for r in rows:
            cells = [str(r["epoch"]), str(r["sampler"])]
            cells += [repr(x) for x in r["noise_norms"]]
            cells += [repr(r["z_diff_norm"]), repr(r["var_xi"]), str(r["peak_edges"])]
            fh.write(",".join(cells) + "\n")


def variant_config(base: RunConfig, name: str) -> RunConfig:
    """Translate a variant name into a concrete run configuration."""
    if name == "spangnn-vm":
        over = dict(baseline="spangnn", sampler_kind="vm")
    elif name == "spangnn-gnr":
        over = dict(baseline="spangnn", sampler_kind="gnr")
    elif name == "spangnn-uniform":
        over = dict(baseline="spangnn", sampler_kind="uniform")
    elif name == "dropedge":
        over = dict(baseline="dropedge")
    elif name == "full":
        over = dict(baseline="full")
    else:
        raise ConfigError(f"unknown variant {name!r}; choose from {VARIANT_NAMES}")
    return replace(base, out_dir=None,
                   seed=derive_seed(base.seed, "variant", name), **over)


def run_compare(cfg: RunConfig, variants: list[str]) -> dict[str, RunResult]:
    """Run several variants on the same data and write combined outputs.

    The dataset is materialized once from ``cfg`` (shared data seed);
    each variant trains with its own derived seed.  Writes combined.csv,
    summary.csv, and diagnostics.csv (when enabled) under cfg.out_dir.
    """
    if len(variants) < 2:
        raise ConfigError("compare needs at least 2 variants")
    cfg.validate()
    g = load_run_graph(cfg)
    results: dict[str, RunResult] = {}
    for name in variants:
        if name in results:
            continue
        results[name] = run_training(variant_config(cfg, name), graph=g)

    if cfg.out_dir is not None:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "combined.csv", "w", encoding="utf-8", newline="\n") as fh:
            fh.write("variant," + ",".join(METRIC_COLUMNS) + "\n")
            for name in variants:
                for m in results[name].metrics:
                    row = m.row(timings=cfg.timings)
                    fh.write(name + "," + ",".join(str(x) for x in row) + "\n")
        with open(out / "summary.csv", "w", encoding="utf-8", newline="\n") as fh:
            fh.write("variant,best_val_acc,best_val_macro_f1,"
                     "peak_directed_edges,mean_sampling_time_ms\n")
            for name in variants:
                r = results[name]
                fh.write(
                    f"{name},{r.best_val_acc:.6f},{r.best_val_macro_f1:.6f},"
                    f"{r.peak_directed_edges},{r.mean_sampling_time_ms:.3f}\n"
                )
        diag_rows = []
        for name in variants:
            diag_rows.extend(results[name].diagnostics)
        if diag_rows:
            write_diagnostics_csv(out / "diagnostics.csv", diag_rows, cfg.num_layers)
    return results
