"""Command-line front end.

Subcommands: train, compare, sample-inspect, bench-sampling, gen-data.
Options can come from a key=value config file (--config PATH); flags given
on the command line win over file values.  Exit codes: 0 success,
1 config error, 2 data error, 3 numerical error.

Numpy is imported only after the SPANGRAPH_THREADS cap (if set) has been
propagated to the BLAS thread-count environment variables, so keep module
level imports here free of numeric libraries.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .errors import ConfigError, DataError, NumericalError

_THREAD_ENV_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)


def _apply_thread_cap() -> None:
    cap = os.environ.get("SPANGRAPH_THREADS")
    if not cap:
        return
    if not cap.isdigit() or int(cap) < 1:
        raise ConfigError(f"SPANGRAPH_THREADS must be a positive integer, got {cap!r}")
    for var in _THREAD_ENV_VARS:
        os.environ.setdefault(var, cap)


class _Parser(argparse.ArgumentParser):
    """argparse that raises ConfigError instead of exiting with code 2."""

    def error(self, message):
        raise ConfigError(message)


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=str, default=None, help="key=value config file")
    p.add_argument("--data", type=str, default=None,
                   help="dataset directory with the standard filenames")
    p.add_argument("--edges", type=str, default=None)
    p.add_argument("--features", type=str, default=None)
    p.add_argument("--labels", type=str, default=None)
    p.add_argument("--splits", type=str, default=None)
    p.add_argument("--gen", type=str, default=None,
                   choices=["sbm", "preferential-attachment"],
                   help="generate the dataset in memory instead of loading")
    p.add_argument("--nodes", type=int, default=None)
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--feature-dim", type=int, default=None)
    p.add_argument("--p-in", type=float, default=None)
    p.add_argument("--p-out", type=float, default=None)
    p.add_argument("--attach", type=int, default=None)
    p.add_argument("--feature-noise", type=float, default=None)
    p.add_argument("--alpha-up", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--s1", type=int, default=None)
    p.add_argument("--s2", type=int, default=None)
    p.add_argument("--sampler", type=str, default=None, choices=["vm", "gnr", "uniform"])
    p.add_argument("--baseline", type=str, default=None,
                   choices=["spangnn", "dropedge", "full"])
    p.add_argument("--model", type=str, default=None, choices=["gcn", "sage"])
    p.add_argument("--layers", type=int, default=None)
    p.add_argument("--hidden", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", type=str, default=None)
    p.add_argument("--no-timings", action="store_true",
                   help="write timing columns as 0 for byte-stable output")
    p.add_argument("--diag-every", type=int, default=None,
                   help="emit a diagnostics row every N epochs (0 = off)")
    p.add_argument("--diag-samples", type=int, default=None)


def build_parser() -> _Parser:
    parser = _Parser(prog="spangraph", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run one training configuration")
    _add_common_flags(p_train)

    p_cmp = sub.add_parser("compare", help="run several variants on shared data")
    _add_common_flags(p_cmp)
    p_cmp.add_argument("--variants", type=str, default=None,
                       help="comma-separated variant names "
                            "(default: spangnn-vm,spangnn-gnr,dropedge,full)")

    p_ins = sub.add_parser("sample-inspect",
                           help="dump edge weights and normalized probabilities")
    _add_common_flags(p_ins)

    p_bench = sub.add_parser("bench-sampling",
                             help="time two-step vs direct edge sampling")
    _add_common_flags(p_bench)
    p_bench.add_argument("--bench-nodes", type=int, default=200_000)
    p_bench.add_argument("--bench-edges", type=int, default=1_000_000)
    p_bench.add_argument("--runs", type=int, default=9)

    p_gen = sub.add_parser("gen-data", help="write a synthetic dataset to disk")
    _add_common_flags(p_gen)
    p_gen.add_argument("--kind", type=str, default="sbm",
                       choices=["sbm", "preferential-attachment"])
    p_gen.add_argument("--binary-features", action="store_true")
    return parser


# config-file keys -> argparse dest names (identical unless noted)
_CONFIG_KEYS = {
    "data": "data", "edges": "edges", "features": "features",
    "labels": "labels", "splits": "splits",
    "gen": "gen", "nodes": "nodes", "classes": "classes",
    "feature_dim": "feature_dim", "p_in": "p_in", "p_out": "p_out",
    "attach": "attach", "feature_noise": "feature_noise",
    "alpha_up": "alpha_up", "beta": "beta", "s1": "s1", "s2": "s2",
    "sampler": "sampler", "baseline": "baseline", "model": "model",
    "layers": "layers", "hidden": "hidden", "lr": "lr", "epochs": "epochs",
    "seed": "seed", "out": "out", "timings": "timings",
    "diag_every": "diag_every", "diag_samples": "diag_samples",
    "variants": "variants",
}

_INT_KEYS = {"nodes", "classes", "feature_dim", "attach", "s1", "s2",
             "layers", "hidden", "epochs", "seed", "diag_every", "diag_samples"}
_FLOAT_KEYS = {"p_in", "p_out", "feature_noise", "alpha_up", "beta", "lr"}


def parse_config_file(path) -> dict:
    """Parse a key=value file ('#' comments, blank lines ignored)."""
    values: dict = {}
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in _CONFIG_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            try:
                if key in _INT_KEYS:
                    values[key] = int(value)
                elif key in _FLOAT_KEYS:
                    values[key] = float(value)
                elif key == "timings":
                    if value not in ("on", "off"):
                        raise ValueError
                    values[key] = value == "on"
                else:
                    values[key] = value
            except ValueError:
                raise ConfigError(
                    f"{path}:{lineno}: bad value {value!r} for key {key!r}"
                ) from None
    return values


def _merged(args, key: str, default=None):
    """Flag value if given, else config-file value, else default."""
    flag = getattr(args, key, None)
    if flag is not None and flag is not False:
        return flag
    file_values = getattr(args, "_file_values", {})
    if key in file_values:
        return file_values[key]
    return default


def _build_run_config(args):
    from .runner import RunConfig
    from .synthetic import GeneratorSpec

    seed = _merged(args, "seed", 0)
    gen_kind = _merged(args, "gen")
    generator = None
    if gen_kind is not None:
        generator = GeneratorSpec(
            kind=gen_kind,
            nodes=_merged(args, "nodes", 1000),
            classes=_merged(args, "classes", 2),
            feature_dim=_merged(args, "feature_dim", 16),
            seed=seed,
            p_in=_merged(args, "p_in", 0.05),
            p_out=_merged(args, "p_out", 0.005),
            attach=_merged(args, "attach", 4),
            feature_noise=_merged(args, "feature_noise", 1.0),
        )

    # file value first, then the flag overrides it
    timings = getattr(args, "_file_values", {}).get("timings", True)
    if getattr(args, "no_timings", False):
        timings = False

    return RunConfig(
        data_dir=_merged(args, "data"),
        edges_path=_merged(args, "edges"),
        features_path=_merged(args, "features"),
        labels_path=_merged(args, "labels"),
        splits_path=_merged(args, "splits"),
        generator=generator,
        model=_merged(args, "model", "gcn"),
        hidden_dim=_merged(args, "hidden", 64),
        num_layers=_merged(args, "layers", 2),
        learning_rate=_merged(args, "lr", 0.2),
        epochs=_merged(args, "epochs", 200),
        alpha_up=_merged(args, "alpha_up", 0.5),
        beta=_merged(args, "beta", 0.1),
        s1=_merged(args, "s1"),
        s2=_merged(args, "s2"),
        sampler_kind=_merged(args, "sampler", "vm"),
        baseline=_merged(args, "baseline", "spangnn"),
        seed=seed,
        out_dir=_merged(args, "out"),
        timings=timings,
        diag_every=_merged(args, "diag_every", 0),
        diag_samples=_merged(args, "diag_samples", 16),
    )


def _cmd_train(args) -> int:
    from .runner import run_training
    cfg = _build_run_config(args)
    if cfg.out_dir is None:
        raise ConfigError("train requires --out DIR for the metrics CSV")
    result = run_training(cfg)
    last = result.metrics[-1]
    print(f"trained {cfg.epochs} epochs; final loss {last.loss:.6f}, "
          f"best val acc {result.best_val_acc:.4f}, "
          f"peak directed edges {result.peak_directed_edges}")
    print(f"metrics: {Path(cfg.out_dir) / 'metrics.csv'}")
    return 0


def _cmd_compare(args) -> int:
    from .runner import run_compare
    cfg = _build_run_config(args)
    if cfg.out_dir is None:
        raise ConfigError("compare requires --out DIR for the combined CSV")
    raw = _merged(args, "variants", "spangnn-vm,spangnn-gnr,dropedge,full")
    variants = [v.strip() for v in raw.split(",") if v.strip()]
    results = run_compare(cfg, variants)
    print("variant,best_val_acc,best_val_macro_f1,peak_directed_edges,"
          "mean_sampling_time_ms")
    for name in variants:
        r = results[name]
        print(f"{name},{r.best_val_acc:.6f},{r.best_val_macro_f1:.6f},"
              f"{r.peak_directed_edges},{r.mean_sampling_time_ms:.3f}")
    return 0


def _cmd_sample_inspect(args) -> int:
    from .graphstore import SpanningSubgraph, build_propagation
    from .runner import kind_for_model, load_run_graph
    from .sampler import make_weights
    cfg = _build_run_config(args)
    g = load_run_graph(cfg)
    p_full = build_propagation(SpanningSubgraph.full(g), kind_for_model(cfg.layer_type))
    probs = make_weights(cfg.sampler_kind, g, p_full)
    norm = probs.normalized()
    lines = ["edge_index,u,v,weight,normalized_prob"]
    for i, (u, v) in enumerate(g.edges):
        lines.append(f"{i},{u},{v},{float(probs.weights[i])!r},{float(norm[i])!r}")
    text = "\n".join(lines) + "\n"
    if cfg.out_dir is not None:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "sample_inspect.csv").write_text(text, encoding="utf-8")
        print(f"wrote {out / 'sample_inspect.csv'}")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_bench_sampling(args) -> int:
    from .bench import bench_sampling
    from .runner import load_run_graph
    cfg = _build_run_config(args)
    have_data = (cfg.data_dir is not None or cfg.edges_path is not None
                 or cfg.generator is not None)
    if have_data:
        g = load_run_graph(cfg)
    else:
        from .synthetic import random_edge_graph
        g = random_edge_graph(args.bench_nodes, args.bench_edges, seed=cfg.seed)
    s1 = cfg.s1 if cfg.s1 is not None else 10_000
    s2 = cfg.s2 if cfg.s2 is not None else 1_000
    report = bench_sampling(g, cfg.sampler_kind, s1, s2, runs=args.runs,
                            seed=cfg.seed)
    print("method,run,elapsed_ms")
    for i, ms in enumerate(report.two_step_ms):
        print(f"two_step,{i},{ms:.3f}")
    for i, ms in enumerate(report.direct_ms):
        print(f"direct,{i},{ms:.3f}")
    print(f"# median two_step {report.median_two_step_ms:.3f} ms, "
          f"median direct {report.median_direct_ms:.3f} ms, "
          f"speedup {report.speedup:.2f}x")
    return 0


def _cmd_gen_data(args) -> int:
    from .synthetic import GeneratorSpec, generate_synthetic
    out = _merged(args, "out")
    if out is None:
        raise ConfigError("gen-data requires --out DIR")
    spec = GeneratorSpec(
        kind=args.kind,
        nodes=_merged(args, "nodes", 1000),
        classes=_merged(args, "classes", 2),
        feature_dim=_merged(args, "feature_dim", 16),
        seed=_merged(args, "seed", 0),
        p_in=_merged(args, "p_in", 0.05),
        p_out=_merged(args, "p_out", 0.005),
        attach=_merged(args, "attach", 4),
        feature_noise=_merged(args, "feature_noise", 1.0),
    )
    g = generate_synthetic(spec, out, binary_features=args.binary_features)
    print(f"wrote {spec.kind} dataset to {out}: {g.num_nodes} nodes, "
          f"{g.num_edges} edges, {g.num_classes} classes")
    return 0


_DISPATCH = {
    "train": _cmd_train,
    "compare": _cmd_compare,
    "sample-inspect": _cmd_sample_inspect,
    "bench-sampling": _cmd_bench_sampling,
    "gen-data": _cmd_gen_data,
}


def main(argv=None) -> int:
    try:
        _apply_thread_cap()
        parser = build_parser()
        args = parser.parse_args(argv)
        config_path = getattr(args, "config", None)
        args._file_values = parse_config_file(config_path) if config_path else {}
        return _DISPATCH[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
