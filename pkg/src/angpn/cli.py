"""Command-line entry point: ``angpn {train,eval,graph-export,gradcheck,sweep}``.

Configuration is resolved in three layers: built-in defaults, then an
optional JSON file given with ``--config``, then explicit flags. The
resolved configuration is written to ``<out>/config.json`` and can be fed
back with ``--config`` to reproduce a run.
"""
import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .data import (add_constant_feature, gen_blobs, gen_two_moons, load_dataset,
                   stratified_split, Dataset)
from .errors import AngpnError
from .graphlearn import (EXACT, GLOBAL, PAPER, PER_ROW_K, GraphMode, pairwise_euclidean,
                         write_affinity_csv, write_edge_list)
from .model import load_checkpoint, save_checkpoint, write_predictions_csv
from .oracles import model_gradcheck
from .propagation import HyperParams, anfp_propagate
from .train import TrainConfig, evaluate, fit, init_model, metrics_json

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
SWEEP_AXES = ("layers", "alpha", "beta", "T", "label_rate")


@dataclass
class RunConfig:
    data: str | None = None
    labels: str | None = None
    synthetic: str | None = None
    n_per_class: int = 150
    noise: float | None = None
    constant_feature: bool = False
    variant: str = "angpn"
    label_rate: float = 0.1
    val_rate: float = 0.05
    alpha: float = 0.5
    beta: float = 0.3
    gamma: float | None = None
    k: int = 10
    t_steps: int = 2
    graph_mode: str = EXACT
    gamma_mode: str = GLOBAL
    grad_mode: str = "unrolled"
    hidden: int = 50
    layers: int = 2
    learning_rate: float = 0.005
    max_epochs: int = 10000
    patience: int = 100
    seed: int = 0
    repeats: int = 5
    out: str = "runs/latest"
    checkpoint: str | None = None

    def hyper(self):
        if not 0 < self.alpha < 1:
            raise AngpnError(f"alpha must be in (0, 1), got {self.alpha}")
        return HyperParams(alpha=self.alpha, beta=self.beta, gamma=self.gamma, k=self.k,
                           t_steps=self.t_steps, mode=GraphMode(self.graph_mode, self.gamma_mode),
                           grad_mode=self.grad_mode)

    def train_config(self, seed):
        return TrainConfig(learning_rate=self.learning_rate, max_epochs=self.max_epochs,
                           patience=self.patience, seed=seed)


class UsageError(AngpnError):
    pass


def load_data(cfg):
    if cfg.synthetic == "blobs":
        sigma = 1.0 if cfg.noise is None else cfg.noise
        ds = gen_blobs(cfg.n_per_class, [[-5.0, 0.0], [5.0, 0.0]], sigma, cfg.seed)
    elif cfg.synthetic == "moons":
        ds = gen_two_moons(cfg.n_per_class, 0.1 if cfg.noise is None else cfg.noise, cfg.seed)
    elif cfg.synthetic is not None:
        raise UsageError(f"unknown synthetic dataset {cfg.synthetic!r}")
    else:
        if cfg.data is None:
            raise UsageError("give --data (and --labels) or --synthetic")
        for p in (cfg.data, cfg.labels):
            if p is not None and not Path(p).is_file():
                raise UsageError(f"file not found: {p}")
        ds = load_dataset(cfg.data, cfg.labels, name=Path(cfg.data).stem)
    if cfg.constant_feature:
        ds = add_constant_feature(ds)
    return ds


def _one_run(cfg, ds, dist, seed, out_dir):
    split = stratified_split(ds, cfg.label_rate, cfg.val_rate, seed)
    dims = [ds.d] + [cfg.hidden] * cfg.layers + [ds.n_classes]
    model = init_model(dims, cfg.hyper(), cfg.variant, seed)
    best, hist = fit(model, dist, ds.features, split, cfg.train_config(seed))
    acc, z = evaluate(best, dist, ds.features, split)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        hist.write_csv(out_dir / "history.csv")
        save_checkpoint(out_dir / "model.angpn", best)
        write_predictions_csv(out_dir / "predictions.csv", z)
        metrics_json(out_dir / "metrics.json", ds.name, cfg.label_rate, seed, cfg.variant,
                     acc, hist.epochs_run)
    return acc


def _workers():
    try:
        return max(1, int(os.environ.get("ANGPN_THREADS", "1")))
    except ValueError:
        return 1


def run_protocol(cfg, ds, out=None):
    """``cfg.repeats`` runs with seeds ``seed, seed + 1, ...``; returns accuracies."""
    dist = pairwise_euclidean(ds.features)
    seeds = [cfg.seed + r for r in range(cfg.repeats)]
    dirs = [None if out is None else out / f"seed_{s}" for s in seeds]
    with ThreadPoolExecutor(max_workers=min(_workers(), len(seeds))) as pool:
        accs = list(pool.map(lambda sd: _one_run(cfg, ds, dist, *sd), zip(seeds, dirs)))
    return np.array(accs)


def table_cell(accs):
    return f"{100 * np.mean(accs):.2f} ± {100 * np.std(accs):.2f}"


def _write_config(cfg, out):
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "config.json", "w") as fh:
        json.dump(asdict(cfg), fh, indent=2, sort_keys=True)


def cmd_train(cfg):
    ds = load_data(cfg)
    out = Path(cfg.out)
    _write_config(cfg, out)
    accs = run_protocol(cfg, ds, out)
    summary = {
        "dataset": ds.name, "variant": cfg.variant, "label_rate": cfg.label_rate,
        "seeds": [cfg.seed + r for r in range(cfg.repeats)],
        "test_accuracy": accs.tolist(), "mean": float(accs.mean()),
        "std": float(accs.std()), "cell": table_cell(accs),
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    print(f"{ds.name} {cfg.variant} {100 * cfg.label_rate:g}%: {summary['cell']}")
    return EXIT_OK


def cmd_eval(cfg):
    if cfg.checkpoint is None:
        raise UsageError("eval needs --checkpoint")
    if not Path(cfg.checkpoint).is_file():
        raise UsageError(f"file not found: {cfg.checkpoint}")
    ds = load_data(cfg)
    model = load_checkpoint(cfg.checkpoint)
    dist = pairwise_euclidean(ds.features)
    split = stratified_split(ds, cfg.label_rate, cfg.val_rate, cfg.seed)
    acc, z = evaluate(model, dist, ds.features, split)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_predictions_csv(out / "predictions.csv", z)
    metrics_json(out / "metrics.json", ds.name, cfg.label_rate, cfg.seed, model.variant, acc, 0)
    print(f"test accuracy {100 * acc:.2f}%")
    return EXIT_OK


def cmd_graph_export(cfg):
    ds = load_data(cfg)
    hyper = cfg.hyper()
    if cfg.variant == "ngpn":
        hyper = hyper.with_(beta=0.0)
    dist = pairwise_euclidean(ds.features)
    _, s = anfp_propagate(dist, ds.features, hyper)
    out = Path(cfg.out)
    _write_config(cfg, out)
    write_affinity_csv(out / "graph.csv", s)
    write_edge_list(out / "graph_edges.csv", s)
    sizes = np.count_nonzero(s > 0, axis=1)
    hist = {int(k): int(v) for k, v in zip(*np.unique(sizes, return_counts=True))}
    same = (ds.labels[:, None] == ds.labels[None, :])
    mass = (s * same).sum(axis=1) / np.maximum(s.sum(axis=1), 1e-300)
    report = {
        "n": ds.n, "support_histogram": hist,
        "max_row_sum_deviation": float(np.abs(s.sum(axis=1) - 1).max()),
        "min_same_class_mass": float(mass.min()),
        "mean_same_class_mass": float(mass.mean()),
    }
    with open(out / "graph_report.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    print("support size histogram: " + ", ".join(f"{k}:{v}" for k, v in hist.items()))
    print(f"max |row sum - 1| = {report['max_row_sum_deviation']:.3e}")
    return EXIT_OK


def gradcheck_instance(cfg, n=12, d0=4, hidden=6, classes=2):
    rng = np.random.default_rng(cfg.seed)
    x = rng.standard_normal((n, d0))
    y = np.arange(n) % classes
    ds = Dataset(x, y, classes, "gradcheck")
    split = stratified_split(ds, 0.3, 0.1, cfg.seed)
    hyper = cfg.hyper().with_(k=min(cfg.k, n - 2))
    model = init_model([d0, hidden, classes], hyper, cfg.variant, cfg.seed)
    return model, pairwise_euclidean(x), x, split


def cmd_gradcheck(cfg, corrupt=False, tol=1e-4):
    model, dist, x, split = gradcheck_instance(cfg)
    report = model_gradcheck(model, dist, x, split, corrupt=corrupt)
    print(report.format())
    ok = report.passed(tol)
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_FAIL


def _sweep_values(axis, raw):
    vals = [v.strip() for v in raw.split(",") if v.strip()]
    if not vals:
        raise UsageError("--values must list at least one value")
    conv = int if axis in ("layers", "T") else float
    try:
        return [conv(v) for v in vals]
    except ValueError:
        raise UsageError(f"bad value list {raw!r} for axis {axis}") from None


def _with_axis(cfg, axis, value):
    attr = {"layers": "layers", "alpha": "alpha", "beta": "beta",
            "T": "t_steps", "label_rate": "label_rate"}[axis]
    new = RunConfig(**asdict(cfg))
    setattr(new, attr, value)
    new.hyper()
    return new


def cmd_sweep(cfg, axis, raw_values):
    if axis not in SWEEP_AXES:
        raise UsageError(f"axis must be one of {SWEEP_AXES}")
    values = _sweep_values(axis, raw_values)
    configs = [_with_axis(cfg, axis, v) for v in values]
    ds = load_data(cfg)
    out = Path(cfg.out)
    _write_config(cfg, out)
    rows = []
    for v, c in zip(values, configs):
        accs = run_protocol(c, ds, out / f"{axis}_{v}")
        rows.append((v, float(accs.mean()), float(accs.std())))
        print(f"{axis}={v}: {table_cell(accs)}")
    with open(out / "sweep.csv", "w") as fh:
        fh.write(f"{axis},mean,std\n")
        for v, m, s in rows:
            fh.write(f"{v},{m!r},{s!r}\n")
    with open(out / "sweep_table.txt", "w") as fh:
        fh.write(" & ".join(f"{v * 100:g}\\%" if axis == "label_rate" else str(v)
                            for v, _, _ in rows) + "\n")
        fh.write(" & ".join(f"{100 * m:.2f} $\\pm$ {100 * s:.2f}" for _, m, s in rows) + "\n")
    _plot_sweep(out / "sweep.png", axis, rows, cfg.variant)
    return EXIT_OK


def _plot_sweep(path, axis, rows, label):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    v = [r[0] for r in rows]
    m = np.array([r[1] for r in rows]) * 100
    s = np.array([r[2] for r in rows]) * 100
    fig, ax = plt.subplots(figsize=(4, 3))
    ax.errorbar(v, m, yerr=s, marker="o", capsize=3, label=label)
    ax.set_xlabel(axis)
    ax.set_ylabel("test accuracy (%)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(p):
    g = p.add_argument_group("data")
    g.add_argument("--config", help="JSON file with any RunConfig fields")
    g.add_argument("--data", help="feature CSV or packed ANGD1 file")
    g.add_argument("--labels", help="label file, one integer per line")
    g.add_argument("--synthetic", choices=["blobs", "moons"])
    g.add_argument("--n-per-class", type=int)
    g.add_argument("--noise", type=float)
    g.add_argument("--constant-feature", action="store_true", default=None,
                   help="append a constant input column")
    m = p.add_argument_group("model")
    m.add_argument("--variant", choices=["angpn", "ngpn"])
    m.add_argument("--alpha", type=float, help="propagation fraction (default 0.5)")
    m.add_argument("--beta", type=float, help="feature term weight (default 0.3)")
    m.add_argument("--gamma", type=float,
                   help="graph sparsity weight (default: mean per-row value for k)")
    m.add_argument("--k", type=int,
                   help="neighbourhood size (default 10, a declared choice)")
    m.add_argument("--t-steps", type=int, help="alternation steps per layer (default 2)")
    m.add_argument("--graph-mode", choices=[EXACT, PAPER])
    m.add_argument("--gamma-mode", choices=[GLOBAL, PER_ROW_K])
    m.add_argument("--grad-mode", choices=["unrolled", "frozen-graph"])
    m.add_argument("--hidden", type=int, help="units per hidden layer (default 50)")
    m.add_argument("--layers", type=int, help="hidden layers (default 2)")
    t = p.add_argument_group("training")
    t.add_argument("--label-rate", type=float)
    t.add_argument("--val-rate", type=float)
    t.add_argument("--learning-rate", type=float)
    t.add_argument("--max-epochs", type=int)
    t.add_argument("--patience", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--repeats", type=int)
    t.add_argument("--out", help="output directory")
    t.add_argument("--checkpoint", help="model file for eval")


def build_parser():
    parser = argparse.ArgumentParser(prog="angpn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("train", "eval", "graph-export", "gradcheck"):
        _add_common(sub.add_parser(name))
    gc = sub.choices["gradcheck"]
    gc.add_argument("--corrupt-gradient", action="store_true", help=argparse.SUPPRESS)
    sw = sub.add_parser("sweep")
    _add_common(sw)
    sw.add_argument("--axis", required=True, choices=SWEEP_AXES)
    sw.add_argument("--values", required=True, help="comma-separated values")
    return parser


def resolve_config(args):
    base = {}
    if args.config:
        if not Path(args.config).is_file():
            raise UsageError(f"file not found: {args.config}")
        with open(args.config) as fh:
            base = json.load(fh)
    names = {f.name for f in fields(RunConfig)}
    unknown = set(base) - names
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    for name in names:
        v = getattr(args, name, None)
        if v is not None:
            base[name] = v
    return RunConfig(**base)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "eval":
            return cmd_eval(cfg)
        if args.command == "graph-export":
            return cmd_graph_export(cfg)
        if args.command == "gradcheck":
            return cmd_gradcheck(cfg, corrupt=args.corrupt_gradient)
        return cmd_sweep(cfg, args.axis, args.values)
    except (AngpnError, OSError, json.JSONDecodeError) as exc:
        print(f"angpn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
