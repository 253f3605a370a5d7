"""Command-line entry point.

Subcommands: train, eval, gradcheck, sweep, gen-data, bench. Runs are
driven by a JSON config file; a few flags override config values. Exit
codes: 0 success, 1 validation failure, 2 runtime failure.
"""

import argparse
import json
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import data as data_mod
from .analysis import count_flops, count_params, run_sweep
from .backend import backend_name
from .backprop import backward, finite_diff_gradient, max_relative_error
from .benchmark import benchmark_table
from .network import Architecture, init_network, load_network, save_network
from .training import TrainConfig, evaluate, mse_loss, train

GRADCHECK_THRESHOLD = 1e-5


class ConfigError(ValueError):
    pass


_MODEL_KEYS = {"family", "hidden", "num_basis", "degree", "domain", "activation"}
_TRAIN_KEYS = {
    "epochs", "batch_size", "learning_rate", "optimizer", "beta1", "beta2",
    "eps", "loss", "seed", "shuffle",
}
_DATASET_KEYS = {
    "kind", "task", "n_samples", "noise", "seed", "path", "schema", "normalize",
    "split_fraction", "split_seed", "train_images", "train_labels",
    "test_images", "test_labels", "limit", "test_limit",
}
_SWEEP_KEYS = {"families", "budgets", "seeds"}
_TOP_KEYS = {"model", "train", "dataset", "sweep", "out_dir", "seed"}

MODEL_DEFAULTS = {
    "family": "lcn",
    "hidden": [8],
    "num_basis": 8,
    "degree": 3,
    "domain": [-1.0, 1.0],
    "activation": "relu",
}
DATASET_DEFAULTS = {"split_fraction": 0.8, "split_seed": 7, "normalize": True,
                    "n_samples": 1024, "noise": 0.0, "seed": 1}


@dataclass
class RunConfig:
    model: dict
    train: TrainConfig
    dataset: dict
    out_dir: Path
    seed: int
    sweep: dict | None = None
    config_dir: Path = Path(".")
    loss_explicit: bool = False

    def resolve_loss(self, dataset):
        """Train config with the loss matched to the dataset's task when the
        config file left it implicit."""
        if self.loss_explicit:
            return self.train
        loss = "mse" if dataset.task == "regression" else "softmax_xent"
        if loss == self.train.loss:
            return self.train
        return replace(self.train, loss=loss)


def _key_line(text, key):
    for i, line in enumerate(text.splitlines(), start=1):
        if f'"{key}"' in line:
            return i
    return None


def _reject_unknown(section, keys, allowed, text):
    for key in keys:
        if key not in allowed:
            line = _key_line(text, key)
            where = f" (line {line})" if line else ""
            raise ConfigError(f"unknown config key {section}{key!r}{where}")


def _typed(section, obj, key, types, text):
    value = obj[key]
    if not isinstance(value, types):
        line = _key_line(text, key)
        where = f" (line {line})" if line else ""
        names = "/".join(t.__name__ for t in (types if isinstance(types, tuple) else (types,)))
        raise ConfigError(f"config key {section}{key!r} must be {names}{where}")
    return value


def parse_config(path, overrides=None):
    """Parse and validate a JSON run config; flags override file values.

    Unknown keys, type mismatches, and missing dataset files are all
    rejected with the offending key named.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    _reject_unknown("", raw.keys(), _TOP_KEYS, text)

    model = dict(MODEL_DEFAULTS)
    user_model = raw.get("model", {})
    if not isinstance(user_model, dict):
        raise ConfigError("config key 'model' must be an object")
    _reject_unknown("model.", user_model.keys(), _MODEL_KEYS, text)
    model.update(user_model)
    if model["family"] not in ("lcn", "mlp", "kan"):
        raise ConfigError(f"model.family must be lcn/mlp/kan, got {model['family']!r}")

    train_raw = raw.get("train", {})
    if not isinstance(train_raw, dict):
        raise ConfigError("config key 'train' must be an object")
    _reject_unknown("train.", train_raw.keys(), _TRAIN_KEYS, text)

    dataset = dict(DATASET_DEFAULTS)
    user_ds = raw.get("dataset")
    if user_ds is None:
        raise ConfigError("config must provide a 'dataset' section")
    if not isinstance(user_ds, dict):
        raise ConfigError("config key 'dataset' must be an object")
    _reject_unknown("dataset.", user_ds.keys(), _DATASET_KEYS, text)
    dataset.update(user_ds)
    if dataset.get("kind") not in ("csv", "idx", "symbolic"):
        raise ConfigError("dataset.kind must be one of csv/idx/symbolic")

    sweep = raw.get("sweep")
    if sweep is not None:
        if not isinstance(sweep, dict):
            raise ConfigError("config key 'sweep' must be an object")
        _reject_unknown("sweep.", sweep.keys(), _SWEEP_KEYS, text)

    overrides = overrides or {}
    for key, value in overrides.items():
        if value is None:
            continue
        if key in _TRAIN_KEYS:
            train_raw[key] = value
        elif key == "out_dir":
            raw["out_dir"] = value
        elif key == "seed":
            raw["seed"] = value

    seed = raw.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("config key 'seed' must be an integer")
    train_raw.setdefault("seed", seed)
    loss_explicit = "loss" in train_raw
    if not loss_explicit:
        train_raw["loss"] = "mse" if dataset["kind"] == "symbolic" else "softmax_xent"
    try:
        tc = TrainConfig(**train_raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid train section: {exc}") from None

    config_dir = path.parent
    _check_dataset_paths(dataset, config_dir)

    return RunConfig(
        model=model,
        train=tc,
        dataset=dataset,
        out_dir=Path(raw.get("out_dir", "runs/run")),
        seed=seed,
        sweep=sweep,
        config_dir=config_dir,
        loss_explicit=loss_explicit,
    )


def _check_dataset_paths(dataset, config_dir):
    keys = {
        "csv": ["path", "schema"],
        "idx": ["train_images", "train_labels"],
        "symbolic": [],
    }[dataset["kind"]]
    optional = {"idx": ["test_images", "test_labels"]}.get(dataset["kind"], [])
    for key in keys:
        if key not in dataset:
            raise ConfigError(f"dataset.{key} is required for kind={dataset['kind']}")
    for key in keys + [k for k in optional if k in dataset]:
        value = dataset[key]
        if isinstance(value, str):
            p = (config_dir / value).resolve()
            if not p.exists():
                raise ConfigError(f"dataset.{key}: missing file {p}")
            dataset[key] = str(p)


def load_dataset_pair(cfg):
    """(train, test) datasets for a RunConfig."""
    ds = cfg.dataset
    if ds["kind"] == "symbolic":
        task = ds.get("task")
        if task is None:
            raise ConfigError("dataset.task is required for kind=symbolic")
        full = data_mod.gen_symbolic(
            task, seed=ds["seed"], n_samples=ds["n_samples"], noise=ds["noise"]
        )
        return data_mod.split(full, ds["split_fraction"], ds["split_seed"])
    if ds["kind"] == "csv":
        schema = ds["schema"]
        if isinstance(schema, str):
            schema = json.loads(Path(schema).read_text())
        full = data_mod.load_csv(ds["path"], schema)
        if ds["normalize"]:
            full = data_mod.minmax_normalize(full)
        return data_mod.split(full, ds["split_fraction"], ds["split_seed"])
    train_ds = data_mod.load_idx(ds["train_images"], ds["train_labels"])
    if ds.get("limit"):
        train_ds = train_ds.take(np.arange(int(ds["limit"])))
    if "test_images" in ds and "test_labels" in ds:
        test_ds = data_mod.load_idx(ds["test_images"], ds["test_labels"])
        if ds.get("test_limit"):
            test_ds = test_ds.take(np.arange(int(ds["test_limit"])))
        return train_ds, test_ds
    return data_mod.split(train_ds, ds["split_fraction"], ds["split_seed"])


def build_architecture(cfg, train_ds):
    output_dim = (
        train_ds.num_classes if train_ds.task == "classification" else train_ds.targets.shape[1]
    )
    m = cfg.model
    return Architecture(
        family=m["family"],
        input_dim=train_ds.features.shape[1],
        output_dim=output_dim,
        hidden=tuple(m["hidden"]),
        num_basis=m["num_basis"],
        degree=m["degree"],
        domain=tuple(m["domain"]),
        activation=m["activation"],
    )


def cmd_train(cfg):
    train_ds, test_ds = load_dataset_pair(cfg)
    arch = build_architecture(cfg, train_ds)
    net = init_network(arch, cfg.seed)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = cfg.out_dir / "metrics.csv"
    marker = cfg.out_dir / "INCOMPLETE"
    marker.write_text("run in progress; outputs below this directory are partial\n")
    net, metrics = train(
        net,
        train_ds,
        cfg.resolve_loss(train_ds),
        test_dataset=test_ds,
        metrics_path=str(metrics_path),
    )
    checkpoint = cfg.out_dir / "model.npz"
    save_network(net, checkpoint)
    marker.unlink()
    summary = {
        "checkpoint": str(checkpoint),
        "metrics": str(metrics_path),
        "epochs": len(metrics),
        "params": count_params(net).params,
        "flops": count_flops(net).flops,
        "backend": backend_name(),
    }
    if metrics:
        summary["final_train_loss"] = metrics[-1].train_loss
        summary["final_test_metric"] = metrics[-1].test_acc
    print(json.dumps(summary))
    return 0


def cmd_eval(cfg, checkpoint):
    _, test_ds = load_dataset_pair(cfg)
    net = load_network(checkpoint)
    value = evaluate(net, test_ds)
    metric = "accuracy" if test_ds.task == "classification" else "mse"
    print(json.dumps({"metric": metric, "value": value, "n": len(test_ds)}))
    return 0


def _gradcheck_loss(net, x, y):
    return mse_loss(net.forward(x).y_hat, y, x.shape[0] if x.ndim == 2 else 1)


def cmd_gradcheck(seed=0, families=("lcn", "mlp", "kan")):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for family in families:
        arch = Architecture(
            family=family, input_dim=3, output_dim=2, hidden=(5, 4), num_basis=6, degree=3
        )
        net = init_network(arch, seed)
        x = rng.uniform(0, 1, (2, 3))
        y = rng.uniform(0, 1, (2, 2))
        trace = net.forward(x)
        analytic = backward(net, trace, (2.0 / x.shape[0]) * (trace.y_hat - y))
        numeric = finite_diff_gradient(net, x, y, _gradcheck_loss, h=1e-6)
        err = max_relative_error(analytic, numeric)
        print(json.dumps({"family": family, "max_rel_error": err}))
        worst = max(worst, err)
    print(json.dumps({"max_rel_error": worst, "threshold": GRADCHECK_THRESHOLD}))
    return 0 if worst <= GRADCHECK_THRESHOLD else 1


def cmd_sweep(cfg):
    if not cfg.sweep:
        raise ConfigError("sweep command requires a 'sweep' section in the config")
    train_ds, test_ds = load_dataset_pair(cfg)
    families = cfg.sweep.get("families", ["lcn", "mlp", "kan"])
    budgets = cfg.sweep.get("budgets")
    if not budgets:
        raise ConfigError("sweep.budgets must be a non-empty list")
    seeds = cfg.sweep.get("seeds", [cfg.seed])
    result = run_sweep(
        families,
        budgets,
        train_ds,
        test_ds,
        cfg.resolve_loss(train_ds),
        cfg.out_dir,
        seeds=tuple(seeds),
        num_basis=cfg.model["num_basis"],
        degree=cfg.model["degree"],
        domain=tuple(cfg.model["domain"]),
        activation=cfg.model["activation"],
    )
    print(json.dumps({"rows": len(result.rows), "out_dir": str(cfg.out_dir)}))
    return 0


def cmd_gen_data(task, n_samples, noise, seed, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ds = data_mod.gen_symbolic(task, seed=seed, n_samples=n_samples, noise=noise)
    csv_path = out_dir / f"{task}.csv"
    with open(csv_path, "w") as fh:
        fh.write(",".join(ds.feature_names + ["target"]) + "\n")
        for x, y in zip(ds.features, ds.targets[:, 0]):
            fh.write(",".join(repr(float(v)) for v in x) + f",{float(y)!r}\n")
    schema = {name: "numeric" for name in ds.feature_names}
    schema["target"] = "target"
    schema_path = out_dir / f"{task}.schema.json"
    schema_path.write_text(json.dumps(schema, indent=2))
    print(json.dumps({"csv": str(csv_path), "schema": str(schema_path), "rows": len(ds)}))
    return 0


def cmd_bench(batch, width, num_basis, degree, repeats):
    print(benchmark_table(batch=batch, width=width, num_basis=num_basis,
                          degree=degree, repeats=repeats))
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(prog="splinenet")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(p):
        p.add_argument("--config", required=True, help="JSON run config")
        p.add_argument("--lr", type=float, dest="learning_rate")
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", type=int, dest="batch_size")
        p.add_argument("--seed", type=int)
        p.add_argument("--out-dir", dest="out_dir")

    add_config(sub.add_parser("train", help="train a model and write checkpoint + metrics"))
    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on the config's test split")
    add_config(p_eval)
    p_eval.add_argument("--checkpoint", required=True)

    p_grad = sub.add_parser("gradcheck", help="compare backprop with finite differences")
    p_grad.add_argument("--seed", type=int, default=0)
    p_grad.add_argument("--family", choices=["lcn", "mlp", "kan"], action="append")

    add_config(sub.add_parser("sweep", help="accuracy-vs-cost sweep over matched budgets"))

    p_gen = sub.add_parser("gen-data", help="write a synthetic regression dataset as CSV")
    p_gen.add_argument("--task", required=True, choices=sorted(data_mod.SYMBOLIC_TASKS))
    p_gen.add_argument("--n", type=int, default=1024)
    p_gen.add_argument("--noise", type=float, default=0.0)
    p_gen.add_argument("--seed", type=int, default=1)
    p_gen.add_argument("--out", default="datasets")

    p_bench = sub.add_parser("bench", help="time the spline kernels on every backend")
    p_bench.add_argument("--batch", type=int, default=256)
    p_bench.add_argument("--width", type=int, default=64)
    p_bench.add_argument("--num-basis", type=int, default=8)
    p_bench.add_argument("--degree", type=int, default=3)
    p_bench.add_argument("--repeats", type=int, default=5)
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "gradcheck":
            return cmd_gradcheck(seed=args.seed, families=tuple(args.family or ("lcn", "mlp", "kan")))
        if args.command == "gen-data":
            return cmd_gen_data(args.task, args.n, args.noise, args.seed, args.out)
        if args.command == "bench":
            return cmd_bench(args.batch, args.width, args.num_basis, args.degree, args.repeats)
        overrides = {
            "learning_rate": args.learning_rate,
            "epochs": args.epochs,
            "batch_size": args.batch_size,
            "seed": args.seed,
            "out_dir": args.out_dir,
        }
        cfg = parse_config(args.config, overrides)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "eval":
            return cmd_eval(cfg, args.checkpoint)
        if args.command == "sweep":
            return cmd_sweep(cfg)
        raise RuntimeError(f"unhandled command {args.command}")
    except (ConfigError, data_mod.DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
