"""Parameter counting, FLOPs accounting, matched-budget construction,
and the accuracy-vs-cost sweep harness.

FLOPs are a fixed documented convention, not a hardware measurement:

* affine map: 2*out*in + out (multiply-add counted as 2, plus bias add)
* fixed activation: out (relu) or 4*out (sigmoid, tanh)
* one local spline evaluation of degree p: 3*p*(p+1)/2 for the basis
  recursion plus 2*(p+1) for the coefficient dot product
* edge-spline layer: one basis evaluation per input element (shared by
  all output neurons) plus per-edge coefficient dot product and linear
  residual: in_dim*(3*p*(p+1)/2) + out*in*(2*(p+1) + 2)

Knot vectors are fixed, not learned, so they are never counted as
parameters.
"""

import csv
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .network import Architecture, KanEdgeLayer, LcnLayer, MlpLayer, init_network
from .training import evaluate, train

SWEEP_HEADER = ["family", "params", "flops", "seed", "test_acc", "wall_seconds"]
SWEEP_JOBS_ENV = "SPLINENET_SWEEP_JOBS"


@dataclass
class CostReport:
    params: int
    flops: int
    per_layer: list = field(default_factory=list)  # (name, params, flops)


def _spline_eval_flops(degree):
    return 3 * degree * (degree + 1) // 2 + 2 * (degree + 1)


def _layer_costs(layer):
    if isinstance(layer, LcnLayer):
        m, m_prev = layer.weights.shape
        params = m * m_prev + m + m * layer.kv.num_basis
        flops = 2 * m * m_prev + m + m * _spline_eval_flops(layer.kv.degree)
        return "lcn", params, flops
    if isinstance(layer, MlpLayer):
        m, m_prev = layer.weights.shape
        params = m * m_prev + m
        act = m if layer.activation == "relu" else 4 * m
        return "mlp", params, 2 * m * m_prev + m + act
    if isinstance(layer, KanEdgeLayer):
        m, m_prev = layer.base_weights.shape
        degree = layer.kv.degree
        params = m * m_prev * (layer.kv.num_basis + 1)
        flops = m_prev * (3 * degree * (degree + 1) // 2) + m * m_prev * (2 * (degree + 1) + 2)
        return "kan", params, flops
    raise TypeError(f"unknown layer type {type(layer).__name__}")


def _cost_report(net):
    per_layer = []
    for i, layer in enumerate(net.layers):
        kind, params, flops = _layer_costs(layer)
        per_layer.append((f"layer{i}:{kind}", params, flops))
    o, m_last = net.out_weights.shape
    per_layer.append(("output:linear", o * m_last + o, 2 * o * m_last + o))
    return CostReport(
        params=sum(p for _, p, _ in per_layer),
        flops=sum(f for _, _, f in per_layer),
        per_layer=per_layer,
    )


def count_params(net):
    """Trainable parameter count with a per-layer breakdown."""
    return _cost_report(net)


def count_flops(net):
    """Forward FLOPs per sample under the documented convention."""
    return _cost_report(net)


def _arch_params(family, dims, num_basis):
    # dims = (input, hidden..., output); closed-form parameter count.
    total = 0
    for m_prev, m in zip(dims[:-2], dims[1:-1]):
        if family == "mlp":
            total += m * m_prev + m
        elif family == "lcn":
            total += m * m_prev + m + m * num_basis
        else:
            total += m * m_prev * (num_basis + 1)
    total += dims[-1] * dims[-2] + dims[-1]
    return total


class BudgetError(ValueError):
    pass


def build_matched(family, budget, input_dim, output_dim, num_basis=8, degree=3,
                  domain=(-1.0, 1.0), activation="relu", max_width=8192):
    """Architecture of the given family whose parameter count is as close
    as possible to the budget.

    Searches one- and two-hidden-layer shapes; the second width is solved
    in closed form for each first width, which gives fine enough
    granularity to match budgets across families. Among shapes within
    0.5% of the budget, shallower and less bottlenecked ones win; exact
    closeness only breaks ties beyond that.
    """
    if family == "mlp":
        unit1 = input_dim + 1 + output_dim
        layer1 = lambda m1: m1 * (input_dim + 1)
        unit2 = lambda m1: m1 + 1 + output_dim
    elif family == "lcn":
        unit1 = input_dim + 1 + num_basis + output_dim
        layer1 = lambda m1: m1 * (input_dim + 1 + num_basis)
        unit2 = lambda m1: m1 + 1 + num_basis + output_dim
    elif family == "kan":
        unit1 = input_dim * (num_basis + 1) + output_dim
        layer1 = lambda m1: m1 * input_dim * (num_basis + 1)
        unit2 = lambda m1: m1 * (num_basis + 1) + output_dim
    else:
        raise ValueError(f"unknown family {family!r}")

    candidates = []
    base = output_dim  # output bias
    for m1 in (max(1, (budget - base) // unit1), (budget - base) // unit1 + 1):
        if m1 >= 1:
            candidates.append((m1,))
    m1 = 1
    while layer1(m1) + base < budget and m1 <= max_width:
        m2 = round((budget - base - layer1(m1)) / unit2(m1))
        for cand in (m2 - 1, m2, m2 + 1):
            if cand >= 1:
                candidates.append((m1, cand))
        m1 += 1

    if not candidates:
        candidates.append((1,))

    def diff(hidden):
        return abs(_arch_params(family, (input_dim, *hidden, output_dim), num_basis) - budget)

    def score(hidden):
        close_enough = diff(hidden) <= 0.005 * budget
        if close_enough:
            return (0, len(hidden), -min(hidden), diff(hidden), hidden)
        return (1, diff(hidden), len(hidden), -min(hidden), hidden)

    best = min(candidates, key=score)
    return Architecture(
        family=family,
        input_dim=input_dim,
        output_dim=output_dim,
        hidden=best,
        num_basis=num_basis,
        degree=degree,
        domain=domain,
        activation=activation,
    )


def matched_architectures(budget, families, input_dim, output_dim, tolerance=0.02, **kwargs):
    """One architecture per family with parameter spread under tolerance.

    Raises BudgetError when the relative spread (max - min) / min of the
    achieved counts exceeds the tolerance.
    """
    archs = {}
    counts = {}
    for family in families:
        arch = build_matched(family, budget, input_dim, output_dim, **kwargs)
        archs[family] = arch
        counts[family] = _arch_params(
            family, (input_dim, *arch.hidden, output_dim), arch.num_basis
        )
    lo, hi = min(counts.values()), max(counts.values())
    spread = (hi - lo) / lo
    if spread > tolerance:
        raise BudgetError(
            f"budget {budget} unreachable within {tolerance:.0%}: counts {counts} "
            f"(spread {spread:.2%})"
        )
    return archs, counts


@dataclass
class SweepResult:
    rows: list  # dicts keyed by SWEEP_HEADER

    def by_family(self):
        out = {}
        for row in self.rows:
            out.setdefault(row["family"], []).append(row)
        return out


def _read_existing(path):
    done = set()
    rows = []
    if path.exists():
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                row["params"] = int(row["params"])
                row["flops"] = int(row["flops"])
                row["seed"] = int(row["seed"])
                row["test_acc"] = float(row["test_acc"])
                row["wall_seconds"] = float(row["wall_seconds"])
                rows.append(row)
                done.add((row["family"], row["params"], row["seed"]))
    return rows, done


def _run_one(arch, config, train_ds, test_ds, seed):
    net = init_network(arch, seed)
    t0 = time.perf_counter()
    train(net, train_ds, config, test_dataset=None)
    wall = time.perf_counter() - t0
    return evaluate(net, test_ds), wall, _cost_report(net)


def run_sweep(families, budgets, train_ds, test_ds, config, out_dir, seeds=(0,),
              log=print, **arch_kwargs):
    """Train every (family, budget, seed) tuple and persist the results.

    Writes ``sweep.csv`` (one row per completed run) plus a plot-ready
    ``sweep_plot.csv`` aggregated per configuration. Completed tuples
    found in an existing sweep.csv are skipped, so interrupted sweeps
    resume. Unreachable budgets are reported and skipped, not fatal.
    Set the environment variable SPLINENET_SWEEP_JOBS to parallelize
    across tuples (results still append through this single writer).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = out_dir / "sweep.csv"
    rows, done = _read_existing(records)

    input_dim = train_ds.features.shape[1]
    output_dim = train_ds.num_classes if train_ds.task == "classification" else train_ds.targets.shape[1]

    jobs = []
    for budget in budgets:
        try:
            archs, counts = matched_architectures(
                budget, families, input_dim, output_dim, **arch_kwargs
            )
        except BudgetError as exc:
            log(f"skipping budget {budget}: {exc}")
            continue
        flops = {}
        for family, arch in archs.items():
            flops[family] = _cost_report(init_network(arch, 0)).flops
        if "kan" in flops and "lcn" in flops and flops["kan"] < flops["lcn"]:
            log(
                f"note: at budget {budget} the edge-spline model needs fewer forward "
                f"FLOPs ({flops['kan']}) than the node-spline model ({flops['lcn']})"
            )
        for family, arch in archs.items():
            for seed in seeds:
                key = (family, counts[family], seed)
                if key in done:
                    continue
                jobs.append((key, arch, seed))

    new_file = not records.exists()
    with open(records, "a", newline="") as fh:
        writer = csv.writer(fh)
        if new_file:
            writer.writerow(SWEEP_HEADER)

        def record(key, acc, wall, report):
            row = {
                "family": key[0],
                "params": report.params,
                "flops": report.flops,
                "seed": key[2],
                "test_acc": acc,
                "wall_seconds": wall,
            }
            rows.append(row)
            writer.writerow([row[c] for c in SWEEP_HEADER])
            fh.flush()
            log(f"done {key[0]} params={report.params} seed={key[2]} metric={acc:.4f}")

        n_jobs = int(os.environ.get(SWEEP_JOBS_ENV, "1"))
        if n_jobs > 1 and jobs:
            with ProcessPoolExecutor(max_workers=n_jobs) as pool:
                futures = {
                    pool.submit(_run_one, arch, config, train_ds, test_ds, seed): key
                    for key, arch, seed in jobs
                }
                for future in futures:
                    acc, wall, report = future.result()
                    record(futures[future], acc, wall, report)
        else:
            for key, arch, seed in jobs:
                acc, wall, report = _run_one(arch, config, train_ds, test_ds, seed)
                record(key, acc, wall, report)

    _write_plot_csv(rows, out_dir / "sweep_plot.csv")
    return SweepResult(rows=rows)


def _write_plot_csv(rows, path):
    groups = {}
    for row in rows:
        groups.setdefault((row["family"], row["params"], row["flops"]), []).append(
            row["test_acc"]
        )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["family", "params", "flops", "mean_test_acc", "std_test_acc", "n_runs"])
        for (family, params, flops), accs in sorted(groups.items()):
            writer.writerow(
                [family, params, flops, f"{np.mean(accs):.6f}", f"{np.std(accs):.6f}", len(accs)]
            )
