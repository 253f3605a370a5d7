"""Timing comparison of the spline kernels across available backends."""

import time

import numpy as np

from .backend import available_backends
from .splines import make_knot_vector


def _time_call(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def benchmark_kernels(batch=256, width=64, num_basis=8, degree=3, repeats=5, seed=0):
    """Best-of-N wall time per kernel per backend.

    Returns rows of dicts: kernel, backend, seconds, and (relative to the
    python backend) speedup.
    """
    rng = np.random.default_rng(seed)
    kv = make_knot_vector(-1.0, 1.0, num_basis, degree)
    z = rng.uniform(-1.0, 1.0, (batch, width))
    coeffs = rng.normal(size=(width, num_basis))
    dh = rng.normal(size=(batch, width))
    kan_out = max(width // 8, 1)
    kan_coeffs = rng.normal(size=(kan_out, width, num_basis))
    base_w = rng.normal(size=(kan_out, width))
    kan_dh = rng.normal(size=(batch, kan_out))
    live = np.ones((batch, width))

    rows = []
    baseline = {}
    for name, mod in available_backends().items():
        h, first, vals = mod.lcn_apply(kv.knots, degree, coeffs, z)
        cases = {
            "node_spline_forward": lambda m=mod: m.lcn_apply(kv.knots, degree, coeffs, z),
            "node_spline_derivative": lambda m=mod: m.lcn_dh_dz(kv.knots, degree, coeffs, z),
            "coefficient_gradient": lambda m=mod: m.coeff_grad(first, vals, dh, num_basis),
            "edge_spline_forward": lambda m=mod: m.kan_apply(
                kv.knots, degree, kan_coeffs, base_w, z, z
            ),
        }
        kan_h, kan_first, kan_vals = mod.kan_apply(kv.knots, degree, kan_coeffs, base_w, z, z)
        cases["edge_spline_backward"] = lambda m=mod: m.kan_backward(
            kv.knots, degree, kan_coeffs, base_w, z, z, kan_first, kan_vals, live, kan_dh
        )
        for kernel, fn in cases.items():
            fn()  # warm up
            seconds = _time_call(fn, repeats)
            baseline.setdefault(kernel, seconds if name == "python" else None)
            rows.append({"kernel": kernel, "backend": name, "seconds": seconds})
    for row in rows:
        base = next(
            (r["seconds"] for r in rows if r["kernel"] == row["kernel"] and r["backend"] == "python"),
            None,
        )
        row["speedup_vs_python"] = base / row["seconds"] if base else float("nan")
    return rows


def benchmark_table(batch=256, width=64, num_basis=8, degree=3, repeats=5):
    """Human-readable table of benchmark_kernels results."""
    rows = benchmark_kernels(batch=batch, width=width, num_basis=num_basis,
                             degree=degree, repeats=repeats)
    lines = [
        f"kernel benchmark: batch={batch} width={width} num_basis={num_basis} degree={degree}",
        f"{'kernel':<24} {'backend':<8} {'best (us)':>12} {'speedup':>8}",
    ]
    for row in rows:
        lines.append(
            f"{row['kernel']:<24} {row['backend']:<8} {row['seconds'] * 1e6:>12.1f} "
            f"{row['speedup_vs_python']:>8.2f}"
        )
    return "\n".join(lines)
