"""Reverse-mode gradients for all layer types, and a finite-difference
oracle to validate them.

The backward pass is the standard layer-composed chain rule; per-sample
spline-coefficient gradients touch only the degree+1 basis functions
active at each pre-activation, so they are sparse by construction.
"""

from dataclasses import dataclass

import numpy as np

from .backend import kernels


@dataclass
class GradientTape:
    """Per-parameter gradients mirroring a network's parameter layout."""

    layer_grads: list
    out_weights: np.ndarray
    out_bias: np.ndarray
    dx: np.ndarray | None = None

    def named(self):
        """(name, array) pairs in the same order as Network.parameters()."""
        out = []
        for i, grads in enumerate(self.layer_grads):
            for key, arr in grads.items():
                out.append((f"layer{i}.{key}", arr))
        out.append(("output.weights", self.out_weights))
        out.append(("output.bias", self.out_bias))
        return out

    def num_entries(self):
        return sum(arr.size for _, arr in self.named())

    def check_finite(self):
        for name, arr in self.named():
            if not np.isfinite(arr).all():
                raise FloatingPointError(f"non-finite gradient in {name}")


def loss_grad_mse(y_hat, y, m):
    """(2/m) * (y_hat - y); m is the mini-batch size."""
    y_hat = np.asarray(y_hat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y_hat.shape != y.shape:
        raise ValueError(f"shape mismatch: {y_hat.shape} vs {y.shape}")
    if m < 1:
        raise ValueError("batch size m must be >= 1")
    return (2.0 / m) * (y_hat - y)


def spline_activation_grad(layer, z, clamped=None):
    """Per-neuron derivative of the spline activation at pre-activation z.

    z is (batch, neurons) already clamped into the knot domain; entries
    flagged in ``clamped`` get an exact zero derivative.
    """
    z = np.ascontiguousarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] != layer.out_dim:
        raise ValueError(f"expected z with shape (batch, {layer.out_dim}), got {z.shape}")
    d = kernels.lcn_dh_dz(layer.kv.knots, layer.kv.degree, layer.coeffs, z)
    if clamped is not None:
        d = np.where(clamped, 0.0, d)
    return d


def backward(net, trace, d_yhat):
    """Gradients of a scalar loss for every parameter and the input.

    ``trace`` must come from ``net.forward`` on the same network, and
    ``d_yhat`` is the loss gradient at the trace's output (same shape).
    """
    d_yhat = np.asarray(d_yhat, dtype=np.float64)
    if trace.single and d_yhat.ndim == 1:
        d_yhat = d_yhat[None, :]
    if d_yhat.shape != trace.y_hat.shape:
        raise ValueError(f"d_yhat shape {d_yhat.shape} != output shape {trace.y_hat.shape}")
    if len(trace.layers) != len(net.layers):
        raise ValueError("trace does not match network depth")

    h_last = trace.layers[-1].h if net.layers else trace.x
    d_out_w = d_yhat.T @ h_last
    d_out_b = d_yhat.sum(axis=0)
    dh = d_yhat @ net.out_weights

    layer_grads = [None] * len(net.layers)
    for i in range(len(net.layers) - 1, -1, -1):
        dh, grads = net.layers[i].backward(trace.layers[i], dh)
        layer_grads[i] = grads

    dx = dh[0] if trace.single else dh
    return GradientTape(layer_grads=layer_grads, out_weights=d_out_w, out_bias=d_out_b, dx=dx)


def finite_diff_gradient(net, x, y, loss, h=1e-6):
    """Central-difference gradient of ``loss(net, x, y)`` for every
    parameter and every input coordinate.

    ``loss`` is any callable returning a finite scalar. Costs two forward
    passes per parameter; meant for validation at small sizes.
    """
    if not 1e-8 <= h <= 1e-3:
        raise ValueError(f"step h={h} outside [1e-8, 1e-3]")

    def probe():
        value = float(loss(net, x, y))
        if not np.isfinite(value):
            raise FloatingPointError("loss is not finite")
        return value

    probe()
    layer_grads = []
    for layer in net.layers:
        grads = {}
        for key, arr in layer.params().items():
            grads[key] = _central_diff(arr, probe, h)
        layer_grads.append(grads)
    d_out_w = _central_diff(net.out_weights, probe, h)
    d_out_b = _central_diff(net.out_bias, probe, h)

    x = np.asarray(x, dtype=np.float64)
    x_work = x.copy()

    def probe_x():
        return float(loss(net, x_work, y))

    dx = _central_diff(x_work, probe_x, h)
    return GradientTape(layer_grads=layer_grads, out_weights=d_out_w, out_bias=d_out_b, dx=dx)


def _central_diff(arr, probe, h):
    grad = np.empty_like(arr)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        f_plus = probe()
        flat[i] = orig - h
        f_minus = probe()
        flat[i] = orig
        gflat[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def max_relative_error(tape_a, tape_b, floor=1e-8, include_dx=False):
    """max over parameter gradients of |a - b| / (|b| + floor).

    With ``include_dx`` the input gradient is compared too, normalized by
    its overall scale rather than entrywise: individual dx entries can
    cancel to arbitrarily small magnitudes, where an entrywise relative
    error is unbounded for any finite-difference step.
    """
    worst = 0.0
    pairs = list(zip(tape_a.named(), tape_b.named()))
    for (name_a, a), (name_b, b) in pairs:
        if name_a != name_b:
            raise ValueError(f"tape mismatch: {name_a} vs {name_b}")
        rel = np.abs(a - b) / (np.abs(b) + floor)
        worst = max(worst, float(rel.max()))
    if include_dx and tape_a.dx is not None and tape_b.dx is not None:
        scale = float(np.abs(tape_b.dx).max()) + floor
        worst = max(worst, float(np.abs(tape_a.dx - tape_b.dx).max()) / scale)
    return worst
