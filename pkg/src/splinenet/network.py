"""Layer types and network composition.

Three trainable hidden-layer families share one forward/backward
interface:

* ``LcnLayer``: affine map followed by a per-neuron learnable spline
  acting on the scalar pre-activation.
* ``MlpLayer``: affine map followed by a fixed activation.
* ``KanEdgeLayer``: per-edge learnable splines on the layer inputs plus
  a linear residual term, summed into each output neuron.

A ``Network`` is an ordered stack of hidden layers (any mix) with a
final linear output layer. Forward evaluation is pure; training mutates
parameter arrays in place and requires exclusive access.
"""

import io
import json
from dataclasses import dataclass

import numpy as np

from .backend import kernels
from .splines import make_knot_vector

CHECKPOINT_VERSION = 1

ACTIVATIONS = ("relu", "sigmoid", "tanh")


def _act(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    if name == "tanh":
        return np.tanh(z)
    raise ValueError(f"unknown activation {name!r}")


def _act_grad(name, z, h):
    # Derivative in terms of pre-activation z and cached output h.
    # relu subgradient at 0 is taken as 0.
    if name == "relu":
        return (z > 0.0).astype(np.float64)
    if name == "sigmoid":
        return h * (1.0 - h)
    if name == "tanh":
        return 1.0 - h * h
    raise ValueError(f"unknown activation {name!r}")


@dataclass
class LayerCache:
    """Per-layer forward state needed by the backward pass."""

    h_prev: np.ndarray
    h: np.ndarray
    z: np.ndarray | None = None
    z_spline: np.ndarray | None = None
    clamped: np.ndarray | None = None
    first: np.ndarray | None = None
    vals: np.ndarray | None = None


@dataclass
class ForwardTrace:
    """Everything one forward pass computed, kept for backprop."""

    x: np.ndarray
    y_hat: np.ndarray
    layers: list
    single: bool = False

    def clamp_counts(self):
        """(clamped_entries, total_spline_entries) across spline layers."""
        clamped = total = 0
        for cache in self.layers:
            if cache.clamped is not None:
                clamped += int(cache.clamped.sum())
                total += cache.clamped.size
        return clamped, total


def _check_input(layer, h_prev):
    h_prev = np.asarray(h_prev, dtype=np.float64)
    if h_prev.ndim != 2 or h_prev.shape[1] != layer.in_dim:
        raise ValueError(
            f"layer expected input (batch, {layer.in_dim}), got {h_prev.shape}"
        )
    return h_prev


def _affine(weights, bias, h_prev):
    z = h_prev @ weights.T + bias
    if not np.isfinite(z).all():
        raise FloatingPointError("non-finite pre-activation")
    return z


class LcnLayer:
    """Affine map plus a learnable spline activation per neuron.

    All neurons in the layer share one knot vector; each neuron owns its
    row of spline coefficients. Pre-activations outside the knot domain
    are clamped to the boundary before spline evaluation (their spline
    derivative is treated as zero) unless ``clamp_inputs`` is False, in
    which case they raise.
    """

    def __init__(self, weights, bias, coeffs, kv, clamp_inputs=True):
        self.weights = np.ascontiguousarray(weights, dtype=np.float64)
        self.bias = np.ascontiguousarray(bias, dtype=np.float64)
        self.coeffs = np.ascontiguousarray(coeffs, dtype=np.float64)
        self.kv = kv
        self.clamp_inputs = clamp_inputs
        m, m_prev = self.weights.shape
        if self.bias.shape != (m,):
            raise ValueError("bias shape does not match weight rows")
        if self.coeffs.shape != (m, kv.num_basis):
            raise ValueError(
                f"coeffs must be ({m}, {kv.num_basis}), got {self.coeffs.shape}"
            )

    @property
    def in_dim(self):
        return self.weights.shape[1]

    @property
    def out_dim(self):
        return self.weights.shape[0]

    def forward(self, h_prev):
        h_prev = _check_input(self, h_prev)
        z = _affine(self.weights, self.bias, h_prev)
        lo, hi = self.kv.domain_lo, self.kv.domain_hi
        clamped = (z < lo) | (z > hi)
        if clamped.any() and not self.clamp_inputs:
            raise ValueError("pre-activation outside knot domain with clamping disabled")
        z_spline = np.clip(z, lo, hi)
        h, first, vals = kernels.lcn_apply(self.kv.knots, self.kv.degree, self.coeffs, z_spline)
        return h, LayerCache(
            h_prev=h_prev, h=h, z=z, z_spline=z_spline, clamped=clamped, first=first, vals=vals
        )

    def backward(self, cache, dh):
        dspline = kernels.lcn_dh_dz(self.kv.knots, self.kv.degree, self.coeffs, cache.z_spline)
        dz = dh * dspline
        dz[cache.clamped] = 0.0
        grads = {
            "weights": dz.T @ cache.h_prev,
            "bias": dz.sum(axis=0),
            "coeffs": kernels.coeff_grad(cache.first, cache.vals, dh, self.kv.num_basis),
        }
        return dz @ self.weights, grads

    def params(self):
        return {"weights": self.weights, "bias": self.bias, "coeffs": self.coeffs}


class MlpLayer:
    """Affine map plus a fixed activation (relu, sigmoid, or tanh)."""

    def __init__(self, weights, bias, activation="relu"):
        if activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}, got {activation!r}")
        self.weights = np.ascontiguousarray(weights, dtype=np.float64)
        self.bias = np.ascontiguousarray(bias, dtype=np.float64)
        self.activation = activation
        if self.bias.shape != (self.weights.shape[0],):
            raise ValueError("bias shape does not match weight rows")

    @property
    def in_dim(self):
        return self.weights.shape[1]

    @property
    def out_dim(self):
        return self.weights.shape[0]

    def forward(self, h_prev):
        h_prev = _check_input(self, h_prev)
        z = _affine(self.weights, self.bias, h_prev)
        h = _act(self.activation, z)
        return h, LayerCache(h_prev=h_prev, h=h, z=z)

    def backward(self, cache, dh):
        dz = dh * _act_grad(self.activation, cache.z, cache.h)
        grads = {"weights": dz.T @ cache.h_prev, "bias": dz.sum(axis=0)}
        return dz @ self.weights, grads

    def params(self):
        return {"weights": self.weights, "bias": self.bias}


class KanEdgeLayer:
    """Learnable spline per edge plus a linear residual term.

    Output i sums spline_ij(x_j) + base_weights[i, j] * x_j over inputs
    j. Spline inputs are clamped into the shared knot domain; the linear
    residual always sees the raw input.
    """

    def __init__(self, coeffs, base_weights, kv, clamp_inputs=True):
        self.coeffs = np.ascontiguousarray(coeffs, dtype=np.float64)
        self.base_weights = np.ascontiguousarray(base_weights, dtype=np.float64)
        self.kv = kv
        self.clamp_inputs = clamp_inputs
        if self.coeffs.ndim != 3 or self.coeffs.shape[2] != kv.num_basis:
            raise ValueError(
                f"coeffs must be (out, in, {kv.num_basis}), got {self.coeffs.shape}"
            )
        if self.base_weights.shape != self.coeffs.shape[:2]:
            raise ValueError("base_weights shape does not match coefficient tensor")

    @property
    def in_dim(self):
        return self.coeffs.shape[1]

    @property
    def out_dim(self):
        return self.coeffs.shape[0]

    def forward(self, h_prev):
        h_prev = _check_input(self, h_prev)
        if not np.isfinite(h_prev).all():
            raise FloatingPointError("non-finite layer input")
        lo, hi = self.kv.domain_lo, self.kv.domain_hi
        clamped = (h_prev < lo) | (h_prev > hi)
        if clamped.any() and not self.clamp_inputs:
            raise ValueError("input outside knot domain with clamping disabled")
        x_spline = np.clip(h_prev, lo, hi)
        h, first, vals = kernels.kan_apply(
            self.kv.knots, self.kv.degree, self.coeffs, self.base_weights, x_spline, h_prev
        )
        return h, LayerCache(
            h_prev=h_prev, h=h, z_spline=x_spline, clamped=clamped, first=first, vals=vals
        )

    def backward(self, cache, dh):
        live = 1.0 - cache.clamped.astype(np.float64)
        dx, dcoeffs, dbase = kernels.kan_backward(
            self.kv.knots,
            self.kv.degree,
            self.coeffs,
            self.base_weights,
            cache.z_spline,
            cache.h_prev,
            cache.first,
            cache.vals,
            live,
            dh,
        )
        return dx, {"coeffs": dcoeffs, "base_weights": dbase}

    def params(self):
        return {"coeffs": self.coeffs, "base_weights": self.base_weights}


class Network:
    """Hidden-layer stack plus the final linear output layer."""

    def __init__(self, layers, out_weights, out_bias):
        self.layers = list(layers)
        self.out_weights = np.ascontiguousarray(out_weights, dtype=np.float64)
        self.out_bias = np.ascontiguousarray(out_bias, dtype=np.float64)
        if self.out_bias.shape != (self.out_weights.shape[0],):
            raise ValueError("output bias shape does not match output weights")
        dims = [layer.in_dim for layer in self.layers] + [self.out_weights.shape[1]]
        outs = [layer.out_dim for layer in self.layers]
        for i, (o, nxt) in enumerate(zip(outs, dims[1:])):
            if o != nxt:
                raise ValueError(f"layer {i} outputs {o} but next layer expects {nxt}")

    @property
    def input_dim(self):
        return self.layers[0].in_dim if self.layers else self.out_weights.shape[1]

    @property
    def output_dim(self):
        return self.out_weights.shape[0]

    def forward(self, x):
        """Run the network on x ((input_dim,) or (batch, input_dim)).

        Returns a ForwardTrace; recomputing on the same input reproduces
        the trace exactly.
        """
        xa = np.asarray(x, dtype=np.float64)
        single = xa.ndim == 1
        if single:
            xa = xa[None, :]
        if xa.ndim != 2 or xa.shape[1] != self.input_dim:
            raise ValueError(f"expected input with {self.input_dim} features, got {xa.shape}")
        if not np.isfinite(xa).all():
            raise ValueError("input contains NaN or infinity")
        caches = []
        h = xa
        for layer in self.layers:
            h, cache = layer.forward(h)
            caches.append(cache)
        y_hat = h @ self.out_weights.T + self.out_bias
        return ForwardTrace(x=xa, y_hat=y_hat, layers=caches, single=single)

    def predict(self, x):
        """Network output, squeezed to (output_dim,) for a single sample."""
        trace = self.forward(x)
        return trace.y_hat[0] if trace.single else trace.y_hat

    def parameters(self):
        """All trainable arrays as (name, array) pairs in a fixed order."""
        out = []
        for i, layer in enumerate(self.layers):
            for key, arr in layer.params().items():
                out.append((f"layer{i}.{key}", arr))
        out.append(("output.weights", self.out_weights))
        out.append(("output.bias", self.out_bias))
        return out

    def num_params(self):
        return sum(arr.size for _, arr in self.parameters())


@dataclass(frozen=True)
class Architecture:
    """Description of a homogeneous network, buildable via init_network."""

    family: str
    input_dim: int
    output_dim: int
    hidden: tuple = ()
    num_basis: int = 8
    degree: int = 3
    domain: tuple = (-1.0, 1.0)
    activation: str = "relu"

    def __post_init__(self):
        if self.family not in ("lcn", "mlp", "kan"):
            raise ValueError(f"unknown family {self.family!r}")
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("input_dim and output_dim must be positive")
        if any(w < 1 for w in self.hidden):
            raise ValueError("hidden widths must be positive")
        object.__setattr__(self, "hidden", tuple(int(w) for w in self.hidden))


COEFF_INIT_SCALE = 0.1


def init_network(arch, seed):
    """Build a network with freshly initialized parameters.

    Affine weights and biases are uniform in +-1/sqrt(fan_in); spline
    coefficients are uniform in +-0.1 so early activations stay in the
    well-conditioned interior of the grid. Deterministic given the seed.
    """
    rng = np.random.default_rng(seed)
    kv = None
    if arch.family in ("lcn", "kan"):
        kv = make_knot_vector(arch.domain[0], arch.domain[1], arch.num_basis, arch.degree)
    layers = []
    fan_in = arch.input_dim
    for width in arch.hidden:
        bound = 1.0 / np.sqrt(fan_in)
        if arch.family == "lcn":
            w = rng.uniform(-bound, bound, (width, fan_in))
            b = rng.uniform(-bound, bound, width)
            c = rng.uniform(-COEFF_INIT_SCALE, COEFF_INIT_SCALE, (width, kv.num_basis))
            layers.append(LcnLayer(w, b, c, kv))
        elif arch.family == "mlp":
            w = rng.uniform(-bound, bound, (width, fan_in))
            b = rng.uniform(-bound, bound, width)
            layers.append(MlpLayer(w, b, arch.activation))
        else:
            c = rng.uniform(-COEFF_INIT_SCALE, COEFF_INIT_SCALE, (width, fan_in, kv.num_basis))
            bw = rng.uniform(-bound, bound, (width, fan_in))
            layers.append(KanEdgeLayer(c, bw, kv))
        fan_in = width
    bound = 1.0 / np.sqrt(fan_in)
    out_w = rng.uniform(-bound, bound, (arch.output_dim, fan_in))
    out_b = rng.uniform(-bound, bound, arch.output_dim)
    return Network(layers, out_w, out_b)


def _layer_meta(layer):
    if isinstance(layer, LcnLayer):
        return {
            "kind": "lcn",
            "num_basis": layer.kv.num_basis,
            "degree": layer.kv.degree,
            "domain": [layer.kv.domain_lo, layer.kv.domain_hi],
            "clamp_inputs": layer.clamp_inputs,
        }
    if isinstance(layer, MlpLayer):
        return {"kind": "mlp", "activation": layer.activation}
    if isinstance(layer, KanEdgeLayer):
        return {
            "kind": "kan",
            "num_basis": layer.kv.num_basis,
            "degree": layer.kv.degree,
            "domain": [layer.kv.domain_lo, layer.kv.domain_hi],
            "clamp_inputs": layer.clamp_inputs,
        }
    raise TypeError(f"cannot serialize layer of type {type(layer).__name__}")


def save_network(net, path):
    """Serialize a network to an .npz checkpoint; round-trips bit-exactly."""
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "layers": [_layer_meta(layer) for layer in net.layers],
    }
    arrays = {name.replace(".", "__"): arr for name, arr in net.parameters()}
    buf = io.BytesIO()
    np.savez(buf, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_network(path):
    """Load a checkpoint written by save_network."""
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('format_version')}")
        layers = []
        for i, lm in enumerate(meta["layers"]):
            prefix = f"layer{i}__"
            if lm["kind"] == "lcn":
                kv = make_knot_vector(lm["domain"][0], lm["domain"][1], lm["num_basis"], lm["degree"])
                layers.append(
                    LcnLayer(
                        data[prefix + "weights"],
                        data[prefix + "bias"],
                        data[prefix + "coeffs"],
                        kv,
                        clamp_inputs=lm["clamp_inputs"],
                    )
                )
            elif lm["kind"] == "mlp":
                layers.append(
                    MlpLayer(data[prefix + "weights"], data[prefix + "bias"], lm["activation"])
                )
            elif lm["kind"] == "kan":
                kv = make_knot_vector(lm["domain"][0], lm["domain"][1], lm["num_basis"], lm["degree"])
                layers.append(
                    KanEdgeLayer(
                        data[prefix + "coeffs"],
                        data[prefix + "base_weights"],
                        kv,
                        clamp_inputs=lm["clamp_inputs"],
                    )
                )
            else:
                raise ValueError(f"unknown layer kind {lm['kind']!r} in checkpoint")
        return Network(layers, data["output__weights"], data["output__bias"])
