"""Small differentiable networks for the actor and critic.

Both networks share one trunk: three parallel 1-D convolutions (kernel sizes
3, 5, 7; three output channels each; zero "same" padding) over the input
vector, ReLU, flatten, then dense layers 64-128-128-64-32 with ReLU. The actor
ends in a 3-unit logistic head, the critic in a single linear unit.

Everything runs in float64 on batches of shape ``(m, width)``.
"""
import json
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

CONV_KERNELS = (3, 5, 7)
CONV_CHANNELS = 3
HIDDEN = (64, 128, 128, 64, 32)
ARCHITECTURES = {
    "actor": {"input": 9, "output": 3, "head": "logistic"},
    "critic": {"input": 10, "output": 1, "head": "linear"},
}


class StaleCacheError(RuntimeError):
    """Backward called with a cache produced before the parameters changed."""


class TrainingDivergedError(FloatingPointError):
    """A NaN or infinite value reached the parameters or their gradients."""


@dataclass
class Layer:
    kind: str
    weight: np.ndarray
    bias: np.ndarray


@dataclass
class NetworkParams:
    architecture: str
    layers: list
    version: int = field(default=0, compare=False)

    @property
    def input_width(self):
        return ARCHITECTURES[self.architecture]["input"]

    @property
    def output_width(self):
        return ARCHITECTURES[self.architecture]["output"]

    def copy(self):
        return NetworkParams(
            self.architecture,
            [Layer(l.kind, l.weight.copy(), l.bias.copy()) for l in self.layers],
        )

    def arrays(self):
        """Flat list [w0, b0, w1, b1, ...] of the parameter arrays (views)."""
        out = []
        for layer in self.layers:
            out.extend((layer.weight, layer.bias))
        return out

    def touch(self):
        self.version += 1


@dataclass
class GradientBundle:
    layers: list
    input: np.ndarray

    def arrays(self):
        out = []
        for dw, db in self.layers:
            out.extend((dw, db))
        return out


def layer_shapes(architecture):
    spec = ARCHITECTURES[architecture]
    width = spec["input"]
    shapes = [("conv1d", (CONV_CHANNELS, k)) for k in CONV_KERNELS]
    fan_in = CONV_CHANNELS * len(CONV_KERNELS) * width
    for h in HIDDEN:
        shapes.append(("dense", (h, fan_in)))
        fan_in = h
    shapes.append(("dense", (spec["output"], fan_in)))
    return shapes


def init_network(architecture, rng):
    """Uniform fan-in initialisation, U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    if architecture not in ARCHITECTURES:
        raise ValueError(f"unknown architecture {architecture!r}")
    layers = []
    for kind, shape in layer_shapes(architecture):
        bound = 1.0 / np.sqrt(shape[1])
        w = rng.uniform(-bound, bound, size=shape)
        b = rng.uniform(-bound, bound, size=shape[0])
        layers.append(Layer(kind, w, b))
    return NetworkParams(architecture, layers)


def zero_network(architecture):
    layers = [Layer(kind, np.zeros(shape), np.zeros(shape[0]))
              for kind, shape in layer_shapes(architecture)]
    return NetworkParams(architecture, layers)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def forward(net, x, head_noise=None):
    """Run the network; returns ``(output, cache)``.

    ``x`` may be a single vector or a batch. ``head_noise`` is added to the
    head's pre-activation (used for exploration on the actor).
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != net.input_width:
        raise ValueError(f"{net.architecture} expects input width {net.input_width}, got {x.shape[1]}")
    m, width = x.shape
    n_conv = len(CONV_KERNELS)

    windows, conv_out = [], []
    for layer in net.layers[:n_conv]:
        k = layer.weight.shape[1]
        pad = (k - 1) // 2
        xp = np.pad(x, ((0, 0), (pad, pad)))
        win = sliding_window_view(xp, k, axis=1)              # (m, width, k)
        out = win @ layer.weight.T + layer.bias                # (m, width, C)
        windows.append(win)
        conv_out.append(np.transpose(out, (0, 2, 1)))          # (m, C, width)
    pre = np.concatenate(conv_out, axis=1).reshape(m, -1)
    act = np.maximum(pre, 0.0)

    dense_in, dense_pre = [], [pre]
    dense_layers = net.layers[n_conv:]
    for i, layer in enumerate(dense_layers):
        dense_in.append(act)
        z = act @ layer.weight.T + layer.bias
        if i < len(dense_layers) - 1:
            dense_pre.append(z)
            act = np.maximum(z, 0.0)
        else:
            if head_noise is not None:
                z = z + np.asarray(head_noise, dtype=np.float64)
            head_pre = z
    if ARCHITECTURES[net.architecture]["head"] == "logistic":
        y = _sigmoid(head_pre)
    else:
        y = head_pre
    cache = {
        "version": net.version,
        "x": x,
        "windows": windows,
        "pre": dense_pre,
        "dense_in": dense_in,
        "y": y,
        "single": single,
    }
    return (y[0] if single else y), cache


def backward(net, cache, upstream):
    """Exact gradients of ``sum(upstream * output)`` w.r.t. parameters and input."""
    if cache["version"] != net.version:
        raise StaleCacheError("parameters changed since the forward pass")
    y = cache["y"]
    g = np.asarray(upstream, dtype=np.float64).reshape(y.shape)
    if ARCHITECTURES[net.architecture]["head"] == "logistic":
        g = g * y * (1.0 - y)
    n_conv = len(CONV_KERNELS)
    dense_layers = net.layers[n_conv:]
    grads = [None] * len(net.layers)
    for i in range(len(dense_layers) - 1, -1, -1):
        layer = dense_layers[i]
        a_in = cache["dense_in"][i]
        grads[n_conv + i] = (g.T @ a_in, g.sum(axis=0))
        g = g @ layer.weight
        g = g * (cache["pre"][i] > 0)

    x = cache["x"]
    m, width = x.shape
    g = g.reshape(m, CONV_CHANNELS * n_conv, width)
    dx = np.zeros_like(x)
    for b, layer in enumerate(net.layers[:n_conv]):
        gb = np.transpose(g[:, b * CONV_CHANNELS:(b + 1) * CONV_CHANNELS, :], (0, 2, 1))
        win = cache["windows"][b]
        grads[b] = (np.einsum("mlc,mlk->ck", gb, win), gb.sum(axis=(0, 1)))
        k = layer.weight.shape[1]
        pad = (k - 1) // 2
        dwin = gb @ layer.weight                                # (m, width, k)
        dxp = np.zeros((m, width + 2 * pad))
        for j in range(k):
            dxp[:, j:j + width] += dwin[:, :, j]
        dx += dxp[:, pad:pad + width]
    return GradientBundle(grads, dx[0] if cache["single"] else dx)


@dataclass
class OptimizerState:
    """Adaptive-moment (Adam) state for one network."""

    m: list
    v: list
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0

    @classmethod
    def for_network(cls, net, lr=1e-3, **kwargs):
        arrays = net.arrays()
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays],
                   lr=lr, **kwargs)


def optimizer_step(state, net, grads):
    """One Adam step applied in place to ``net``; returns ``net``."""
    params = net.arrays()
    gs = grads.arrays()
    if len(params) != len(gs) or len(params) != len(state.m):
        raise ValueError("gradient bundle does not match the network")
    for p, g in zip(params, gs):
        if p.shape != g.shape:
            raise ValueError("gradient shape mismatch")
        if not np.all(np.isfinite(g)):
            raise TrainingDivergedError("non-finite gradient")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, gs, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    net.touch()
    return net


def soft_update(target, online, tau):
    """Polyak averaging: target <- tau * online + (1 - tau) * target."""
    if target.architecture != online.architecture:
        raise ValueError("architecture mismatch")
    for t, o in zip(target.arrays(), online.arrays()):
        if t.shape != o.shape:
            raise ValueError("architecture mismatch")
        if tau == 1.0:
            t[...] = o
        else:
            t *= (1.0 - tau)
            t += tau * o
    target.touch()
    return target


def network_to_dict(net, fuzzy_params=None, consequents=None):
    return {
        "architecture": net.architecture,
        "layers": [
            {
                "kind": layer.kind,
                "shape": list(layer.weight.shape),
                "weights": layer.weight.reshape(-1).tolist(),
                "bias": layer.bias.tolist(),
            }
            for layer in net.layers
        ],
        "fuzzy_params": None if fuzzy_params is None else fuzzy_params.to_dict(),
        "consequents": None if consequents is None else consequents.to_dict(),
    }


def network_from_dict(doc):
    """Inverse of :func:`network_to_dict`; returns ``(net, fuzzy_params, consequents)``."""
    from .fuzzy import MembershipParams, RuleConsequents

    arch = doc["architecture"]
    expected = layer_shapes(arch)
    if len(doc["layers"]) != len(expected):
        raise ValueError("layer count does not match the architecture")
    layers = []
    for entry, (kind, shape) in zip(doc["layers"], expected):
        if entry["kind"] != kind or tuple(entry["shape"]) != shape:
            raise ValueError(f"layer {entry['kind']}{entry['shape']} does not match {kind}{shape}")
        w = np.array(entry["weights"], dtype=np.float64).reshape(shape)
        b = np.array(entry["bias"], dtype=np.float64)
        layers.append(Layer(kind, w, b))
    fp = doc.get("fuzzy_params")
    cons = doc.get("consequents")
    return (NetworkParams(arch, layers),
            None if fp is None else MembershipParams.from_dict(fp),
            None if cons is None else RuleConsequents.from_dict(cons))


def save_network(path, net, fuzzy_params=None, consequents=None):
    with open(path, "w") as fh:
        json.dump(network_to_dict(net, fuzzy_params, consequents), fh)


def load_network(path):
    with open(path) as fh:
        return network_from_dict(json.load(fh))
