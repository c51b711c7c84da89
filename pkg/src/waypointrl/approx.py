"""Minimal dense feedforward networks with hand-rolled reverse-mode gradients.

Hidden layers use rectified-linear activations (derivative defined as 0 at 0);
the final layer is linear, with any output map (logistic, tanh squashing)
applied by the caller. All arithmetic defaults to float64 so results are
bit-reproducible and comparable against the exact oracle; float32 is available
via the dtype argument.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError

CHECKPOINT_FORMAT_VERSION = 1


@dataclass
class Network:
    layer_sizes: tuple
    weights: list  # weights[i]: (fan_in, fan_out)
    biases: list  # biases[i]: (fan_out,)

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def params(self) -> list:
        """Flat parameter list [W0, b0, W1, b1, ...]."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def set_params(self, params: list):
        n = len(self.weights)
        if len(params) != 2 * n:
            raise ShapeError(f"expected {2 * n} parameter arrays, got {len(params)}")
        for i in range(n):
            if params[2 * i].shape != self.weights[i].shape:
                raise ShapeError(f"weight {i} shape mismatch")
            if params[2 * i + 1].shape != self.biases[i].shape:
                raise ShapeError(f"bias {i} shape mismatch")
            self.weights[i] = params[2 * i]
            self.biases[i] = params[2 * i + 1]

    def copy(self) -> "Network":
        return Network(
            self.layer_sizes,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )


def init_network(
    layer_sizes,
    rng: np.random.Generator,
    dtype=np.float64,
    final_scale: float = 1.0,
) -> Network:
    """Glorot-uniform weights, zero biases.

    final_scale rescales the last layer's weights; small values give a
    near-constant initial output, which keeps fresh classifiers close to
    uniform odds.
    """
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise ShapeError(f"invalid layer sizes {sizes}")
    weights, biases = [], []
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        limit = np.sqrt(6.0 / (n_in + n_out))
        w = rng.uniform(-limit, limit, size=(n_in, n_out)).astype(dtype)
        if i == len(sizes) - 2:
            w *= final_scale
        weights.append(w)
        biases.append(np.zeros(n_out, dtype=dtype))
    return Network(sizes, weights, biases)


def forward(net: Network, x: np.ndarray) -> np.ndarray:
    """Batched forward pass; rows are independent samples."""
    y, _ = forward_cached(net, x)
    return y


def forward_cached(net: Network, x: np.ndarray):
    """Forward pass returning (output, cache) for a later backward call."""
    x = np.atleast_2d(np.asarray(x))
    if x.shape[1] != net.in_dim:
        raise ShapeError(f"input width {x.shape[1]} != expected {net.in_dim}")
    activations = [x]
    h = x
    n_layers = len(net.weights)
    for i in range(n_layers):
        z = h @ net.weights[i] + net.biases[i]
        if i < n_layers - 1:
            z = np.maximum(z, 0.0)
        activations.append(z)
        h = z
    return h, activations


def backward(net: Network, cache, grad_out: np.ndarray):
    """Backpropagate grad_out (dLoss/doutput) through the cached forward pass.

    Returns (param_grads, grad_input) with param_grads laid out like
    Network.params.
    """
    activations = cache
    n_layers = len(net.weights)
    g = np.atleast_2d(np.asarray(grad_out))
    param_grads = [None] * (2 * n_layers)
    for i in range(n_layers - 1, -1, -1):
        a_in = activations[i]
        if i < n_layers - 1:
            # Rectifier mask on this layer's output (stored post-activation).
            g = g * (activations[i + 1] > 0)
        param_grads[2 * i] = a_in.T @ g
        param_grads[2 * i + 1] = g.sum(axis=0)
        g = g @ net.weights[i].T
    return param_grads, g


def grad(net: Network, loss_fn, x: np.ndarray):
    """Gradients of a scalar loss of the network output over a batch.

    loss_fn maps the batched output to (loss_value, dLoss/doutput).
    Returns (loss, param_grads, input_grad).
    """
    y, cache = forward_cached(net, x)
    loss, gy = loss_fn(y)
    param_grads, gx = backward(net, cache, gy)
    return loss, param_grads, gx


def zeros_like_params(params) -> list:
    return [np.zeros_like(p) for p in params]


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def for_params(cls, params) -> "AdamState":
        return cls(zeros_like_params(params), zeros_like_params(params), 0)


def adam_step(
    params,
    grads,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
):
    """One bias-corrected Adam update; returns (new_params, new_state)."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError("parameter/gradient/state length mismatch")
    t = state.t + 1
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ShapeError("gradient shape mismatch")
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        step_size = lr * (m / c1) / (np.sqrt(v / c2) + eps)
        new_params.append(p - step_size)
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamState(new_m, new_v, t)


def _probe_loss(y: np.ndarray):
    # Mixes a linear and a quadratic term so every output influences the loss
    # nonlinearly.
    c = np.arange(1, y.shape[1] + 1, dtype=y.dtype)
    loss = float((y * c).sum() + 0.5 * (y**2).sum())
    return loss, c[None, :] + y


def gradient_check(net: Network, x: np.ndarray, loss_fn=None, h: float = 1e-5) -> float:
    """Max relative error of backprop gradients vs central finite differences."""
    if loss_fn is None:
        loss_fn = _probe_loss
    _, analytic, _ = grad(net, loss_fn, x)
    params = net.params
    worst = 0.0
    for k, p in enumerate(params):
        flat = p.ravel()
        g_an = analytic[k].ravel()
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            lp, _ = loss_fn(forward(net, x))
            flat[j] = orig - h
            lm, _ = loss_fn(forward(net, x))
            flat[j] = orig
            g_fd = (lp - lm) / (2.0 * h)
            scale = max(abs(g_an[j]), abs(g_fd), 1e-6)
            worst = max(worst, abs(g_an[j] - g_fd) / scale)
    return worst


def save_checkpoint(path, nets: dict, extra: dict | None = None):
    """Write named networks to a single .npz file (format v1, bit-exact)."""
    payload = {"__format_version__": np.array(CHECKPOINT_FORMAT_VERSION)}
    for name, net in nets.items():
        payload[f"{name}/layer_sizes"] = np.array(net.layer_sizes, dtype=np.int64)
        for i, (w, b) in enumerate(zip(net.weights, net.biases)):
            payload[f"{name}/W{i}"] = w
            payload[f"{name}/b{i}"] = b
    for key, value in (extra or {}).items():
        payload[f"extra/{key}"] = np.asarray(value)
    np.savez(path, **payload)


def load_checkpoint(path):
    """Read a checkpoint written by save_checkpoint; returns (nets, extra)."""
    data = np.load(path)
    version = int(data["__format_version__"])
    if version != CHECKPOINT_FORMAT_VERSION:
        raise ShapeError(f"unsupported checkpoint format version {version}")
    names = sorted(
        {k.split("/")[0] for k in data.files if "/" in k and not k.startswith("extra/")}
    )
    nets = {}
    for name in names:
        sizes = tuple(int(s) for s in data[f"{name}/layer_sizes"])
        weights = [data[f"{name}/W{i}"] for i in range(len(sizes) - 1)]
        biases = [data[f"{name}/b{i}"] for i in range(len(sizes) - 1)]
        nets[name] = Network(sizes, weights, biases)
    extra = {
        k[len("extra/") :]: data[k] for k in data.files if k.startswith("extra/")
    }
    return nets, extra
