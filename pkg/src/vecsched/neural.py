"""Minimal dense-network core: forward pass, reverse-mode VJP, Adam, checkpoints.

Everything is float64 numpy.  A network is a list of (weights, biases) with a
per-layer activation in {relu, tanh, identity}.  ``backward`` returns the
gradients of ``sum(y * upstream)`` with respect to every parameter and to the
input, which is all the training stack needs to chain hand-written graphs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

_ACT = {
    "relu": (lambda z: np.maximum(z, 0.0), lambda z: (z > 0.0).astype(float)),
    "tanh": (np.tanh, lambda z: 1.0 - np.tanh(z) ** 2),
    "identity": (lambda z: z, lambda z: np.ones_like(z)),
}


@dataclass
class DenseNet:
    """Affine + activation stack; weights[l] has shape (fan_in, fan_out)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: tuple[str, ...]

    def __post_init__(self) -> None:
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise ValueError("one weight, bias, and activation per layer")
        for act in self.activations:
            if act not in _ACT:
                raise ValueError(f"unknown activation {act!r}")
        for l in range(len(self.weights) - 1):
            if self.weights[l].shape[1] != self.weights[l + 1].shape[0]:
                raise ValueError(f"widths of layers {l} and {l + 1} are incompatible")

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def clone(self) -> "DenseNet":
        return DenseNet([w.copy() for w in self.weights],
                        [b.copy() for b in self.biases], self.activations)


def init_dense(widths: Sequence[int], rng: np.random.Generator,
               hidden_activation: str = "relu", out_activation: str = "identity",
               out_init_scale: float = 1.0) -> DenseNet:
    """Glorot-uniform initialized net over the given widths.

    ``out_init_scale`` shrinks the final layer's init bound; value heads that
    feed recursions start near zero so early outputs stay bounded.
    """
    if len(widths) < 2:
        raise ValueError("need at least input and output widths")
    weights, biases, acts = [], [], []
    for l, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        if l == len(widths) - 2:
            bound *= out_init_scale
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
        acts.append(hidden_activation if l < len(widths) - 2 else out_activation)
    return DenseNet(weights, biases, tuple(acts))


def _as_batch(x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return x[None, :], True
    return x, False


def forward(net: DenseNet, x: np.ndarray) -> np.ndarray:
    """Evaluate the net on a (B, in) batch or a single (in,) vector."""
    h, single = _as_batch(x)
    if h.shape[1] != net.in_dim:
        raise ValueError(f"input width {h.shape[1]} != {net.in_dim}")
    for w, b, act in zip(net.weights, net.biases, net.activations):
        h = _ACT[act][0](h @ w + b)
    return h[0] if single else h


def forward_cache(net: DenseNet, x: np.ndarray) -> tuple[np.ndarray, list]:
    """Forward pass keeping (layer input, pre-activation) pairs for backprop."""
    h, single = _as_batch(x)
    if h.shape[1] != net.in_dim:
        raise ValueError(f"input width {h.shape[1]} != {net.in_dim}")
    cache = []
    for w, b, act in zip(net.weights, net.biases, net.activations):
        z = h @ w + b
        cache.append((h, z))
        h = _ACT[act][0](z)
    return (h[0] if single else h), cache


def backward(net: DenseNet, cache: list, upstream: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    """VJP of sum(y * upstream): parameter gradients plus the input gradient.

    Gradients come back flat, aligned with ``parameters(net)``:
    [dW0, db0, dW1, db1, ...].  Batched upstreams are summed over the batch.
    """
    delta, single = _as_batch(upstream)
    if delta.shape[1] != net.out_dim:
        raise ValueError(f"upstream width {delta.shape[1]} != {net.out_dim}")
    grads: list[np.ndarray] = [np.empty(0)] * (2 * len(net.weights))
    for l in range(len(net.weights) - 1, -1, -1):
        h_in, z = cache[l]
        delta = delta * _ACT[net.activations[l]][1](z)
        grads[2 * l] = h_in.T @ delta
        grads[2 * l + 1] = delta.sum(axis=0)
        delta = delta @ net.weights[l].T
    return grads, (delta[0] if single else delta)


def parameters(net: DenseNet) -> list[np.ndarray]:
    """Live views of all parameters, [W0, b0, W1, b1, ...]."""
    out: list[np.ndarray] = []
    for w, b in zip(net.weights, net.biases):
        out.extend((w, b))
    return out


def zeros_like_params(params: Sequence[np.ndarray]) -> list[np.ndarray]:
    return [np.zeros_like(p) for p in params]


def accumulate(into: list[np.ndarray], grads: Sequence[np.ndarray]) -> None:
    for a, g in zip(into, grads):
        a += g


@dataclass
class AdamState:
    """Bias-corrected Adam accumulators for one parameter list."""

    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], lr: float = 5e-4) -> "AdamState":
        return cls(lr=lr, m=zeros_like_params(params), v=zeros_like_params(params))


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray],
              state: AdamState) -> Sequence[np.ndarray]:
    """One in-place Adam update; returns ``params`` for convenience."""
    if len(params) != len(state.m):
        raise ValueError("optimizer state does not match parameter list")
    state.step += 1
    c1 = 1.0 - state.beta1 ** state.step
    c2 = 1.0 - state.beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


def soft_update_params(online: Sequence[np.ndarray], target: Sequence[np.ndarray],
                       rate: float) -> None:
    """target <- rate * online + (1 - rate) * target, elementwise."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError("rate must be in [0, 1]")
    for p, t in zip(online, target):
        t *= 1.0 - rate
        t += rate * p


def save_nets(path: str | Path, nets: dict[str, DenseNet], meta: dict | None = None,
              arrays: dict[str, np.ndarray] | None = None) -> None:
    """Checkpoint named nets (plus loose arrays, e.g. optimizer moments) to one .npz."""
    import json

    payload: dict[str, np.ndarray] = {}
    manifest: dict[str, dict] = {}
    for name, net in nets.items():
        manifest[name] = {"n_layers": len(net.weights), "activations": list(net.activations)}
        for l, (w, b) in enumerate(zip(net.weights, net.biases)):
            payload[f"{name}/w{l}"] = w
            payload[f"{name}/b{l}"] = b
    for key, value in (arrays or {}).items():
        payload[f"arr/{key}"] = np.asarray(value)
    payload["__manifest__"] = np.frombuffer(
        json.dumps({"nets": manifest, "meta": meta or {}}, sort_keys=True).encode(), dtype=np.uint8)
    np.savez(path, **payload)


def load_nets(path: str | Path) -> tuple[dict[str, DenseNet], dict[str, np.ndarray], dict]:
    """Inverse of ``save_nets``: (nets, loose arrays, meta)."""
    import json

    with np.load(path) as data:
        manifest = json.loads(bytes(data["__manifest__"]).decode())
        nets: dict[str, DenseNet] = {}
        for name, info in manifest["nets"].items():
            weights = [data[f"{name}/w{l}"] for l in range(info["n_layers"])]
            biases = [data[f"{name}/b{l}"] for l in range(info["n_layers"])]
            nets[name] = DenseNet(weights, biases, tuple(info["activations"]))
        arrays = {k[4:]: data[k] for k in data.files if k.startswith("arr/")}
    return nets, arrays, manifest["meta"]
