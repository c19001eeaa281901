"""Small float64 MLPs with exact gradients, Adam, and policy heads."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

MAGIC = b"SRIS"
FORMAT_VERSION = 1


class Mlp:
    """Fully connected network: tanh on hidden layers, identity output.

    Parameters are stored as ``[W1, b1, W2, b2, ...]`` with ``W`` of shape
    (fan_in, fan_out) so that a batch ``x`` maps to ``x @ W + b``.
    """

    def __init__(self, layer_dims: Sequence[int], rng: np.random.Generator | None = None,
                 out_scale: float = 1.0):
        if len(layer_dims) < 2:
            raise ValueError("need at least input and output dims")
        self.layer_dims = tuple(int(d) for d in layer_dims)
        self.params: list[np.ndarray] = []
        rng = rng if rng is not None else np.random.default_rng(0)
        n_layers = len(self.layer_dims) - 1
        for i, (fan_in, fan_out) in enumerate(zip(self.layer_dims[:-1], self.layer_dims[1:])):
            bound = math.sqrt(6.0 / fan_in) * (out_scale if i == n_layers - 1 else 1.0)
            self.params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)) / math.sqrt(2.0))
            self.params.append(np.zeros(fan_out))

    @property
    def num_layers(self) -> int:
        return len(self.layer_dims) - 1

    def copy(self) -> "Mlp":
        other = Mlp.__new__(Mlp)
        other.layer_dims = self.layer_dims
        other.params = [p.copy() for p in self.params]
        return other

    def forward_cache(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.layer_dims[0]:
            raise ValueError(f"input dim {x.shape[-1]} != {self.layer_dims[0]}")
        acts = [x]
        h = x
        for i in range(self.num_layers):
            z = h @ self.params[2 * i] + self.params[2 * i + 1]
            h = np.tanh(z) if i < self.num_layers - 1 else z
            acts.append(h)
        return h, acts

    def forward(self, x) -> np.ndarray:
        return self.forward_cache(x)[0]

    __call__ = forward

    def backward(self, acts, upstream) -> list[np.ndarray]:
        """Gradients of ``sum(upstream * output)`` for the cached forward pass."""
        grads: list[np.ndarray] = [None] * len(self.params)
        delta = np.asarray(upstream, dtype=float)
        for i in reversed(range(self.num_layers)):
            h_in = acts[i]
            if delta.ndim == 1:
                grads[2 * i] = np.outer(h_in, delta)
                grads[2 * i + 1] = delta.copy()
            else:
                grads[2 * i] = h_in.T @ delta
                grads[2 * i + 1] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.params[2 * i].T) * (1.0 - acts[i] ** 2)
        return grads


@dataclass
class AdamState:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(state: AdamState, params: list[np.ndarray], grads: list[np.ndarray]) -> list[np.ndarray]:
    """One bias-corrected Adam descent step, applied to ``params`` in place."""
    if any(not np.all(np.isfinite(g)) for g in grads):
        raise FloatingPointError("non-finite gradient; Adam step refused")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError("gradient shape mismatch")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


# -- policy heads -----------------------------------------------------------

def masked_log_softmax(logits, mask=None) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    if mask is not None:
        z = np.where(mask, z, -np.inf)
    zmax = np.max(z, axis=-1, keepdims=True)
    shifted = z - zmax
    lse = np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))
    return shifted - lse


@dataclass
class CategoricalHead:
    """Categorical distribution over the last axis of the network output."""

    kind: str = "categorical"

    def log_probs(self, logits, mask=None):
        return masked_log_softmax(logits, mask)

    def sample(self, logits, rng, mask=None):
        logp = self.log_probs(logits, mask)
        cdf = np.cumsum(np.exp(logp), axis=-1)
        u = rng.random(cdf.shape[:-1] + (1,))
        a = np.minimum((cdf < u * cdf[..., -1:]).sum(axis=-1), cdf.shape[-1] - 1)
        if mask is not None:
            # never land on an illegal index through round-off
            m = np.asarray(mask, bool)
            bad = ~np.take_along_axis(m, a[..., None], axis=-1)[..., 0]
            if np.any(bad):
                a = np.where(bad, np.argmax(np.where(m, logp, -np.inf), axis=-1), a)
        return a, np.take_along_axis(logp, a[..., None], axis=-1)[..., 0]

    def logprob_and_grad(self, logits, actions, mask=None):
        """Log-prob of ``actions`` and its gradient w.r.t. the logits."""
        logp = self.log_probs(logits, mask)
        p = np.exp(logp)
        onehot = np.zeros_like(p)
        np.put_along_axis(onehot, np.asarray(actions)[..., None], 1.0, axis=-1)
        lp = np.take_along_axis(logp, np.asarray(actions)[..., None], axis=-1)[..., 0]
        return lp, onehot - p

    def entropy_and_grad(self, logits, mask=None):
        logp = self.log_probs(logits, mask)
        p = np.exp(logp)
        safe_logp = np.where(p > 0, logp, 0.0)
        ent = -(p * safe_logp).sum(axis=-1)
        grad = -p * (safe_logp + ent[..., None])
        return ent, grad

    def mode(self, logits, mask=None):
        return np.argmax(self.log_probs(logits, mask), axis=-1)


@dataclass
class GaussianHead:
    """Diagonal Gaussian with a state-independent learnable log-std.

    ``low``/``high`` bound the executed action: ``wrap=True`` folds it
    modulo the box width (periodic actions such as phases), otherwise it is
    clamped. Log-probabilities always use the pre-bound sample.
    """

    dim: int
    log_std: np.ndarray = None
    low: float | None = None
    high: float | None = None
    wrap: bool = False
    kind: str = "gaussian"

    def __post_init__(self):
        if self.log_std is None:
            self.log_std = np.zeros(self.dim)
        self.log_std = np.asarray(self.log_std, dtype=float)

    def bound(self, a):
        if self.low is None or self.high is None:
            return a
        if self.wrap:
            return self.low + np.mod(a - self.low, self.high - self.low)
        return np.clip(a, self.low, self.high)

    def sample(self, mean, rng):
        mean = np.asarray(mean, dtype=float)
        noise = rng.standard_normal(mean.shape)
        raw = mean + np.exp(self.log_std) * noise
        return raw, self.logprob(mean, raw)

    def logprob(self, mean, raw):
        z = (np.asarray(raw) - mean) * np.exp(-self.log_std)
        return np.sum(-0.5 * z**2 - self.log_std - 0.5 * math.log(2.0 * math.pi), axis=-1)

    def logprob_and_grad(self, mean, raw):
        """Log-prob plus gradients w.r.t. the mean and the log-std (per sample)."""
        inv = np.exp(-self.log_std)
        z = (np.asarray(raw) - mean) * inv
        lp = np.sum(-0.5 * z**2 - self.log_std - 0.5 * math.log(2.0 * math.pi), axis=-1)
        return lp, z * inv, z**2 - 1.0

    def entropy(self) -> float:
        return float(np.sum(self.log_std + 0.5 * math.log(2.0 * math.pi * math.e)))


def sample_and_logprob(head, net_output, rng: np.random.Generator, mask=None):
    """Draw an action from ``head`` given the network output."""
    if head.kind == "categorical":
        return head.sample(net_output, rng, mask)
    raw, lp = head.sample(net_output, rng)
    return raw, lp


# -- finite-difference check ------------------------------------------------

def gradient_check(net: Mlp, x: np.ndarray, upstream: np.ndarray, h: float = 1e-6,
                   samples: int = 20, rng: np.random.Generator | None = None) -> float:
    """Largest relative error between backprop and central differences on random params."""
    rng = rng if rng is not None else np.random.default_rng(0)
    _, acts = net.forward_cache(x)
    grads = net.backward(acts, upstream)
    worst = 0.0
    for _ in range(samples):
        k = int(rng.integers(len(net.params)))
        idx = tuple(int(rng.integers(s)) for s in net.params[k].shape)
        old = net.params[k][idx]
        net.params[k][idx] = old + h
        fp = float(np.sum(net.forward(x) * upstream))
        net.params[k][idx] = old - h
        fm = float(np.sum(net.forward(x) * upstream))
        net.params[k][idx] = old
        num = (fp - fm) / (2.0 * h)
        ana = float(grads[k][idx])
        denom = max(abs(num), abs(ana), 1e-8)
        worst = max(worst, abs(num - ana) / denom)
    return worst


# -- checkpoints --------------------------------------------------------------

def save_checkpoint(path, net: Mlp, extras: np.ndarray | None = None) -> None:
    """Write ``SRIS`` | u32 version | u32 n_dims | u32 dims... | f64 params | u32 n_extra | f64 extras.

    All integers and floats are little-endian; matrices are row-major.
    """
    extras = np.zeros(0) if extras is None else np.asarray(extras, dtype="<f8").ravel()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(net.layer_dims)))
        fh.write(struct.pack(f"<{len(net.layer_dims)}I", *net.layer_dims))
        for p in net.params:
            fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes(order="C"))
        fh.write(struct.pack("<I", extras.size))
        fh.write(extras.astype("<f8").tobytes())


def load_checkpoint(path) -> tuple[Mlp, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ValueError("not a checkpoint: bad magic")
    version, n_dims = struct.unpack_from("<II", data, 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    off = 12
    dims = struct.unpack_from(f"<{n_dims}I", data, off)
    off += 4 * n_dims
    net = Mlp(dims)
    for i, p in enumerate(net.params):
        n = p.size
        net.params[i] = np.frombuffer(data, dtype="<f8", count=n, offset=off).reshape(p.shape).astype(float)
        off += 8 * n
    (n_extra,) = struct.unpack_from("<I", data, off)
    off += 4
    extras = np.frombuffer(data, dtype="<f8", count=n_extra, offset=off).astype(float)
    return net, extras
