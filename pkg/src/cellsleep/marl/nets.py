"""Dense networks with explicit reverse-mode gradients and Adam updates."""
from __future__ import annotations

import json

import numpy as np

__all__ = ["Mlp", "Adam", "ModelMismatchError",
           "softmax", "log_softmax", "categorical_sample",
           "save_model", "load_model"]

MODEL_FORMAT_VERSION = 1


class ModelMismatchError(ValueError):
    """Loaded tensors do not match the expected layout."""


def orthogonal(rng: np.random.Generator, n_in: int, n_out: int,
               gain: float) -> np.ndarray:
    a = rng.normal(size=(max(n_in, n_out), min(n_in, n_out)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if n_in < n_out:
        q = q.T
    return gain * q[:n_in, :n_out]


class Mlp:
    """Rectifier MLP with per-tensor gradient buffers.

    ``forward`` caches activations for a following ``backward``; use
    ``predict`` when no gradient is needed. Hidden layers use orthogonal
    init with gain sqrt(2); the output layer uses ``out_gain``.
    """

    def __init__(self, layer_sizes, rng: np.random.Generator,
                 out_gain: float = 1.0):
        sizes = [int(s) for s in layer_sizes]
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise ValueError("layer_sizes must list >= 2 positive widths")
        self.layer_sizes = sizes
        self.w = []
        self.b = []
        last = len(sizes) - 2
        for i, (n_in, n_out) in enumerate(zip(sizes, sizes[1:])):
            gain = out_gain if i == last else np.sqrt(2.0)
            self.w.append(orthogonal(rng, n_in, n_out, gain))
            self.b.append(np.zeros(n_out))
        self.gw = [np.zeros_like(w) for w in self.w]
        self.gb = [np.zeros_like(b) for b in self.b]
        self._inputs = None
        self._pre = None

    @property
    def num_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def num_outputs(self) -> int:
        return self.layer_sizes[-1]

    def _check_width(self, x: np.ndarray) -> None:
        if x.shape[-1] != self.num_inputs:
            raise ValueError(
                f"input width {x.shape[-1]} != expected {self.num_inputs}")

    def predict(self, x) -> np.ndarray:
        """Forward pass without caching; accepts (d,) or (N, d)."""
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        h = x[None, :] if squeeze else x
        self._check_width(h)
        n = len(self.w)
        for i in range(n - 1):
            h = np.maximum(h @ self.w[i] + self.b[i], 0.0)
        out = h @ self.w[-1] + self.b[-1]
        return out[0] if squeeze else out

    def forward(self, x) -> np.ndarray:
        """Forward pass (N, d) -> (N, out), caching for backward."""
        h = np.asarray(x, dtype=float)
        if h.ndim != 2:
            raise ValueError("forward expects a batch of shape (N, d)")
        self._check_width(h)
        inputs = [h]
        pre = []
        n = len(self.w)
        for i in range(n - 1):
            z = h @ self.w[i] + self.b[i]
            pre.append(z)
            h = np.maximum(z, 0.0)
            inputs.append(h)
        self._inputs = inputs
        self._pre = pre
        return h @ self.w[-1] + self.b[-1]

    def backward(self, grad_out: np.ndarray) -> None:
        """Accumulate parameter gradients for the cached forward pass."""
        if self._inputs is None:
            raise RuntimeError("backward called before forward")
        g = grad_out
        for i in range(len(self.w) - 1, -1, -1):
            self.gw[i] += self._inputs[i].T @ g
            self.gb[i] += g.sum(axis=0)
            if i > 0:
                g = (g @ self.w[i].T) * (self._pre[i - 1] > 0.0)

    def zero_grad(self) -> None:
        for g in self.gw:
            g.fill(0.0)
        for g in self.gb:
            g.fill(0.0)

    def parameters(self):
        """Pairs of (tensor, gradient buffer), weights then biases per layer."""
        for w, gw in zip(self.w, self.gw):
            yield w, gw
        for b, gb in zip(self.b, self.gb):
            yield b, gb

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for i, (w, b) in enumerate(zip(self.w, self.b)):
            out[f"w{i}"] = w
            out[f"b{i}"] = b
        return out

    def load_state_arrays(self, arrays: dict) -> None:
        for i in range(len(self.w)):
            w = np.asarray(arrays[f"w{i}"], dtype=float)
            b = np.asarray(arrays[f"b{i}"], dtype=float)
            if w.shape != self.w[i].shape or b.shape != self.b[i].shape:
                raise ModelMismatchError(
                    f"layer {i}: expected {self.w[i].shape}, got {w.shape}")
            self.w[i] = w
            self.b[i] = b
        self.gw = [np.zeros_like(w) for w in self.w]
        self.gb = [np.zeros_like(b) for b in self.b]


class Adam:
    """Adaptive-moment gradient descent over an Mlp's parameters."""

    def __init__(self, net: Mlp, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.net = net
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        params = list(net.parameters())
        self.m = [np.zeros_like(p) for p, _ in params]
        self.v = [np.zeros_like(p) for p, _ in params]

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for (p, g), m, v in zip(self.net.parameters(), self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {"t": np.array(self.t)}
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            out[f"m{i}"] = m
            out[f"v{i}"] = v
        return out

    def load_state_arrays(self, arrays: dict) -> None:
        self.t = int(arrays["t"])
        for i in range(len(self.m)):
            self.m[i] = np.asarray(arrays[f"m{i}"], dtype=float)
            self.v[i] = np.asarray(arrays[f"v{i}"], dtype=float)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def categorical_sample(rng: np.random.Generator,
                       probs: np.ndarray) -> np.ndarray:
    """One draw per row from row-wise categorical distributions."""
    u = rng.random(probs.shape[0])
    return (probs.cumsum(axis=1) < u[:, None]).sum(axis=1)


def save_model(path, net: Mlp, meta: dict | None = None) -> None:
    """Binary tensor dump with a version and layer-size header."""
    arrays = net.state_arrays()
    np.savez(path,
             format_version=np.array(MODEL_FORMAT_VERSION),
             layer_sizes=np.array(net.layer_sizes),
             meta=np.array(json.dumps(meta or {})),
             **arrays)


def load_model(path) -> tuple[Mlp, dict]:
    """Load a model dump; returns the network and its metadata."""
    with np.load(path, allow_pickle=False) as data:
        version = int(data["format_version"])
        if version != MODEL_FORMAT_VERSION:
            raise ModelMismatchError(f"unsupported model format {version}")
        sizes = [int(s) for s in data["layer_sizes"]]
        net = Mlp(sizes, np.random.default_rng(0))
        net.load_state_arrays(data)
        meta = json.loads(str(data["meta"]))
    return net, meta
