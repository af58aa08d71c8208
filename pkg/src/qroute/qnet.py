"""State-value network: a small ReLU MLP with hand-written backprop."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from . import _kernels as K

__all__ = [
    "QNetwork",
    "TargetNetwork",
    "Adam",
    "Momentum",
    "make_optimizer",
    "sync_target",
    "relu",
    "DEFAULT_HIDDEN",
]

DEFAULT_HIDDEN = (32, 32, 32)
FORMAT_VERSION = 1


def relu(z):
    return np.maximum(z, 0.0)


def _param_count(dims) -> int:
    return sum(dims[i + 1] * dims[i] + dims[i + 1] for i in range(len(dims) - 1))


class QNetwork:
    """Fully-connected network mapping a state vector to a scalar value.

    Hidden layers use ReLU, the output is linear. All parameters live in one
    contiguous float64 vector (:attr:`params`); :attr:`weights` and
    :attr:`biases` are views into it, weight ``l`` having shape
    ``(layer_dims[l + 1], layer_dims[l])``.
    """

    def __init__(self, layer_dims, seed=None, params=None, metadata=None):
        dims = tuple(int(d) for d in layer_dims)
        if len(dims) < 2 or min(dims) < 1:
            raise ValueError(f"invalid layer_dims {layer_dims}")
        if dims[-1] != 1:
            raise ValueError("output dimension must be 1")
        self.layer_dims = dims
        self.dims_array = np.array(dims, dtype=np.int64)
        self.metadata = dict(metadata or {})
        if params is None:
            self.params = np.zeros(_param_count(dims), dtype=np.float64)
            self._bind()
            rng = np.random.default_rng(seed)
            for w in self.weights:
                fan_out, fan_in = w.shape
                bound = np.sqrt(6.0 / (fan_in + fan_out))
                w[...] = rng.uniform(-bound, bound, size=w.shape)
        else:
            params = np.array(params, dtype=np.float64)
            if params.shape != (_param_count(dims),):
                raise ValueError(f"expected {_param_count(dims)} parameters, got {params.shape}")
            self.params = params
            self._bind()

    @classmethod
    def for_qubits(cls, n_qubits: int, hidden=DEFAULT_HIDDEN, seed=None) -> "QNetwork":
        return cls((n_qubits, *hidden, 1), seed=seed)

    def _bind(self):
        self.weights, self.biases = [], []
        off = 0
        for nin, nout in zip(self.layer_dims[:-1], self.layer_dims[1:]):
            self.weights.append(self.params[off:off + nout * nin].reshape(nout, nin))
            off += nout * nin
            self.biases.append(self.params[off:off + nout])
            off += nout

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    def copy(self) -> "QNetwork":
        return QNetwork(self.layer_dims, params=self.params.copy(), metadata=self.metadata)

    def checksum(self) -> str:
        return hashlib.sha256(self.params.tobytes()).hexdigest()

    def _check_input(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.input_dim or x.ndim > 2:
            raise ValueError(f"expected input of dimension {self.input_dim}, got shape {x.shape}")
        return x

    def _activations(self, x):
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w.T + b
            h = z if i == last else relu(z)
            acts.append(h)
        return acts

    def forward(self, x):
        """Value of one state (returns float) or a batch (returns 1-D array)."""
        x = self._check_input(x)
        out = self._activations(np.atleast_2d(x))[-1][:, 0]
        return float(out[0]) if x.ndim == 1 else out

    __call__ = forward

    def loss(self, x, target) -> float:
        pred = np.atleast_1d(self.forward(x))
        return float(np.mean((pred - np.asarray(target, dtype=np.float64)) ** 2))

    def backward(self, x, target) -> np.ndarray:
        """Gradient of the mean squared error w.r.t. :attr:`params`.

        For a single sample the loss is ``(forward(x) - target) ** 2``; for a
        batch it is the mean over rows.
        """
        x = self._check_input(x)
        xb = np.atleast_2d(x)
        t = np.atleast_1d(np.asarray(target, dtype=np.float64))
        if t.shape != (xb.shape[0],):
            raise ValueError(f"expected {xb.shape[0]} targets, got shape {t.shape}")
        acts = self._activations(xb)
        grad = np.empty_like(self.params)
        gw, gb = _views(grad, self.layer_dims)
        delta = (2.0 / xb.shape[0]) * (acts[-1] - t[:, None])
        for i in range(len(self.weights) - 1, -1, -1):
            gw[i][...] = delta.T @ acts[i]
            gb[i][...] = delta.sum(axis=0)
            if i:
                delta = (delta @ self.weights[i]) * (acts[i] > 0)
        return grad

    def kernel_forward(self, x) -> float:
        work = np.empty((2, max(self.layer_dims)))
        return K.forward(self.params, self.dims_array, np.asarray(x, dtype=np.float64), work)

    # -- persistence ---------------------------------------------------------

    def save(self, path: str | Path, **extra) -> None:
        """Write an ``.npz`` holding dims, little-endian float64 params and JSON metadata."""
        meta = dict(self.metadata)
        meta.update(extra)
        meta["format_version"] = FORMAT_VERSION
        with open(path, "wb") as fh:
            np.savez(fh, layer_dims=np.array(self.layer_dims, dtype="<i8"),
                     params=self.params.astype("<f8"),
                     metadata=np.array(json.dumps(meta, sort_keys=True)))

    @classmethod
    def load(cls, path: str | Path) -> "QNetwork":
        with np.load(path, allow_pickle=False) as data:
            dims = data["layer_dims"].tolist()
            params = data["params"].astype(np.float64)
            meta = json.loads(str(data["metadata"]))
        return cls(dims, params=params, metadata=meta)


def _views(flat, dims):
    ws, bs = [], []
    off = 0
    for nin, nout in zip(dims[:-1], dims[1:]):
        ws.append(flat[off:off + nout * nin].reshape(nout, nin))
        off += nout * nin
        bs.append(flat[off:off + nout])
        off += nout
    return ws, bs


class TargetNetwork:
    """Frozen copy of an online network, changed only by :func:`sync_target`."""

    def __init__(self, online: QNetwork):
        self.net = online.copy()
        self.sync_count = 0
        self.updates_since_sync = 0

    @property
    def layer_dims(self):
        return self.net.layer_dims

    @property
    def params(self):
        return self.net.params

    def forward(self, x):
        return self.net.forward(x)


def sync_target(online: QNetwork, target: TargetNetwork) -> TargetNetwork:
    if online.layer_dims != target.layer_dims:
        raise ValueError(f"architecture mismatch: online {online.layer_dims} vs target {target.layer_dims}")
    target.net.params[...] = online.params
    target.sync_count += 1
    target.updates_since_sync = 0
    return target


def _check_finite(net: QNetwork, grads: np.ndarray):
    if grads.shape != net.params.shape:
        raise ValueError(f"gradient shape {grads.shape} does not match parameters {net.params.shape}")
    if np.all(np.isfinite(grads)):
        return
    gw, gb = _views(grads, net.layer_dims)
    for i, (w, b) in enumerate(zip(gw, gb)):
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise FloatingPointError(f"non-finite gradient in layer {i}")


class Adam:
    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = None
        self.v = None
        self.t = 0

    def update(self, net: QNetwork, grads: np.ndarray) -> QNetwork:
        _check_finite(net, grads)
        if self.m is None:
            self.m = np.zeros_like(net.params)
            self.v = np.zeros_like(net.params)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grads
        self.v = self.beta2 * self.v + (1 - self.beta2) * grads * grads
        mhat = self.m / (1 - self.beta1 ** self.t)
        vhat = self.v / (1 - self.beta2 ** self.t)
        net.params -= self.lr * mhat / (np.sqrt(vhat) + self.eps)
        return net

    def config(self):
        return {"name": "adam", "lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps}


class Momentum:
    """Heavy-ball gradient descent; ``momentum=0`` is the plain step ``w -= lr * g``."""

    def __init__(self, lr=1e-3, momentum=0.9):
        self.lr, self.momentum = lr, momentum
        self.velocity = None

    def update(self, net: QNetwork, grads: np.ndarray) -> QNetwork:
        _check_finite(net, grads)
        if self.velocity is None:
            self.velocity = np.zeros_like(net.params)
        self.velocity = self.momentum * self.velocity + grads
        net.params -= self.lr * self.velocity
        return net

    def config(self):
        return {"name": "momentum", "lr": self.lr, "momentum": self.momentum}


def make_optimizer(name: str = "adam", lr: float = 1e-3, **kw):
    if name == "adam":
        return Adam(lr=lr, **kw)
    if name in ("momentum", "sgd"):
        return Momentum(lr=lr, **kw)
    raise ValueError(f"unknown optimizer {name!r}")
