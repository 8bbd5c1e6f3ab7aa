"""Layer menu for the CPU network core.

Every layer works on batched arrays: ``(N, C, H, W)`` for image layers and
``(N, D)`` for dense layers.  ``forward`` returns ``(y, cache)`` and
``backward`` consumes the cache to return ``(dx, grads)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

KINDS = ("conv2d", "maxpool", "dense", "relu", "sigmoid", "flatten")
WEIGHT_KINDS = ("conv2d", "dense")


class ShapeError(ValueError):
    """Raised when layer shapes do not compose."""


@dataclass
class LayerSpec:
    """Declarative description of one layer.

    ``in_channels``/``in_features`` are resolved while the model is built,
    so specs only carry the output-side hyperparameters.
    """

    kind: str
    out_channels: int = 0
    kernel: tuple[int, int] = (0, 0)
    stride: int = 1
    padding: int = 0
    units: int = 0
    size: int = 2
    trainable: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        self.kernel = tuple(int(k) for k in self.kernel)
        if self.kind == "conv2d":
            if self.out_channels <= 0 or min(self.kernel) <= 0 or self.stride <= 0:
                raise ValueError("conv2d needs positive channels, kernel and stride")
            if self.padding < 0:
                raise ValueError("padding must be non-negative")
        elif self.kind == "dense" and self.units <= 0:
            raise ValueError("dense needs a positive unit count")
        elif self.kind == "maxpool" and self.size <= 0:
            raise ValueError("maxpool needs a positive window")

    @property
    def has_weights(self) -> bool:
        return self.kind in WEIGHT_KINDS


def conv2d(out_channels, kh, kw=None, padding=0, stride=1) -> LayerSpec:
    return LayerSpec("conv2d", out_channels=out_channels, kernel=(kh, kw or kh),
                     padding=padding, stride=stride)


def maxpool(size=2) -> LayerSpec:
    return LayerSpec("maxpool", size=size)


def dense(units) -> LayerSpec:
    return LayerSpec("dense", units=units)


def relu() -> LayerSpec:
    return LayerSpec("relu")


def sigmoid() -> LayerSpec:
    return LayerSpec("sigmoid")


def flatten() -> LayerSpec:
    return LayerSpec("flatten")


@dataclass
class Layer:
    spec: LayerSpec
    in_shape: tuple
    out_shape: tuple = ()
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.out_shape = tuple(self.in_shape)

    @property
    def kind(self) -> str:
        return self.spec.kind

    @property
    def trainable(self) -> bool:
        return self.spec.trainable

    def param_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def init_params(self, rng, dtype):
        pass

    def forward(self, x):
        raise NotImplementedError

    def backward(self, dy, cache, need_dx=True):
        raise NotImplementedError


def _uniform(rng, fan_in, shape, dtype, gain=6.0):
    # He-style fan-in scaling suits the ReLU trunks
    limit = np.sqrt(gain / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Conv2D(Layer):
    def __post_init__(self):
        if len(self.in_shape) != 3:
            raise ShapeError(f"conv2d expects (C, H, W) input, got {self.in_shape}")
        c, h, w = self.in_shape
        kh, kw = self.spec.kernel
        p, s = self.spec.padding, self.spec.stride
        ho = (h + 2 * p - kh) // s + 1
        wo = (w + 2 * p - kw) // s + 1
        if ho <= 0 or wo <= 0:
            raise ShapeError(f"{kh}x{kw} kernel does not fit input {self.in_shape}")
        self.out_shape = (self.spec.out_channels, ho, wo)

    def init_params(self, rng, dtype):
        c = self.in_shape[0]
        kh, kw = self.spec.kernel
        f = self.spec.out_channels
        self.params = {
            "W": _uniform(rng, c * kh * kw, (f, c, kh, kw), dtype),
            "b": np.zeros(f, dtype=dtype),
        }

    def _cols(self, x):
        p, s = self.spec.padding, self.spec.stride
        if p:
            x = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        win = sliding_window_view(x, self.spec.kernel, axis=(2, 3))[:, :, ::s, ::s]
        n, c, ho, wo, kh, kw = win.shape
        return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)

    def forward(self, x):
        n = x.shape[0]
        f, ho, wo = self.out_shape
        cols = self._cols(x)
        w = self.params["W"]
        y = cols @ w.reshape(f, -1).T + self.params["b"]
        y = y.reshape(n, ho, wo, f).transpose(0, 3, 1, 2)
        return np.ascontiguousarray(y), (cols, x.shape)

    def backward(self, dy, cache, need_dx=True):
        cols, x_shape = cache
        w = self.params["W"]
        f, c, kh, kw = w.shape
        n = dy.shape[0]
        _, ho, wo = self.out_shape
        dym = dy.transpose(0, 2, 3, 1).reshape(-1, f)
        grads = {"W": (dym.T @ cols).reshape(w.shape), "b": dym.sum(axis=0)}
        if not need_dx:
            return None, grads
        # kernel-major, channel-minor columns keep the scatter-add slices contiguous
        dcols = dym @ w.transpose(0, 2, 3, 1).reshape(f, -1)
        dcols = dcols.reshape(n, ho, wo, kh, kw, c)
        p, s = self.spec.padding, self.spec.stride
        hp, wp = x_shape[2] + 2 * p, x_shape[3] + 2 * p
        dx = np.zeros((n, hp, wp, c), dtype=dy.dtype)
        for i in range(kh):
            for j in range(kw):
                dx[:, i:i + s * ho:s, j:j + s * wo:s, :] += dcols[:, :, :, i, j, :]
        dx = dx.transpose(0, 3, 1, 2)
        if p:
            dx = dx[:, :, p:hp - p, p:wp - p]
        return np.ascontiguousarray(dx), grads


class MaxPool2D(Layer):
    def __post_init__(self):
        if len(self.in_shape) != 3:
            raise ShapeError(f"maxpool expects (C, H, W) input, got {self.in_shape}")
        c, h, w = self.in_shape
        s = self.spec.size
        if h < s or w < s:
            raise ShapeError(f"{s}x{s} pool does not fit input {self.in_shape}")
        self.out_shape = (c, h // s, w // s)

    def forward(self, x):
        s = self.spec.size
        _, ho, wo = self.out_shape
        views = [x[:, :, di:di + s * ho:s, dj:dj + s * wo:s]
                 for di in range(s) for dj in range(s)]
        y = views[0].copy()
        for v in views[1:]:
            np.maximum(y, v, out=y)
        # walk offsets backwards so the first maximum wins on ties
        idx = np.full(y.shape, len(views) - 1, dtype=np.int8)
        for k in range(len(views) - 2, -1, -1):
            idx[views[k] == y] = k
        return y, (idx, x.shape)

    def backward(self, dy, cache, need_dx=True):
        if not need_dx:
            return None, {}
        idx, x_shape = cache
        s = self.spec.size
        _, ho, wo = self.out_shape
        dx = np.zeros(x_shape, dtype=dy.dtype)
        for k in range(s * s):
            di, dj = divmod(k, s)
            dx[:, :, di:di + s * ho:s, dj:dj + s * wo:s] = np.where(idx == k, dy, 0.0)
        return dx, {}


class Dense(Layer):
    def __post_init__(self):
        if len(self.in_shape) != 1:
            raise ShapeError(f"dense expects a flat input, got {self.in_shape}")
        self.out_shape = (self.spec.units,)

    def init_params(self, rng, dtype, linear_output=False):
        # a linear output layer has no rectifier after it: use bound 1/sqrt(fan_in)
        d = self.in_shape[0]
        self.params = {
            "W": _uniform(rng, d, (d, self.spec.units), dtype, 1.0 if linear_output else 6.0),
            "b": np.zeros(self.spec.units, dtype=dtype),
        }

    def forward(self, x):
        return x @ self.params["W"] + self.params["b"], x

    def backward(self, dy, cache, need_dx=True):
        x = cache
        grads = {"W": x.T @ dy, "b": dy.sum(axis=0)}
        dx = dy @ self.params["W"].T if need_dx else None
        return dx, grads


class ReLU(Layer):
    def forward(self, x):
        mask = x > 0
        return x * mask, mask

    def backward(self, dy, cache, need_dx=True):
        return (dy * cache if need_dx else None), {}


class Sigmoid(Layer):
    def forward(self, x):
        y = sigmoid_fn(x)
        return y, y

    def backward(self, dy, cache, need_dx=True):
        y = cache
        return (dy * y * (1.0 - y) if need_dx else None), {}


class Flatten(Layer):
    def __post_init__(self):
        self.out_shape = (int(np.prod(self.in_shape)),)

    def forward(self, x):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, dy, cache, need_dx=True):
        return (dy.reshape(cache) if need_dx else None), {}


def sigmoid_fn(x):
    """Numerically stable logistic function."""
    x = np.asarray(x)
    if not np.issubdtype(x.dtype, np.floating):
        x = x.astype(float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


LAYER_CLASSES = {
    "conv2d": Conv2D,
    "maxpool": MaxPool2D,
    "dense": Dense,
    "relu": ReLU,
    "sigmoid": Sigmoid,
    "flatten": Flatten,
}


def materialize(spec: LayerSpec, in_shape) -> Layer:
    return LAYER_CLASSES[spec.kind](spec=spec, in_shape=tuple(in_shape))
