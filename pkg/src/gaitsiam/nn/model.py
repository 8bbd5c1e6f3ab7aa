"""Sequential model: shape composition, forward/backward, SGD and freezing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import LayerSpec, ShapeError, materialize

# input geometry of the stacked x/y/z spectrograms
INPUT_SHAPE = (1, 33, 42)


class CacheMismatchError(ValueError):
    """A forward cache was handed to a model that did not produce it."""


class DivergenceError(FloatingPointError):
    """Training produced a non-finite gradient or loss."""


@dataclass
class ForwardCache:
    model_token: tuple
    layer_caches: list
    batch: int
    start: int = 0


class Model:
    """Ordered stack of materialized layers.

    Parameters live on the layers (``layer.params``); gradients are returned
    as a list of dicts with one entry per layer, mirroring those params.
    """

    def __init__(self, specs, input_shape=INPUT_SHAPE, seed=0, dtype=np.float64):
        self.input_shape = tuple(int(d) for d in input_shape)
        self.seed = int(seed)
        self.dtype = np.dtype(dtype)
        self.layers = []
        shape = self.input_shape
        for i, spec in enumerate(specs):
            try:
                layer = materialize(spec, shape)
            except ShapeError as exc:
                prev = f"layer {i - 1} ({specs[i - 1].kind})" if i else "the model input"
                raise ShapeError(
                    f"layer {i} ({spec.kind}) cannot follow {prev} "
                    f"with output shape {shape}: {exc}") from None
            self.layers.append(layer)
            shape = layer.out_shape
        self.output_shape = shape
        rng = np.random.default_rng(self.seed)
        for i, layer in enumerate(self.layers):
            if i == len(self.layers) - 1 and layer.kind == "dense":
                layer.init_params(rng, self.dtype, linear_output=True)
            else:
                layer.init_params(rng, self.dtype)

    @property
    def specs(self) -> list[LayerSpec]:
        return [layer.spec for layer in self.layers]

    @property
    def weight_layers(self) -> list:
        return [layer for layer in self.layers if layer.spec.has_weights]

    def param_count(self) -> int:
        return sum(layer.param_count() for layer in self.layers)

    def _token(self):
        return (id(self), tuple(layer.kind for layer in self.layers))

    def forward(self, x, start=0):
        """Run a batch through ``layers[start:]``.

        ``x`` must have the input shape of layer ``start``; with the default
        ``start=0`` that is ``(N, *input_shape)``.
        """
        x = np.asarray(x, dtype=self.dtype)
        expected = self.layers[start].in_shape if self.layers else self.input_shape
        if x.shape[1:] != tuple(expected):
            raise ShapeError(f"expected input (N, {tuple(expected)}), got {x.shape}")
        caches = []
        for layer in self.layers[start:]:
            x, cache = layer.forward(x)
            caches.append(cache)
        return x, ForwardCache(self._token(), caches, x.shape[0], start)

    def predict(self, x, batch_size=64, stop=None):
        """Forward through ``layers[:stop]`` without caches, chunked to bound memory."""
        x = np.asarray(x, dtype=self.dtype)
        layers = self.layers[:stop]
        out = []
        for start in range(0, len(x), batch_size):
            h = x[start:start + batch_size]
            for layer in layers:
                h, _ = layer.forward(h)
            out.append(h)
        if not out:
            shape = layers[-1].out_shape if layers else self.input_shape
            return np.zeros((0,) + tuple(shape), dtype=self.dtype)
        return np.concatenate(out)

    @property
    def frozen_prefix(self) -> int:
        """Number of leading layers whose output no longer changes in training."""
        lowest = next((i for i, layer in enumerate(self.layers)
                       if layer.spec.has_weights and layer.trainable), len(self.layers))
        return lowest

    def backward(self, cache: ForwardCache, output_grad):
        """Backpropagate ``output_grad``; frozen layers get zero gradients.

        Propagation stops below the lowest trainable layer, since nothing
        underneath can receive a non-zero gradient.
        """
        if not isinstance(cache, ForwardCache) or cache.model_token != self._token():
            raise CacheMismatchError("cache was not produced by this model")
        dy = np.asarray(output_grad, dtype=self.dtype)
        if dy.shape != (cache.batch,) + self.output_shape:
            raise ShapeError(f"output_grad shape {dy.shape} does not match the forward output")
        grads = [{k: np.zeros_like(v) for k, v in layer.params.items()} for layer in self.layers]
        lowest = next((i for i, layer in enumerate(self.layers)
                       if layer.spec.has_weights and layer.trainable), None)
        if lowest is None:
            return grads
        if lowest < cache.start:
            raise CacheMismatchError("cache starts above a trainable layer")
        for i in range(len(self.layers) - 1, lowest - 1, -1):
            layer = self.layers[i]
            dy, g = layer.backward(dy, cache.layer_caches[i - cache.start], need_dx=i > lowest)
            if layer.trainable:
                grads[i] = g
        return grads

    def sgd_step(self, grads, lr):
        """In-place ``p <- p - lr * g`` on trainable layers."""
        if lr < 0:
            raise ValueError("learning rate must be non-negative")
        if len(grads) != len(self.layers):
            raise ValueError("gradients do not mirror the model layers")
        for layer, g in zip(self.layers, grads):
            if not layer.trainable:
                continue
            for name, p in layer.params.items():
                gv = g[name]
                if gv.shape != p.shape:
                    raise ValueError(f"gradient for {name} has shape {gv.shape}, expected {p.shape}")
                if not np.all(np.isfinite(gv)):
                    raise DivergenceError(f"non-finite gradient in {layer.kind}.{name}")
                p -= lr * gv
        return self

    def set_trainable(self, first_k_frozen):
        """Freeze the first ``k`` weight-bearing layers (and the layers between them)."""
        wl = self.weight_layers
        if not 0 <= first_k_frozen <= len(wl):
            raise ValueError(f"first_k_frozen must be in [0, {len(wl)}], got {first_k_frozen}")
        cut = self.layers.index(wl[first_k_frozen - 1]) if first_k_frozen else -1
        for i, layer in enumerate(self.layers):
            layer.spec.trainable = i > cut
        return self

    @property
    def frozen_count(self) -> int:
        return sum(1 for layer in self.weight_layers if not layer.trainable)

    def parameters(self):
        """Yield ``(layer_index, name, array)`` for every parameter."""
        for i, layer in enumerate(self.layers):
            for name, p in layer.params.items():
                yield i, name, p

    def copy(self) -> "Model":
        clone = Model.__new__(Model)
        clone.input_shape = self.input_shape
        clone.seed = self.seed
        clone.dtype = self.dtype
        clone.output_shape = self.output_shape
        clone.layers = []
        for layer in self.layers:
            spec = LayerSpec(**vars(layer.spec))
            new = materialize(spec, layer.in_shape)
            new.params = {k: v.copy() for k, v in layer.params.items()}
            clone.layers.append(new)
        return clone


def zero_grads(model: Model):
    return [{k: np.zeros_like(v) for k, v in layer.params.items()} for layer in model.layers]
