"""Feature transfer: copy and freeze the leading layers of a source network."""

from __future__ import annotations

from ..nn.arch import build_model
from ..nn.checkpoint import load_checkpoint
from ..nn.model import Model
from .losses import LossConfig
from .siamese import SiameseModel


class StructureMismatchError(ValueError):
    """Source and target disagree on the layers that are to be transferred."""


def _signature(layer):
    s = layer.spec
    return (s.kind, s.out_channels, s.kernel, s.stride, s.padding, s.units, s.size,
            tuple(layer.in_shape), tuple(layer.out_shape))


def transfer_init(target_arch, source, k, seed=0, loss: LossConfig = LossConfig()) -> SiameseModel:
    """Fresh target model whose first ``k`` weight layers come from ``source``.

    ``source`` is a :class:`Model` or checkpoint bytes.  Every layer up to
    and including the k-th weight layer must match structurally; those
    layers are copied and frozen, the rest keep their fresh initialization.
    """
    if isinstance(source, (bytes, bytearray, memoryview)):
        source = load_checkpoint(bytes(source))
    if isinstance(target_arch, Model):
        target = target_arch.copy()
    else:
        target = build_model(target_arch, seed=seed)
    if k:
        src_weights = source.weight_layers
        if k > len(src_weights) or k > len(target.weight_layers):
            raise StructureMismatchError(f"k={k} exceeds the weight layers available")
        cut_src = source.layers.index(src_weights[k - 1])
        cut_tgt = target.layers.index(target.weight_layers[k - 1])
        if cut_src != cut_tgt:
            raise StructureMismatchError("layer stacks differ before the transfer cut")
        for i in range(cut_tgt + 1):
            a, b = source.layers[i], target.layers[i]
            if _signature(a) != _signature(b):
                raise StructureMismatchError(
                    f"layer {i}: source {a.kind}{a.out_shape} vs target {b.kind}{b.out_shape}")
            b.params = {name: v.astype(target.dtype, copy=True) for name, v in a.params.items()}
    target.set_trainable(k)
    return SiameseModel(target, loss, seed=seed)
