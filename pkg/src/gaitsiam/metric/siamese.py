"""Weight-sharing Siamese wrapper around one trunk and an optional probability head."""

from __future__ import annotations

import numpy as np

from ..nn.layers import dense, materialize, sigmoid_fn
from ..nn.model import DivergenceError, Model
from .losses import (
    LossConfig,
    clamp_probability,
    contrastive_grad,
    contrastive_terms,
    cross_entropy_logit_grad,
    cross_entropy_terms,
    distance,
)


class SiameseModel:
    """Both branches evaluate ``self.trunk``; there is no second copy.

    The head is a one-unit dense layer over ``|phi1 - phi2|`` and exists iff
    the loss mode needs pair probabilities.
    """

    def __init__(self, trunk: Model, loss: LossConfig = LossConfig(), head=None, seed=None):
        self.trunk = trunk
        self.loss = loss
        if loss.uses_head:
            if head is None:
                (dim,) = trunk.output_shape
                head = materialize(dense(1), (dim,))
                rng = np.random.default_rng([trunk.seed if seed is None else seed, 7])
                head.init_params(rng, trunk.dtype, linear_output=True)
            self.head = head
        else:
            self.head = None

    def embed(self, x, batch_size=64):
        return self.trunk.predict(x, batch_size=batch_size)

    def pair_distances(self, images, left, right, batch_size=64):
        """Distances for pairs given as indices into ``images``; each image is embedded once."""
        phi = self.embed(images, batch_size)
        return distance(phi[np.asarray(left)], phi[np.asarray(right)])

    def probabilities_from_embeddings(self, phi1, phi2):
        if self.head is None:
            raise ValueError("probability head is not initialized")
        a = np.abs(phi1 - phi2)
        logits = a @ self.head.params["W"][:, 0] + self.head.params["b"][0]
        return sigmoid_fn(logits)

    def loss_and_grads(self, images, left, right, y, start=0):
        """Summed batch loss and its gradients.

        ``images`` holds each distinct image of the batch once; ``left`` and
        ``right`` index into it.  The trunk runs once per distinct image and
        the embedding gradients of both branches are accumulated before a
        single backward pass.  With ``start > 0``, ``images`` are already
        the outputs of the first ``start`` trunk layers.  Returns ``(loss, trunk_grads, head_grads,
        stats)``; ``head_grads`` is None when there is no head.
        """
        left = np.asarray(left, dtype=np.intp)
        right = np.asarray(right, dtype=np.intp)
        y = np.asarray(y, dtype=float)
        phi, cache = self.trunk.forward(images, start)
        diff = phi[left] - phi[right]
        f = np.sqrt(np.sum(diff**2, axis=1))
        cfg = self.loss
        dphi_pair = np.zeros_like(diff)
        loss = 0.0
        stats = {"distance": f}
        if cfg.mode in ("contrastive", "joint"):
            loss = float(np.sum(contrastive_terms(f, y, cfg.margin)))
            dldf = contrastive_grad(f, y, cfg.margin)
            safe = np.where(f > 0, f, 1.0)
            dphi_pair += np.where(f[:, None] > 0, dldf[:, None] * diff / safe[:, None], 0.0)
        head_grads = None
        if cfg.uses_head:
            W = self.head.params["W"]
            a = np.abs(diff)
            logits = a @ W[:, 0] + self.head.params["b"][0]
            p = sigmoid_fn(logits)
            weight = 1.0 if cfg.mode == "cross_entropy" else cfg.alpha
            ce = float(np.sum(cross_entropy_terms(p, y)))
            loss = ce if cfg.mode == "cross_entropy" else loss + weight * ce
            ds = weight * cross_entropy_logit_grad(p, y)
            head_grads = {"W": (a.T @ ds)[:, None], "b": np.array([ds.sum()])}
            dphi_pair += (ds[:, None] * W[:, 0][None, :]) * np.sign(diff)
            stats["probability"] = clamp_probability(p)
        dphi = np.zeros_like(phi)
        np.add.at(dphi, left, dphi_pair)
        np.add.at(dphi, right, -dphi_pair)
        trunk_grads = self.trunk.backward(cache, dphi)
        return loss, trunk_grads, head_grads, stats

    def sgd_step(self, trunk_grads, head_grads, lr):
        self.trunk.sgd_step(trunk_grads, lr)
        if self.head is not None and head_grads is not None:
            for name, p in self.head.params.items():
                if not np.all(np.isfinite(head_grads[name])):
                    raise DivergenceError(f"non-finite gradient in head.{name}")
                p -= lr * head_grads[name]
        return self
