"""Pair distances and the contrastive, cross-entropy and joint losses.

All losses are sums over the pairs of a batch.  Each ``*_grad`` helper
returns the derivative of that sum with respect to its direct input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nn.layers import sigmoid_fn

LOSS_MODES = ("contrastive", "cross_entropy", "joint")
PROB_CLAMP = 1e-7


@dataclass(frozen=True)
class LossConfig:
    margin: float = 1.5
    alpha: float = 0.1
    mode: str = "joint"

    def __post_init__(self):
        if not self.margin > 0:
            raise ValueError("margin must be positive")
        if not self.alpha >= 0:
            raise ValueError("alpha must be non-negative")
        if self.mode not in LOSS_MODES:
            raise ValueError(f"unknown loss mode {self.mode!r}")

    @property
    def uses_head(self) -> bool:
        return self.mode in ("cross_entropy", "joint")

    @property
    def threshold(self) -> float:
        """Decision threshold: pairs closer than m/2 are called similar."""
        return self.margin / 2


def distance(phi1, phi2):
    """Euclidean distance along the last axis."""
    a = np.asarray(phi1, dtype=float)
    b = np.asarray(phi2, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"embedding shapes differ: {a.shape} vs {b.shape}")
    return np.sqrt(np.sum((a - b) ** 2, axis=-1))


def contrastive_terms(f, y, margin):
    f = np.asarray(f, dtype=float)
    y = np.asarray(y, dtype=float)
    return y * f**2 + (1 - y) * np.maximum(margin - f, 0.0) ** 2


def contrastive_loss(f, y, margin=1.5) -> float:
    """Sum of ``y f^2 + (1 - y) max(m - f, 0)^2`` over pairs."""
    if not margin > 0:
        raise ValueError("margin must be positive")
    return float(np.sum(contrastive_terms(f, y, margin)))


def contrastive_grad(f, y, margin=1.5):
    f = np.asarray(f, dtype=float)
    y = np.asarray(y, dtype=float)
    return 2 * y * f - 2 * (1 - y) * np.maximum(margin - f, 0.0)


def clamp_probability(p):
    return np.clip(p, PROB_CLAMP, 1 - PROB_CLAMP)


def cross_entropy_terms(p, y):
    p = clamp_probability(np.asarray(p, dtype=float))
    y = np.asarray(y, dtype=float)
    return -(y * np.log(p) + (1 - y) * np.log1p(-p))


def cross_entropy_pair_loss(p, y) -> float:
    """Negative log-likelihood of the pair labels under probabilities ``p``."""
    return float(np.sum(cross_entropy_terms(p, y)))


def cross_entropy_logit_grad(p, y):
    """d loss / d logit; zero where the clamp is active."""
    p = np.asarray(p, dtype=float)
    inside = (p > PROB_CLAMP) & (p < 1 - PROB_CLAMP)
    return np.where(inside, p - np.asarray(y, dtype=float), 0.0)


def joint_loss(f, p, y, margin=1.5, alpha=0.1) -> float:
    """Contrastive loss plus ``alpha`` times the pair cross-entropy."""
    return contrastive_loss(f, y, margin) + alpha * cross_entropy_pair_loss(p, y)


def head_logits(phi1, phi2, W, b):
    """Logit of the probability head over ``|phi1 - phi2|``."""
    a = np.abs(np.asarray(phi1, dtype=float) - np.asarray(phi2, dtype=float))
    return a @ np.asarray(W).reshape(-1) + float(np.asarray(b).reshape(-1)[0])


def pair_probability(phi1, phi2, head):
    """``sigmoid(w . |phi1 - phi2| + b)`` for a dense head with one unit."""
    if head is None:
        raise ValueError("probability head is not initialized")
    return sigmoid_fn(head_logits(phi1, phi2, head.params["W"], head.params["b"]))
