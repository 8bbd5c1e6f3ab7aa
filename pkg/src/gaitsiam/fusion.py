"""Spatial fusion, the sequential probability ratio test, and retraining feedback."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import ndtr

ACCEPT, REJECT, CONTINUE = "accept", "reject", "continue"
RATIO_CLAMP = 1e-12


@dataclass(frozen=True)
class SPRTConfig:
    alpha: float = 0.01
    beta: float = 0.01
    margin: float = 1.5
    mu: float | None = None  # None means margin / 2
    sigma_sq: float = 0.25
    k: int = 5
    max_observations: int = 50
    # divide by sigma instead of sigma^2 when standardizing distances
    use_sigma: bool = False

    def __post_init__(self):
        if not (0 < self.alpha < 1 and 0 < self.beta < 1):
            raise ValueError("alpha and beta must lie in (0, 1)")
        if not self.sigma_sq > 0:
            raise ValueError("sigma_sq must be positive")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.max_observations < 1:
            raise ValueError("max_observations must be >= 1")
        if self.mu is None:
            object.__setattr__(self, "mu", self.margin / 2)

    @property
    def upper(self) -> float:
        return (1 - self.beta) / self.alpha

    @property
    def lower(self) -> float:
        return self.beta / (1 - self.alpha)

    @property
    def scale(self) -> float:
        return math.sqrt(self.sigma_sq) if self.use_sigma else self.sigma_sq

    @property
    def threshold(self) -> float:
        """A batch is called similar when its fused distance is below m/2."""
        return self.margin / 2


@dataclass(frozen=True)
class SPRTState:
    A: float
    B: float
    lam: float = 1.0
    n: int = 0
    log_lambda: float = 0.0

    @classmethod
    def start(cls, cfg: SPRTConfig) -> "SPRTState":
        return cls(cfg.upper, cfg.lower)

    @property
    def outcome(self) -> str:
        if self.lam <= self.B:
            return ACCEPT
        if self.lam >= self.A:
            return REJECT
        return CONTINUE


@dataclass(frozen=True)
class Decision:
    outcome: str
    n_used: int
    lam: float
    truncated: bool = False

    @property
    def accepted(self) -> bool:
        return self.outcome == ACCEPT


def similarity_probability(d, mu=0.75, sigma_sq=0.25, use_sigma=False):
    """``1 - Phi((d - mu) / sigma_sq)``; pass ``use_sigma`` to divide by sigma."""
    scale = math.sqrt(sigma_sq) if use_sigma else sigma_sq
    if not scale > 0:
        raise ValueError("sigma_sq must be positive")
    return 1.0 - ndtr((np.asarray(d, dtype=float) - mu) / scale)


def log_ratio(d, cfg: SPRTConfig, similar=None):
    """Per-observation log likelihood ratio (negative favours the owner).

    With ``q = Phi(|d - mu| / scale)``, a similar call contributes
    ``(1 - q) / q`` and a dissimilar call ``q / (1 - q)``.  By default the
    call is ``d < m/2``.
    """
    d = np.asarray(d, dtype=float)
    if similar is None:
        similar = d < cfg.threshold
    q = np.clip(ndtr(np.abs(d - cfg.mu) / cfg.scale), RATIO_CLAMP, 1 - RATIO_CLAMP)
    lr = np.log1p(-q) - np.log(q)
    return np.where(similar, lr, -lr)


def likelihood_update(state: SPRTState, d, cfg: SPRTConfig, similar=None) -> SPRTState:
    step = float(log_ratio(d, cfg, similar))
    log_lam = state.log_lambda + step
    return replace(state, lam=math.exp(log_lam), n=state.n + 1, log_lambda=log_lam)


def spatial_distance(phi_x, train_phi, k, rng):
    """Mean distance between one embedding and ``k`` training embeddings drawn without replacement."""
    train_phi = np.asarray(train_phi, dtype=float)
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > len(train_phi):
        raise ValueError(f"k={k} exceeds the {len(train_phi)} training samples")
    rng = np.random.default_rng(rng)
    idx = rng.choice(len(train_phi), size=k, replace=False)
    diff = train_phi[idx] - np.asarray(phi_x, dtype=float)[None, :]
    return float(np.mean(np.sqrt(np.sum(diff**2, axis=1))))


def run_sprt_distances(distances, cfg: SPRTConfig = SPRTConfig(), log=None, session=0) -> Decision:
    """Sequential test over a stream of fused distances.

    Stops at the first terminal state; at ``max_observations`` the test is
    forced to accept iff the ratio is below 1.  ``log`` receives one dict
    per observation.
    """
    state = SPRTState.start(cfg)
    consumed = False
    for d in distances:
        consumed = True
        state = likelihood_update(state, d, cfg)
        out = state.outcome
        forced = out == CONTINUE and state.n >= cfg.max_observations
        if forced:
            out = ACCEPT if state.lam < 1 else REJECT
        if log is not None:
            log.append({"session": session, "n": state.n, "d": float(d),
                        "p": float(similarity_probability(d, cfg.mu, cfg.sigma_sq, cfg.use_sigma)),
                        "lambda": state.lam, "outcome": out})
        if out != CONTINUE:
            return Decision(out, state.n, state.lam, forced)
    if not consumed:
        raise ValueError("empty observation stream")
    # stream ran dry before a decision: fall back to the truncation rule
    return Decision(ACCEPT if state.lam < 1 else REJECT, state.n, state.lam, True)


def run_sprt(stream, model, train_images, cfg: SPRTConfig = SPRTConfig(), seed=0, log=None,
             session=0) -> Decision:
    """Authenticate a stream of spectrograms against the owner's training set.

    Each probe is embedded, fused against ``cfg.k`` fresh training samples,
    and fed to the sequential test; probes after the decision are not read.
    """
    train_phi = model.embed(train_images)
    rng = np.random.default_rng(seed)

    def distances():
        for x in stream:
            phi = model.embed(np.asarray(x)[None])[0]
            yield spatial_distance(phi, train_phi, cfg.k, rng)

    return run_sprt_distances(distances(), cfg, log, session)


def session_acceptance(model, probe_images, reference_images, cfg: SPRTConfig = SPRTConfig(),
                       sessions=40, seed=0):
    """Fraction of authentication sessions that end in Accept.

    Every session streams a fresh permutation of ``probe_images`` (shape
    ``(n, 33, 42)``) against ``reference_images``.  Returns the rate and the
    per-session decisions.
    """
    probe = np.asarray(probe_images, dtype=float)
    ref = np.asarray(reference_images, dtype=float)[:, None]
    rng = np.random.default_rng(seed)
    decisions = []
    for s in range(sessions):
        stream = probe[rng.permutation(len(probe))][:, None]
        decisions.append(run_sprt(stream, model, ref, cfg, seed=int(rng.integers(2**32)),
                                  session=s))
    return float(np.mean([d.accepted for d in decisions])), decisions


def simulate_sprt(distances, cfg: SPRTConfig = SPRTConfig()):
    """Vectorized test over a ``(streams, max_observations)`` distance matrix.

    Returns ``(accepted, n_used)`` arrays; agrees with
    :func:`run_sprt_distances` stream by stream.
    """
    d = np.asarray(distances, dtype=float)
    if d.ndim != 2 or d.shape[1] < 1:
        raise ValueError("distances must be (streams, observations)")
    d = d[:, :cfg.max_observations]
    log_lam = np.cumsum(log_ratio(d, cfg), axis=1)
    lam = np.exp(log_lam)
    acc = lam <= cfg.lower
    rej = lam >= cfg.upper
    done = acc | rej
    hit = done.any(axis=1)
    first = np.where(hit, done.argmax(axis=1), d.shape[1] - 1)
    rows = np.arange(len(d))
    accepted = np.where(hit, acc[rows, first], lam[rows, first] < 1)
    return accepted, first + 1


def sample_distances(genuine, shape, cfg: SPRTConfig = SPRTConfig(), rng=None):
    """Distances from the Gaussian distance models behind the test.

    Genuine distances are centred on 0 and imposter distances on the margin,
    both with standard deviation ``sqrt(sigma_sq)`` and clipped at 0.
    """
    rng = np.random.default_rng(rng)
    centre = 0.0 if genuine else cfg.margin
    return np.maximum(rng.normal(centre, math.sqrt(cfg.sigma_sq), size=shape), 0.0)


@dataclass(frozen=True)
class RetrainSignal:
    data: object = None


@dataclass(frozen=True)
class FeedbackCounter:
    T: int = 3
    c: int = 0

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if not 0 <= self.c <= self.T:
            raise ValueError("counter out of range")


def feedback(decision: Decision, verified_truth, counter: FeedbackCounter, recent_data=None):
    """Count verified false negatives; fire a retrain signal every ``T`` of them.

    ``verified_truth`` is True when an external check confirmed the owner,
    False when it confirmed an imposter, and None when no check happened.
    """
    if verified_truth is True and not decision.accepted:
        c = counter.c + 1
        if c >= counter.T:
            return replace(counter, c=0), RetrainSignal(recent_data)
        return replace(counter, c=c), None
    return counter, None


@dataclass
class FeedbackLoop:
    """Stateful helper that collects recent data until a retrain fires."""

    counter: FeedbackCounter = field(default_factory=FeedbackCounter)
    recent: list = field(default_factory=list)
    signals: int = 0

    def observe(self, decision, verified_truth, sample=None):
        if sample is not None:
            self.recent.append(sample)
        self.counter, signal = feedback(decision, verified_truth, self.counter, list(self.recent))
        if signal is not None:
            self.signals += 1
            self.recent = []
        return signal
