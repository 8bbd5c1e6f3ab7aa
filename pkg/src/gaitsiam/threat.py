"""Replay attacks against an enrolled owner, and the usability cost of obfuscation."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .signal.denoise import denoise_trace
from .signal.noise import NoiseSpec, inject_noise
from .signal.pedometer import pedometer_error
from .signal.stft import STFTConfig, spectrogram

ATTACK_KINDS = ("passive", "active")
DENOISERS = ("none", "tv", "gaussian_filter")
BATCH_SIZES = (1, 4, 8, 16, 32)
DENOISER_GRID = {
    "none": (None,),
    "tv": (0.1, 0.5, 1.0),
    "gaussian_filter": (2.0, 5.0, 10.0),  # sigma in samples
}


@dataclass(frozen=True)
class AttackScenario:
    kind: str = "passive"
    denoiser: str = "none"
    batch_fusion_size: int = 1
    trials: int = 100
    seed: int = 0
    # training samples each probe is compared against
    spatial_k: int = 8

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if self.denoiser not in DENOISERS:
            raise ValueError(f"unknown denoiser {self.denoiser!r}")
        if self.batch_fusion_size < 1:
            raise ValueError("batch_fusion_size must be >= 1")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.spatial_k < 1:
            raise ValueError("spatial_k must be >= 1")


@dataclass
class AttackReport:
    success_ratio: float
    per_subject: dict = field(default_factory=dict)  # id -> {"ratio", "trials"}
    pedometer_error: float | None = None
    config: dict = field(default_factory=dict)
    denoiser_param: float | None = None

    def to_dict(self):
        return {
            "success_ratio": self.success_ratio,
            "per_subject": self.per_subject,
            "pedometer_error": self.pedometer_error,
            "denoiser_param": self.denoiser_param,
            "config": self.config,
        }


def probe_distances(model, images, train_phi, k, rng):
    """Per-probe spatial distance: mean over ``k`` training embeddings drawn without replacement."""
    train_phi = np.asarray(train_phi, dtype=float)
    if k > len(train_phi):
        raise ValueError(f"k={k} exceeds the {len(train_phi)} training samples")
    phi = model.embed(np.asarray(images)[:, None] if np.ndim(images) == 3 else images)
    rng = np.random.default_rng(rng)
    out = np.empty(len(phi))
    for i, p in enumerate(phi):
        idx = rng.choice(len(train_phi), size=k, replace=False)
        out[i] = np.mean(np.sqrt(np.sum((train_phi[idx] - p) ** 2, axis=1)))
    return out


def fused_success(distances, batch_size, trials, threshold, rng):
    """Success flags of ``trials`` fused batches.

    Each trial draws one permutation of the probes; its batch is the first
    ``batch_size`` entries, accepted when their mean distance is below the
    threshold.  Drawing the permutations from the same seed for every batch
    size makes the batches of one trial nested.
    """
    d = np.asarray(distances, dtype=float)
    if len(d) == 0:
        raise ValueError("no probes to score")
    rng = np.random.default_rng(rng)
    b = min(batch_size, len(d))
    wins = np.empty(trials, dtype=bool)
    for t in range(trials):
        order = rng.permutation(len(d))
        wins[t] = d[order[:b]].mean() < threshold
    return wins


def _report(per_subject_wins, scenario, threshold, extra=None):
    per = {}
    total = 0
    n = 0
    for sid, wins in per_subject_wins.items():
        per[sid] = {"ratio": float(np.mean(wins)), "trials": int(len(wins))}
        total += int(np.sum(wins))
        n += len(wins)
    config = {**asdict(scenario), "threshold": threshold, **(extra or {})}
    return AttackReport(total / n if n else 0.0, per, None, config)


def passive_attack(model, victim_threshold, attack_database, scenario: AttackScenario,
                   train_images) -> AttackReport:
    """Replay foreign subjects' spectrograms against the owner's training set.

    ``attack_database`` maps subject id to an image array ``(n, 33, 42)``.
    """
    if not attack_database:
        raise ValueError("attack database is empty")
    train_phi = model.embed(_with_channel(train_images))
    seeds = np.random.SeedSequence(scenario.seed).spawn(len(attack_database))
    wins = {}
    for (sid, images), ss in zip(sorted(attack_database.items()), seeds):
        score_rng, trial_rng = [np.random.default_rng(s) for s in ss.spawn(2)]
        d = probe_distances(model, _with_channel(images), train_phi, scenario.spatial_k, score_rng)
        wins[sid] = fused_success(d, scenario.batch_fusion_size, scenario.trials,
                                  victim_threshold, trial_rng)
    return _report(wins, scenario, victim_threshold)


def _with_channel(images):
    images = np.asarray(images, dtype=float)
    return images[:, None] if images.ndim == 3 else images


def sniffed_images(victim_traces, noise_spec: NoiseSpec | None, denoiser="none", param=None,
                   cfg: STFTConfig = STFTConfig(), seed=0):
    """What an active attacker replays: obfuscated (and maybe denoised) spectrograms.

    Every trace gets its own noise realization derived from ``seed``, so the
    same seed reproduces the same sniffed data across model arms.
    """
    out = []
    for i, trace in enumerate(victim_traces):
        if noise_spec is not None:
            s = np.random.SeedSequence([seed, i]).generate_state(1)[0]
            trace = inject_noise(trace, replace(noise_spec, seed=int(s)))
        if denoiser != "none":
            trace = denoise_trace(trace, denoiser, param)
        out.extend(im.pixels for im in spectrogram(trace, cfg))
    return np.stack(out)


def active_attack(model, victim_traces, noise_spec: NoiseSpec | None, scenario: AttackScenario,
                  train_images, threshold, cfg: STFTConfig = STFTConfig()) -> AttackReport:
    """Replay the victim's own sniffed data, taking the best denoiser setting.

    For ``denoiser="none"`` the obfuscated data is replayed as is; otherwise
    every grid value of the denoiser is tried and the highest success ratio
    is reported.  The pedometer column is the usability cost of the noise.
    """
    if scenario.kind != "active":
        scenario = replace(scenario, kind="active")
    train_phi = model.embed(_with_channel(train_images))
    best = None
    for param in DENOISER_GRID[scenario.denoiser]:
        images = sniffed_images(victim_traces, noise_spec, scenario.denoiser, param, cfg,
                                scenario.seed)
        score_rng, trial_rng = [np.random.default_rng(s)
                                for s in np.random.SeedSequence(scenario.seed).spawn(2)]
        d = probe_distances(model, _with_channel(images), train_phi, scenario.spatial_k, score_rng)
        wins = fused_success(d, scenario.batch_fusion_size, scenario.trials, threshold, trial_rng)
        report = _report({"victim": wins}, scenario, threshold)
        report.denoiser_param = param
        if best is None or report.success_ratio > best.success_ratio:
            best = report
    best.pedometer_error = usability_report(victim_traces, noise_spec, seed=scenario.seed)
    return best


def genuine_acceptance(model, images, train_images, threshold, batch_size=1, trials=200,
                       spatial_k=8, seed=0) -> float:
    """Acceptance ratio of the owner's own held-out images under the attack rule."""
    train_phi = model.embed(_with_channel(train_images))
    score_rng, trial_rng = [np.random.default_rng(s)
                            for s in np.random.SeedSequence(seed).spawn(2)]
    d = probe_distances(model, _with_channel(images), train_phi, spatial_k, score_rng)
    return float(fused_success(d, batch_size, trials, threshold, trial_rng).mean())


def usability_report(victim_traces, noise_spec: NoiseSpec | None, seed=0) -> float:
    """Mean relative step-count error that the obfuscation inflicts on a pedometer."""
    if noise_spec is None:
        return 0.0
    errors = []
    for i, trace in enumerate(victim_traces):
        if trace.duration < 10.0:
            raise ValueError("usability needs traces of at least 10 s")
        s = np.random.SeedSequence([seed, i]).generate_state(1)[0]
        errors.append(pedometer_error(trace, inject_noise(trace, replace(noise_spec, seed=int(s)))))
    return float(np.mean(errors))
