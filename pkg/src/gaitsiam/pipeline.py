"""Glue between a :class:`RunConfig` and the library: data, tasks, models."""

from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import RunConfig
from .data import (CohortConfig, held_out_pairs, make_cohort, owner_task, second_session,
                   split_trace, subject_specs)
from .fusion import FeedbackCounter, FeedbackLoop, SPRTConfig, session_acceptance
from .metric import LossConfig, SiameseModel, TrainConfig, train
from .nn import build_model
from .nn.checkpoint import read_checkpoint
from .pairing import ReservoirBuffer, make_defense_pairs
from .signal.noise import NoiseSpec
from .signal.stft import STFTConfig
from .signal.synth import synth_gait
from .signal.trace import ingest_csv, write_csv
from .threat import DENOISER_GRID

MANIFEST = "manifest.json"


def stft_config(cfg: RunConfig) -> STFTConfig:
    p = cfg.preprocessing
    return STFTConfig(p.window_len, p.hop, p.fft_len, p.freq_bins_kept, p.frames_kept,
                      p.log_floor, p.window, p.image_hop)


def cohort_config(cfg: RunConfig, **overrides) -> CohortConfig:
    d = cfg.dataset
    kwargs = dict(n_subjects=d.n_subjects, duration=d.duration, sample_rate=d.sample_rate,
                  train_fraction=d.train_fraction, harmonics=d.harmonics,
                  noise_std=d.noise_std, image_hop=cfg.preprocessing.image_hop, seed=d.seed,
                  spectral=stft_config(cfg))
    kwargs.update(overrides)
    return CohortConfig(**kwargs)


def loss_config(cfg: RunConfig) -> LossConfig:
    return LossConfig(cfg.loss.margin, cfg.loss.alpha, cfg.loss.mode)


def train_config(cfg: RunConfig) -> TrainConfig:
    t = cfg.train
    return TrainConfig(t.epochs, t.batch_size, t.lr, t.seed, t.target_loss)


def sprt_config(cfg: RunConfig) -> SPRTConfig:
    f = cfg.fusion
    return SPRTConfig(f.alpha, f.beta, cfg.loss.margin, f.mu, f.sigma_sq, f.k,
                      f.max_observations, f.use_sigma)


def noise_spec(cfg: RunConfig) -> NoiseSpec:
    n = cfg.threat.noise
    return NoiseSpec(n.kind, n.moving_window, n.std_scale, n.sinusoid_freq,
                     n.sinusoid_amp_ratio, n.seed)


def write_dataset(cfg: RunConfig, out_dir) -> dict:
    """Write one CSV per synthetic subject plus a JSON manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ccfg = cohort_config(cfg)
    files = []
    for spec in subject_specs(ccfg):
        trace = synth_gait(spec, ccfg.duration, ccfg.sample_rate)
        name = f"{spec.subject_id}.csv"
        write_csv(trace, out / name)
        files.append({"subject_id": spec.subject_id, "file": name, "samples": len(trace)})
    manifest = {"sample_rate": ccfg.sample_rate, "duration": ccfg.duration,
                "seed": ccfg.seed, "subjects": files}
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def load_cohort(cfg: RunConfig):
    """Synthetic cohort from the config, or the CSV traces listed in a manifest."""
    ccfg = cohort_config(cfg)
    if cfg.dataset.source == "synthetic":
        return make_cohort(ccfg)
    if cfg.dataset.source != "csv":
        raise ValueError(f"unknown dataset source {cfg.dataset.source!r}")
    if not cfg.dataset.csv_dir:
        raise ValueError("dataset.csv_dir is required for csv datasets")
    root = Path(cfg.dataset.csv_dir)
    manifest = json.loads((root / MANIFEST).read_text())
    rate = manifest.get("sample_rate")
    cohort = []
    for entry in manifest["subjects"]:
        trace = ingest_csv(root / entry["file"], sample_rate=rate, subject_id=entry["subject_id"])
        cohort.append(split_trace(trace, ccfg))
    return cohort


def split_owner(cohort, owner: int):
    if not 0 <= owner < len(cohort):
        raise ValueError(f"owner index {owner} outside the cohort of {len(cohort)}")
    others = [s for i, s in enumerate(cohort) if i != owner]
    return cohort[owner], others


def defense_genuine(owner, ids, n_segments, cfg: STFTConfig):
    """Evenly spaced owner training segments, each covering one training image."""
    n_img = len(ids)
    picks = np.unique(np.linspace(0, n_img - 1, min(n_segments, n_img)).round().astype(int))
    out = []
    for i in picks:
        start = i * cfg.stride
        seg = owner.train_trace.with_samples(owner.train_trace.samples[start:start + cfg.span])
        out.append((ids[i], seg))
    return out


def build_task(cfg: RunConfig, cohort, defense=None):
    """Owner-vs-rest reservoir, optionally with obfuscation pairs as extra negatives."""
    owner, others = split_owner(cohort, cfg.dataset.owner)
    r = len(owner.train_images)
    R = cfg.train.R or r * r
    defense = cfg.train.defense if defense is None else defense
    task = owner_task(owner.train_images, [s.train_images for s in others], R,
                      seed=cfg.train.seed, owner_id=owner.subject_id,
                      negative_labels=[s.subject_id for s in others])
    if defense:
        add_defense(task, owner, cfg)
    return task


def add_defense(task, owner, cfg: RunConfig):
    """Re-slot half the negative capacity for genuine-vs-obfuscated pairs."""
    scfg = stft_config(cfg)
    genuine = defense_genuine(owner, task.owner_ids, cfg.train.defense_segments, scfg)
    denoisers = [(m, p) for m, grid in DENOISER_GRID.items() if m != "none" for p in grid]
    spec = noise_spec(cfg)
    pairs = make_defense_pairs(genuine, [spec], denoisers, task.bank, scfg)
    old = task.buffer
    buf = ReservoirBuffer(old.capacity, old.seed + 1, defense_capacity=old.capacity // 2)
    for rec in old.positives:
        buf.offer_positive(rec)
    for rec in old.regular:
        buf.offer_negative(rec)
    for rec in pairs:
        buf.offer_defense(rec)
    task.buffer = buf
    return task


def new_model(cfg: RunConfig) -> SiameseModel:
    return SiameseModel(build_model(cfg.model.arch, seed=cfg.model.seed), loss_config(cfg))


def model_from_checkpoint(data: bytes, cfg: RunConfig) -> SiameseModel:
    trunk, head = read_checkpoint(data)
    return SiameseModel(trunk, loss_config(cfg), head=head)


def owner_held_out_pairs(cfg: RunConfig, cohort):
    owner, others = split_owner(cohort, cfg.dataset.owner)
    return held_out_pairs(owner.test_images, [s.test_images for s in others], cfg.train.seed)


def drift_feedback(cfg: RunConfig, model: SiameseModel, cohort, fraction=0.2, sessions=40,
                   cadence_shift=0.2, amplitude_jitter=0.5):
    """Session-2 drift: feedback-triggered fine-tuning on a slice of the new data.

    The owner is re-recorded with perturbed cadence and amplitudes.  The
    first ``fraction`` of the new recording (by time) is what the device
    keeps after verified false negatives; the rest is the probe set.
    Sessions are replayed through the feedback loop with the owner verified
    each time; when the retrain signal fires the model is fine-tuned on
    owner pairs that include the kept slice.  ``model`` is trained in place.
    """
    if not 0 < fraction < 1:
        raise ValueError("fraction must be in (0, 1)")
    ccfg = cohort_config(cfg)
    owner, others = split_owner(cohort, cfg.dataset.owner)
    new = second_session([owner], ccfg, cadence_shift, amplitude_jitter, seed=cfg.train.seed + 1)[0]
    images = np.concatenate([new.train_images, new.test_images])
    n_keep = max(1, int(fraction * len(images)))
    kept, probe = images[:n_keep], images[n_keep:]
    scfg = sprt_config(cfg)
    before, decisions = session_acceptance(model, probe, owner.train_images, scfg, sessions,
                                           seed=cfg.train.seed)
    loop = FeedbackLoop(FeedbackCounter(cfg.fusion.T))
    signal = None
    for d in decisions:
        signal = loop.observe(d, True, sample=kept) or signal
    report = {"fraction": fraction, "kept_images": int(n_keep), "probe_images": int(len(probe)),
              "acceptance_before": before, "retrain_signals": loop.signals}
    reference = owner.train_images
    if signal is not None:
        reference = np.concatenate([owner.train_images, kept])
        task = owner_task(reference, [s.train_images for s in others], cfg.train.R or
                          len(reference) ** 2, seed=cfg.train.seed + 1,
                          owner_id=owner.subject_id,
                          negative_labels=[s.subject_id for s in others])
        tcfg = replace(train_config(cfg), seed=cfg.train.seed + 1)
        _, history = train(model, task.buffer, task.bank, tcfg)
        report["finetune_epochs"] = len(history)
    report["acceptance_after"], _ = session_acceptance(model, probe, reference, scfg, sessions,
                                                       seed=cfg.train.seed)
    imposters = np.concatenate([s.test_images for s in others])
    report["imposter_acceptance_after"], _ = session_acceptance(
        model, imposters, reference, scfg, sessions, seed=cfg.train.seed)
    return report
