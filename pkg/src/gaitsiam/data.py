"""Synthetic cohorts and the owner-vs-rest pair tasks built on them."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .pairing import ImageBank, ReservoirBuffer, enumerate_pairs, reservoir_fill
from .signal.stft import STFTConfig, spectrogram
from .signal.synth import perturb_session, random_subject, synth_gait
from .signal.trace import SensorTrace


@dataclass(frozen=True)
class CohortConfig:
    n_subjects: int = 8
    duration: float = 200.0  # seconds per subject
    sample_rate: float = 50.0
    train_fraction: float = 0.7
    harmonics: int = 8
    noise_std: float = 0.3
    image_hop: int = 30  # samples between consecutive images
    seed: int = 0
    # full spectrogram settings; its image_hop is replaced by the field above
    spectral: STFTConfig | None = None

    def __post_init__(self):
        if self.n_subjects < 1:
            raise ValueError("n_subjects must be >= 1")
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must be in (0, 1)")

    @property
    def stft(self) -> STFTConfig:
        return replace(self.spectral or STFTConfig(), image_hop=self.image_hop)


@dataclass
class SubjectData:
    subject_id: str
    trace: SensorTrace
    train_trace: SensorTrace
    test_trace: SensorTrace
    train_images: np.ndarray = field(repr=False)
    test_images: np.ndarray = field(repr=False)
    spec: object = None  # generating model, for synthetic subjects


def _pixels(trace, cfg):
    return np.stack([im.pixels for im in spectrogram(trace, cfg)])


def split_trace(trace: SensorTrace, cfg: CohortConfig, spec=None) -> SubjectData:
    """Split a recording by time into train and test parts and image both."""
    cut = int(round(cfg.train_fraction * len(trace)))
    train = trace.with_samples(trace.samples[:cut])
    test = trace.with_samples(trace.samples[cut:])
    return SubjectData(trace.subject_id, trace, train, test,
                       _pixels(train, cfg.stft), _pixels(test, cfg.stft), spec)


def subject_data(spec, cfg: CohortConfig, offset=0.0) -> SubjectData:
    """Record one synthetic subject and split it."""
    trace = synth_gait(spec, cfg.duration, cfg.sample_rate, offset=offset)
    return split_trace(trace, cfg, spec)


def subject_specs(cfg: CohortConfig, prefix="s"):
    rng = np.random.default_rng(cfg.seed)
    return [random_subject(rng, f"{prefix}{i:03d}", cfg.harmonics, cfg.noise_std)
            for i in range(cfg.n_subjects)]


def make_cohort(cfg: CohortConfig, prefix="s") -> list[SubjectData]:
    return [subject_data(spec, cfg) for spec in subject_specs(cfg, prefix)]


def second_session(cohort, cfg: CohortConfig, cadence_shift=0.2, amplitude_jitter=0.5,
                   seed=1) -> list[SubjectData]:
    """Re-record every subject with perturbed cadence and harmonic amplitudes."""
    rng = np.random.default_rng([cfg.seed, seed])
    return [subject_data(perturb_session(s.spec, rng, cadence_shift, amplitude_jitter), cfg,
                         offset=cfg.duration)
            for s in cohort]


@dataclass
class OwnerTask:
    """Image bank plus a balanced pair reservoir for one owner vs the rest."""

    bank: ImageBank
    buffer: ReservoirBuffer
    owner_ids: list
    negative_ids: list


def owner_task(owner_images, negative_images, capacity, seed=0, owner_id="owner",
               negative_labels=None, bank=None) -> OwnerTask:
    """Register images in a bank and reservoir-sample the owner's pairs.

    ``negative_images`` is a list of per-subject image arrays.
    """
    bank = bank if bank is not None else ImageBank()
    owner_ids = [bank.add(p, owner_id) for p in owner_images]
    labels = negative_labels or [f"neg{i}" for i in range(len(negative_images))]
    negative_ids = [[bank.add(p, lab) for p in imgs] for lab, imgs in zip(labels, negative_images)]
    positives, negatives = enumerate_pairs(owner_ids, negative_ids)
    buffer = reservoir_fill(negatives, capacity, seed=seed, positives=positives)
    return OwnerTask(bank, buffer, owner_ids, negative_ids)


@dataclass
class PairSet:
    """Held-out pairs as indices into one image stack."""

    images: np.ndarray = field(repr=False)
    left: np.ndarray
    right: np.ndarray
    labels: np.ndarray
    groups: np.ndarray

    def __len__(self):
        return len(self.labels)


def held_out_pairs(owner_images, negative_images, rng, n_negative=None) -> PairSet:
    """All distinct owner pairs plus an equal number of owner-vs-other pairs.

    Negatives are spread evenly over the other subjects; ``groups`` names
    the subject on the right-hand side (0 = owner, i + 1 = i-th other).
    """
    rng = np.random.default_rng(rng)
    n = len(owner_images)
    ii, jj = np.where(~np.eye(n, dtype=bool))
    left, right = [ii], [jj]
    labels = [np.ones(len(ii))]
    groups = [np.zeros(len(ii), dtype=int)]
    per = n_negative or max(1, len(ii) // max(1, len(negative_images)))
    offset = n
    for g, imgs in enumerate(negative_images, start=1):
        left.append(rng.integers(n, size=per))
        right.append(offset + rng.integers(len(imgs), size=per))
        labels.append(np.zeros(per))
        groups.append(np.full(per, g))
        offset += len(imgs)
    images = np.concatenate([owner_images] + list(negative_images))[:, None]
    return PairSet(images, np.concatenate(left), np.concatenate(right),
                   np.concatenate(labels), np.concatenate(groups))


def cohort_task(subject_images, capacity, seed=0, labels=None, bank=None) -> OwnerTask:
    """Pairs over a whole cohort: same-subject pairs positive, cross-subject negative.

    Used for source ("cloud") training ahead of feature transfer.
    """
    bank = bank if bank is not None else ImageBank()
    labels = labels or [f"c{i}" for i in range(len(subject_images))]
    ids = [[bank.add(p, lab) for p in imgs] for lab, imgs in zip(labels, subject_images)]

    def positives():
        for group in ids:
            yield from enumerate_pairs(group, [])[0]

    def negatives():
        for i, group in enumerate(ids):
            yield from enumerate_pairs(group, ids[i + 1:])[1]

    buffer = reservoir_fill(negatives(), capacity, seed=seed, positives=positives())
    return OwnerTask(bank, buffer, [i for g in ids for i in g], [])
