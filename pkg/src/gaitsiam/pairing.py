"""Pair construction and the memory-bounded balanced reservoir."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from itertools import product
from pathlib import Path

import numpy as np

from .signal.denoise import denoise_trace
from .signal.noise import inject_noise
from .signal.stft import STFTConfig, spectrogram


@dataclass(frozen=True)
class PairRecord:
    left: int
    right: int
    y: int


class ImageBank:
    """Append-only store of spectrogram pixels addressed by integer id."""

    def __init__(self):
        self.pixels: list[np.ndarray] = []
        self.subject_ids: list[str] = []
        self.defense: list[bool] = []

    def __len__(self):
        return len(self.pixels)

    def add(self, pixels, subject_id, defense=False) -> int:
        self.pixels.append(np.asarray(pixels, dtype=float))
        self.subject_ids.append(subject_id)
        self.defense.append(bool(defense))
        return len(self.pixels) - 1

    def extend(self, images, defense=False) -> list[int]:
        return [self.add(im.pixels, im.subject_id, defense) for im in images]

    def stack(self, ids) -> np.ndarray:
        return np.stack([self.pixels[i] for i in ids])[:, None]

    def label(self, left, right) -> int:
        """1 iff same subject and neither side is a defense sample."""
        same = self.subject_ids[left] == self.subject_ids[right]
        return int(same and not self.defense[left] and not self.defense[right])


def enumerate_pairs(owner, negatives):
    """Lazy positive and negative pair streams.

    ``owner`` holds the r owner references; ``negatives`` holds n_s classes
    of s references each.  Yields r^2 positives (self-pairs included) and
    n_s * r * s negatives.
    """
    owner = list(owner)
    negatives = [list(cls) for cls in negatives]
    positives = (PairRecord(a, b, 1) for a, b in product(owner, owner))
    negs = (PairRecord(o, n, 0) for cls in negatives for o in owner for n in cls)
    return positives, negs


@dataclass
class ReservoirBuffer:
    """Balanced pair buffer: R positive slots and R negative slots.

    ``defense_capacity`` of the negative slots are set aside for defense
    pairs (genuine vs obfuscated), which keep their own reservoir so they
    are not drowned out by the much longer stream of ordinary negatives.
    """

    capacity: int
    seed: int = 0
    defense_capacity: int = 0
    positives: list = field(default_factory=list)
    regular: list = field(default_factory=list)
    defense: list = field(default_factory=list)
    records_seen: int = 0
    positives_seen: int = 0
    defense_seen: int = 0
    peak_resident: int = 0

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("capacity R must be >= 1")
        if not 0 <= self.defense_capacity < self.capacity:
            raise ValueError("defense_capacity must be in [0, R)")
        self._rng = np.random.default_rng(self.seed)

    def __len__(self):
        return len(self.positives) + len(self.regular) + len(self.defense)

    @property
    def negatives(self) -> list:
        return self.regular + self.defense

    def _offer(self, slots, seen, capacity, record):
        if seen <= capacity:
            slots.append(record)
        else:
            j = int(self._rng.integers(seen))
            if j < capacity:
                slots[j] = record
        self.peak_resident = max(self.peak_resident, len(self))

    def offer_negative(self, record: PairRecord):
        self.records_seen += 1
        self._offer(self.regular, self.records_seen, self.capacity - self.defense_capacity, record)

    def offer_positive(self, record: PairRecord):
        self.positives_seen += 1
        self._offer(self.positives, self.positives_seen, self.capacity, record)

    def offer_defense(self, record: PairRecord):
        if self.defense_capacity == 0:
            raise ValueError("buffer has no defense slots")
        self.defense_seen += 1
        self._offer(self.defense, self.defense_seen, self.defense_capacity, record)

    def dump_csv(self, path):
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["left_id", "right_id", "y"])
            for rec in self.positives + self.negatives:
                writer.writerow([rec.left, rec.right, rec.y])


def reservoir_fill(stream, R, seed=0, positives=(), buffer=None, defense=(),
                   defense_capacity=0) -> ReservoirBuffer:
    """Single pass over the negative stream keeping a uniform R-subset.

    The first R records are admitted; record T > R replaces a uniformly
    chosen resident with probability R/T.  Positives (at most R when
    R = r^2) and defense pairs go through the same rule on their own slots.
    """
    buf = buffer if buffer is not None else ReservoirBuffer(R, seed, defense_capacity)
    for rec in positives:
        buf.offer_positive(rec)
    for rec in stream:
        buf.offer_negative(rec)
    for rec in defense:
        buf.offer_defense(rec)
    return buf


def make_defense_pairs(genuine, noise_specs, denoisers, bank: ImageBank,
                       cfg: STFTConfig = STFTConfig()):
    """Negative pairs between genuine samples and their noised/denoised copies.

    ``genuine`` is a sequence of ``(image_id, trace_segment)``; each segment
    must cover exactly one image.  ``denoisers`` is a sequence of
    ``(method, param)``.  For every noise spec: one (g, noise(g)) pair, plus
    one (g, denoise(noise(g))) pair per denoiser, all labelled 0.
    """
    pairs = []
    for gi, (ref, segment) in enumerate(genuine):
        for si, spec in enumerate(noise_specs):
            # fresh noise realization per genuine sample
            seed = np.random.SeedSequence([spec.seed, gi, si]).generate_state(1)[0]
            seeded = replace(spec, seed=int(seed))
            noised = inject_noise(segment, seeded)
            variants = [noised] + [denoise_trace(noised, m, p) for m, p in denoisers]
            for variant in variants:
                image = spectrogram(variant, cfg)[0]
                new = bank.add(image.pixels, segment.subject_id, defense=True)
                pairs.append(PairRecord(ref, new, 0))
    return pairs


def balanced_batches(buffer: ReservoirBuffer, batch_size: int, rng):
    """One epoch of 50/50 batches; the smaller half is recycled to match the larger.

    A buffer holding only one kind of pair yields single-kind batches.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    halves = [list(h) for h in (buffer.positives, buffer.negatives) if h]
    if not halves:
        raise ValueError("buffer is empty")
    if len(halves) == 1:
        shares = [batch_size]
    else:
        shares = [batch_size // 2, batch_size - batch_size // 2]
    halves = [[h[i] for i in rng.permutation(len(h))] for h in halves]
    n_batches = max(-(-len(h) // max(share, 1)) for h, share in zip(halves, shares))
    for b in range(n_batches):
        batch = []
        for h, share in zip(halves, shares):
            batch += [h[i % len(h)] for i in range(b * share, (b + 1) * share)]
        yield [batch[i] for i in rng.permutation(len(batch))]
