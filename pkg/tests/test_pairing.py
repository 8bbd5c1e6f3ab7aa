import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import chisquare

from gaitsiam.data import held_out_pairs, owner_task
from gaitsiam.pairing import (
    ImageBank,
    PairRecord,
    ReservoirBuffer,
    balanced_batches,
    enumerate_pairs,
    make_defense_pairs,
    reservoir_fill,
)
from gaitsiam.signal.noise import NoiseSpec
from gaitsiam.signal.stft import STFTConfig
from gaitsiam.signal.synth import random_subject, synth_gait


def counts(owner, negatives):
    pos, neg = enumerate_pairs(owner, negatives)
    return len(list(pos)), len(list(neg))


def test_pair_counts():
    assert counts(range(3), [range(2)] * 4) == (9, 24)
    assert counts(range(3), []) == (9, 0)
    pos, _ = enumerate_pairs([7], [])
    assert list(pos) == [PairRecord(7, 7, 1)]


@given(st.integers(1, 6), st.integers(0, 4), st.integers(1, 4))
def test_pair_count_formula(r, ns, s):
    assert counts(range(r), [range(s)] * ns) == (r * r, ns * r * s)


def test_stream_shorter_than_capacity_is_kept_whole():
    stream = [PairRecord(i, i, 0) for i in range(5)]
    assert reservoir_fill(stream, 5).negatives == stream
    assert len(reservoir_fill([], 3)) == 0


def test_reservoir_inclusion_is_uniform():
    hits = np.zeros(5)
    stream = [PairRecord(i, i, 0) for i in range(5)]
    for seed in range(20_000):
        for rec in reservoir_fill(stream, 2, seed=seed).negatives:
            hits[rec.left] += 1
    freq = hits / 20_000
    assert np.all(np.abs(freq - 0.4) <= 0.02)
    assert chisquare(hits).pvalue > 0.01


@given(st.integers(1, 8), st.integers(0, 60), st.integers(0, 60), st.integers(0, 2**16))
def test_buffer_never_exceeds_two_r(R, n_pos, n_neg, seed):
    buf = reservoir_fill((PairRecord(i, i, 0) for i in range(n_neg)), R, seed=seed,
                         positives=(PairRecord(i, i, 1) for i in range(n_pos)))
    assert buf.peak_resident <= 2 * R
    assert len(buf.positives) == min(R, n_pos)
    assert len(buf.negatives) == min(R, n_neg)


def test_defense_slots_are_carved_from_negative_half():
    buf = ReservoirBuffer(10, defense_capacity=4)
    reservoir_fill((PairRecord(i, i, 0) for i in range(50)), 10, buffer=buf,
                   defense=[PairRecord(i, 100 + i, 0) for i in range(20)])
    assert len(buf.regular) == 6 and len(buf.defense) == 4
    assert len(buf.negatives) == 10
    with pytest.raises(ValueError):
        ReservoirBuffer(10).offer_defense(PairRecord(0, 1, 0))
    with pytest.raises(ValueError):
        ReservoirBuffer(4, defense_capacity=4)


def test_reservoir_deterministic_per_seed():
    stream = [PairRecord(i, i, 0) for i in range(100)]
    a = reservoir_fill(stream, 10, seed=3).negatives
    assert a == reservoir_fill(stream, 10, seed=3).negatives
    assert a != reservoir_fill(stream, 10, seed=4).negatives


def test_buffer_csv(tmp_path):
    buf = reservoir_fill([PairRecord(0, 1, 0)], 2, positives=[PairRecord(0, 0, 1)])
    buf.dump_csv(tmp_path / "b.csv")
    assert (tmp_path / "b.csv").read_text().splitlines() == ["left_id,right_id,y", "0,0,1", "0,1,0"]


# --- defense pairs -----------------------------------------------------------

def genuine_segments(n=1):
    cfg = STFTConfig()
    trace = synth_gait(random_subject(0, "owner"), 30.0, 50.0)
    bank = ImageBank()
    out = []
    for i in range(n):
        seg = trace.with_samples(trace.samples[i * cfg.span:(i + 1) * cfg.span])
        out.append((bank.add(np.zeros((33, 42)), "owner"), seg))
    return bank, out


def test_defense_pair_counts_and_labels():
    bank, genuine = genuine_segments(1)
    assert make_defense_pairs(genuine, [], [("tv", 0.5)], bank) == []
    pairs = make_defense_pairs(genuine, [NoiseSpec()], [("tv", 0.5), ("gaussian_filter", 2.0)],
                               bank)
    assert len(pairs) == 3
    assert all(p.y == 0 for p in pairs)
    # the bank agrees although both sides carry the owner's subject id
    assert all(bank.subject_ids[p.right] == "owner" and bank.label(p.left, p.right) == 0
               for p in pairs)


def test_bank_label_rule():
    bank = ImageBank()
    a, b = bank.add(np.zeros(1), "s"), bank.add(np.zeros(1), "s")
    c = bank.add(np.zeros(1), "t")
    d = bank.add(np.zeros(1), "s", defense=True)
    assert [bank.label(a, b), bank.label(a, c), bank.label(a, d)] == [1, 0, 0]


# --- batching ----------------------------------------------------------------

def test_batches_are_balanced_and_cover_the_buffer(rng):
    buf = reservoir_fill((PairRecord(i, i, 0) for i in range(30)), 30,
                         positives=(PairRecord(i, i, 1) for i in range(9)))
    batches = list(balanced_batches(buf, 6, rng))
    assert all(sum(p.y for p in b) == 3 and len(b) == 6 for b in batches)
    seen = {p for b in batches for p in b}
    assert seen == set(buf.positives) | set(buf.negatives)


def test_single_kind_buffer_gives_single_kind_batches(rng):
    buf = reservoir_fill([], 4, positives=[PairRecord(0, 0, 1)] * 3)
    batches = list(balanced_batches(buf, 2, rng))
    assert len(batches) == 2 and all(p.y == 1 for b in batches for p in b)


# --- tasks -------------------------------------------------------------------

def test_owner_task_layout():
    owner = np.zeros((3, 33, 42))
    task = owner_task(owner, [np.ones((2, 33, 42))] * 4, capacity=100)
    assert len(task.bank) == 11
    assert len(task.buffer.positives) == 9 and len(task.buffer.negatives) == 24
    for rec in task.buffer.positives + task.buffer.negatives:
        assert task.bank.label(rec.left, rec.right) == rec.y


def test_held_out_pairs_balanced():
    pairs = held_out_pairs(np.zeros((4, 33, 42)), [np.ones((3, 33, 42))] * 3, 0)
    assert pairs.images.shape == (13, 1, 33, 42)
    assert pairs.labels.sum() == 12 and len(pairs) == 24
    neg = pairs.labels == 0
    assert np.all(pairs.left[neg] < 4) and np.all(pairs.right[neg] >= 4)
    assert set(pairs.groups[neg]) == {1, 2, 3}
