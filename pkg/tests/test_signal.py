from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import lsq_linear

from gaitsiam.signal.denoise import denoise_trace, gaussian_filter, total_variation, tv_denoise
from gaitsiam.signal.noise import NoiseSpec, inject_noise, moving_std
from gaitsiam.signal.pedometer import count_steps, pedometer_error
from gaitsiam.signal.stft import (
    STFTConfig,
    TraceTooShortError,
    image_stack,
    spectrogram,
    stacked_log_magnitude,
)
from gaitsiam.signal.synth import SyntheticSubjectSpec, perturb_session, random_subject, synth_gait
from gaitsiam.signal.trace import (
    EmptyTraceError,
    MissingColumnsError,
    NonMonotoneTimeError,
    SensorTrace,
    ingest_csv,
    write_csv,
)


def write_rows(path, header, rows):
    lines = [",".join(header)] + [",".join(map(str, r)) for r in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def flat_trace(n=600, rate=50.0):
    return SensorTrace(rate, np.zeros((n, 3)))


def sine_spec(freq=2.0, harmonics=3):
    amps = np.zeros((3, harmonics))
    amps[2, 0] = 2.0
    amps[0, 1] = 0.5
    return SyntheticSubjectSpec(freq, amps, np.zeros_like(amps), noise_std=0.0)


# --- trace -------------------------------------------------------------------

def test_ingest_four_rows(tmp_path):
    rows = [(0.00, 1, 2, 3), (0.02, 1, 2, 3), (0.04, 1, 2, 3), (0.06, 1, 2, 3)]
    trace = ingest_csv(write_rows(tmp_path / "a.csv", ["t", "ax", "ay", "az"], rows))
    assert len(trace) == 4
    assert trace.sample_rate == pytest.approx(50.0)
    assert trace.subject_id == "a"


def test_ingest_errors(tmp_path):
    with pytest.raises(NonMonotoneTimeError):
        ingest_csv(write_rows(tmp_path / "b.csv", ["t", "ax", "ay", "az"],
                              [(0.0, 0, 0, 0), (0.1, 0, 0, 0), (0.05, 0, 0, 0)]))
    with pytest.raises(MissingColumnsError):
        ingest_csv(write_rows(tmp_path / "c.csv", ["t", "ax", "ay"], [(0.0, 0, 0)]))
    (tmp_path / "d.csv").write_text("")
    with pytest.raises(EmptyTraceError):
        ingest_csv(tmp_path / "d.csv")
    with pytest.raises(EmptyTraceError):
        ingest_csv(write_rows(tmp_path / "e.csv", ["t", "ax", "ay", "az"], []))


def test_resampling_matches_interpolation_oracle(tmp_path, rng):
    t = np.arange(200) / 100.0
    vals = rng.standard_normal((200, 3))
    trace = ingest_csv(write_rows(tmp_path / "r.csv", ["t", "ax", "ay", "az"],
                                  [(repr(float(a)), *map(repr, map(float, v))) for a, v in zip(t, vals)]),
                       sample_rate=50.0)
    assert len(trace) == 100
    for j, tq in enumerate(np.arange(100) / 50.0):
        i = int(np.searchsorted(t, tq, side="right")) - 1
        i = min(i, len(t) - 2)
        w = (tq - t[i]) / (t[i + 1] - t[i])
        expected = (1 - w) * vals[i] + w * vals[i + 1]
        np.testing.assert_allclose(trace.samples[j], expected, atol=1e-12)


def test_csv_round_trip(tmp_path, rng):
    trace = SensorTrace(50.0, rng.standard_normal((30, 3)), "x")
    write_csv(trace, tmp_path / "x.csv")
    back = ingest_csv(tmp_path / "x.csv", sample_rate=50.0)
    np.testing.assert_allclose(back.samples, trace.samples, atol=1e-12)


# --- spectrogram -------------------------------------------------------------

def test_zero_trace_gives_log_floor():
    cfg = STFTConfig()
    images = spectrogram(flat_trace(cfg.span), cfg, normalize=False)
    assert len(images) == 1
    assert np.all(images[0].pixels == cfg.log_floor)
    # standardized constant images are zeros rather than NaN
    assert np.all(spectrogram(flat_trace(cfg.span), cfg)[0].pixels == 0)


def test_bin_center_sinusoid_concentrates_in_one_row():
    # rectangular window: a bin-centred tone leaks nothing into other bins
    cfg = STFTConfig(window="boxcar")
    rate, bin_ = 50.0, 4
    t = np.arange(cfg.span) / rate
    x = np.zeros((cfg.span, 3))
    x[:, 0] = np.sin(2 * np.pi * bin_ * rate / cfg.fft_len * t)
    pixels = spectrogram(SensorTrace(rate, x), cfg, normalize=False)[0].pixels
    energy = (np.exp(pixels[:11]) ** 2).sum(axis=1)
    assert energy.argmax() == bin_
    assert energy[bin_] / energy.sum() >= 0.9


def test_hann_window_main_lobe_share():
    # with the default Hann window a bin-centred tone splits 4:1:1 in magnitude
    # between its bin and the two neighbours
    cfg = STFTConfig()
    t = np.arange(cfg.window_len) / 50.0
    x = np.zeros((cfg.window_len, 3))
    x[:, 0] = np.sin(2 * np.pi * 4 * 50.0 / cfg.fft_len * t)
    mag = np.exp(stacked_log_magnitude(x, cfg)[:11, 0])
    np.testing.assert_allclose(mag[3:6] / mag[4], [0.5, 1.0, 0.5], atol=1e-9)


def test_image_shape_and_count():
    cfg = STFTConfig(image_hop=30)
    trace = synth_gait(sine_spec(), 20.0, 50.0)
    images = spectrogram(trace, cfg)
    assert len(images) == (len(trace) - cfg.span) // 30 + 1
    assert all(im.pixels.shape == (33, 42) for im in images)
    assert image_stack(images).shape == (len(images), 1, 33, 42)


def test_short_trace_error_states_length():
    cfg = STFTConfig()
    with pytest.raises(TraceTooShortError, match=str(cfg.span)):
        spectrogram(flat_trace(cfg.span - 1), cfg)


@given(st.integers(0, 200))
def test_spectrogram_always_33_by_42(extra):
    cfg = STFTConfig()
    trace = SensorTrace(50.0, np.random.default_rng(extra).standard_normal((cfg.span + extra, 3)))
    assert {im.pixels.shape for im in spectrogram(trace, cfg)} == {(33, 42)}


# --- synthetic gait ----------------------------------------------------------

def test_noise_free_single_harmonic_is_exact_sine():
    amps = np.zeros((3, 3))
    amps[0, 0] = 1.0
    spec = SyntheticSubjectSpec(2.0, amps, np.zeros((3, 3)), noise_std=0.0, gravity=(0, 0, 0))
    trace = synth_gait(spec, 2.0, 50.0)
    t = np.arange(100) / 50.0
    np.testing.assert_allclose(trace.samples[:, 0], np.sin(2 * np.pi * 2.0 * t), atol=1e-12)
    assert not np.any(trace.samples[:, 1:])


def test_synth_deterministic():
    spec = random_subject(3)
    a, b = synth_gait(spec, 5.0, 50.0), synth_gait(spec, 5.0, 50.0)
    assert np.array_equal(a.samples, b.samples)


def test_cadence_moves_dominant_row():
    # the x axis carries only the second harmonic, at 3.2 Hz vs 4.4 Hz
    cfg = STFTConfig()
    rows = []
    for f in (1.6, 2.2):
        trace = synth_gait(sine_spec(f), 10.0, 50.0)
        pixels = spectrogram(trace, cfg, normalize=False)[0].pixels[:11]
        rows.append(int(np.exp(pixels).sum(axis=1).argmax()))
    # DFT oracle: a tone at g Hz peaks in bin round(g * fft_len / rate)
    assert rows == [round(3.2 * 32 / 50), round(4.4 * 32 / 50)]
    assert rows[0] != rows[1]


def test_spec_validation():
    with pytest.raises(ValueError):
        SyntheticSubjectSpec(5.0, np.ones((3, 3)), np.zeros((3, 3)))
    with pytest.raises(ValueError):
        SyntheticSubjectSpec(2.0, np.ones((3, 2)), np.zeros((3, 2)))


def test_perturbed_session_stays_in_cadence_range(rng):
    for i in range(20):
        spec = perturb_session(random_subject(i), rng)
        assert 1.4 <= spec.fundamental_freq <= 2.6


# --- noise -------------------------------------------------------------------

def test_zero_noise_is_identity(rng):
    trace = SensorTrace(50.0, rng.standard_normal((300, 3)))
    for spec in (NoiseSpec(std_scale=0.0), NoiseSpec("sinusoid", sinusoid_amp_ratio=0.0)):
        assert np.array_equal(inject_noise(trace, spec).samples, trace.samples)


def test_gaussian_noise_on_zeros_is_zero():
    out = inject_noise(flat_trace(), NoiseSpec("gaussian", std_scale=1.0))
    assert not np.any(out.samples)


@pytest.mark.parametrize("kind", ["gaussian", "laplacian", "uniform"])
def test_added_noise_std_tracks_window_std(kind):
    rng = np.random.default_rng(11)
    trace = SensorTrace(50.0, rng.standard_normal((10_000, 3)))
    added = inject_noise(trace, NoiseSpec(kind, std_scale=1.0, seed=4)).samples - trace.samples
    assert 0.9 <= added.std() <= 1.1


def test_sinusoid_fingerprint_is_seeded():
    trace = synth_gait(random_subject(0), 10.0, 50.0)
    a = inject_noise(trace, NoiseSpec("sinusoid", seed=5))
    b = inject_noise(trace, NoiseSpec("sinusoid", seed=5))
    c = inject_noise(trace, NoiseSpec("sinusoid", seed=6))
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, c.samples)


def test_moving_std_matches_direct_loop(rng):
    x = rng.standard_normal(40)
    out = moving_std(x, 7)
    for i in range(6, 40):
        assert out[i] == pytest.approx(x[i - 6:i + 1].std(), abs=1e-12)
    assert np.all(out[:6] == out[6])


# --- denoising ---------------------------------------------------------------

def tv_oracle(x, lam):
    """Dual box-constrained least squares: u = x - D^T z with |z| <= lam."""
    n = len(x)
    D = np.diff(np.eye(n), axis=0)
    res = lsq_linear(D.T, x, bounds=(-lam, lam), method="bvls", tol=1e-15)
    return x - D.T @ res.x


def test_tv_vanishing_lambda_is_identity(rng):
    x = rng.standard_normal(50)
    np.testing.assert_allclose(tv_denoise(x, 1e-12), x, atol=1e-9)


@given(st.floats(-5, 5), st.floats(1e-3, 10))
def test_tv_constant_unchanged(c, lam):
    np.testing.assert_allclose(tv_denoise(np.full(20, c), lam), c, atol=1e-12)


def test_tv_spike_matches_qp_oracle():
    x = np.r_[np.zeros(20), np.ones(20), np.zeros(24)]
    x[30] = 4.0
    for lam in (0.3, 0.8):
        np.testing.assert_allclose(tv_denoise(x, lam), tv_oracle(x, lam), atol=1e-8)


@given(st.integers(2, 64), st.floats(0.01, 3.0), st.integers(0, 2**16))
def test_tv_matches_qp_oracle_on_random_signals(n, lam, seed):
    x = np.random.default_rng(seed).standard_normal(n) * 2
    u = tv_denoise(x, lam)
    np.testing.assert_allclose(u, tv_oracle(x, lam), atol=1e-8)
    assert total_variation(u) <= total_variation(x) + 1e-12
    assert u.mean() == pytest.approx(x.mean(), abs=1e-10)


def test_gaussian_filter_constant_and_impulse():
    np.testing.assert_allclose(gaussian_filter(np.full(30, 2.5), 3.0), 2.5, atol=1e-12)
    sigma = 2.0
    x = np.zeros(41)
    x[20] = 1.0
    radius = int(4 * sigma + 0.5)
    k = np.exp(-0.5 * (np.arange(-radius, radius + 1) / sigma) ** 2)
    k /= k.sum()
    np.testing.assert_allclose(gaussian_filter(x, sigma)[20 - radius:21 + radius], k, atol=1e-15)


def test_gaussian_filter_shrinks_white_noise_variance(rng):
    x = rng.standard_normal(5000)
    assert gaussian_filter(x, 5.0).var() < x.var()


def test_denoise_trace_rejects_unknown(rng):
    trace = SensorTrace(50.0, rng.standard_normal((20, 3)))
    with pytest.raises(ValueError):
        denoise_trace(trace, "median", 1.0)
    assert denoise_trace(trace, "tv", 0.5).samples.shape == (20, 3)


# --- pedometer ---------------------------------------------------------------

def test_flat_trace_has_no_steps():
    assert count_steps(flat_trace()) == 0


def test_two_hertz_walk_counts_twenty_steps():
    spec = replace(random_subject(2), fundamental_freq=2.0, noise_std=0.0)
    assert abs(count_steps(synth_gait(spec, 10.0, 50.0)) - 20) <= 1


def test_pedometer_error_identity():
    trace = synth_gait(random_subject(1), 20.0, 50.0)
    assert pedometer_error(trace, trace) == 0.0
