import pytest
from hypothesis import given, strategies as st

from gaitsiam import pipeline as pl
from gaitsiam.config import ConfigError, RunConfig, dump_config, load_config, parse_config


def test_empty_config_is_defaults():
    assert parse_config("") == RunConfig()
    assert load_config(None) == RunConfig()


def test_defaults_carry_published_settings():
    cfg = RunConfig()
    assert (cfg.loss.margin, cfg.loss.alpha) == (1.5, 0.1)
    assert (cfg.fusion.alpha, cfg.fusion.beta, cfg.fusion.sigma_sq) == (0.01, 0.01, 0.25)
    assert pl.sprt_config(cfg).mu == 0.75


def test_dump_round_trip():
    cfg = parse_config("loss: {margin: 2, mode: contrastive}\ntrain: {R: null}\n")
    assert cfg.loss.margin == 2.0 and isinstance(cfg.loss.margin, float)
    assert cfg.train.R is None
    assert parse_config(dump_config(cfg)) == cfg


@given(st.integers(0, 2**63))
def test_with_seed_sets_every_seed(seed):
    cfg = RunConfig().with_seed(seed)
    assert {cfg.dataset.seed, cfg.model.seed, cfg.train.seed, cfg.threat.seed,
            cfg.threat.noise.seed} == {seed}
    assert RunConfig().train.seed == 0


@pytest.mark.parametrize("text", [
    "train: {learning_rate: 0.1}",
    "bogus: 1",
    "train: [1, 2]",
    "train: {defense: 1}",
    "threat: {kinds: passive}",
    "a: [unclosed",
])
def test_bad_configs_rejected(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.yaml")


def test_config_feeds_library_objects():
    cfg = parse_config("preprocessing: {image_hop: 50}\nfusion: {k: 3}\n")
    assert pl.stft_config(cfg).stride == 50
    assert pl.cohort_config(cfg, n_subjects=2).n_subjects == 2
    assert pl.sprt_config(cfg).k == 3
    assert pl.train_config(cfg).batch_size == 20
    assert pl.noise_spec(cfg).kind == "gaussian"
