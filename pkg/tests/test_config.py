"""Config serialization: round trips, defaults, rejection of unknown keys."""

import pytest

from discvc import config as cfg
from discvc.errors import ConfigurationError


def test_default_round_trip():
    run = cfg.RunConfig()
    assert cfg.from_text(cfg.to_text(run)) == run


def test_toy_preset_round_trip():
    run = cfg.toy_preset(seed=7)
    back = cfg.from_text(cfg.to_text(run))
    assert back == run
    assert back.train.seed == 7


def test_partial_file_keeps_defaults():
    run = cfg.from_text("[train]\nsteps = 123\n")
    assert run.train.steps == 123
    assert run.train.batch_size == 16
    assert run.audio.sample_rate == 16000


def test_unknown_section_rejected():
    with pytest.raises(ConfigurationError):
        cfg.from_text("[bogus]\nx = 1\n")


def test_unknown_key_rejected():
    with pytest.raises(ConfigurationError):
        cfg.from_text("[audio]\nbogus = 1\n")


def test_bad_value_rejected():
    with pytest.raises(ConfigurationError):
        cfg.from_text("[train]\nsteps = soon\n")


def test_none_only_where_optional():
    run = cfg.from_text("[eval]\ndtw_margin = none\n")
    assert run.eval.dtw_margin is None
    with pytest.raises(ConfigurationError):
        cfg.from_text("[train]\nsteps = none\n")


def test_bool_parsing():
    assert cfg.from_text("[train]\nno_aux = true\n").train.no_aux is True
    assert cfg.from_text("[train]\nno_aux = FALSE\n").train.no_aux is False
    with pytest.raises(ConfigurationError):
        cfg.from_text("[train]\nno_aux = maybe\n")


def test_overrides_apply_and_validate():
    run = cfg.apply_overrides(cfg.RunConfig(), ["model.codebook_size=32", "eval.dtw_margin=5"])
    assert run.model.codebook_size == 32
    assert run.eval.dtw_margin == 5
    with pytest.raises(ConfigurationError):
        cfg.apply_overrides(run, ["model.nope=1"])
    with pytest.raises(ConfigurationError):
        cfg.apply_overrides(run, ["not-dotted"])


def test_defaults_match_stated_values():
    run = cfg.RunConfig()
    assert run.audio.n_fft == 1024 and run.audio.hop == 256
    assert run.audio.n_mels == 80 and run.audio.fmin == 40.0 and run.audio.fmax == 7600.0
    assert run.model.codebook_size == 128 and run.model.content_dim == 16
    assert run.train.batch_size == 16 and run.train.learning_rate == 2e-4
    assert run.train.t_crop == 128 and run.train.grad_clip == 5.0
    assert run.train.tau_start == 2.0 and run.train.tau_end == 0.5
    assert run.eval.mcd_order == 13
