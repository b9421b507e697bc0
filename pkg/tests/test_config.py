import pytest

from gsmflow.config import SCHEMA, RunConfig, parse_assignments
from gsmflow.errors import ConfigError


def test_defaults_follow_preset():
    toy, real = RunConfig(), RunConfig({"preset": "real"})
    assert toy["flow.hidden"] == 64 and real["flow.hidden"] == 1024
    assert toy["train.batch_size"] == 64 and real["train.batch_size"] == 256
    assert toy["synth.per_class_count"] == 50 and real["synth.per_class_count"] == 400
    assert toy["train.lr"] == 2e-4 and toy["perturb.beta"] == 0.2 and toy["flow.blocks"] == 5


def test_unknown_key_rejected_by_name():
    with pytest.raises(ConfigError, match="train.learning_rat"):
        RunConfig({"train.learning_rat": "1"})


def test_bad_value_names_key():
    with pytest.raises(ConfigError, match="flow.blocks"):
        RunConfig({"flow.blocks": "five"})
    with pytest.raises(ConfigError, match="perturb.mode"):
        RunConfig({"perturb.mode": "laplace"})
    with pytest.raises(ConfigError, match="synth.temperature"):
        RunConfig({"synth.temperature": "0"})


def test_file_then_override_precedence(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# experiment\ntrain.epochs = 7\nperturb.beta=0.5\n\n")
    cfg = RunConfig.load(path, {"train.epochs": "9"})
    assert cfg["train.epochs"] == 9
    assert cfg["perturb.beta"] == 0.5
    assert cfg["train.gamma"] == SCHEMA["train.gamma"][1]


def test_missing_file_and_malformed_line(tmp_path):
    with pytest.raises(ConfigError, match="nope.cfg"):
        RunConfig.load(tmp_path / "nope.cfg")
    with pytest.raises(ConfigError, match=":2"):
        parse_assignments(["a=1", "garbage"], "x.cfg")


def test_section_seeds_fall_back_to_global():
    cfg = RunConfig({"seed": "7", "synth.seed": "3"})
    assert cfg.train_config().seed == 7
    assert cfg.synthesis_config().seed == 3
    assert cfg.bench_spec().seed == 7


def test_text_roundtrip():
    cfg = RunConfig({"train.epochs": "3", "train.grad_clip": "none"})
    again = RunConfig(parse_assignments(cfg.to_text().splitlines()))
    assert again.values == cfg.values
    assert again.train_config().grad_clip is None
