import pytest

from motzkin_tn.config import (
    KIND_DEFAULTS,
    TrainConfig,
    apply_overrides,
    config_from_text,
    config_hash,
    default_config,
    dump_config,
    load_config,
    load_grid,
    parse_assignments,
    resolve,
    validate,
)
from motzkin_tn.errors import ConfigError


@pytest.mark.parametrize("kind", sorted(KIND_DEFAULTS))
def test_defaults_are_valid(kind):
    cfg = default_config(kind)
    assert validate(cfg) is cfg
    for key, value in KIND_DEFAULTS[kind].items():
        assert getattr(cfg, key) == value


def test_resolve_keeps_explicit_dims():
    cfg = resolve(TrainConfig(model_kind="factored", chi_v=5))
    assert (cfg.height, cfg.chi_h, cfg.chi_v) == (2, 3, 5)


def test_parse_ini():
    text = """
[model]
model_kind = skip
n = 12
chi_v = 6   # inline comment

[train]
learning_rate = 0.1
norm_mode = l2_params

[data]
mu = 0.5

[run]
seed = 7
record_timestamps = yes
"""
    cfg = config_from_text(text)
    assert cfg.model_kind == "skip" and cfg.n == 12 and cfg.chi_v == 6
    assert cfg.height == 3 and cfg.chi_h == 2
    assert cfg.learning_rate == 0.1 and cfg.norm_mode == "l2_params"
    assert cfg.mu == 0.5 and cfg.seed == 7 and cfg.record_timestamps is True


def test_unknown_key_reports_line_and_home_section():
    text = "[model]\nn = 8\n[train]\nmu = 0.5\n"
    with pytest.raises(ConfigError) as info:
        config_from_text(text)
    assert info.value.problems == [(4, "unknown key 'mu' in [train] (belongs in [data])")]
    assert str(info.value).startswith("line 4: ")


def test_every_problem_is_collected():
    text = "[bogus]\nx = 1\n[model]\nn = eight\nchi = 3\n"
    with pytest.raises(ConfigError) as info:
        config_from_text(text)
    lines = [line for line, _ in info.value.problems]
    assert lines == [1, 4]


def test_semantic_error_points_at_its_line():
    text = "[model]\nn = 8\n\n[train]\nepochs = 0\n"
    with pytest.raises(ConfigError) as info:
        config_from_text(text)
    assert info.value.problems == [(5, "epochs must be >= 1, got 0")]


def test_key_outside_section():
    with pytest.raises(ConfigError) as info:
        config_from_text("n = 8\n")
    assert info.value.problems[0][0] == 1


def test_bad_enum_value():
    with pytest.raises(ConfigError, match="norm_mode must be one of"):
        config_from_text("[train]\nnorm_mode = max\n")


def test_dump_round_trip():
    cfg = resolve(TrainConfig(model_kind="mlp", n=10, mu=0.25, seed=3, record_timestamps=True))
    assert config_from_text(dump_config(cfg)) == cfg


def test_dump_skips_unset_dims():
    text = dump_config(default_config("dense"))
    assert "chi = 8" in text and "chi_h" not in text


def test_config_hash_tracks_values():
    a = default_config("dense")
    assert config_hash(a) == config_hash(default_config("dense"))
    assert len(config_hash(a)) == 12
    assert config_hash(a) != config_hash(apply_overrides(a, {"seed": "1"}))


def test_overrides_coerce_and_collect():
    cfg = apply_overrides(TrainConfig(), {"n": "10", "alpha": "0.5", "record_timestamps": "off"})
    assert cfg.n == 10 and cfg.alpha == 0.5 and cfg.record_timestamps is False
    with pytest.raises(ConfigError) as info:
        apply_overrides(TrainConfig(), {"bogus": "1", "n": "x"})
    assert len(info.value.problems) == 2


def test_parse_assignments():
    assert parse_assignments(["n=8", " chi = 4 "]) == {"n": "8", "chi": "4"}
    with pytest.raises(ConfigError):
        parse_assignments(["n8"])


def test_load_config_missing(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "none.ini")


def test_load_config_file(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text("[model]\nn = 6\nchi = 2\n", encoding="utf-8")
    cfg = load_config(path)
    assert cfg.n == 6 and cfg.chi == 2


def test_load_grid(tmp_path):
    path = tmp_path / "grid.ini"
    path.write_text("[base]\nn = 6\n\n[grid]\nmodel_kind = dense, mlp\nmu = 1.0,0.5\n", encoding="utf-8")
    base, grid = load_grid(path)
    assert base == {"n": "6"}
    assert grid == {"model_kind": ["dense", "mlp"], "mu": ["1.0", "0.5"]}


def test_load_grid_errors(tmp_path):
    path = tmp_path / "grid.ini"
    path.write_text("[grid]\nwidth = 1, 2\n[extra]\n", encoding="utf-8")
    with pytest.raises(ConfigError) as info:
        load_grid(path)
    assert [line for line, _ in info.value.problems] == [2, 3]
