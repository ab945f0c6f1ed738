import pytest

from evosid.config import KEYS, ExperimentConfig, load_config, parse_config
from evosid.errors import ConfigError


def test_defaults_valid():
    ExperimentConfig().validate()


def test_parse_values_and_comments():
    cfg = parse_config(
        "# comment\n\nkind = seismic  # trailing\nseed=7\nmax_evaluations = none\n"
        "constants = off\nmutation_rate = 0.5\nvariables = x:(0,1,0)\n"
    )
    assert (cfg.kind, cfg.seed, cfg.max_evaluations, cfg.constants) == ("seismic", 7, None, False)
    assert cfg.mutation_rate == 0.5 and cfg.variables == "x:(0,1,0)"
    assert parse_config("max_evaluations = 300").max_evaluations == 300


def test_snapshot_roundtrip():
    cfg = ExperimentConfig(seed=5, max_evaluations=123, constants=False, dt=0.001, fitness="ls")
    text = cfg.to_text()
    assert parse_config(text) == cfg
    assert [line.split(" = ")[0] for line in text.splitlines() if not line.startswith("#")] == list(KEYS)


@pytest.mark.parametrize(
    "text, line, key",
    [
        ("seed = 1\nbogus = 3\n", 2, "bogus"),
        ("seed = x\n", 1, "seed"),
        ("\n\nconstants = maybe\n", 3, "constants"),
        ("seed = 1\nseed = 2\n", 2, "seed"),
        ("seed 1\n", 1, "seed 1"),
    ],
)
def test_parse_errors_report_line_and_key(text, line, key):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.line == line and info.value.key == key
    assert f"line {line}" in str(info.value)


@pytest.mark.parametrize(
    "changes, key",
    [
        (dict(kind="both"), "kind"),
        (dict(grammar="typed"), "grammar"),
        (dict(population_size=0), "population_size"),
        (dict(mutation_rate=1.5), "mutation_rate"),
        (dict(elite_count=100), "elite_count"),
        (dict(exponent_min=1), "exponent_min"),
        (dict(dt=0.0), "dt"),
        (dict(v_min=7000.0), "v_min"),
        (dict(s_gens=4), "s_gens"),
        (dict(l_gens=6), "l_gens"),
        (dict(data="missing.csv"), "data"),
    ],
)
def test_validation_errors(changes, key):
    with pytest.raises(ConfigError) as info:
        ExperimentConfig(**changes).validate()
    assert info.value.key == key


def test_schedule_bounds_can_be_lifted():
    ExperimentConfig(s_gens=2, l_gens=1, schedule_bounds=False).validate()
    ExperimentConfig(s_gens=2, l_gens=1, fitness="ls").validate()


def test_load_config_resolves_paths_and_reports_line(tmp_path):
    (tmp_path / "data.csv").write_text("x\n")
    cfg_path = tmp_path / "run.cfg"
    cfg_path.write_text("seed = 3\ndata = data.csv\n")
    cfg = load_config(str(cfg_path))
    assert cfg.data == str(tmp_path / "data.csv")
    cfg_path.write_text("seed = 3\n\nmutation_rate = 2\n")
    with pytest.raises(ConfigError) as info:
        load_config(str(cfg_path))
    assert info.value.line == 3 and info.value.key == "mutation_rate"
    assert str(cfg_path) in str(info.value)


def test_shipped_configs_load():
    import pathlib

    root = pathlib.Path(__file__).resolve().parents[1] / "configs"
    names = sorted(p.name for p in root.glob("*.cfg"))
    assert names == ["four_region.cfg", "indentation.cfg", "two_layer.cfg"]
    for p in root.glob("*.cfg"):
        load_config(str(p))
