import pytest

from pulse_critic.config import Config, load_config, parse_config
from pulse_critic.errors import ConfigError
from pulse_critic.solver import SolverConfig


def test_minimal_config_gets_defaults():
    cfg = parse_config("p = 3\neps0 = 0.5\ndelta = 0.05\n")
    assert isinstance(cfg, Config)
    assert cfg.data["p"] == 3 and cfg.data["eps0"] == 0.5 and cfg.data["delta"] == 0.05
    assert cfg.data["amplitude"] == 1.0 and cfg.data["width"] == 0.4
    assert cfg.solver["cfl"] == 0.4 and cfg.solver["order"] == 4 and cfg.solver["t_max"] == 50.0
    assert cfg.geometry["curves"] == 65
    sc = cfg.solver_config()
    assert isinstance(sc, SolverConfig) and sc.fit_window is None and sc.track_geometry


@pytest.mark.parametrize("text,line", [
    ("p = 3\neps0 = 1.2\ndelta = 0.05", 2),
    ("p = 2.5\neps0 = 0.5\ndelta = 0.05", 1),
    ("p = 0\neps0 = 0.5\ndelta = 0.05", 1),
    ("p = 3\neps0 = 0.5\ndelta = 0.05\ncfl = 0.95", 4),
    ("p = 3\neps0 = 0.5\ndelta = 0.05\n\n# note\nbogus = 1", 6),
    ("p = 3\neps0 = 0.5\ndelta = abc", 3),
    ("p = 3\np = 4\neps0 = 0.5\ndelta = 0.05", 2),
    ("[nowhere]\np = 3", 1),
    ("p 3", 1),
])
def test_invalid_configs_report_line_numbers(text, line):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.line == line
    assert f"line {line}" in str(info.value)


def test_missing_required_key():
    with pytest.raises(ConfigError, match="delta"):
        parse_config("p = 3\neps0 = 0.5\n")


def test_sections_and_comments():
    text = """
    # a run
    [data]
    p = 1          # sub-critical
    eps0 = 0.5
    delta = 0.1
    amplitude = 0.5
    [solver]
    t_max = 2
    fit_t_lo = 1.2
    fit_t_hi = 2
    [geometry]
    curves = 9
    eikonal = no
    """
    cfg = parse_config(text)
    assert cfg.data["amplitude"] == 0.5 and cfg.solver["t_max"] == 2.0
    sc = cfg.solver_config()
    assert sc.fit_window == (1.2, 2.0) and sc.curves == 9 and not sc.eikonal


def test_key_in_wrong_section_is_rejected():
    with pytest.raises(ConfigError) as info:
        parse_config("[solver]\np = 3\neps0 = 0.5\ndelta = 0.1")
    assert info.value.line == 2


def test_fit_window_must_be_ordered():
    with pytest.raises(ConfigError):
        parse_config("p = 3\neps0 = 0.5\ndelta = 0.1\nfit_t_lo = 5\nfit_t_hi = 2")


def test_sweep_mode_lists_and_exclusions():
    text = "p = 1, 2, 3\neps0 = 0.5\ndelta = 0.1, 0.05\nt_max = 1.5\nexclude = p=2 & delta=0.05 ; p=3\nworkers = 2"
    cfg = parse_config(text, mode="sweep")
    assert cfg.sweep["p"] == [1, 2, 3] and cfg.sweep["delta"] == [0.1, 0.05]
    assert cfg.sweep["amplitude"] == [1.0] and cfg.sweep["workers"] == 2
    assert cfg.sweep["exclude"] == [{"p": 2.0, "delta": 0.05}, {"p": 3.0}]


@pytest.mark.parametrize("text", [
    "p = 1\neps0 = 0.5\ndelta = ,",
    "p = 1, 2.5\neps0 = 0.5\ndelta = 0.1",
    "p = 1\neps0 = 0.5\ndelta = 0.1\nexclude = q=1",
    "p = 1\neps0 = 0.5\ndelta = 0.1\nexclude = p",
])
def test_bad_sweep_configs(text):
    with pytest.raises(ConfigError):
        parse_config(text, mode="sweep")


def test_unknown_mode():
    with pytest.raises(ValueError):
        parse_config("p = 3", mode="other")


def test_load_config_reads_files(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("p = 3\neps0 = 0.5\ndelta = 0.05\n", encoding="utf-8")
    assert load_config(path).data["p"] == 3
