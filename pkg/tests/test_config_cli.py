import json
from pathlib import Path

import pytest

from skewpulse import __version__, cli
from skewpulse.config import DEFAULTS, ConfigError, load_config, parse_config

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data, indent=2) if not isinstance(data, str) else data)
    return str(path)


@pytest.fixture(scope="module")
def scalar_profile(tmp_path_factory, scalar):
    from skewpulse.pulse import save_profile

    path = tmp_path_factory.mktemp("prof") / "scalar.csv"
    save_profile(scalar[1], path)
    return str(path)


@pytest.fixture
def scalar_cfg(tmp_path):
    return write(tmp_path, {
        "model": {"kind": "scalar", "params": {}},
        "spectrum": {"N": 1000},
        "evolve": {"t_final": 2.0, "snapshots": 40},
    })


def test_unknown_key_reports_line():
    text = '{\n  "model": {"kind": "scalar"},\n  "pulse": {\n    "halfwidth": 3\n  }\n}'
    with pytest.raises(ConfigError, match=r"cfg:4: unknown key 'pulse.halfwidth'"):
        parse_config(text, "cfg")


def test_unknown_section_and_param():
    with pytest.raises(ConfigError, match="unknown key 'plots'"):
        parse_config('{"plots": {}}')
    text = '{"model": {"kind": "fhn",\n "params": {"d": 1, "tau": 1, "gamma": 1, "beta": 1,\n "delta": 2}}}'
    with pytest.raises(ConfigError, match=r":3: unknown key 'model.params.delta'"):
        parse_config(text)


def test_json_syntax_error_line():
    with pytest.raises(ConfigError, match=r"x:3:"):
        parse_config('{\n "model": {"kind": "scalar"},\n ]', "x")


def test_missing_params_and_bad_kind():
    with pytest.raises(ConfigError, match="missing"):
        parse_config('{"model": {"kind": "fhn", "params": {"d": 1}}}')
    with pytest.raises(ConfigError, match="model.kind"):
        parse_config('{"model": {"kind": "gray-scott"}}')


def test_defaults_filled_and_hash_stable():
    a = parse_config('{"model": {"kind": "scalar"}}')
    b = parse_config('{ "model" : { "kind" : "scalar", "params": {} } }')
    assert a["spectrum"] == DEFAULTS["spectrum"]
    assert a.sha256 == b.sha256
    assert parse_config('{"evolve": {"seed": 5}}').sha256 != a.sha256


def test_help_documents_every_default():
    text = cli.build_parser().format_help()
    for section, keys in DEFAULTS.items():
        for key, value in keys.items():
            assert f"{section}.{key}" in text
            assert f"[{json.dumps(value)}]" in text
    assert "exit codes" in text


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.json")))
def test_shipped_configs_parse(name):
    cfg = load_config(CONFIGS / name)
    assert cfg.build_model().kind in ("scalar", "fhn")


def test_hyp_check_beta_nonpositive_exits_3(tmp_path, capsys):
    path = write(tmp_path, {"model": {"kind": "fhn", "params": {"d": 1, "tau": 1, "gamma": 1, "beta": -0.1}}})
    assert cli.main(["hyp", "check", "-c", path, "--json"]) == cli.EXIT_HYPOTHESIS
    rep = json.loads(capsys.readouterr().out)
    assert rep["h1_holds"] is False


def test_config_error_exit_code(tmp_path, capsys):
    path = write(tmp_path, '{"model": {"kind": "scalar"}, "spectrum": {"n": 3}}')
    assert cli.main(["spectrum", "eig", "-c", path]) == cli.EXIT_ERROR
    assert "unknown key 'spectrum.n'" in capsys.readouterr().err


def test_bad_profile_exit_code(tmp_path, scalar_cfg, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("t,w1\n")
    assert cli.main(["index", "criterion", "-c", scalar_cfg, "-p", str(bad)]) == cli.EXIT_ERROR
    assert "line 1" in capsys.readouterr().err


def test_pulse_solve(tmp_path, scalar_cfg, capsys):
    out = tmp_path / "p.csv"
    assert cli.main(["pulse", "solve", "-c", scalar_cfg, "-o", str(out), "--json"]) == cli.EXIT_OK
    rep = json.loads(capsys.readouterr().out)
    assert out.exists() and (tmp_path / "p.csv.meta.json").exists()
    assert rep["residual_norm"] < 1e-10 and rep["version"] == __version__


def test_scalar_verdict(scalar_cfg, scalar_profile, capsys):
    assert cli.main(["verdict", "-c", scalar_cfg, "-p", scalar_profile, "--json"]) == cli.EXIT_UNSTABLE
    rep = json.loads(capsys.readouterr().out)
    assert rep["i_w0"] == 1 and rep["spectral_flow"] == 1 and rep["spectrum"]["n_plus"] == 1
    assert rep["verdict"]["kind"] == "Unstable" and rep["cross_check"] == []
    assert rep["config_sha256"] == load_config(scalar_cfg).sha256


def test_fhn_above_tau0_verdict(tmp_path, fhn_a_high, capsys):
    from skewpulse.pulse import save_profile

    model, prof = fhn_a_high
    path = tmp_path / "a.csv"
    save_profile(prof, path)
    cfg = write(tmp_path, {"model": {"kind": "fhn", "params": model.params}})
    assert cli.main(["verdict", "-c", cfg, "-p", str(path), "--json"]) == cli.EXIT_UNSTABLE
    rep = json.loads(capsys.readouterr().out)
    assert "criterion integral negative" in rep["verdict"]["reason"]
    assert rep["criterion_integral"] < 0


def test_cross_check_failure_exit_4(scalar_cfg, scalar_profile, monkeypatch, capsys):
    monkeypatch.setattr(cli, "stage_sf", lambda cfg, model, profile: (0, []))
    assert cli.main(["verdict", "-c", scalar_cfg, "-p", scalar_profile]) == cli.EXIT_CROSS_CHECK
    assert "internal cross-check failed" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["index", "criterion"],
    ["index", "maslov"],
    ["evolve", "run", "--seed", "3"],
])
def test_reports_byte_identical(tmp_path, scalar_cfg, scalar_profile, argv):
    outs = []
    for k in range(2):
        out = tmp_path / f"r{k}.json"
        assert cli.main([*argv, "-c", scalar_cfg, "-p", scalar_profile, "-o", str(out)]) == cli.EXIT_OK
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    rep = json.loads(outs[0])
    assert rep["config_sha256"] and rep["version"] == __version__


def test_seed_changes_evolution(tmp_path, scalar_cfg, scalar_profile):
    reports = []
    for seed in ("1", "2"):
        out = tmp_path / f"e{seed}.json"
        cli.main(["evolve", "run", "-c", scalar_cfg, "-p", scalar_profile, "--seed", seed, "-o", str(out)])
        reports.append(json.loads(out.read_text()))
    assert reports[0]["growth_rate"] != reports[1]["growth_rate"]


def test_report_all(tmp_path, scalar_cfg, scalar_profile):
    out = tmp_path / "rep"
    code = cli.main(["report", "all", "-c", scalar_cfg, "-p", scalar_profile, "-o", str(out)])
    assert code == cli.EXIT_UNSTABLE
    bundle = json.loads((out / "report.json").read_text(encoding="utf-8"))
    for name in bundle["files"]:
        lines = (out / name).read_text().splitlines()
        assert len(lines) > 2
    assert (out / "angle_trace.csv").read_text().startswith("tau,min_sine")
    assert (out / "evans_gap.csv").read_text().startswith("lambda,evans_gap")
    assert bundle["verdict"]["verdict"]["kind"] == "Unstable"
    assert bundle["spectrum"]["n_plus"] == 1
    assert bundle["config_sha256"] == load_config(scalar_cfg).sha256
