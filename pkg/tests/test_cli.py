import json
import os

import numpy as np
import pytest

from heatlab.cli import (
    CampaignConfig,
    ConfigError,
    default_config,
    emit_plot_data,
    load_config_file,
    main,
    parse_config_text,
    run_campaign,
)
from heatlab.reports import MarginReport


def test_parse_dotted_config():
    cfg = parse_config_text("""
# a comment
seed = 7
output_dir = somewhere
models.t.kind = torus
models.t.dim = 1
models.t.resolution = 16
checks.ax.check = operator-axioms
checks.ax.model = t
""")
    assert cfg["seed"] == 7
    assert cfg["models"]["t"]["kind"] == "torus"
    assert cfg["checks"]["ax"]["model"] == "t"
    with pytest.raises(ConfigError):
        parse_config_text("not a key value line")


def test_json_config(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"seed": 9, "models": {}, "checks": {}}))
    assert load_config_file(str(path))["seed"] == 9


def test_config_validation_errors():
    with pytest.raises(ConfigError, match="unknown check id"):
        CampaignConfig.from_dict({"checks": {"x": {"check": "bogus"}}})
    with pytest.raises(ConfigError, match="undefined model"):
        CampaignConfig.from_dict({
            "models": {"t": {"kind": "torus", "dim": 1, "resolution": 16}},
            "checks": {"x": {"check": "operator-axioms", "model": "nope"}}})
    with pytest.raises(ConfigError, match=r"checks\.x\.tol_abs"):
        CampaignConfig.from_dict({
            "models": {"t": {"kind": "torus", "dim": 1, "resolution": 16}},
            "checks": {"x": {"check": "operator-axioms", "model": "t",
                             "tol_abs": -1.0}}})
    with pytest.raises(ConfigError, match="models.bad"):
        CampaignConfig.from_dict({"models": {"bad": {"kind": "nonsense"}},
                                  "checks": {}})


def _mini_config(tmp_path, seed=11):
    cfg = CampaignConfig.from_dict({
        "seed": seed,
        "models": {
            "t": {"kind": "torus", "dim": 1, "resolution": 32,
                  "spectral_k": 32},
        },
        "checks": {
            "ax": {"check": "operator-axioms", "model": "t", "n_random": 20},
            "laws": {"check": "kernel-laws", "model": "t"},
            "spec": {"check": "spectrum", "model": "t", "count": 5,
                     "rtol": 0.02},
        },
    })
    cfg.output_dir = os.path.join(tmp_path, "out")
    cfg.cache_dir = os.path.join(tmp_path, "cache")
    return cfg


def test_mini_campaign_and_resume(tmp_path):
    cfg = _mini_config(str(tmp_path))
    assert run_campaign(cfg, log=lambda *a: None) == 0
    out = os.listdir(cfg.output_dir)
    assert "summary.csv" in out and "ax.json" in out
    rep = MarginReport.load(os.path.join(cfg.output_dir, "ax.json"))
    assert rep.passed
    # resumable: completed pairs are reused (results identical)
    before = open(os.path.join(cfg.output_dir, "ax.json"), "rb").read()
    assert run_campaign(cfg, log=lambda *a: None) == 0
    after = open(os.path.join(cfg.output_dir, "ax.json"), "rb").read()
    assert before == after


def test_campaign_failure_exit_code(tmp_path):
    cfg = _mini_config(str(tmp_path))
    cfg.checks["spec"]["rtol"] = 1e-9        # unattainably tight
    assert run_campaign(cfg, log=lambda *a: None) == 1


def test_campaign_reruns_on_config_change(tmp_path):
    cfg = _mini_config(str(tmp_path))
    assert run_campaign(cfg, log=lambda *a: None) == 0
    d1 = MarginReport.load(os.path.join(cfg.output_dir, "ax.json"))
    cfg2 = _mini_config(str(tmp_path), seed=12)   # same dirs, new seed
    assert run_campaign(cfg2, log=lambda *a: None) == 0
    d2 = MarginReport.load(os.path.join(cfg2.output_dir, "ax.json"))
    assert d1.metadata["config_digest"] != d2.metadata["config_digest"]


def test_main_exit_codes(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("checks.x.check = bogus\n")
    assert main(["campaign", "--config", str(bad)]) == 2

    cfgfile = tmp_path / "mini.cfg"
    cfgfile.write_text(
        "models.t.kind = torus\n"
        "models.t.dim = 1\n"
        "models.t.resolution = 32\n"
        "models.t.spectral_k = 32\n"
        "checks.ax.check = operator-axioms\n"
        "checks.ax.model = t\n")
    out = str(tmp_path / "o")
    cache = str(tmp_path / "c")
    assert main(["campaign", "--config", str(cfgfile), "--out", out,
                 "--cache", cache]) == 0
    assert main(["check", "--check", "ax", "--config", str(cfgfile),
                 "--out", out, "--cache", cache]) == 0
    assert main(["build", "--model", "t", "--config", str(cfgfile),
                 "--cache", cache]) == 0


def test_plot_emission(tmp_path, sphere):
    import numpy as np

    from heatlab.checks import check_li_yau, check_volume_regularity
    from heatlab.suites import positive_fields
    from heatlab.models import node_nearest

    model, oracle, spectral = sphere
    suite = positive_fields(model, spectral)[:2]
    rep = check_li_yau(model, oracle, spectral, suite, [0.25, 0.5],
                       mode="general-alpha", alpha=1.0)
    files = emit_plot_data(rep, "li-yau", str(tmp_path))
    header = open(files[0]).readline().strip().split(",")
    assert header == ["t", "node", "lhs", "rhs", "margin"]
    assert open(files[1]).read().startswith("<svg")

    pole = node_nearest(model, [0, 0, 1])
    vol = check_volume_regularity(model, oracle, [pole], [0.35, 0.5, 0.7])
    dfiles = emit_plot_data(vol, "doubling", str(tmp_path))
    rows = [r.split(",") for r in open(dfiles[0]).read().splitlines()]
    assert rows[0] == ["r", "ratio", "monotone_r"]
    assert all(r[2] == "1" for r in rows[1:])

    with pytest.raises(ValueError):
        emit_plot_data(rep, "histogram", str(tmp_path))


def test_entropy_plot_slope_consistency(tmp_path, sphere):
    from heatlab.checks import check_log_sobolev
    from heatlab.suites import positive_fields

    model, oracle, spectral = sphere
    suite = positive_fields(model, spectral)
    rep = check_log_sobolev(model, oracle, spectral, suite,
                            t_grid=np.linspace(0.3, 1.5, 7))
    files = emit_plot_data(rep, "entropy", str(tmp_path))
    lines = open(files[0]).read().splitlines()
    slope_header = float(lines[0].split("=")[1])
    data = np.array([[float(a) for a in ln.split(",")] for ln in lines[2:]])
    refit = np.polyfit(data[:, 0], data[:, 1], 1)[0]
    assert refit == pytest.approx(slope_header, abs=1e-9)
    assert refit == pytest.approx(rep.metadata["entropy_slope"], abs=1e-12)


def test_default_config_is_valid():
    cfg = default_config()
    assert len(cfg.checks) >= 30
    # every check id resolves and every referenced model exists
    from heatlab.cli import CHECK_RUNNERS

    for name, spec in cfg.checks.items():
        assert spec["check"] in CHECK_RUNNERS
        assert spec["model"] in cfg.models
