import json
from pathlib import Path

import pytest

from rdslab.cli import main
from rdslab.config import build_config, load_config
from rdslab.errors import ConfigError

CONFIGS = Path(__file__).parent.parent / "configs"


def run_cli(*args):
    return main([str(a) for a in args])


def read(out: Path, name: str):
    return (out / name).read_bytes()


def test_build_config_defaults():
    cfg = build_config({})
    assert cfg.family.expansion > 1.0
    assert cfg.numerics["modes"] == 64
    assert len(cfg.observables()) == 1


def test_config_rejects_bad_probabilities():
    with pytest.raises(ConfigError):
        build_config({"driving": {"probs": [0.7, 0.7]}})
    with pytest.raises(ConfigError):
        build_config({"driving": {"probs": [1.0]}})  # 1 prob for 2 base maps


def test_config_rejects_contracting_family():
    with pytest.raises(ConfigError):
        build_config({"family": {"perturbation": {"sin": [1.4]}}})


def test_config_rejects_budget_violations():
    with pytest.raises(ConfigError):
        build_config({"family": {"base": [{"sin": [0.01] * 20}, {"sin": [0.08]}]}})
    with pytest.raises(ConfigError):
        build_config(
            {"family": {"perturbation": {"cos": [2.0]}}, "limits": {"max_coeff_l1": 1.5}}
        )


def test_config_rejects_eps_outside_interval():
    with pytest.raises(ConfigError):
        build_config({"experiment": {"eps": 0.5}})


def test_cli_invalid_config_exit_code(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[family]\nkind = 'nonsense'\n")
    assert run_cli("density", "--config", bad, "--out", tmp_path / "o") == 1
    missing = tmp_path / "missing.toml"
    assert run_cli("density", "--config", missing, "--out", tmp_path / "o") == 1


def test_cli_density_and_manifest(tmp_path):
    out = tmp_path / "dens"
    code = run_cli(
        "density", "--config", CONFIGS / "doubling.toml",
        "--samples", 2, "--out", out, "--quiet",
    )
    assert code == 0
    assert (out / "density.csv").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["subcommand"] == "density"
    assert manifest["config"]["numerics"]["samples"] == 2
    assert "versions" in manifest and "rdslab" in manifest["versions"]
    summary = json.loads((out / "summary.json").read_text())
    assert summary["all_converged"] is True
    header = (out / "density.csv").read_text().splitlines()[0]
    assert header == "eps,path_id,x,density"


def test_cli_stability_drift_degenerate(tmp_path):
    out = tmp_path / "stab"
    code = run_cli(
        "stability", "--config", CONFIGS / "drift.toml",
        "--samples", 3, "--out", out, "--quiet",
    )
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["beta_vs_eps_log_eps"] == "degenerate"
    assert all(v <= 1e-12 for v in summary["sup_diff"].values())


def test_cli_determinism_across_workers_and_reruns(tmp_path):
    outs = []
    for i, workers in enumerate((1, 2, 1)):
        out = tmp_path / f"run{i}"
        code = run_cli(
            "variance", "--config", CONFIGS / "default.toml",
            "--samples", 6, "--workers", workers, "--out", out, "--quiet",
        )
        assert code == 0
        outs.append(out)
    base_var = read(outs[0], "variance.csv")
    base_terms = read(outs[0], "variance_terms.csv")
    for out in outs[1:]:
        assert read(out, "variance.csv") == base_var
        assert read(out, "variance_terms.csv") == base_terms


def test_cli_seed_override_changes_output(tmp_path):
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    for out, seed in ((out_a, 1), (out_b, 2)):
        code = run_cli(
            "variance", "--config", CONFIGS / "default.toml",
            "--samples", 4, "--seed", seed, "--out", out, "--quiet",
        )
        assert code == 0
    assert read(out_a, "variance.csv") != read(out_b, "variance.csv")
    man = json.loads((out_a / "manifest.json").read_text())
    assert man["seed"] == 1


def test_cli_clt_degenerate_exit_code(tmp_path):
    cfgfile = tmp_path / "cfg.toml"
    cfgfile.write_text(
        (CONFIGS / "doubling.toml").read_text().replace(
            'label = "cos(2pi x)"\ncos = [1.0]', 'label = "one"\nconst = 1.0'
        )
        + "\n"
    )
    out = tmp_path / "clt"
    code = run_cli(
        "clt", "--config", cfgfile, "--samples", 2, "--out", out, "--quiet"
    )
    assert code == 2
    summary = json.loads((out / "summary.json").read_text())
    assert "hypothesis_failure" in summary


def test_cli_spectrum(tmp_path):
    out = tmp_path / "spec"
    cfgfile = tmp_path / "cfg.toml"
    cfgfile.write_text(
        (CONFIGS / "default.toml").read_text().replace(
            "lyapunov_steps = 60", "lyapunov_steps = 20"
        ).replace("lyapunov_eps = [0.0, 0.01, 0.05]", "lyapunov_eps = [0.0]")
    )
    code = run_cli("spectrum", "--config", cfgfile, "--out", out, "--quiet")
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    stats = summary["per_eps"]["0"]
    assert stats["lambdaprime"] > 0.5
    assert abs(stats["lyapunov"]) < 1e-3
    rows = (out / "spectrum.csv").read_text().splitlines()
    assert rows[0] == "eps,n,value,fit"
    assert len(rows) > 10


def test_load_config_files_parse():
    for name in ("default.toml", "doubling.toml", "drift.toml", "rotation.toml"):
        cfg = load_config(CONFIGS / name)
        assert cfg.family.expansion > 1.0
