import csv
import json
import math
import os
import subprocess
import sys

import pytest

from nbafl import report_from_json
from nbafl.cli import (
    BOUNDS_COLUMNS,
    EXIT_COMPUTE,
    EXIT_CONFIG,
    EXIT_OK,
    ConfigError,
    main,
    resolve,
    validate_config,
)
from nbafl.constants import derive_c_from_delta

SMALL = {
    "problem": {"kind": "quadratic", "dim": 3, "seed": 0},
    "privacy": {"epsilon": 10.0, "m": 10, "N": 3, "T": 4},
    "seeds": [0, 1],
}


def _write_config(tmp_path, cfg, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def _read_csv(path):
    with open(path, newline="") as f:
        comment = f.readline()
        assert comment.startswith("# config_fingerprint=")
        fingerprint = comment.strip().split("=", 1)[1]
        rows = list(csv.reader(f))
    return fingerprint, rows[0], rows[1:]


def _stderr_error(capsys):
    err = capsys.readouterr().err.strip().splitlines()[-1]
    return json.loads(err)["error"]


# --- config validation -------------------------------------------------------


def test_validate_config_defaults():
    cfg = validate_config({})
    assert cfg["problem"] == {
        "kind": "quadratic", "dim": 5, "seed": 0,
        "spread": 1.0, "curvature_min": 0.5, "curvature_max": 2.0,
    }
    assert cfg["privacy"]["epsilon"] == 10.0 and cfg["privacy"]["T"] == 20
    assert cfg["assumptions"]["mu"] == 1.0 and cfg["assumptions"]["rho"] is None
    assert cfg["noise_kind"] == "aggregate_matched"
    assert cfg["noiseless"] is False
    assert cfg["seeds"] == [0, 1, 2, 3, 4]
    assert cfg["out_dir"] == "out"


def test_validate_config_logistic_defaults():
    cfg = validate_config({"problem": {"kind": "logistic"}})
    assert cfg["problem"] == {"kind": "logistic", "dim": 5, "seed": 0, "l2_reg": 0.1}


@pytest.mark.parametrize(
    "raw,needle",
    [
        ({"mystery": 1}, "mystery"),
        ({"problem": {"spin": 3}}, "problem.spin"),
        ({"problem": {"kind": "cubic"}}, "problem.kind"),
        ({"problem": {"dim": 0}}, "problem.dim"),
        ({"problem": {"dim": 2.5}}, "problem.dim"),
        ({"problem": {"kind": "logistic", "spread": 1.0}}, "problem.spread"),
        ({"problem": {"kind": "logistic", "l2_reg": 0.0}}, "problem.l2_reg"),
        ({"problem": {"dim": 1}}, "problem.curvature_max"),
        ({"problem": {"curvature_min": 3.0}}, "problem.curvature_max"),
        ({"privacy": {"window": 2}}, "privacy.window"),
        ({"privacy": {"epsilon": "high"}}, "privacy.epsilon"),
        ({"privacy": {"epsilon": True}}, "privacy.epsilon"),
        ({"privacy": {"epsilon": -1.0}}, "privacy.epsilon"),
        ({"privacy": {"delta": 1.5}}, "privacy.delta"),
        ({"privacy": {"T": 0}}, "privacy.T"),
        ({"assumptions": {"mu": 0.0}}, "assumptions.mu"),
        ({"assumptions": {"B": -1.0}}, "assumptions.B"),
        ({"noise_kind": "loud"}, "noise_kind"),
        ({"noiseless": "yes"}, "noiseless"),
        ({"lr": 0.0}, "lr"),
        ({"theta": -1.0}, "theta"),
        ({"lambda1_variant": "other"}, "lambda1_variant"),
        ({"local_epochs": 0}, "local_epochs"),
        ({"seeds": []}, "seeds"),
        ({"seeds": [0, 0]}, "seeds"),
        ({"seeds": [0, -1]}, "seeds[1]"),
        ({"seeds": "012"}, "seeds"),
        ({"t_max": 25}, "t_max"),
        ({"t_max": -1}, "t_max"),
        ({"out_dir": ""}, "out_dir"),
        ({"sweep": {"param": "privacy.epsilon"}}, "sweep.values"),
        ({"sweep": {"param": "seeds", "values": [1]}}, "sweep.param"),
        ({"sweep": {"param": "privacy.nope", "values": [1]}}, "sweep.param"),
        ({"sweep": {"param": "privacy.epsilon", "values": [[1]]}}, "sweep.values[0]"),
    ],
)
def test_validate_config_rejections(raw, needle):
    with pytest.raises(ConfigError) as exc:
        validate_config(raw)
    assert needle in str(exc.value)


def test_validate_config_dim1_isotropic_allowed():
    cfg = validate_config(
        {"problem": {"dim": 1, "curvature_min": 2.0, "curvature_max": 2.0}}
    )
    assert cfg["problem"]["dim"] == 1


# --- resolution --------------------------------------------------------------


def test_resolve_fills_null_fields():
    exp = resolve(dict(SMALL))
    assert exp.privacy.c == pytest.approx(derive_c_from_delta(0.05), rel=1e-14)
    assert exp.privacy.C > 0.0
    assert exp.lr == pytest.approx(1.0 / exp.problem.certified.rho, rel=1e-15)
    assert exp.theta > 0.0
    assert exp.t_max == exp.privacy.T
    assert len(exp.fingerprint) == 64 and set(exp.fingerprint) <= set("0123456789abcdef")
    assert sorted(exp.resolved) == [
        "assumptions", "lambda1_variant", "local_epochs", "lr", "noise_kind",
        "noiseless", "privacy", "problem", "seeds", "t_max", "theta",
    ]


def test_resolve_honors_explicit_values():
    cfg = dict(SMALL)
    cfg["privacy"] = dict(cfg["privacy"], c=2.0, C=1.25)
    cfg["lr"] = 0.1
    cfg["theta"] = 3.5
    exp = resolve(cfg)
    assert exp.privacy.c == 2.0 and exp.privacy.C == 1.25
    assert exp.lr == 0.1 and exp.theta == 3.5


def test_resolve_fingerprint_stability():
    a = resolve(dict(SMALL))
    b = resolve(dict(SMALL))
    assert a.fingerprint == b.fingerprint
    moved = dict(SMALL, out_dir="elsewhere")
    assert resolve(moved).fingerprint == a.fingerprint
    changed = dict(SMALL)
    changed["privacy"] = dict(changed["privacy"], epsilon=1.0)
    assert resolve(changed).fingerprint != a.fingerprint


def test_resolve_seed_override():
    exp = resolve(dict(SMALL), seed_override=7)
    assert exp.seeds == (7,)
    assert exp.resolved["seeds"] == [7]


def test_resolve_noiseless_zeroes_noise():
    exp = resolve(dict(SMALL, noiseless=True))
    assert exp.noise.per_coord_std == 0.0
    assert exp.noiseless is True


def test_resolve_assumption_overrides():
    cfg = dict(SMALL)
    cfg["assumptions"] = {"rho": 9.0, "l": 0.125, "B": 0.5, "beta": 2.5}
    exp = resolve(cfg)
    assert exp.assumptions.rho == 9.0 and exp.assumptions.l == 0.125
    assert exp.assumptions.B == 0.5 and exp.assumptions.beta == 2.5
    # default lr still comes from the instance certificate, not the override
    assert exp.lr == pytest.approx(1.0 / exp.problem.certified.rho, rel=1e-15)


# --- bounds subcommand -------------------------------------------------------


def test_bounds_writes_consistent_csv(tmp_path):
    cfg_path = _write_config(tmp_path, SMALL)
    out = tmp_path / "out"
    assert main(["bounds", "--config", cfg_path, "--out-dir", str(out)]) == EXIT_OK
    fingerprint, header, rows = _read_csv(out / "bounds.csv")
    assert tuple(header) == BOUNDS_COLUMNS
    assert fingerprint == resolve(dict(SMALL)).fingerprint
    assert len(rows) == SMALL["privacy"]["T"] + 1
    for row in rows:
        closed = float(row[2])
        for unrolled in (float(row[3]), float(row[4])):
            assert abs(unrolled - closed) / max(1.0, abs(closed)) < 1e-10
    # t=0 anchors
    theta = float(rows[0][2])
    assert float(rows[0][1]) == theta and float(rows[0][5]) == theta


def test_bounds_t_max_zero(tmp_path):
    cfg_path = _write_config(tmp_path, SMALL)
    out = tmp_path / "out"
    assert main(["bounds", "--config", cfg_path, "--out-dir", str(out), "--t-max", "0"]) == EXIT_OK
    _, _, rows = _read_csv(out / "bounds.csv")
    assert len(rows) == 1
    values = {float(v) for v in rows[0][1:]}
    assert len(values) == 1  # every variant anchors at theta


def test_bounds_t_max_above_T(tmp_path, capsys):
    cfg_path = _write_config(tmp_path, SMALL)
    code = main(["bounds", "--config", cfg_path, "--out-dir", str(tmp_path / "o"), "--t-max", "9"])
    assert code == EXIT_CONFIG
    assert "t-max" in _stderr_error(capsys)["message"]


def test_bounds_singular_contraction(tmp_path, capsys):
    cfg = dict(SMALL)
    cfg["assumptions"] = {"B": 0.0, "l": 2.5e-13}
    cfg_path = _write_config(tmp_path, cfg)
    code = main(["bounds", "--config", cfg_path, "--out-dir", str(tmp_path / "o")])
    assert code == EXIT_COMPUTE
    err = _stderr_error(capsys)
    assert err["type"] == "SingularContractionError"
    assert "original_thm2 column, row t=0" in err["message"]


def test_bounds_invalid_config_fails_before_computation(tmp_path, capsys):
    cfg_path = _write_config(tmp_path, {"privacy": {"epsilon": -2.0}})
    code = main(["bounds", "--config", cfg_path, "--out-dir", str(tmp_path / "o")])
    assert code == EXIT_CONFIG
    assert _stderr_error(capsys)["message"].startswith("privacy.epsilon")
    assert not (tmp_path / "o").exists()


def test_bounds_requires_config(tmp_path, capsys):
    assert main(["bounds", "--out-dir", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "--config" in _stderr_error(capsys)["message"]


# --- simulate subcommand -----------------------------------------------------


def test_simulate_outputs(tmp_path):
    cfg_path = _write_config(tmp_path, SMALL)
    out = tmp_path / "out"
    assert main(["simulate", "--config", cfg_path, "--out-dir", str(out)]) == EXIT_OK

    text = (out / "trajectory.csv").read_text()
    lines = text.splitlines()
    assert len(lines) == 2 + len(SMALL["seeds"]) * (SMALL["privacy"]["T"] + 1)
    assert "\r" not in text
    for seed in SMALL["seeds"]:
        assert (out / f"trajectory_seed{seed}.csv").exists()

    summary = json.loads((out / "run_summary.json").read_text())
    assert sorted(summary) == [
        "config_fingerprint", "mean_final_gap", "noise_kind", "noiseless",
        "per_coord_noise_std", "per_seed", "seeds", "theta",
    ]
    assert summary["seeds"] == SMALL["seeds"]
    finals = [entry["final_gap"] for entry in summary["per_seed"]]
    assert summary["mean_final_gap"] == pytest.approx(sum(finals) / len(finals), rel=1e-12)
    assert summary["config_fingerprint"] == resolve(dict(SMALL)).fingerprint


def test_simulate_deterministic_across_runs(tmp_path):
    cfg_path = _write_config(tmp_path, SMALL)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", cfg_path, "--out-dir", str(out1)]) == EXIT_OK
    assert main(["simulate", "--config", cfg_path, "--out-dir", str(out2)]) == EXIT_OK
    assert (out1 / "trajectory.csv").read_bytes() == (out2 / "trajectory.csv").read_bytes()
    assert (out1 / "run_summary.json").read_bytes() == (out2 / "run_summary.json").read_bytes()


def test_simulate_workers_match_serial(tmp_path):
    cfg_path = _write_config(tmp_path, SMALL)
    serial, parallel = tmp_path / "s", tmp_path / "p"
    assert main(["simulate", "--config", cfg_path, "--out-dir", str(serial)]) == EXIT_OK
    assert main(
        ["simulate", "--config", cfg_path, "--out-dir", str(parallel), "--workers", "2"]
    ) == EXIT_OK
    assert (serial / "trajectory.csv").read_bytes() == (parallel / "trajectory.csv").read_bytes()


def test_simulate_seed_override(tmp_path):
    cfg_path = _write_config(tmp_path, SMALL)
    out = tmp_path / "out"
    assert main(
        ["simulate", "--config", cfg_path, "--out-dir", str(out), "--seed-override", "3"]
    ) == EXIT_OK
    summary = json.loads((out / "run_summary.json").read_text())
    assert summary["seeds"] == [3]
    assert (out / "trajectory_seed3.csv").exists()


def test_simulate_logistic_problem(tmp_path):
    cfg = {
        "problem": {"kind": "logistic", "dim": 2, "seed": 0, "l2_reg": 0.2},
        "privacy": {"m": 12, "N": 2, "T": 3},
        "seeds": [0],
    }
    cfg_path = _write_config(tmp_path, cfg)
    out = tmp_path / "out"
    assert main(["simulate", "--config", cfg_path, "--out-dir", str(out)]) == EXIT_OK
    summary = json.loads((out / "run_summary.json").read_text())
    assert math.isfinite(summary["mean_final_gap"])


def test_workers_must_be_positive(tmp_path, capsys):
    cfg_path = _write_config(tmp_path, SMALL)
    code = main(["simulate", "--config", cfg_path, "--out-dir", str(tmp_path / "o"), "--workers", "0"])
    assert code == EXIT_CONFIG
    assert "workers" in _stderr_error(capsys)["message"]


# --- audit subcommand --------------------------------------------------------


def test_audit_end_to_end(tmp_path):
    cfg_path = _write_config(tmp_path, SMALL)
    out = tmp_path / "out"
    assert main(["simulate", "--config", cfg_path, "--out-dir", str(out)]) == EXIT_OK
    assert main(["audit", "--config", cfg_path, "--out-dir", str(out)]) == EXIT_OK
    report = report_from_json((out / "audit.json").read_text())
    assert len(report.entries) == 7
    assert report.config_fingerprint == resolve(dict(SMALL)).fingerprint


def test_audit_rejects_mismatched_config(tmp_path, capsys):
    cfg_path = _write_config(tmp_path, SMALL)
    out = tmp_path / "out"
    assert main(["simulate", "--config", cfg_path, "--out-dir", str(out)]) == EXIT_OK
    changed = dict(SMALL)
    changed["privacy"] = dict(changed["privacy"], epsilon=1.0)
    other_path = _write_config(tmp_path, changed, name="other.json")
    code = main(["audit", "--config", other_path, "--out-dir", str(out)])
    assert code == EXIT_CONFIG
    assert _stderr_error(capsys)["type"] == "FingerprintMismatchError"


def test_audit_missing_trajectories(tmp_path, capsys):
    cfg_path = _write_config(tmp_path, SMALL)
    code = main(["audit", "--config", cfg_path, "--out-dir", str(tmp_path / "empty")])
    assert code == EXIT_CONFIG
    assert "trajectory.csv" in _stderr_error(capsys)["message"]


def test_audit_explicit_trajectory_list(tmp_path):
    cfg_path = _write_config(tmp_path, SMALL)
    out = tmp_path / "out"
    assert main(["simulate", "--config", cfg_path, "--out-dir", str(out)]) == EXIT_OK
    code = main(
        [
            "audit", "--config", cfg_path, "--out-dir", str(out),
            "--trajectories",
            str(out / "trajectory_seed0.csv"),
            str(out / "trajectory_seed1.csv"),
        ]
    )
    assert code == EXIT_OK
    assert (out / "audit.json").exists()


def test_audit_self_test(tmp_path, capsys):
    assert main(["audit", "--self-test"]) == EXIT_OK
    payload = json.loads(capsys.readouterr().out)
    assert payload["accuracy"] == 1.0
    assert len(payload["cases"]) == 19
    assert all(c["expected"] == c["actual"] for c in payload["cases"])


def test_audit_self_test_seeded(tmp_path, capsys):
    assert main(["audit", "--self-test", "--seed-override", "5"]) == EXIT_OK
    payload = json.loads(capsys.readouterr().out)
    assert payload["accuracy"] == 1.0


# --- noise-moments subcommand ------------------------------------------------


def test_noise_moments_sections(tmp_path, capsys):
    cfg_path = _write_config(tmp_path, SMALL)
    code = main(["noise-moments", "--config", cfg_path, "--samples", "2000"])
    assert code == EXIT_OK
    payload = json.loads(capsys.readouterr().out)
    assert sorted(payload) == [
        "config_fingerprint", "discrepancy", "exact_analytic", "monte_carlo", "paper_model",
    ]
    # aggregate_matched reproduces the analytic second moment to machine precision
    rel = abs(payload["discrepancy"]["mean_sq_norm"]) / payload["exact_analytic"]["mean_sq_norm"]
    assert rel < 1e-12
    assert payload["monte_carlo"]["sample_count"] == 2000
    assert payload["paper_model"]["mean_norm"] > 0.0


def test_noise_moments_deterministic(tmp_path, capsys):
    cfg_path = _write_config(tmp_path, SMALL)
    assert main(["noise-moments", "--config", cfg_path, "--samples", "1000"]) == EXIT_OK
    first = capsys.readouterr().out
    assert main(["noise-moments", "--config", cfg_path, "--samples", "1000"]) == EXIT_OK
    assert capsys.readouterr().out == first


def test_noise_moments_noiseless(tmp_path, capsys):
    cfg_path = _write_config(tmp_path, dict(SMALL, noiseless=True))
    assert main(["noise-moments", "--config", cfg_path, "--samples", "100"]) == EXIT_OK
    payload = json.loads(capsys.readouterr().out)
    assert payload["paper_model"] == {"mean_norm": 0.0, "mean_sq_norm": 0.0}
    assert payload["exact_analytic"] == {"mean_norm": 0.0, "mean_sq_norm": 0.0}
    assert payload["monte_carlo"]["mean_norm"] == 0.0


# --- sweep subcommand --------------------------------------------------------


def test_sweep_outputs(tmp_path):
    cfg = dict(SMALL)
    cfg["sweep"] = {"param": "privacy.epsilon", "values": [1.0, 10.0]}
    cfg_path = _write_config(tmp_path, cfg)
    out = tmp_path / "out"
    assert main(["sweep", "--config", cfg_path, "--out-dir", str(out)]) == EXIT_OK
    manifest = json.loads((out / "sweep_manifest.json").read_text())
    assert manifest["param"] == "privacy.epsilon"
    assert manifest["values"] == [1.0, 10.0]
    assert len(manifest["points"]) == 2
    fingerprints = {pt["config_fingerprint"] for pt in manifest["points"]}
    assert len(fingerprints) == 2
    for pt in manifest["points"]:
        fp, _, _ = _read_csv(out / pt["trajectory_file"])
        assert fp == pt["config_fingerprint"]
        assert pt["original_singular"] is False
        fp, _, _ = _read_csv(out / pt["bounds_file"])
        assert fp == pt["config_fingerprint"]
        assert math.isfinite(pt["mean_final_gap"])


def test_sweep_singular_point_flagged(tmp_path):
    cfg = dict(SMALL)
    cfg["assumptions"] = {"B": 0.0}
    cfg["sweep"] = {"param": "assumptions.l", "values": [0.5, 2.5e-13]}
    cfg_path = _write_config(tmp_path, cfg)
    out = tmp_path / "out"
    assert main(["sweep", "--config", cfg_path, "--out-dir", str(out)]) == EXIT_OK
    manifest = json.loads((out / "sweep_manifest.json").read_text())
    regular, singular = manifest["points"]
    assert regular["original_singular"] is False and regular["bounds_file"]
    assert singular["original_singular"] is True and singular["bounds_file"] is None
    assert (out / singular["trajectory_file"]).exists()


def test_sweep_requires_sweep_section(tmp_path, capsys):
    cfg_path = _write_config(tmp_path, SMALL)
    code = main(["sweep", "--config", cfg_path, "--out-dir", str(tmp_path / "o")])
    assert code == EXIT_CONFIG
    assert "sweep" in _stderr_error(capsys)["message"]


# --- environment and help ----------------------------------------------------


def test_invalid_log_level(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("NBAFL_LOG", "loud")
    cfg_path = _write_config(tmp_path, SMALL)
    code = main(["bounds", "--config", cfg_path, "--out-dir", str(tmp_path / "o")])
    assert code == EXIT_CONFIG
    assert "NBAFL_LOG" in _stderr_error(capsys)["message"]


def test_info_logging_in_subprocess(tmp_path):
    cfg_path = _write_config(tmp_path, SMALL)
    out = tmp_path / "out"
    env = dict(os.environ, NBAFL_LOG="info")
    result = subprocess.run(
        [sys.executable, "-m", "nbafl.cli", "bounds", "--config", cfg_path,
         "--out-dir", str(out)],
        capture_output=True, text=True, env=env,
    )
    assert result.returncode == EXIT_OK
    assert "wrote" in result.stderr and "bounds.csv" in result.stderr


@pytest.mark.parametrize(
    "command", ["bounds", "simulate", "audit", "noise-moments", "sweep"]
)
def test_help_exits_cleanly(command, capsys):
    with pytest.raises(SystemExit) as exc:
        main([command, "--help"])
    assert exc.value.code == 0
    assert "--config" in capsys.readouterr().out


def test_unknown_command_rejected(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["transmogrify"])
    assert exc.value.code != 0
