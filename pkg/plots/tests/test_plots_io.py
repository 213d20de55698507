"""File-format readers against the checked-in sample outputs."""

import json
from pathlib import Path

import pytest

from nbafl_plots import (
    BOUNDS_COLUMNS,
    FingerprintMismatchError,
    InputFormatError,
    merge_trajectory_tables,
    read_audit_json,
    read_bounds_csv,
    read_sweep_manifest,
    read_trajectory_csv,
)

DATA = Path(__file__).parent / "data"


def test_trajectory_table_shape():
    table = read_trajectory_csv(DATA / "run" / "trajectory.csv")
    assert len(table.fingerprint) == 64
    assert sorted(table.gaps) == [0, 1, 2]
    assert table.rounds == list(range(9))
    for series in table.gaps.values():
        assert len(series) == 9
        assert all(g >= 0 for g in series)


def test_trajectory_missing_fingerprint(tmp_path):
    bad = tmp_path / "t.csv"
    bad.write_text("seed,round,loss_gap,grad_norm,noise_norm,noise_sq_norm,increment\n")
    with pytest.raises(InputFormatError, match="config_fingerprint"):
        read_trajectory_csv(bad)


def test_trajectory_wrong_columns(tmp_path):
    bad = tmp_path / "t.csv"
    bad.write_text("# config_fingerprint=abc\nseed,round,gap\n0,0,1.0\n")
    with pytest.raises(InputFormatError, match="expected columns"):
        read_trajectory_csv(bad)


def test_trajectory_no_rows(tmp_path):
    bad = tmp_path / "t.csv"
    bad.write_text(
        "# config_fingerprint=abc\n"
        "seed,round,loss_gap,grad_norm,noise_norm,noise_sq_norm,increment\n"
    )
    with pytest.raises(InputFormatError, match="no data rows"):
        read_trajectory_csv(bad)


def test_trajectory_noncontiguous_rounds(tmp_path):
    bad = tmp_path / "t.csv"
    header = "seed,round,loss_gap,grad_norm,noise_norm,noise_sq_norm,increment"
    bad.write_text(f"# config_fingerprint=abc\n{header}\n0,0,1,1,0,0,0\n0,2,1,1,0,0,nan\n")
    with pytest.raises(InputFormatError, match="not contiguous"):
        read_trajectory_csv(bad)


def test_trajectory_nonfinite_gap(tmp_path):
    bad = tmp_path / "t.csv"
    header = "seed,round,loss_gap,grad_norm,noise_norm,noise_sq_norm,increment"
    bad.write_text(f"# config_fingerprint=abc\n{header}\n0,0,inf,1,0,0,nan\n")
    with pytest.raises(InputFormatError, match="non-finite loss_gap"):
        read_trajectory_csv(bad)


def test_trajectory_unequal_round_counts(tmp_path):
    bad = tmp_path / "t.csv"
    header = "seed,round,loss_gap,grad_norm,noise_norm,noise_sq_norm,increment"
    rows = "0,0,1,1,0,0,0\n0,1,1,1,0,0,nan\n1,0,1,1,0,0,nan\n"
    bad.write_text(f"# config_fingerprint=abc\n{header}\n{rows}")
    with pytest.raises(InputFormatError, match="different round counts"):
        read_trajectory_csv(bad)


def test_merge_per_seed_files_equals_combined():
    combined = read_trajectory_csv(DATA / "run" / "trajectory.csv")
    merged = merge_trajectory_tables(
        read_trajectory_csv(DATA / "run" / f"trajectory_seed{s}.csv") for s in (0, 1, 2)
    )
    assert merged.fingerprint == combined.fingerprint
    assert merged.gaps == combined.gaps


def test_merge_rejects_mixed_fingerprints():
    a = read_trajectory_csv(DATA / "run" / "trajectory.csv")
    b = read_trajectory_csv(DATA / "noiseless" / "trajectory.csv")
    with pytest.raises(FingerprintMismatchError):
        merge_trajectory_tables([a, b])


def test_merge_rejects_duplicate_seed():
    a = read_trajectory_csv(DATA / "run" / "trajectory_seed0.csv")
    with pytest.raises(InputFormatError, match="seed 0"):
        merge_trajectory_tables([a, a])


def test_merge_rejects_empty():
    with pytest.raises(InputFormatError, match="no trajectory inputs"):
        merge_trajectory_tables([])


def test_bounds_table_shape():
    bounds = read_bounds_csv(DATA / "run" / "bounds.csv")
    assert len(bounds.fingerprint) == 64
    assert bounds.t == list(range(9))
    assert sorted(bounds.series) == sorted(BOUNDS_COLUMNS[1:])
    assert all(len(v) == 9 for v in bounds.series.values())


def test_bounds_header_must_match_verbatim(tmp_path):
    lines = (DATA / "run" / "bounds.csv").read_text().splitlines()
    lines[1] = lines[1].replace("corrected_closed", "corrected")
    bad = tmp_path / "b.csv"
    bad.write_text("\n".join(lines) + "\n")
    with pytest.raises(InputFormatError, match="expected columns"):
        read_bounds_csv(bad)


def test_bounds_noncontiguous_rounds(tmp_path):
    lines = (DATA / "run" / "bounds.csv").read_text().splitlines()
    del lines[3]  # drop the t=1 row
    bad = tmp_path / "b.csv"
    bad.write_text("\n".join(lines) + "\n")
    with pytest.raises(InputFormatError, match="not contiguous"):
        read_bounds_csv(bad)


def test_audit_report_shape():
    audit = read_audit_json(DATA / "run" / "audit.json")
    assert len(audit.fingerprint) == 64
    assert audit.lambda2_sign in ("negative", "zero", "positive")
    assert [e.step_id for e in audit.entries] == [
        "eq2_pl",
        "eq3_lemma2",
        "eq4_add",
        "eq4_to_5",
        "eq4_to_6",
        "final_orig_bound",
        "final_corr_bound",
    ]
    assert all(e.status in ("holds", "violated", "conditional") for e in audit.entries)


def test_audit_empty_entries(tmp_path):
    bad = tmp_path / "a.json"
    bad.write_text(json.dumps(
        {"lambda2_sign": "negative", "entries": [], "config_fingerprint": "abc"}
    ))
    with pytest.raises(InputFormatError, match="nonempty"):
        read_audit_json(bad)


def test_audit_missing_key(tmp_path):
    bad = tmp_path / "a.json"
    bad.write_text(json.dumps({"entries": [], "config_fingerprint": "abc"}))
    with pytest.raises(InputFormatError, match="lambda2_sign"):
        read_audit_json(bad)


def test_audit_unknown_status(tmp_path):
    bad = tmp_path / "a.json"
    bad.write_text(json.dumps({
        "lambda2_sign": "negative",
        "entries": [{"step_id": "eq2_pl", "status": "maybe", "margin": 0.0}],
        "config_fingerprint": "abc",
    }))
    with pytest.raises(InputFormatError, match="unknown status"):
        read_audit_json(bad)


def test_audit_not_json(tmp_path):
    bad = tmp_path / "a.json"
    bad.write_text("not json at all")
    with pytest.raises(InputFormatError, match="not valid JSON"):
        read_audit_json(bad)


def test_sweep_manifest_shape():
    manifest = read_sweep_manifest(DATA / "sweep" / "sweep_manifest.json")
    assert manifest.param == "privacy.epsilon"
    assert [p.value for p in manifest.points] == [1.0, 5.0, 10.0, 50.0]
    for point in manifest.points:
        assert point.trajectory_file.exists()
        assert point.bounds_file is not None and point.bounds_file.exists()
        assert point.original_singular is False
        assert len(point.fingerprint) == 64


def test_sweep_manifest_nonnumeric_value(tmp_path):
    bad = tmp_path / "m.json"
    bad.write_text(json.dumps({
        "param": "noise_kind",
        "values": ["per_client"],
        "points": [{
            "param": "noise_kind", "value": "per_client", "config_fingerprint": "abc",
            "trajectory_file": "t.csv", "bounds_file": None,
            "original_singular": False, "mean_final_gap": 0.1,
        }],
    }))
    with pytest.raises(InputFormatError, match="not numeric"):
        read_sweep_manifest(bad)


def test_sweep_manifest_missing_file():
    with pytest.raises(InputFormatError):
        read_sweep_manifest(DATA / "sweep" / "nope.json")


def test_sweep_manifest_no_points(tmp_path):
    bad = tmp_path / "m.json"
    bad.write_text(json.dumps({"param": "privacy.epsilon", "values": [], "points": []}))
    with pytest.raises(InputFormatError, match="no points"):
        read_sweep_manifest(bad)
