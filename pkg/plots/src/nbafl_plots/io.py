"""Readers for the testbed's output files.

This package talks to the simulator only through its documented file
formats; the column names and header conventions below are copies of
that contract, never imports.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

TRAJECTORY_COLUMNS = (
    "seed",
    "round",
    "loss_gap",
    "grad_norm",
    "noise_norm",
    "noise_sq_norm",
    "increment",
)

BOUNDS_COLUMNS = (
    "t",
    "original_thm2",
    "corrected_closed",
    "corrected_unrolled_eq6",
    "corrected_unrolled_eq3",
    "erroneous_eq5_unrolled",
)

AUDIT_STEP_IDS = (
    "eq2_pl",
    "eq3_lemma2",
    "eq4_add",
    "eq4_to_5",
    "eq4_to_6",
    "final_orig_bound",
    "final_corr_bound",
)

AUDIT_STATUSES = ("holds", "violated", "conditional")

_FINGERPRINT_PREFIX = "# config_fingerprint="


class InputFormatError(ValueError):
    """An input file does not match the documented schema."""


class FingerprintMismatchError(ValueError):
    """Overlaid series come from differently configured runs."""


def _read_csv_with_fingerprint(path: Path, columns: tuple[str, ...]):
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise InputFormatError(f"{path}: {exc}") from exc
    if not lines or not lines[0].startswith(_FINGERPRINT_PREFIX):
        raise InputFormatError(f"{path}: missing '{_FINGERPRINT_PREFIX}' header line")
    fingerprint = lines[0][len(_FINGERPRINT_PREFIX):]
    rows = list(csv.reader(lines[1:]))
    if not rows or tuple(rows[0]) != columns:
        raise InputFormatError(
            f"{path}: expected columns {list(columns)}, got {rows[0] if rows else 'nothing'}"
        )
    return fingerprint, rows[1:]


def _parse_float(value: str, path: Path, where: str) -> float:
    try:
        return float(value)
    except ValueError as exc:
        raise InputFormatError(f"{path}: non-numeric {where}: {value!r}") from exc


@dataclass(frozen=True)
class TrajectoryTable:
    """Per-seed loss-gap series sharing one config fingerprint."""

    fingerprint: str
    # seed -> gap at round t, index == t
    gaps: dict[int, list[float]] = field(default_factory=dict)

    @property
    def rounds(self) -> list[int]:
        any_seed = next(iter(self.gaps.values()))
        return list(range(len(any_seed)))


def read_trajectory_csv(path: Path) -> TrajectoryTable:
    """Load the loss-gap columns of a trajectory CSV, validating shape."""
    path = Path(path)
    fingerprint, rows = _read_csv_with_fingerprint(path, TRAJECTORY_COLUMNS)
    if not rows:
        raise InputFormatError(f"{path}: no data rows")
    gaps: dict[int, list[float]] = {}
    for row in rows:
        if len(row) != len(TRAJECTORY_COLUMNS):
            raise InputFormatError(f"{path}: row has {len(row)} fields: {row}")
        seed = int(_parse_float(row[0], path, "seed"))
        t = int(_parse_float(row[1], path, "round"))
        gap = _parse_float(row[2], path, "loss_gap")
        if not math.isfinite(gap):
            raise InputFormatError(f"{path}: non-finite loss_gap at seed {seed} round {t}")
        series = gaps.setdefault(seed, [])
        if t != len(series):
            raise InputFormatError(
                f"{path}: seed {seed} rounds are not contiguous from 0 (got round {t})"
            )
        series.append(gap)
    lengths = {len(s) for s in gaps.values()}
    if len(lengths) != 1:
        raise InputFormatError(f"{path}: seeds cover different round counts: {sorted(lengths)}")
    return TrajectoryTable(fingerprint=fingerprint, gaps=gaps)


def merge_trajectory_tables(tables) -> TrajectoryTable:
    """Combine per-seed files into one table; fingerprints must agree."""
    tables = list(tables)
    if not tables:
        raise InputFormatError("no trajectory inputs")
    fingerprints = {t.fingerprint for t in tables}
    if len(fingerprints) != 1:
        raise FingerprintMismatchError(
            f"trajectory inputs carry {len(fingerprints)} distinct config fingerprints"
        )
    gaps: dict[int, list[float]] = {}
    for table in tables:
        for seed, series in table.gaps.items():
            if seed in gaps:
                raise InputFormatError(f"seed {seed} appears in more than one input")
            gaps[seed] = series
    lengths = {len(s) for s in gaps.values()}
    if len(lengths) != 1:
        raise InputFormatError(f"seeds cover different round counts: {sorted(lengths)}")
    return TrajectoryTable(fingerprint=tables[0].fingerprint, gaps=gaps)


@dataclass(frozen=True)
class BoundsTable:
    """All bound columns of a bounds CSV, keyed by their exact header names."""

    fingerprint: str
    t: list[int]
    series: dict[str, list[float]]


def read_bounds_csv(path: Path) -> BoundsTable:
    """Load a bounds CSV; the header must match the emitter verbatim."""
    path = Path(path)
    fingerprint, rows = _read_csv_with_fingerprint(path, BOUNDS_COLUMNS)
    if not rows:
        raise InputFormatError(f"{path}: no data rows")
    t_values: list[int] = []
    series: dict[str, list[float]] = {name: [] for name in BOUNDS_COLUMNS[1:]}
    for row in rows:
        if len(row) != len(BOUNDS_COLUMNS):
            raise InputFormatError(f"{path}: row has {len(row)} fields: {row}")
        t = int(_parse_float(row[0], path, "t"))
        if t != len(t_values):
            raise InputFormatError(f"{path}: rounds are not contiguous from 0 (got {t})")
        t_values.append(t)
        for name, value in zip(BOUNDS_COLUMNS[1:], row[1:]):
            series[name].append(_parse_float(value, path, name))
    return BoundsTable(fingerprint=fingerprint, t=t_values, series=series)


@dataclass(frozen=True)
class AuditEntry:
    step_id: str
    status: str
    margin: float


@dataclass(frozen=True)
class AuditData:
    """The per-step verdicts of an audit report."""

    fingerprint: str
    lambda2_sign: str
    entries: tuple[AuditEntry, ...]


def read_audit_json(path: Path) -> AuditData:
    """Load an audit report; an empty entry list is an error."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except OSError as exc:
        raise InputFormatError(f"{path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputFormatError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise InputFormatError(f"{path}: expected a JSON object")
    for key in ("lambda2_sign", "entries", "config_fingerprint"):
        if key not in payload:
            raise InputFormatError(f"{path}: missing key {key!r}")
    raw_entries = payload["entries"]
    if not isinstance(raw_entries, list) or not raw_entries:
        raise InputFormatError(f"{path}: entries must be a nonempty list")
    entries = []
    for raw in raw_entries:
        if not isinstance(raw, dict):
            raise InputFormatError(f"{path}: entry is not an object: {raw!r}")
        try:
            entry = AuditEntry(
                step_id=raw["step_id"],
                status=raw["status"],
                margin=float(raw["margin"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InputFormatError(f"{path}: malformed entry {raw!r}") from exc
        if entry.status not in AUDIT_STATUSES:
            raise InputFormatError(f"{path}: unknown status {entry.status!r}")
        entries.append(entry)
    return AuditData(
        fingerprint=payload["config_fingerprint"],
        lambda2_sign=payload["lambda2_sign"],
        entries=tuple(entries),
    )


@dataclass(frozen=True)
class SweepPoint:
    value: float
    fingerprint: str
    trajectory_file: Path
    bounds_file: Path | None
    original_singular: bool


@dataclass(frozen=True)
class SweepManifest:
    """A parameter sweep's points, with file paths resolved next to the manifest."""

    param: str
    points: tuple[SweepPoint, ...]


def read_sweep_manifest(path: Path) -> SweepManifest:
    """Load a sweep manifest; per-point files resolve relative to it."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except OSError as exc:
        raise InputFormatError(f"{path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputFormatError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(payload, dict) or "points" not in payload or "param" not in payload:
        raise InputFormatError(f"{path}: expected an object with 'param' and 'points'")
    base = path.parent
    points = []
    for raw in payload["points"]:
        try:
            value = raw["value"]
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise InputFormatError(
                    f"{path}: point value {value!r} is not numeric, cannot place it on an axis"
                )
            bounds_name = raw["bounds_file"]
            points.append(
                SweepPoint(
                    value=float(value),
                    fingerprint=raw["config_fingerprint"],
                    trajectory_file=base / raw["trajectory_file"],
                    bounds_file=None if bounds_name is None else base / bounds_name,
                    original_singular=bool(raw["original_singular"]),
                )
            )
        except (KeyError, TypeError) as exc:
            raise InputFormatError(f"{path}: malformed sweep point {raw!r}") from exc
    if not points:
        raise InputFormatError(f"{path}: sweep has no points")
    return SweepManifest(param=payload["param"], points=tuple(points))
