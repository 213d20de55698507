"""Comparison figures rendered from the testbed's CSV/JSON output files."""

from .figures import (
    FIGURE_KINDS,
    OVERLAY_COLUMNS,
    STATUS_COLORS,
    FigureSpec,
    build_figure,
    render,
)
from .io import (
    AUDIT_STATUSES,
    AUDIT_STEP_IDS,
    BOUNDS_COLUMNS,
    TRAJECTORY_COLUMNS,
    AuditData,
    AuditEntry,
    BoundsTable,
    FingerprintMismatchError,
    InputFormatError,
    SweepManifest,
    SweepPoint,
    TrajectoryTable,
    merge_trajectory_tables,
    read_audit_json,
    read_bounds_csv,
    read_sweep_manifest,
    read_trajectory_csv,
)

__all__ = [
    "AUDIT_STATUSES",
    "AUDIT_STEP_IDS",
    "AuditData",
    "AuditEntry",
    "BOUNDS_COLUMNS",
    "BoundsTable",
    "FIGURE_KINDS",
    "FigureSpec",
    "FingerprintMismatchError",
    "InputFormatError",
    "OVERLAY_COLUMNS",
    "STATUS_COLORS",
    "SweepManifest",
    "SweepPoint",
    "TRAJECTORY_COLUMNS",
    "TrajectoryTable",
    "build_figure",
    "merge_trajectory_tables",
    "read_audit_json",
    "read_bounds_csv",
    "read_sweep_manifest",
    "read_trajectory_csv",
    "render",
]
