"""Figure construction for the four supported comparison plots.

Rendering is read-only over the simulator's output files and computes
nothing beyond per-round mean/min/max across seeds. All style knobs are
pinned so that identical inputs reproduce identical image bytes.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
from matplotlib.patches import Patch

from .io import (
    BOUNDS_COLUMNS,
    FingerprintMismatchError,
    InputFormatError,
    merge_trajectory_tables,
    read_audit_json,
    read_bounds_csv,
    read_sweep_manifest,
    read_trajectory_csv,
)

FIGURE_KINDS = (
    "gap_vs_round",
    "bounds_vs_round",
    "gap_vs_epsilon",
    "audit_margins",
)

# columns overlaid on gap-vs-round figures, verbatim from the bounds emitter
OVERLAY_COLUMNS = ("original_thm2", "corrected_closed")

STATUS_COLORS = {
    "holds": "#2e7d32",
    "conditional": "#b58900",
    "violated": "#c62828",
}

_RC = {
    "figure.figsize": (6.4, 4.0),
    "figure.dpi": 120,
    "savefig.dpi": 120,
    "font.family": "DejaVu Sans",
    "font.size": 9.0,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.fontsize": 8.0,
    "lines.linewidth": 1.6,
    "figure.autolayout": True,
}


@dataclass(frozen=True)
class FigureSpec:
    """One figure request: inputs, kind, destination, axis scales."""

    kind: str
    inputs: tuple[Path, ...]
    out: Path
    bounds: Path | None = None
    log_x: bool = False
    log_y: bool = False

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise ValueError(f"kind must be one of {FIGURE_KINDS}, got {self.kind!r}")
        if not self.inputs:
            raise InputFormatError("at least one input file is required")


def _single_input(spec: FigureSpec) -> Path:
    if len(spec.inputs) != 1:
        raise InputFormatError(
            f"{spec.kind} takes exactly one input file, got {len(spec.inputs)}"
        )
    return spec.inputs[0]


def _seed_stats(gaps: dict[int, list[float]]):
    """Per-round mean/min/max across seeds."""
    per_round = list(zip(*gaps.values()))
    mean = [sum(col) / len(col) for col in per_round]
    lo = [min(col) for col in per_round]
    hi = [max(col) for col in per_round]
    return mean, lo, hi


def _gap_vs_round(spec: FigureSpec, ax) -> None:
    if len(spec.inputs) == 1 and spec.inputs[0].suffix == ".json":
        _gap_vs_round_sweep(spec, ax)
        return
    table = merge_trajectory_tables(read_trajectory_csv(p) for p in spec.inputs)
    mean, lo, hi = _seed_stats(table.gaps)
    rounds = table.rounds
    ax.plot(rounds, mean, color="#1f77b4", label=f"mean gap ({len(table.gaps)} seeds)")
    if len(table.gaps) > 1:
        ax.fill_between(rounds, lo, hi, color="#1f77b4", alpha=0.2, label="seed range")
    if spec.bounds is not None:
        bounds = read_bounds_csv(spec.bounds)
        if bounds.fingerprint != table.fingerprint:
            raise FingerprintMismatchError(
                f"{spec.bounds}: bounds fingerprint {bounds.fingerprint[:12]}... does not "
                f"match trajectory fingerprint {table.fingerprint[:12]}..."
            )
        for name, style in zip(OVERLAY_COLUMNS, ("--", "-.")):
            ax.plot(bounds.t, bounds.series[name], style, label=name)
    ax.set_xlabel("round")
    ax.set_ylabel("optimality gap")
    ax.set_title(f"gap vs round [{table.fingerprint[:12]}]")
    ax.legend()


def _gap_vs_round_sweep(spec: FigureSpec, ax) -> None:
    manifest = read_sweep_manifest(spec.inputs[0])
    for point in manifest.points:
        table = read_trajectory_csv(point.trajectory_file)
        if table.fingerprint != point.fingerprint:
            raise FingerprintMismatchError(
                f"{point.trajectory_file}: fingerprint does not match its manifest entry"
            )
        mean, _, _ = _seed_stats(table.gaps)
        ax.plot(table.rounds, mean, label=f"{manifest.param}={point.value:g}")
    ax.set_xlabel("round")
    ax.set_ylabel("mean optimality gap")
    ax.set_title(f"gap vs round across {manifest.param}")
    ax.legend()


def _bounds_vs_round(spec: FigureSpec, ax) -> None:
    bounds = read_bounds_csv(_single_input(spec))
    for name in BOUNDS_COLUMNS[1:]:
        ax.plot(bounds.t, bounds.series[name], label=name)
    ax.set_xlabel("round")
    ax.set_ylabel("bound value")
    ax.set_title(f"bound variants [{bounds.fingerprint[:12]}]")
    ax.legend()


def _gap_vs_epsilon(spec: FigureSpec, ax) -> None:
    manifest = read_sweep_manifest(_single_input(spec))
    values, means, los, his = [], [], [], []
    for point in sorted(manifest.points, key=lambda p: p.value):
        table = read_trajectory_csv(point.trajectory_file)
        if table.fingerprint != point.fingerprint:
            raise FingerprintMismatchError(
                f"{point.trajectory_file}: fingerprint does not match its manifest entry"
            )
        finals = [series[-1] for series in table.gaps.values()]
        values.append(point.value)
        means.append(sum(finals) / len(finals))
        los.append(min(finals))
        his.append(max(finals))
    ax.plot(values, means, "o-", color="#1f77b4", label="mean final gap")
    ax.fill_between(values, los, his, color="#1f77b4", alpha=0.2, label="seed range")
    ax.set_xlabel(manifest.param)
    ax.set_ylabel("final optimality gap")
    ax.set_title(f"final gap vs {manifest.param}")
    ax.legend()


def _audit_margins(spec: FigureSpec, ax) -> None:
    audit = read_audit_json(_single_input(spec))
    positions = range(len(audit.entries))
    colors = [STATUS_COLORS[e.status] for e in audit.entries]
    bars = ax.bar(positions, [e.margin for e in audit.entries], color=colors)
    for bar, entry in zip(bars, audit.entries):
        if entry.status == "violated":
            bar.set_hatch("//")
            bar.set_edgecolor("black")
    ax.set_xticks(list(positions))
    ax.set_xticklabels([e.step_id for e in audit.entries], rotation=30, ha="right")
    ax.set_yscale("symlog", linthresh=1e-9)
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_ylabel("worst slack (negative = violated)")
    ax.set_title(f"audit margins, lambda2 {audit.lambda2_sign} [{audit.fingerprint[:12]}]")
    present = sorted({e.status for e in audit.entries})
    ax.legend(handles=[Patch(color=STATUS_COLORS[s], label=s) for s in present])


_BUILDERS = {
    "gap_vs_round": _gap_vs_round,
    "bounds_vs_round": _bounds_vs_round,
    "gap_vs_epsilon": _gap_vs_epsilon,
    "audit_margins": _audit_margins,
}


def build_figure(spec: FigureSpec):
    """Construct the matplotlib Figure for a spec without saving it."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        try:
            _BUILDERS[spec.kind](spec, ax)
            if spec.log_x:
                ax.set_xscale("log")
            if spec.log_y and spec.kind != "audit_margins":
                ax.set_yscale("log")
        except Exception:
            plt.close(fig)
            raise
    return fig


def render(spec: FigureSpec) -> Path:
    """Render a spec to its output path; identical inputs give identical bytes."""
    fig = build_figure(spec)
    try:
        # strip the renderer-version metadata chunk so bytes depend on inputs only
        fig.savefig(spec.out, format="png", metadata={"Software": None})
    finally:
        plt.close(fig)
    return spec.out
