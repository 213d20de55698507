"""Command-line front end: config resolution, orchestration, bit-stable I/O.

A single JSON config drives every subcommand. Null-valued fields resolve in a
fixed order: the noise scale c from delta, the problem instance from its
generation seed, the clipping radius from a noiseless calibration run, the
analysis constants from the instance certificate, and the initial gap from
the zero start. The sha256 fingerprint of the fully resolved config (output
directory and sweep excluded) is embedded in every output file, and the audit
subcommand refuses inputs whose fingerprints disagree.

Exit codes: 0 success, 1 computation error, 2 I/O or config error. Failures
emit a single JSON error object on stderr.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audit import (
    EmptySampleError,
    FingerprintMismatchError,
    build_report,
    evaluate_suite,
    make_violation_suite,
)
from .bounds import (
    BoundSeries,
    SingularContractionError,
    corrected_bound,
    erroneous_series,
    original_bound,
    paper_noise_moments,
    unroll,
)
from .constants import (
    LAMBDA1_VARIANTS,
    AssumptionParams,
    PrivacyConfig,
    derive_c_from_delta,
    derive_constants,
)
from .flsim import (
    NonFiniteModelError,
    OptimumSolveError,
    certify,
    make_logistic,
    make_quadratic,
    noiseless_norm_envelope,
    read_trajectory_csv,
    run_training,
    write_trajectory_csv,
)
from .noise import (
    NOISE_KINDS,
    NoiseModel,
    aggregate_view,
    exact_norm_mean,
    make_noise_model,
    mc_moments,
)

log = logging.getLogger("nbafl")

EXIT_OK = 0
EXIT_COMPUTE = 1
EXIT_CONFIG = 2

BOUNDS_COLUMNS = (
    "t",
    "original_thm2",
    "corrected_closed",
    "corrected_unrolled_eq6",
    "corrected_unrolled_eq3",
    "erroneous_eq5_unrolled",
)

_LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
_UNSWEEPABLE = ("seeds", "out_dir", "sweep")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field path."""


# ---------------------------------------------------------------------------
# config schema


def _check_keys(section: dict, allowed, path: str) -> None:
    for key in section:
        if key not in allowed:
            raise ConfigError(f"{path}{key}: unknown field")


def _check_int(value, path: str, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{path}: must be >= {minimum}, got {value}")
    return value


def _check_number(
    value,
    path: str,
    minimum: float | None = None,
    exclusive_min: float | None = None,
) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(f"{path}: must be finite, got {value}")
    if exclusive_min is not None and value <= exclusive_min:
        raise ConfigError(f"{path}: must be > {exclusive_min}, got {value}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{path}: must be >= {minimum}, got {value}")
    return value


def _check_choice(value, path: str, choices) -> str:
    if value not in choices:
        raise ConfigError(f"{path}: must be one of {list(choices)}, got {value!r}")
    return value


_TOP_LEVEL_FIELDS = (
    "problem",
    "privacy",
    "assumptions",
    "noise_kind",
    "noiseless",
    "lr",
    "local_epochs",
    "theta",
    "lambda1_variant",
    "seeds",
    "t_max",
    "out_dir",
    "sweep",
)

_PRIVACY_DEFAULTS = {
    "epsilon": 10.0,
    "delta": 0.05,
    "c": None,
    "C": None,
    "m": 50,
    "N": 5,
    "T": 20,
}

_ASSUMPTION_DEFAULTS = {"rho": None, "B": None, "mu": 1.0, "l": None, "beta": None}


def validate_config(raw: dict) -> dict:
    """Merge a user config over the defaults, rejecting anything malformed.

    Every error message starts with the dotted path of the offending field.
    Returns the merged config; resolution happens later in resolve().
    """
    if not isinstance(raw, dict):
        raise ConfigError("config: expected a JSON object")
    _check_keys(raw, _TOP_LEVEL_FIELDS, "")

    for section in ("problem", "privacy", "assumptions"):
        if section in raw and not isinstance(raw[section], dict):
            raise ConfigError(f"{section}: expected an object")

    user_problem = raw.get("problem", {})
    kind = _check_choice(
        user_problem.get("kind", "quadratic"), "problem.kind", ("quadratic", "logistic")
    )
    problem = {"kind": kind, "dim": 5, "seed": 0}
    if kind == "quadratic":
        problem.update({"spread": 1.0, "curvature_min": 0.5, "curvature_max": 2.0})
    else:
        problem.update({"l2_reg": 0.1})
    _check_keys(user_problem, problem, "problem.")
    problem.update(user_problem)

    _check_int(problem["dim"], "problem.dim", minimum=1)
    _check_int(problem["seed"], "problem.seed", minimum=0)
    if kind == "quadratic":
        _check_number(problem["spread"], "problem.spread", minimum=0.0)
        cmin = _check_number(problem["curvature_min"], "problem.curvature_min", exclusive_min=0.0)
        cmax = _check_number(problem["curvature_max"], "problem.curvature_max", exclusive_min=0.0)
        if cmax < cmin:
            raise ConfigError(
                f"problem.curvature_max: must be >= curvature_min, got {cmax} < {cmin}"
            )
        if problem["dim"] == 1 and cmin != cmax:
            raise ConfigError(
                "problem.curvature_max: dim=1 has a single eigenvalue, "
                "set curvature_min == curvature_max"
            )
    else:
        _check_number(problem["l2_reg"], "problem.l2_reg", exclusive_min=0.0)

    privacy = dict(_PRIVACY_DEFAULTS)
    user_privacy = raw.get("privacy", {})
    _check_keys(user_privacy, privacy, "privacy.")
    privacy.update(user_privacy)
    _check_number(privacy["epsilon"], "privacy.epsilon", exclusive_min=0.0)
    if privacy["delta"] is not None:
        delta = _check_number(privacy["delta"], "privacy.delta", exclusive_min=0.0)
        if delta >= 1.0:
            raise ConfigError(f"privacy.delta: must lie in (0, 1), got {delta}")
    if privacy["c"] is not None:
        _check_number(privacy["c"], "privacy.c", exclusive_min=0.0)
    if privacy["C"] is not None:
        _check_number(privacy["C"], "privacy.C", exclusive_min=0.0)
    for name in ("m", "N", "T"):
        _check_int(privacy[name], f"privacy.{name}", minimum=1)

    assumptions = dict(_ASSUMPTION_DEFAULTS)
    user_assumptions = raw.get("assumptions", {})
    _check_keys(user_assumptions, assumptions, "assumptions.")
    assumptions.update(user_assumptions)
    _check_number(assumptions["mu"], "assumptions.mu", exclusive_min=0.0)
    for name, exclusive in (("rho", True), ("l", True), ("B", False), ("beta", False)):
        if assumptions[name] is not None:
            if exclusive:
                _check_number(assumptions[name], f"assumptions.{name}", exclusive_min=0.0)
            else:
                _check_number(assumptions[name], f"assumptions.{name}", minimum=0.0)

    cfg = {
        "problem": problem,
        "privacy": privacy,
        "assumptions": assumptions,
        "noise_kind": _check_choice(
            raw.get("noise_kind", "aggregate_matched"), "noise_kind", NOISE_KINDS
        ),
        "noiseless": raw.get("noiseless", False),
        "lr": raw.get("lr"),
        "local_epochs": _check_int(raw.get("local_epochs", 1), "local_epochs", minimum=1),
        "theta": raw.get("theta"),
        "lambda1_variant": _check_choice(
            raw.get("lambda1_variant", "corrected"), "lambda1_variant", LAMBDA1_VARIANTS
        ),
        "seeds": raw.get("seeds", [0, 1, 2, 3, 4]),
        "t_max": raw.get("t_max"),
        "out_dir": raw.get("out_dir", "out"),
        "sweep": copy.deepcopy(raw.get("sweep")),
    }
    if not isinstance(cfg["noiseless"], bool):
        raise ConfigError(f"noiseless: expected a boolean, got {cfg['noiseless']!r}")
    if cfg["lr"] is not None:
        _check_number(cfg["lr"], "lr", exclusive_min=0.0)
    if cfg["theta"] is not None:
        _check_number(cfg["theta"], "theta", minimum=0.0)
    seeds = cfg["seeds"]
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError(f"seeds: expected a nonempty list, got {seeds!r}")
    for i, seed in enumerate(seeds):
        _check_int(seed, f"seeds[{i}]", minimum=0)
    if len(set(seeds)) != len(seeds):
        raise ConfigError("seeds: entries must be distinct")
    if cfg["t_max"] is not None:
        t_max = _check_int(cfg["t_max"], "t_max", minimum=0)
        if t_max > privacy["T"]:
            raise ConfigError(f"t_max: must be <= privacy.T={privacy['T']}, got {t_max}")
    if not isinstance(cfg["out_dir"], str) or not cfg["out_dir"]:
        raise ConfigError(f"out_dir: expected a nonempty string, got {cfg['out_dir']!r}")

    sweep = cfg["sweep"]
    if sweep is not None:
        if not isinstance(sweep, dict):
            raise ConfigError(f"sweep: expected an object, got {sweep!r}")
        _check_keys(sweep, ("param", "values"), "sweep.")
        param = sweep.get("param")
        values = sweep.get("values")
        if not isinstance(param, str) or not param:
            raise ConfigError(f"sweep.param: expected a nonempty string, got {param!r}")
        if param.split(".", 1)[0] in _UNSWEEPABLE:
            raise ConfigError(f"sweep.param: {param!r} cannot be swept")
        node = cfg
        parts = param.split(".")
        for part in parts[:-1]:
            if not isinstance(node, dict) or part not in node:
                raise ConfigError(f"sweep.param: unknown config path {param!r}")
            node = node[part]
        if not isinstance(node, dict) or parts[-1] not in node:
            raise ConfigError(f"sweep.param: unknown config path {param!r}")
        if not isinstance(values, list) or not values:
            raise ConfigError(f"sweep.values: expected a nonempty list, got {values!r}")
        for i, value in enumerate(values):
            if isinstance(value, (dict, list)):
                raise ConfigError(f"sweep.values[{i}]: expected a scalar, got {value!r}")
    return cfg


def load_config(path) -> dict:
    if path is None:
        raise ConfigError("config: --config PATH is required for this subcommand")
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"config: cannot read {path}: {e}") from e
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config: {path} is not valid JSON: {e}") from e
    return raw


# ---------------------------------------------------------------------------
# resolution


@dataclass(frozen=True)
class ResolvedExperiment:
    """Everything a subcommand needs, resolved once up front."""

    resolved: dict
    fingerprint: str
    out_dir: Path
    problem: object
    privacy: PrivacyConfig
    assumptions: AssumptionParams
    derived: object
    noise: NoiseModel
    lr: float
    local_epochs: int
    theta: float
    seeds: tuple[int, ...]
    t_max: int
    noiseless: bool
    sweep: dict | None


def _fingerprint(resolved: dict) -> str:
    blob = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def resolve(
    raw: dict,
    seed_override: int | None = None,
    out_dir_override=None,
) -> ResolvedExperiment:
    """Validate, fill every null field, and fingerprint the result.

    Resolution order: c from delta, problem from its seed, lr from the
    certified smoothness, C from a noiseless calibration run, assumption
    constants from the certificate, theta from the zero start.
    """
    cfg = validate_config(raw)
    prob_cfg = cfg["problem"]
    priv_cfg = cfg["privacy"]
    assum_cfg = cfg["assumptions"]

    seeds = [seed_override] if seed_override is not None else list(cfg["seeds"])
    if seed_override is not None:
        _check_int(seed_override, "seed-override", minimum=0)

    c = priv_cfg["c"]
    if c is None:
        if priv_cfg["delta"] is None:
            raise ConfigError("privacy.c: null requires privacy.delta to derive it from")
        c = derive_c_from_delta(priv_cfg["delta"])

    rng = np.random.default_rng(prob_cfg["seed"])
    if prob_cfg["kind"] == "quadratic":
        problem = make_quadratic(
            prob_cfg["dim"],
            priv_cfg["N"],
            prob_cfg["spread"],
            prob_cfg["curvature_min"],
            prob_cfg["curvature_max"],
            rng,
            mu=assum_cfg["mu"],
        )
    else:
        problem = make_logistic(
            priv_cfg["m"],
            prob_cfg["dim"],
            priv_cfg["N"],
            prob_cfg["l2_reg"],
            rng,
            mu=assum_cfg["mu"],
        )

    lr = cfg["lr"] if cfg["lr"] is not None else 1.0 / problem.certified.rho
    local_epochs = cfg["local_epochs"]

    clip = priv_cfg["C"]
    if clip is None:
        envelope = noiseless_norm_envelope(problem, priv_cfg["T"], lr, local_epochs)
        clip = 1.5 * envelope if envelope > 0.0 else 1.0
        log.debug("calibrated clip radius C=%.6g from envelope %.6g", clip, envelope)

    p = PrivacyConfig(
        epsilon=priv_cfg["epsilon"],
        c=c,
        C=clip,
        m=priv_cfg["m"],
        N=priv_cfg["N"],
        T=priv_cfg["T"],
        delta=priv_cfg["delta"],
    )
    a = certify(
        problem, clip, mu=assum_cfg["mu"], B=assum_cfg["B"], beta=assum_cfg["beta"]
    )
    if assum_cfg["rho"] is not None or assum_cfg["l"] is not None:
        a = AssumptionParams(
            rho=a.rho if assum_cfg["rho"] is None else assum_cfg["rho"],
            B=a.B,
            mu=a.mu,
            l=a.l if assum_cfg["l"] is None else assum_cfg["l"],
            beta=a.beta,
        )

    theta = cfg["theta"]
    if theta is None:
        theta = problem.gap(np.zeros(problem.dim))
    d = derive_constants(a, p, theta, cfg["lambda1_variant"])

    if cfg["noiseless"]:
        noise = NoiseModel(kind=cfg["noise_kind"], per_coord_std=0.0, dim=problem.dim)
    else:
        noise = make_noise_model(cfg["noise_kind"], d, p, problem.dim)

    t_max = cfg["t_max"] if cfg["t_max"] is not None else p.T

    resolved = {
        "assumptions": {"rho": a.rho, "B": a.B, "mu": a.mu, "l": a.l, "beta": a.beta},
        "lambda1_variant": cfg["lambda1_variant"],
        "local_epochs": local_epochs,
        "lr": lr,
        "noise_kind": cfg["noise_kind"],
        "noiseless": cfg["noiseless"],
        "privacy": {
            "epsilon": p.epsilon,
            "delta": p.delta,
            "c": p.c,
            "C": p.C,
            "m": p.m,
            "N": p.N,
            "T": p.T,
        },
        "problem": dict(prob_cfg),
        "seeds": list(seeds),
        "t_max": t_max,
        "theta": theta,
    }
    out_dir = Path(out_dir_override) if out_dir_override is not None else Path(cfg["out_dir"])
    return ResolvedExperiment(
        resolved=resolved,
        fingerprint=_fingerprint(resolved),
        out_dir=out_dir,
        problem=problem,
        privacy=p,
        assumptions=a,
        derived=d,
        noise=noise,
        lr=lr,
        local_epochs=local_epochs,
        theta=theta,
        seeds=tuple(seeds),
        t_max=t_max,
        noiseless=cfg["noiseless"],
        sweep=cfg["sweep"],
    )


# ---------------------------------------------------------------------------
# execution helpers


def _seed_job(payload):
    problem, p, noise, lr, local_epochs, seed, fingerprint = payload
    return run_training(
        problem, p, noise, lr, local_epochs, seed, config_fingerprint=fingerprint
    )


def _run_seeds(exp: ResolvedExperiment, workers: int | None):
    payloads = [
        (exp.problem, exp.privacy, exp.noise, exp.lr, exp.local_epochs, seed, exp.fingerprint)
        for seed in exp.seeds
    ]
    if workers is not None and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_seed_job, payloads))
    return [_seed_job(payload) for payload in payloads]


def _format(x: float) -> str:
    return format(x, ".17g")


def _bound_columns(exp: ResolvedExperiment, t_max: int):
    """The five bound columns as equal-length lists, rows t = 0..t_max.

    Each unrolled cell is the final value of a t-round unroll, so every row
    describes a complete t-round protocol and matches the closed form.
    """
    d, p, fp = exp.derived, exp.privacy, exp.fingerprint
    original = []
    for t in range(t_max + 1):
        try:
            original.append(original_bound(t, d, p))
        except SingularContractionError as e:
            raise SingularContractionError(f"original_thm2 column, row t={t}: {e}") from e
    corrected = [corrected_bound(t, d, p) for t in range(t_max + 1)]
    via6 = [d.theta] + [unroll("via_eq6", t, d, p, fp).final for t in range(1, t_max + 1)]
    via3 = [d.theta] + [unroll("via_eq3", t, d, p, fp).final for t in range(1, t_max + 1)]
    err = [v for _, v in erroneous_series(t_max, d, p, fp).values]
    return original, corrected, via6, via3, err


def _write_bounds_csv(path: Path, exp: ResolvedExperiment, t_max: int) -> Path:
    columns = _bound_columns(exp, t_max)
    with path.open("w", newline="") as f:
        f.write(f"# config_fingerprint={exp.fingerprint}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(BOUNDS_COLUMNS)
        for t in range(t_max + 1):
            writer.writerow([t] + [_format(col[t]) for col in columns])
    log.info("wrote %s", path)
    return path


def _bound_series_for_audit(exp: ResolvedExperiment) -> list[BoundSeries]:
    d, p, fp = exp.derived, exp.privacy, exp.fingerprint
    series = []
    try:
        values = tuple((t, original_bound(t, d, p)) for t in range(p.T + 1))
        series.append(BoundSeries("original_thm2", values, fp))
    except SingularContractionError:
        log.info("contraction factor is singular; original bound omitted from audit")
    values = tuple((t, corrected_bound(t, d, p)) for t in range(p.T + 1))
    series.append(BoundSeries("corrected_closed", values, fp))
    return series


def _write_json(path: Path, payload: dict) -> Path:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    log.info("wrote %s", path)
    return path


def _ensure_out_dir(exp: ResolvedExperiment) -> Path:
    exp.out_dir.mkdir(parents=True, exist_ok=True)
    return exp.out_dir


# ---------------------------------------------------------------------------
# subcommands


def cmd_bounds(args) -> int:
    exp = resolve(load_config(args.config), args.seed_override, args.out_dir)
    t_max = exp.t_max
    if args.t_max is not None:
        t_max = _check_int(args.t_max, "t-max", minimum=0)
        if t_max > exp.privacy.T:
            raise ConfigError(f"t-max: must be <= privacy.T={exp.privacy.T}, got {t_max}")
    out_dir = _ensure_out_dir(exp)
    _write_bounds_csv(out_dir / "bounds.csv", exp, t_max)
    return EXIT_OK


def cmd_simulate(args) -> int:
    exp = resolve(load_config(args.config), args.seed_override, args.out_dir)
    out_dir = _ensure_out_dir(exp)
    trajectories = _run_seeds(exp, args.workers)
    write_trajectory_csv(trajectories, out_dir / "trajectory.csv")
    log.info("wrote %s", out_dir / "trajectory.csv")
    for traj in trajectories:
        write_trajectory_csv([traj], out_dir / f"trajectory_seed{traj.seed}.csv")
    summary = {
        "config_fingerprint": exp.fingerprint,
        "mean_final_gap": float(np.mean([t.final_gap for t in trajectories])),
        "noise_kind": exp.noise.kind,
        "noiseless": exp.noiseless,
        "per_coord_noise_std": exp.noise.per_coord_std,
        "per_seed": [
            {
                "seed": t.seed,
                "final_gap": t.final_gap,
                "divergence_estimate": t.divergence_estimate,
            }
            for t in trajectories
        ],
        "seeds": list(exp.seeds),
        "theta": exp.theta,
    }
    _write_json(out_dir / "run_summary.json", summary)
    return EXIT_OK


def cmd_audit(args) -> int:
    if args.self_test:
        return _audit_self_test(args)
    exp = resolve(load_config(args.config), args.seed_override, args.out_dir)
    out_dir = _ensure_out_dir(exp)
    paths = args.trajectories or [out_dir / "trajectory.csv"]
    trajectories = []
    for path in paths:
        fingerprint, trajs = read_trajectory_csv(path)
        if fingerprint != exp.fingerprint:
            raise FingerprintMismatchError(
                f"{path}: trajectory fingerprint {fingerprint[:12]}... does not match "
                f"config fingerprint {exp.fingerprint[:12]}..."
            )
        trajectories.extend(trajs)
    report = build_report(
        trajectories, exp.derived, _bound_series_for_audit(exp), exp.fingerprint
    )
    (out_dir / "audit.json").write_text(report.to_json())
    log.info("wrote %s", out_dir / "audit.json")
    return EXIT_OK


def _audit_self_test(args) -> int:
    seed = args.seed_override if args.seed_override is not None else 0
    suite = make_violation_suite(np.random.default_rng(seed))
    result = evaluate_suite(suite)
    payload = {
        "accuracy": result.accuracy,
        "cases": [
            {"name": name, "expected": expected, "actual": actual}
            for name, expected, actual in result.results
        ],
    }
    print(json.dumps(payload, indent=2, sort_keys=True))
    if result.accuracy != 1.0:
        print(
            json.dumps(
                {
                    "error": {
                        "type": "SelfTestFailure",
                        "message": f"misclassified: {', '.join(result.mismatches)}",
                    }
                },
                sort_keys=True,
            ),
            file=sys.stderr,
        )
        return EXIT_COMPUTE
    return EXIT_OK


def cmd_noise_moments(args) -> int:
    exp = resolve(load_config(args.config), args.seed_override, args.out_dir)
    agg = aggregate_view(exp.noise, exp.problem.weights)
    if exp.noiseless:
        paper_mean, paper_sq = 0.0, 0.0
    else:
        nm = paper_noise_moments(exp.derived, exp.privacy)
        paper_mean, paper_sq = nm.mean_norm, nm.mean_sq_norm
    exact_mean = exact_norm_mean(agg.dim, agg.per_coord_std)
    exact_sq = agg.dim * agg.per_coord_std**2
    mc = mc_moments(agg, args.samples, np.random.default_rng(exp.seeds[0]))
    payload = {
        "config_fingerprint": exp.fingerprint,
        "paper_model": {"mean_norm": paper_mean, "mean_sq_norm": paper_sq},
        "monte_carlo": {
            "mean_norm": mc.mean_norm,
            "mean_sq_norm": mc.mean_sq_norm,
            "sample_count": mc.sample_count,
            "std_error_mean_norm": mc.std_error_mean_norm,
        },
        "exact_analytic": {"mean_norm": exact_mean, "mean_sq_norm": exact_sq},
        "discrepancy": {
            "mean_norm": paper_mean - exact_mean,
            "mean_sq_norm": paper_sq - exact_sq,
        },
    }
    print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK


def _set_config_path(cfg: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    node = cfg
    for part in parts[:-1]:
        if not isinstance(node.get(part), dict):
            node[part] = {}
        node = node[part]
    node[parts[-1]] = value


def cmd_sweep(args) -> int:
    raw = load_config(args.config)
    base = resolve(raw, args.seed_override, args.out_dir)
    if base.sweep is None:
        raise ConfigError("sweep: the sweep subcommand needs a sweep section in the config")
    param = base.sweep["param"]
    values = base.sweep["values"]
    out_dir = _ensure_out_dir(base)

    entries = []
    for value in values:
        point_raw = copy.deepcopy(raw)
        _set_config_path(point_raw, param, value)
        point = resolve(point_raw, args.seed_override, args.out_dir)
        short = point.fingerprint[:12]
        log.info("sweep point %s=%r -> %s", param, value, short)

        trajectories = _run_seeds(point, args.workers)
        traj_path = out_dir / f"trajectory_{short}.csv"
        write_trajectory_csv(trajectories, traj_path)
        log.info("wrote %s", traj_path)

        bounds_path = out_dir / f"bounds_{short}.csv"
        original_singular = False
        try:
            _write_bounds_csv(bounds_path, point, point.t_max)
        except SingularContractionError:
            original_singular = True
            bounds_path = None
        entries.append(
            {
                "param": param,
                "value": value,
                "config_fingerprint": point.fingerprint,
                "trajectory_file": traj_path.name,
                "bounds_file": None if bounds_path is None else bounds_path.name,
                "original_singular": original_singular,
                "mean_final_gap": float(np.mean([t.final_gap for t in trajectories])),
            }
        )
    _write_json(
        out_dir / "sweep_manifest.json",
        {"param": param, "values": list(values), "points": entries},
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment config JSON")
    common.add_argument(
        "--out-dir", type=Path, default=None, help="override the configured output directory"
    )
    common.add_argument(
        "--seed-override", type=int, default=None, help="run only this seed"
    )
    common.add_argument(
        "--workers", type=int, default=None, help="parallel workers for seed runs"
    )

    parser = argparse.ArgumentParser(
        prog="nbafl",
        description="Differentially private federated averaging testbed: "
        "bound evaluation, simulation, and inequality auditing.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_bounds = sub.add_parser(
        "bounds", parents=[common], help="evaluate all bound variants to CSV"
    )
    p_bounds.add_argument("--t-max", type=int, default=None, help="last round to evaluate")
    p_bounds.set_defaults(func=cmd_bounds)

    p_sim = sub.add_parser(
        "simulate", parents=[common], help="run the training loop for every seed"
    )
    p_sim.set_defaults(func=cmd_simulate)

    p_audit = sub.add_parser(
        "audit", parents=[common], help="audit every inequality step on recorded runs"
    )
    p_audit.add_argument(
        "--trajectories", type=Path, nargs="+", default=None, help="trajectory CSV files"
    )
    p_audit.add_argument(
        "--self-test",
        action="store_true",
        help="classify the built-in violation suite instead of real runs",
    )
    p_audit.set_defaults(func=cmd_audit)

    p_nm = sub.add_parser(
        "noise-moments",
        parents=[common],
        help="compare analytic, Monte-Carlo, and exact noise-norm moments",
    )
    p_nm.add_argument(
        "--samples", type=int, default=200_000, help="Monte-Carlo sample count"
    )
    p_nm.set_defaults(func=cmd_noise_moments)

    p_sweep = sub.add_parser(
        "sweep", parents=[common], help="run the configured parameter sweep"
    )
    p_sweep.set_defaults(func=cmd_sweep)
    return parser


def _setup_logging() -> None:
    name = os.environ.get("NBAFL_LOG", "error")
    if name not in _LOG_LEVELS:
        raise ConfigError(
            f"NBAFL_LOG: must be one of {sorted(_LOG_LEVELS)}, got {name!r}"
        )
    logging.basicConfig(
        level=_LOG_LEVELS[name],
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _emit_error(exc: BaseException, code: int) -> int:
    payload = {"error": {"type": type(exc).__name__, "message": str(exc)}}
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        _setup_logging()
        if args.workers is not None and args.workers < 1:
            raise ConfigError(f"workers: must be >= 1, got {args.workers}")
        return args.func(args)
    except (
        SingularContractionError,
        NonFiniteModelError,
        OptimumSolveError,
        EmptySampleError,
    ) as e:
        return _emit_error(e, EXIT_COMPUTE)
    except FingerprintMismatchError as e:
        return _emit_error(e, EXIT_CONFIG)
    except ConfigError as e:
        return _emit_error(e, EXIT_CONFIG)
    except (OSError, ValueError) as e:
        return _emit_error(e, EXIT_CONFIG)


if __name__ == "__main__":
    sys.exit(main())
