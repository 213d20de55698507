"""Numeric audits of each inequality step behind the convergence bounds.

Every step in the derivation chain gets one entry: the gradient-dominance
inequality at recorded states (eq2_pl), the per-round increment bound
(eq3_lemma2), its additive rearrangement (eq4_add), the two competing
substitutions that eliminate the gradient term (eq4_to_5 via gradient
dominance, eq4_to_6 via the gradient sup bound), and coverage of the final
closed-form bounds (final_orig_bound, final_corr_bound).

The two substitutions are direction-sensitive: replacing lambda2*x^2 by
2*l*lambda2*g upper-bounds only when lambda2 <= 0, replacing it by
lambda2*beta^2 only when lambda2 >= 0. Entries report what is numerically
true for the given constants instead of hard-coding either published claim.

Expectation-level steps are audited per-realization (primary verdict) and on
seed-averaged quantities (reported inside detail, clearly labeled). Margins
are absolute slacks, RHS minus LHS; a step holds when every slack is at
least HOLD_SLACK.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .bounds import BoundSeries
from .constants import DerivedConstants
from .flsim import Trajectory, TrajectoryRecord

STEP_IDS = (
    "eq2_pl",
    "eq3_lemma2",
    "eq4_add",
    "eq4_to_5",
    "eq4_to_6",
    "final_orig_bound",
    "final_corr_bound",
)
STATUSES = ("holds", "violated", "conditional")
LAMBDA2_SIGNS = ("negative", "zero", "positive")

HOLD_SLACK = -1e-12


class FingerprintMismatchError(ValueError):
    """Inputs carry different config fingerprints and cannot be compared."""


class EmptySampleError(ValueError):
    """No admissible samples remain after filtering."""


def _fmt(x: float) -> str:
    return format(x, ".6e")


@dataclass(frozen=True)
class StepEntry:
    step_id: str
    status: str
    margin: float
    fraction: float
    detail: str

    def __post_init__(self):
        if self.step_id not in STEP_IDS:
            raise ValueError(f"unknown step_id {self.step_id!r}")
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")
        if not math.isfinite(self.margin):
            raise ValueError(f"margin must be finite, got {self.margin}")
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError(f"fraction must be in [0,1], got {self.fraction}")


@dataclass(frozen=True)
class AuditReport:
    entries: tuple[StepEntry, ...]
    lambda2_sign: str
    config_fingerprint: str

    def __post_init__(self):
        if self.lambda2_sign not in LAMBDA2_SIGNS:
            raise ValueError(f"unknown lambda2_sign {self.lambda2_sign!r}")
        ids = [e.step_id for e in self.entries]
        if sorted(ids) != sorted(STEP_IDS):
            raise ValueError(f"report must contain each step exactly once, got {ids}")

    def entry(self, step_id: str) -> StepEntry:
        for e in self.entries:
            if e.step_id == step_id:
                return e
        raise KeyError(step_id)

    def to_json_dict(self) -> dict:
        return {
            "lambda2_sign": self.lambda2_sign,
            "entries": [
                {
                    "step_id": e.step_id,
                    "status": e.status,
                    "margin": e.margin,
                    "fraction": e.fraction,
                    "detail": e.detail,
                }
                for e in self.entries
            ],
            "config_fingerprint": self.config_fingerprint,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2) + "\n"


def report_from_json(text: str) -> AuditReport:
    obj = json.loads(text)
    entries = tuple(
        StepEntry(
            step_id=e["step_id"],
            status=e["status"],
            margin=float(e["margin"]),
            fraction=float(e["fraction"]),
            detail=e["detail"],
        )
        for e in obj["entries"]
    )
    return AuditReport(
        entries=entries,
        lambda2_sign=obj["lambda2_sign"],
        config_fingerprint=obj["config_fingerprint"],
    )


def classify_lambda2_sign(lambda2: float) -> str:
    if lambda2 < 0.0:
        return "negative"
    if lambda2 > 0.0:
        return "positive"
    return "zero"


def _verdict(slacks) -> tuple[str, float, float]:
    """(status, min slack, holding fraction) for a nonempty slack list."""
    margin = min(slacks)
    holding = sum(1 for s in slacks if s >= HOLD_SLACK)
    fraction = holding / len(slacks)
    return ("holds" if fraction == 1.0 else "violated"), margin, fraction


def check_pl(traj: Trajectory, l: float) -> StepEntry:
    """Gradient dominance at every recorded state: gap <= grad_norm^2 / (2l)."""
    if l <= 0:
        raise ValueError(f"l must be > 0, got {l}")
    slacks = [r.grad_norm**2 / (2.0 * l) - r.loss_gap for r in traj.records]
    status, margin, fraction = _verdict(slacks)
    detail = (
        f"min slack {_fmt(margin)} over {len(slacks)} states (seed {traj.seed}); "
        "deterministic inequality, no expectation view"
    )
    return StepEntry("eq2_pl", status, margin, fraction, detail)


def _round_terms(traj: Trajectory, d: DerivedConstants):
    """(lhs, rhs) per round: observed increment vs the increment bound.

    The bound uses the realized noise that produced state t+1, recorded on
    record t+1, against the gradient at state t.
    """
    lhs, rhs = [], []
    for t in range(len(traj.records) - 1):
        rec, nxt = traj.records[t], traj.records[t + 1]
        lhs.append(nxt.loss_gap - rec.loss_gap)
        rhs.append(
            d.lambda2 * rec.grad_norm**2
            + d.lambda1 * nxt.noise_norm * rec.grad_norm
            + d.lambda0 * nxt.noise_sq_norm
        )
    return lhs, rhs


def check_lemma2(traj: Trajectory, d: DerivedConstants) -> StepEntry:
    """Per-round increment bound with realized noise norms."""
    if len(traj.records) < 2:
        return StepEntry(
            "eq3_lemma2",
            "conditional",
            0.0,
            0.0,
            f"single-record trajectory (seed {traj.seed}): no rounds to check",
        )
    lhs, rhs = _round_terms(traj, d)
    slacks = [r - x for x, r in zip(lhs, rhs)]
    status, margin, fraction = _verdict(slacks)
    detail = (
        f"per-realization: {len(slacks)} rounds, min slack {_fmt(margin)} "
        f"(seed {traj.seed})"
    )
    return StepEntry("eq3_lemma2", status, margin, fraction, detail)


def check_eq4_add(traj: Trajectory, d: DerivedConstants) -> StepEntry:
    """Additive rearrangement of the increment bound onto the gap recursion.

    gap(t+1) <= gap(t) + increment-bound RHS is an exact transfer; any gap
    between this entry and eq3_lemma2 is data inconsistency between recorded
    increments and recorded gaps, reported as the identity residual.
    """
    if len(traj.records) < 2:
        return StepEntry(
            "eq4_add",
            "conditional",
            0.0,
            0.0,
            f"single-record trajectory (seed {traj.seed}): no rounds to check",
        )
    _, rhs = _round_terms(traj, d)
    slacks, residual = [], 0.0
    for t in range(len(traj.records) - 1):
        rec, nxt = traj.records[t], traj.records[t + 1]
        slacks.append(rec.loss_gap + rhs[t] - nxt.loss_gap)
        residual = max(residual, abs((nxt.loss_gap - rec.loss_gap) - rec.increment))
    status, margin, fraction = _verdict(slacks)
    detail = (
        f"exact rearrangement of eq3_lemma2; min slack {_fmt(margin)}, "
        f"max identity residual {_fmt(residual)} (seed {traj.seed})"
    )
    return StepEntry("eq4_add", status, margin, fraction, detail)


def check_substitution(
    lambda2: float, l: float, beta: float, samples
) -> tuple[StepEntry, StepEntry]:
    """Audit both gradient-term substitutions on (grad-norm, gap) samples.

    Admissible samples satisfy x^2 >= 2*l*g >= 0 and 0 <= x <= beta; others
    are rejected and counted. eq4_to_5 tests lambda2*x^2 <= 2*l*lambda2*g
    (valid whenever lambda2 <= 0), eq4_to_6 tests lambda2*x^2 <= lambda2*beta^2
    (valid whenever lambda2 >= 0).
    """
    if l <= 0 or beta < 0:
        raise ValueError(f"need l > 0 and beta >= 0, got l={l}, beta={beta}")
    kept, rejected = [], 0
    for x, g in samples:
        if x * x >= 2.0 * l * g >= 0.0 and 0.0 <= x <= beta:
            kept.append((float(x), float(g)))
        else:
            rejected += 1
    if not kept:
        raise EmptySampleError(f"no admissible samples ({rejected} rejected)")

    sign = classify_lambda2_sign(lambda2)
    entries = []
    for step_id, slack_fn, valid_when in (
        ("eq4_to_5", lambda x, g: lambda2 * 2.0 * l * g - lambda2 * x * x, "lambda2 <= 0"),
        ("eq4_to_6", lambda x, g: lambda2 * beta * beta - lambda2 * x * x, "lambda2 >= 0"),
    ):
        slacks = [slack_fn(x, g) for x, g in kept]
        status, margin, fraction = _verdict(slacks)
        detail = (
            f"{len(kept)} admissible samples, {rejected} rejected; "
            f"min slack {_fmt(margin)}; valid direction iff {valid_when} "
            f"(lambda2_sign={sign})"
        )
        if status == "violated":
            worst = kept[int(np.argmin(slacks))]
            detail += f"; witness (x={_fmt(worst[0])}, g={_fmt(worst[1])})"
        entries.append(StepEntry(step_id, status, margin, fraction, detail))
    return entries[0], entries[1]


def _check_shared_fingerprint(*groups) -> str:
    seen = {fp for group in groups for fp in group if fp}
    if len(seen) > 1:
        raise FingerprintMismatchError(
            f"inputs carry {len(seen)} distinct config fingerprints: {sorted(seen)}"
        )
    return next(iter(seen), "")


def _mean_gaps(trajectories) -> list[float]:
    lengths = {len(t.records) for t in trajectories}
    if len(lengths) != 1:
        raise ValueError(f"trajectories disagree on length: {sorted(lengths)}")
    n_rounds = lengths.pop()
    return [
        float(np.mean([t.records[k].loss_gap for t in trajectories]))
        for k in range(n_rounds)
    ]


def compare_final(trajectories, bounds) -> tuple[StepEntry, StepEntry]:
    """Coverage of the closed-form bounds over the seed-mean gap per round.

    Looks up the original/corrected series by variant name in `bounds`; a
    missing series yields a conditional entry. Never ranks the two bounds
    against each other.
    """
    trajectories = list(trajectories)
    if not trajectories:
        raise ValueError("no trajectories")
    by_variant = {b.variant: b for b in bounds}
    _check_shared_fingerprint(
        [t.config_fingerprint for t in trajectories],
        [b.config_fingerprint for b in by_variant.values()],
    )
    mean_gaps = _mean_gaps(trajectories)

    entries = []
    for step_id, variant in (
        ("final_orig_bound", "original_thm2"),
        ("final_corr_bound", "corrected_closed"),
    ):
        series = by_variant.get(variant)
        if series is None:
            entries.append(
                StepEntry(
                    step_id,
                    "conditional",
                    0.0,
                    0.0,
                    f"no {variant} series supplied (singular contraction or omitted)",
                )
            )
            continue
        if len(series.values) < len(mean_gaps):
            raise ValueError(
                f"{variant} series covers {len(series.values)} rounds, "
                f"trajectories have {len(mean_gaps)}"
            )
        slacks = [
            series.values[k][1] - mean_gaps[k] for k in range(len(mean_gaps))
        ]
        status, margin, fraction = _verdict(slacks)
        detail = (
            f"{variant} vs mean gap over {len(trajectories)} seeds, "
            f"{len(mean_gaps)} rounds; coverage {fraction:.4f}, "
            f"min slack {_fmt(margin)}"
        )
        entries.append(StepEntry(step_id, status, margin, fraction, detail))
    return entries[0], entries[1]


def substitution_samples_from(trajectories) -> list[tuple[float, float]]:
    """(grad-norm, gap) pairs from every recorded state."""
    return [
        (rec.grad_norm, rec.loss_gap)
        for traj in trajectories
        for rec in traj.records
    ]


def _merge(step_id: str, entries: list[StepEntry], extra: str = "") -> StepEntry:
    """Fold per-trajectory entries into the single report entry.

    Margin is the worst across trajectories; fraction pools all checks;
    status is violated if any input is, else conditional if any is.
    """
    margins = [e.margin for e in entries]
    fractions = [e.fraction for e in entries]
    if any(e.status == "violated" for e in entries):
        status = "violated"
    elif any(e.status == "conditional" for e in entries):
        status = "conditional"
    else:
        status = "holds"
    detail = " | ".join(e.detail for e in entries)
    if extra:
        detail += " | " + extra
    return StepEntry(
        step_id, status, min(margins), float(np.mean(fractions)), detail
    )


def _expectation_view(trajectories, d: DerivedConstants, additive: bool) -> str:
    """Seed-averaged slack summary for the increment-bound steps."""
    if len(trajectories) < 2:
        return "seed-mean view: n/a (single run)"
    per_round = None
    for traj in trajectories:
        lhs, rhs = _round_terms(traj, d)
        if per_round is None:
            per_round = [[0.0, 0.0] for _ in lhs]
        if len(lhs) != len(per_round):
            return "seed-mean view: n/a (unequal lengths)"
        for k in range(len(lhs)):
            per_round[k][0] += lhs[k]
            per_round[k][1] += rhs[k]
    if not per_round:
        return "seed-mean view: n/a (no rounds)"
    n = len(trajectories)
    slacks = [(r - x) / n for x, r in per_round]
    status, margin, fraction = _verdict(slacks)
    label = "eq4 form" if additive else "eq3 form"
    return (
        f"seed-mean view ({label}, {n} seeds): {status}, "
        f"min slack {_fmt(margin)}, fraction {fraction:.4f}"
    )


def build_report(
    trajectories,
    d: DerivedConstants,
    bounds,
    config_fingerprint: str = "",
) -> AuditReport:
    """Run every step check over a set of runs and assemble the report.

    `bounds` is an iterable of BoundSeries; substitution samples are the
    recorded (grad-norm, gap) states, filtered per the admissibility
    condition. All non-empty fingerprints must agree.
    """
    trajectories = list(trajectories)
    if not trajectories:
        raise ValueError("no trajectories")
    bounds = list(bounds)
    shared = _check_shared_fingerprint(
        [config_fingerprint],
        [t.config_fingerprint for t in trajectories],
        [b.config_fingerprint for b in bounds],
    )

    pl_entries = [check_pl(t, d.l) for t in trajectories]
    eq3_entries = [check_lemma2(t, d) for t in trajectories]
    eq4_entries = [check_eq4_add(t, d) for t in trajectories]
    eq5_entry, eq6_entry = check_substitution(
        d.lambda2, d.l, d.beta, substitution_samples_from(trajectories)
    )
    orig_entry, corr_entry = compare_final(trajectories, bounds)

    entries = (
        _merge("eq2_pl", pl_entries),
        _merge("eq3_lemma2", eq3_entries, _expectation_view(trajectories, d, False)),
        _merge("eq4_add", eq4_entries, _expectation_view(trajectories, d, True)),
        eq5_entry,
        eq6_entry,
        orig_entry,
        corr_entry,
    )
    return AuditReport(
        entries=entries,
        lambda2_sign=classify_lambda2_sign(d.lambda2),
        config_fingerprint=shared or config_fingerprint,
    )


@dataclass(frozen=True)
class SuiteCase:
    """One engineered input with a ground-truth verdict."""

    name: str
    step_id: str
    expected_status: str
    trajectory: Trajectory | None = None
    trajectories: tuple[Trajectory, ...] = ()
    constants: DerivedConstants | None = None
    pl_l: float = math.nan
    lambda2: float = math.nan
    l: float = math.nan
    beta: float = math.nan
    samples: tuple[tuple[float, float], ...] = ()
    bounds: tuple[BoundSeries, ...] = ()


@dataclass(frozen=True)
class SuiteResult:
    accuracy: float
    results: tuple[tuple[str, str, str], ...]  # (name, expected, actual)

    @property
    def mismatches(self) -> tuple[str, ...]:
        return tuple(name for name, exp, act in self.results if exp != act)


def _suite_trajectory(gaps, grads, noises, seed=0, increments=None) -> Trajectory:
    """Hand-built trajectory; increments default to consecutive gap diffs."""
    records = []
    for t in range(len(gaps)):
        if increments is not None:
            inc = increments[t]
        elif t < len(gaps) - 1:
            inc = gaps[t + 1] - gaps[t]
        else:
            inc = math.nan
        records.append(
            TrajectoryRecord(
                round=t,
                loss_gap=gaps[t],
                grad_norm=grads[t],
                noise_norm=noises[t],
                noise_sq_norm=noises[t] ** 2,
                increment=inc,
            )
        )
    return Trajectory(records=tuple(records), seed=seed, config_fingerprint="")


def make_violation_suite(rng: np.random.Generator) -> tuple[SuiteCase, ...]:
    """Inputs engineered to satisfy or violate each step by a known margin.

    The rng only jitters magnitudes; every label is forced by construction,
    so a correct auditor scores 1.0 on any seed.
    """
    slack = 0.05 + 0.2 * float(rng.uniform())
    cases: list[SuiteCase] = []

    # eq2: equality when x^2 = 2*l*g; slack when l shrinks; x=0 with g>0 breaks it.
    eq_traj = _suite_trajectory([0.5, 0.125], [1.0, 0.5], [0.0, 0.0])
    cases.append(SuiteCase("pl_tight_equality", "eq2_pl", "holds", trajectory=eq_traj, pl_l=1.0))
    cases.append(SuiteCase("pl_small_l_slack", "eq2_pl", "holds", trajectory=eq_traj, pl_l=0.5))
    cases.append(
        SuiteCase(
            "pl_zero_grad_positive_gap",
            "eq2_pl",
            "violated",
            trajectory=_suite_trajectory([1.0], [0.0], [0.0]),
            pl_l=1.0,
        )
    )

    # eq3/eq4: constants with lambda0=0.5, lambda1=1.5, lambda2=-0.125; with
    # grad 1 and realized noise 1 the per-round RHS is exactly 1.875.
    d = DerivedConstants(
        lambda0=0.5, lambda1=1.5, lambda2=-0.125, P=0.5,
        delta_s=0.0, sigma_agg=0.0,
        k0_orig=0.0, k1_orig=0.0, k0_corr=0.0, k1_corr=0.0, k2_corr=0.0,
        theta=5.0, beta=2.0, l=2.0,
    )
    rhs = 1.875
    base = 5.0 + float(rng.uniform())

    def ramp(step):
        return [base, base + step, base + 2 * step]

    grads = [1.0, 1.0, 1.0]
    noises = [0.0, 1.0, 1.0]
    cases.append(
        SuiteCase(
            "lemma2_increment_below_rhs",
            "eq3_lemma2",
            "holds",
            trajectory=_suite_trajectory(ramp(rhs - slack), grads, noises),
            constants=d,
        )
    )
    cases.append(
        SuiteCase(
            "lemma2_increment_above_rhs",
            "eq3_lemma2",
            "violated",
            trajectory=_suite_trajectory(ramp(rhs + 1.0), grads, noises),
            constants=d,
        )
    )
    single = _suite_trajectory([1.0], [1.0], [0.0])
    cases.append(
        SuiteCase(
            "lemma2_single_record", "eq3_lemma2", "conditional",
            trajectory=single, constants=d,
        )
    )
    cases.append(
        SuiteCase(
            "eq4_consistent_transfer",
            "eq4_add",
            "holds",
            trajectory=_suite_trajectory(ramp(rhs - slack), grads, noises),
            constants=d,
        )
    )
    # Recorded increments satisfy eq3 but the gaps jump past the bound.
    cases.append(
        SuiteCase(
            "eq4_inconsistent_gaps",
            "eq4_add",
            "violated",
            trajectory=_suite_trajectory(
                ramp(rhs + 1.0), grads, noises,
                increments=[rhs - slack, rhs - slack, math.nan],
            ),
            constants=d,
        )
    )
    cases.append(
        SuiteCase(
            "eq4_single_record", "eq4_add", "conditional",
            trajectory=single, constants=d,
        )
    )

    # Substitution samples: admissible under l=2, beta=2.
    samples = ((2.0, 0.25), (1.0, 0.2), (0.0, 0.0))
    for lam2, exp5, exp6, tag in (
        (-0.125, "holds", "violated", "neg"),
        (0.125, "violated", "holds", "pos"),
        (0.0, "holds", "holds", "zero"),
    ):
        cases.append(
            SuiteCase(
                f"substitution_pl_direction_{tag}", "eq4_to_5", exp5,
                lambda2=lam2, l=2.0, beta=2.0, samples=samples,
            )
        )
        cases.append(
            SuiteCase(
                f"substitution_sup_direction_{tag}", "eq4_to_6", exp6,
                lambda2=lam2, l=2.0, beta=2.0, samples=samples,
            )
        )

    # Final-bound coverage: two seeds, mean gaps [1, 2, 3].
    trajs = (
        _suite_trajectory([0.5, 1.5, 2.5], [1.0, 1.0, 1.0], [0.0, 1.0, 1.0], seed=0),
        _suite_trajectory([1.5, 2.5, 3.5], [1.0, 1.0, 1.0], [0.0, 1.0, 1.0], seed=1),
    )
    above = 0.5 + float(rng.uniform())
    covering = tuple((t, g + above) for t, g in enumerate([1.0, 2.0, 3.0]))
    dipping = ((0, 1.0 + above), (1, 2.0 - 0.5), (2, 3.0 + above))
    for step_id, variant in (
        ("final_orig_bound", "original_thm2"),
        ("final_corr_bound", "corrected_closed"),
    ):
        other = "corrected_closed" if variant == "original_thm2" else "original_thm2"
        cases.append(
            SuiteCase(
                f"{step_id}_covering", step_id, "holds",
                trajectories=trajs,
                bounds=(
                    BoundSeries(variant, covering),
                    BoundSeries(other, covering),
                ),
            )
        )
        cases.append(
            SuiteCase(
                f"{step_id}_dipping", step_id, "violated",
                trajectories=trajs,
                bounds=(
                    BoundSeries(variant, dipping),
                    BoundSeries(other, covering),
                ),
            )
        )
    return tuple(cases)


def evaluate_case(case: SuiteCase) -> StepEntry:
    if case.step_id == "eq2_pl":
        return check_pl(case.trajectory, case.pl_l)
    if case.step_id == "eq3_lemma2":
        return check_lemma2(case.trajectory, case.constants)
    if case.step_id == "eq4_add":
        return check_eq4_add(case.trajectory, case.constants)
    if case.step_id in ("eq4_to_5", "eq4_to_6"):
        e5, e6 = check_substitution(case.lambda2, case.l, case.beta, case.samples)
        return e5 if case.step_id == "eq4_to_5" else e6
    if case.step_id in ("final_orig_bound", "final_corr_bound"):
        orig, corr = compare_final(case.trajectories, case.bounds)
        return orig if case.step_id == "final_orig_bound" else corr
    raise ValueError(f"unknown step_id {case.step_id!r}")


def evaluate_suite(cases) -> SuiteResult:
    results = []
    for case in cases:
        actual = evaluate_case(case).status
        results.append((case.name, case.expected_status, actual))
    correct = sum(1 for _, exp, act in results if exp == act)
    return SuiteResult(accuracy=correct / len(results), results=tuple(results))
