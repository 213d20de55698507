"""Convergence-bound evaluators: closed forms, per-round recursions, unrolls.

Five series variants are produced:

    original_thm2           P^t*Theta + (k1_orig*t/eps + k0_orig*t^2/eps^2)*(1 - P^t)
    corrected_closed        Theta + k2*t + k1_corr*t^2/eps + k0_corr*t^3/eps^2
    corrected_unrolled_eq6  the additive one-round recursion iterated from Theta
    corrected_unrolled_eq3  t * (per-round increment) added to Theta in one shot
    erroneous_eq5_unrolled  the contraction-style recursion (NOT a valid bound;
                            kept so reports can contrast the two derivations)

The two corrected unrolls and the closed form are the same quantity computed
three ways; their agreement is a tested invariant. The per-round noise moments
are frozen per unrolled horizon: the std entering them uses the TOTAL round
count of the protocol being unrolled (the unroll's T argument), constant
across its rounds, never the current round index. That is what makes
unroll(T).final equal corrected_bound(T) for every T.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .constants import DerivedConstants, P_SINGULARITY_TOL, PrivacyConfig

BOUND_VARIANTS = (
    "original_thm2",
    "corrected_closed",
    "corrected_unrolled_eq6",
    "corrected_unrolled_eq3",
    "erroneous_eq5_unrolled",
)

UNROLL_ROUTES = ("via_eq6", "via_eq3")


class SingularContractionError(ValueError):
    """Raised when |1 - P| is too small for the geometric-bound constants."""


@dataclass(frozen=True)
class NoiseMoments:
    """First and second moment of the aggregate noise norm.

    mean_norm^2 <= mean_sq_norm is deliberately NOT enforced here: the
    analytic formula pair this type usually carries is a heuristic that can
    violate it. Monte-Carlo estimates (module noise) do enforce it.
    """

    mean_norm: float
    mean_sq_norm: float

    def __post_init__(self):
        if self.mean_norm < 0 or self.mean_sq_norm < 0:
            raise ValueError(
                f"noise moments must be >= 0, got "
                f"({self.mean_norm}, {self.mean_sq_norm})"
            )


@dataclass(frozen=True)
class BoundSeries:
    """One bound variant evaluated at t = 0..T."""

    variant: str
    values: tuple[tuple[int, float], ...]
    config_fingerprint: str = ""

    def __post_init__(self):
        if self.variant not in BOUND_VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        for i, (t, _) in enumerate(self.values):
            if t != i:
                raise ValueError(f"rounds must be contiguous from 0, got {t} at index {i}")

    @property
    def final(self) -> float:
        return self.values[-1][1]


def paper_noise_moments(d: DerivedConstants, p: PrivacyConfig) -> NoiseMoments:
    """Analytic aggregate-noise moments used inside the additive bound.

    mean_norm    = delta_s * T * c / eps * sqrt(2N/pi)
    mean_sq_norm = delta_s^2 * T^2 * c^2 * N / eps^2

    The mean_norm formula is a heuristic (sqrt(2N/pi) is exact only for N
    independent scalar magnitudes summed, not for a vector norm); the noise
    module quantifies the discrepancy against the exact chi mean.
    """
    mean_norm = d.delta_s * p.T * p.c / p.epsilon * math.sqrt(2.0 * p.N / math.pi)
    mean_sq_norm = d.delta_s**2 * p.T**2 * p.c**2 * p.N / p.epsilon**2
    return NoiseMoments(mean_norm=mean_norm, mean_sq_norm=mean_sq_norm)


def _check_round(t: int, p: PrivacyConfig) -> int:
    if int(t) != t:
        raise ValueError(f"t must be an integer, got {t!r}")
    t = int(t)
    if not 0 <= t <= p.T:
        raise ValueError(f"t must lie in [0, {p.T}], got {t}")
    return t


def original_bound(
    t: int,
    d: DerivedConstants,
    p: PrivacyConfig,
    singularity_tol: float = P_SINGULARITY_TOL,
) -> float:
    """Geometric-decay bound P^t*Theta + (k1_orig*t/eps + k0_orig*t^2/eps^2)*(1-P^t).

    Raises SingularContractionError when |1-P| < singularity_tol, because
    k1_orig and k0_orig carry a 1/(1-P) factor.
    """
    t = _check_round(t, p)
    if abs(1.0 - d.P) < singularity_tol:
        raise SingularContractionError(
            f"|1-P| = {abs(1.0 - d.P):.3e} is below {singularity_tol:.1e}; "
            "the geometric-bound constants are singular"
        )
    p_t = d.P**t
    return p_t * d.theta + (
        d.k1_orig * t / p.epsilon + d.k0_orig * t**2 / p.epsilon**2
    ) * (1.0 - p_t)


def corrected_bound(t: int, d: DerivedConstants, p: PrivacyConfig) -> float:
    """Additive bound Theta + k2*t + k1_corr*t^2/eps + k0_corr*t^3/eps^2."""
    t = _check_round(t, p)
    return (
        d.theta
        + d.k2_corr * t
        + d.k1_corr * t**2 / p.epsilon
        + d.k0_corr * t**3 / p.epsilon**2
    )


def _raw_additive_step(gap: float, d: DerivedConstants, nm: NoiseMoments) -> float:
    return (
        gap
        + d.lambda2 * d.beta**2
        + d.lambda1 * d.beta * nm.mean_norm
        + d.lambda0 * nm.mean_sq_norm
    )


def one_round_step(gap: float, d: DerivedConstants, nm: NoiseMoments) -> float:
    """One step of the additive recursion: gap + lambda2*beta^2
    + lambda1*beta*E||n|| + lambda0*E||n||^2.

    This is the valid per-round increment bound: the squared-gradient term is
    replaced by its beta^2 ceiling, not by the gradient-dominance floor.
    """
    if gap < 0:
        raise ValueError(f"gap must be >= 0, got {gap}")
    return _raw_additive_step(gap, d, nm)


def erroneous_step(gap: float, d: DerivedConstants, nm: NoiseMoments) -> float:
    """One step of the contraction-style recursion: (1 + 2*l*lambda2)*gap
    + lambda1*beta*E||n|| + lambda0*E||n||^2.

    This recursion substitutes the squared-gradient term by 2*l*gap, which is
    its gradient-dominance FLOOR; the substitution only upper-bounds when
    lambda2 <= 0. Kept as a labeled evaluator so the auditor and plots can
    contrast it against one_round_step; its output is never reported as a
    bound.
    """
    if gap < 0:
        raise ValueError(f"gap must be >= 0, got {gap}")
    return d.P * gap + d.lambda1 * d.beta * nm.mean_norm + d.lambda0 * nm.mean_sq_norm


def unroll(
    route: str,
    T: int,
    d: DerivedConstants,
    p: PrivacyConfig,
    config_fingerprint: str = "",
) -> BoundSeries:
    """Unroll the additive recursion over a T-round protocol by two routes.

    via_eq6 iterates one_round_step from Theta (T additions); via_eq3 adds
    t times the constant per-round increment in a single multiply. The noise
    moments are evaluated at round count T (the horizon being unrolled), so
    both finals equal corrected_bound(T) up to accumulation order; the
    intermediate values are the running partial sums of that T-round unroll.
    """
    if route not in UNROLL_ROUTES:
        raise ValueError(f"route must be one of {UNROLL_ROUTES}, got {route!r}")
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    nm = paper_noise_moments(d, replace(p, T=T))
    values = [(0, d.theta)]
    if route == "via_eq6":
        # raw step: with lambda2 < 0 and small noise the running value can
        # legitimately dip below 0 while still matching the closed form
        gap = d.theta
        for t in range(1, T + 1):
            gap = _raw_additive_step(gap, d, nm)
            values.append((t, gap))
        variant = "corrected_unrolled_eq6"
    else:
        increment = (
            d.lambda2 * d.beta**2
            + d.lambda1 * d.beta * nm.mean_norm
            + d.lambda0 * nm.mean_sq_norm
        )
        for t in range(1, T + 1):
            values.append((t, d.theta + t * increment))
        variant = "corrected_unrolled_eq3"
    return BoundSeries(variant=variant, values=tuple(values), config_fingerprint=config_fingerprint)


def original_series(
    T: int, d: DerivedConstants, p: PrivacyConfig, config_fingerprint: str = ""
) -> BoundSeries:
    values = tuple((t, original_bound(t, d, p)) for t in range(T + 1))
    return BoundSeries("original_thm2", values, config_fingerprint)


def corrected_series(
    T: int, d: DerivedConstants, p: PrivacyConfig, config_fingerprint: str = ""
) -> BoundSeries:
    values = tuple((t, corrected_bound(t, d, p)) for t in range(T + 1))
    return BoundSeries("corrected_closed", values, config_fingerprint)


def erroneous_series(
    T: int, d: DerivedConstants, p: PrivacyConfig, config_fingerprint: str = ""
) -> BoundSeries:
    """Iterate the contraction-style recursion from Theta.

    Computed as the raw linear recursion x <- P*x + const (no gap>=0
    precondition: with P < 0 the iterates may legitimately go negative).
    Labeled non-bound in all reports.
    """
    nm = paper_noise_moments(d, p)
    const = d.lambda1 * d.beta * nm.mean_norm + d.lambda0 * nm.mean_sq_norm
    x = d.theta
    values = [(0, x)]
    for t in range(1, T + 1):
        x = d.P * x + const
        values.append((t, x))
    return BoundSeries("erroneous_eq5_unrolled", tuple(values), config_fingerprint)
