"""Scalar parameters of the convergence analysis and all derived constants.

Two constant families coexist on purpose. The geometric-decay bound uses

    k1_orig = lambda1*beta*C*c / (m*(1-P)) * sqrt(2/(N*pi))
    k0_orig = lambda0*C^2*c^2 / (m^2*(1-P)*N)

while the additive (corrected) bound uses

    k2_corr = lambda2*beta^2
    k1_corr = 2*lambda1*beta*C*c / m * sqrt(2/(N*pi))
    k0_corr = 4*lambda0*C^2*c^2 / (m^2*N)

with lambda0 = rho/2, lambda1 = 1 + rho*B/mu (a published variant has
1/mu + rho*B/mu instead, kept selectable), lambda2 = -1/mu + 3*rho*B/(2*mu^2),
and contraction factor P = 1 + 2*l*lambda2.

Everything here is a pure function of its inputs; no state, no I/O.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

LAMBDA1_VARIANTS = ("corrected", "original_typo")

#: below this |1-P| the geometric-bound constants are treated as singular
P_SINGULARITY_TOL = 1e-12


def _check_finite(obj, names):
    for name in names:
        value = getattr(obj, name)
        if value is None:
            continue
        if not math.isfinite(value):
            raise ValueError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class AssumptionParams:
    """Loss-landscape constants the analysis assumes.

    rho:  smoothness (Lipschitz-gradient) constant, > 0
    B:    bound on client-vs-global gradient divergence, >= 0
    mu:   analysis constant entering lambda1 and lambda2, > 0
    l:    gradient-dominance (PL) constant, > 0
    beta: bound on the global gradient norm, >= 0
    """

    rho: float
    B: float
    mu: float
    l: float
    beta: float

    def __post_init__(self):
        for f in fields(self):
            object.__setattr__(self, f.name, float(getattr(self, f.name)))
        _check_finite(self, ("rho", "B", "mu", "l", "beta"))
        if self.rho <= 0:
            raise ValueError(f"rho must be > 0, got {self.rho}")
        if self.mu <= 0:
            raise ValueError(f"mu must be > 0, got {self.mu}")
        if self.l <= 0:
            raise ValueError(f"l must be > 0, got {self.l}")
        if self.B < 0:
            raise ValueError(f"B must be >= 0, got {self.B}")
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")


@dataclass(frozen=True)
class PrivacyConfig:
    """Privacy and protocol scale parameters.

    epsilon: privacy budget, > 0 (smaller = stronger privacy = more noise)
    c:       noise-scale constant multiplying the mechanism std, > 0
    C:       clipping radius enforced on uploaded models, > 0
    m:       minimum per-client dataset size, >= 1
    N:       number of clients, >= 1
    T:       total aggregation rounds, >= 1
    delta:   optional DP failure probability in (0, 1); only used when
             c is derived from it (see derive_c_from_delta)
    """

    epsilon: float
    c: float
    C: float
    m: int
    N: int
    T: int
    delta: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "epsilon", float(self.epsilon))
        object.__setattr__(self, "c", float(self.c))
        object.__setattr__(self, "C", float(self.C))
        for name in ("m", "N", "T"):
            value = getattr(self, name)
            if int(value) != value:
                raise ValueError(f"{name} must be an integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if self.delta is not None:
            object.__setattr__(self, "delta", float(self.delta))
        _check_finite(self, ("epsilon", "c", "C", "delta"))
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.c <= 0:
            raise ValueError(f"c must be > 0, got {self.c}")
        if self.C <= 0:
            raise ValueError(f"C must be > 0, got {self.C}")
        if self.m < 1 or self.N < 1 or self.T < 1:
            raise ValueError(
                f"m, N, T must all be >= 1, got m={self.m}, N={self.N}, T={self.T}"
            )
        if self.delta is not None and not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")


@dataclass(frozen=True)
class DerivedConstants:
    """Every constant the bound evaluators need, precomputed once.

    k0_orig/k1_orig are NaN when |1-P| < the singularity tolerance; the
    geometric-bound evaluator raises before touching them in that case.
    beta and l are carried through so the per-round step evaluators can be
    called with this object alone.
    """

    lambda0: float
    lambda1: float
    lambda2: float
    P: float
    delta_s: float
    sigma_agg: float
    k0_orig: float
    k1_orig: float
    k0_corr: float
    k1_corr: float
    k2_corr: float
    theta: float
    beta: float
    l: float


def derive_constants(
    a: AssumptionParams,
    p: PrivacyConfig,
    theta: float,
    lambda1_variant: str = "corrected",
    singularity_tol: float = P_SINGULARITY_TOL,
) -> DerivedConstants:
    """Compute every derived constant for one parameter set.

    theta is the initial optimality gap F(w^(0)) - F(w*), >= 0.
    lambda1_variant selects 1 + rho*B/mu ("corrected") or the published
    variant 1/mu + rho*B/mu ("original_typo").
    """
    theta = float(theta)
    if not math.isfinite(theta) or theta < 0:
        raise ValueError(f"theta must be finite and >= 0, got {theta}")
    if lambda1_variant not in LAMBDA1_VARIANTS:
        raise ValueError(
            f"lambda1_variant must be one of {LAMBDA1_VARIANTS}, got {lambda1_variant!r}"
        )

    lambda0 = a.rho / 2.0
    if lambda1_variant == "corrected":
        lambda1 = 1.0 + a.rho * a.B / a.mu
    else:
        lambda1 = 1.0 / a.mu + a.rho * a.B / a.mu
    # kept verbatim: the rho*B/mu^2 shaped term appears twice in the source analysis
    lambda2 = -1.0 / a.mu + a.rho * a.B / a.mu**2 + a.rho * a.B / (2.0 * a.mu**2)
    P = 1.0 + 2.0 * a.l * lambda2

    delta_s = sensitivity(p.C, p.m, p.N)
    sigma_agg = p.c * delta_s * p.T / (p.epsilon * math.sqrt(p.N))

    k2_corr = lambda2 * a.beta**2
    k1_corr = (2.0 * lambda1 * a.beta * p.C * p.c / p.m) * math.sqrt(2.0 / (p.N * math.pi))
    k0_corr = 4.0 * lambda0 * p.C**2 * p.c**2 / (p.m**2 * p.N)

    one_minus_P = 1.0 - P
    if abs(one_minus_P) < singularity_tol:
        k1_orig = math.nan
        k0_orig = math.nan
    else:
        k1_orig = lambda1 * a.beta * p.C * p.c / (p.m * one_minus_P) * math.sqrt(
            2.0 / (p.N * math.pi)
        )
        k0_orig = lambda0 * p.C**2 * p.c**2 / (p.m**2 * one_minus_P * p.N)

    return DerivedConstants(
        lambda0=lambda0,
        lambda1=lambda1,
        lambda2=lambda2,
        P=P,
        delta_s=delta_s,
        sigma_agg=sigma_agg,
        k0_orig=k0_orig,
        k1_orig=k1_orig,
        k0_corr=k0_corr,
        k1_corr=k1_corr,
        k2_corr=k2_corr,
        theta=theta,
        beta=a.beta,
        l=a.l,
    )


def sensitivity(C: float, m: int, N: int) -> float:
    """Upload sensitivity 2C/(m*N) of the clipped, averaged model."""
    C = float(C)
    if not math.isfinite(C) or C <= 0:
        raise ValueError(f"C must be finite and > 0, got {C}")
    if m < 1 or N < 1:
        raise ValueError(f"m and N must be >= 1, got m={m}, N={N}")
    return 2.0 * C / (m * N)


def derive_c_from_delta(delta: float) -> float:
    """Standard Gaussian-mechanism constant sqrt(2*ln(1.25/delta)).

    Opt-in helper: callers may always set c directly instead.
    """
    delta = float(delta)
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    return math.sqrt(2.0 * math.log(1.25 / delta))
