"""Gaussian noise realizations and reference values for their norm moments.

Two generation schemes are provided because the analysis only pins the
MOMENTS of the aggregate noise, not how it is produced:

    per_client         each client perturbs its clipped upload with
                       per-coordinate std sigma_u = c*delta_s*T/eps; with
                       equal weights the aggregate per-coordinate std is
                       sigma_u/sqrt(N)
    aggregate_matched  a single aggregate perturbation whose per-coordinate
                       std sigma = delta_s*T*c*sqrt(N/dim)/eps makes
                       E||n||^2 = dim*sigma^2 equal the analytic
                       mean_sq_norm exactly

The default elsewhere is aggregate_matched, which keeps bound-vs-trajectory
comparisons apples-to-apples. Norms are Euclidean throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import DerivedConstants, PrivacyConfig

NOISE_KINDS = ("per_client", "aggregate_matched")

_MC_CHUNK = 1 << 17


@dataclass(frozen=True)
class NoiseModel:
    """Sampling spec: i.i.d. zero-mean Gaussian coordinates.

    per_coord_std = 0 is permitted and means noise is disabled.
    """

    kind: str
    per_coord_std: float
    dim: int

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"kind must be one of {NOISE_KINDS}, got {self.kind!r}")
        if not math.isfinite(self.per_coord_std) or self.per_coord_std < 0:
            raise ValueError(f"per_coord_std must be finite and >= 0, got {self.per_coord_std}")
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")


@dataclass(frozen=True)
class EmpiricalMoments:
    """Monte-Carlo estimates of E||n|| and E||n||^2 with a standard error."""

    mean_norm: float
    mean_sq_norm: float
    sample_count: int
    std_error_mean_norm: float

    def __post_init__(self):
        if self.sample_count < 1:
            raise ValueError(f"sample_count must be >= 1, got {self.sample_count}")
        # Jensen holds for any sample set; tolerance absorbs accumulation rounding
        if self.mean_norm**2 > self.mean_sq_norm * (1.0 + 1e-9) + 1e-300:
            raise ValueError(
                f"mean_norm^2 = {self.mean_norm**2} exceeds mean_sq_norm = "
                f"{self.mean_sq_norm}; not a valid sample moment pair"
            )


def make_noise_model(
    kind: str, d: DerivedConstants, p: PrivacyConfig, dim: int
) -> NoiseModel:
    """Build the noise model for one run.

    per_client returns the std each client applies to its own upload;
    aggregate_matched returns the std of the single server-side perturbation.
    """
    if kind not in NOISE_KINDS:
        raise ValueError(f"kind must be one of {NOISE_KINDS}, got {kind!r}")
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    if kind == "per_client":
        std = p.c * d.delta_s * p.T / p.epsilon
    else:
        std = d.delta_s * p.T * p.c * math.sqrt(p.N / dim) / p.epsilon
    return NoiseModel(kind=kind, per_coord_std=std, dim=dim)


def aggregate_view(model: NoiseModel, weights: np.ndarray | None = None) -> NoiseModel:
    """Model of the aggregate perturbation the global update actually receives.

    For per_client models the weighted average of N independent draws has
    per-coordinate std = per_coord_std * sqrt(sum(w_i^2)). aggregate_matched
    models are already aggregate-level and pass through.
    """
    if model.kind == "aggregate_matched":
        return model
    if weights is None:
        raise ValueError("per_client aggregate view needs the aggregation weights")
    w = np.asarray(weights, dtype=float)
    scale = math.sqrt(float(np.sum(w * w)))
    return NoiseModel(
        kind=model.kind, per_coord_std=model.per_coord_std * scale, dim=model.dim
    )


def sample_noise(model: NoiseModel, rng: np.random.Generator) -> np.ndarray:
    """One noise vector; deterministic given (model, generator state)."""
    if model.per_coord_std == 0.0:
        return np.zeros(model.dim)
    return rng.standard_normal(model.dim) * model.per_coord_std


def mc_moments(model: NoiseModel, samples: int, rng: np.random.Generator) -> EmpiricalMoments:
    """Monte-Carlo estimate of E||n|| and E||n||^2 over `samples` draws.

    Chunked so dim * samples never materializes at once.
    """
    if samples < 1:
        raise ValueError(f"samples must be >= 1, got {samples}")
    sum_norm = 0.0
    sum_sq = 0.0  # sum of ||n||^2, which doubles as sum of norm^2 for the SE
    done = 0
    while done < samples:
        n = min(_MC_CHUNK, samples - done)
        if model.per_coord_std == 0.0:
            sq = np.zeros(n)
        else:
            block = rng.standard_normal((n, model.dim)) * model.per_coord_std
            sq = np.einsum("ij,ij->i", block, block)
        sum_norm += float(np.sum(np.sqrt(sq)))
        sum_sq += float(np.sum(sq))
        done += n
    mean_norm = sum_norm / samples
    mean_sq = sum_sq / samples
    if samples > 1:
        var_norm = max(0.0, (sum_sq - samples * mean_norm**2) / (samples - 1))
        std_error = math.sqrt(var_norm / samples)
    else:
        std_error = 0.0
    return EmpiricalMoments(
        mean_norm=mean_norm,
        mean_sq_norm=mean_sq,
        sample_count=samples,
        std_error_mean_norm=std_error,
    )


def exact_norm_mean(dim: int, sigma: float) -> float:
    """Exact E||n|| for n with i.i.d. N(0, sigma^2) coordinates.

    sigma * sqrt(2) * Gamma((dim+1)/2) / Gamma(dim/2), evaluated via lgamma
    so large dim stays stable.
    """
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    sigma = float(sigma)
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0.0:
        return 0.0
    return sigma * math.sqrt(2.0) * math.exp(
        math.lgamma((dim + 1) / 2.0) - math.lgamma(dim / 2.0)
    )
