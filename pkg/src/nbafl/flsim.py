"""End-to-end simulation of noising-before-aggregation federated training.

Clients run full-batch gradient steps from the broadcast model, clip to the
C-ball, add uplink noise per the configured model, and the server averages
with weights p_i. Each run produces a Trajectory of the true optimality gap
and the realized aggregate-noise norms, for comparison against the bounds.

Synthetic problems certify their own analysis constants: quadratics carry
exact curvature extremes (PL constant = smallest eigenvalue), logistic
instances get the standard smoothness and strong-convexity values.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .constants import AssumptionParams, PrivacyConfig
from .noise import NoiseModel, sample_noise

TRAJECTORY_COLUMNS = (
    "seed",
    "round",
    "loss_gap",
    "grad_norm",
    "noise_norm",
    "noise_sq_norm",
    "increment",
)

_GAP_CLAMP_TOL = 1e-9


class NonFiniteModelError(RuntimeError):
    """A model iterate left the finite range; the run is aborted."""


class OptimumSolveError(RuntimeError):
    """The optimum solve did not reach its gradient tolerance in time."""


@dataclass(frozen=True)
class TrajectoryRecord:
    round: int
    loss_gap: float
    grad_norm: float
    noise_norm: float
    noise_sq_norm: float
    increment: float  # gap(t+1) - gap(t); NaN on the final record


@dataclass(frozen=True)
class Trajectory:
    """Per-round records of one seeded run, t = 0..T."""

    records: tuple[TrajectoryRecord, ...]
    seed: int
    config_fingerprint: str
    divergence_estimate: float = math.nan  # max over rounds of max_i ||grad_i - grad||

    def __post_init__(self):
        for i, rec in enumerate(self.records):
            if rec.round != i:
                raise ValueError(f"records must be contiguous from 0, got round {rec.round} at {i}")
            if rec.loss_gap < 0:
                raise ValueError(f"loss_gap must be >= 0, got {rec.loss_gap} at round {rec.round}")

    @property
    def final_gap(self) -> float:
        return self.records[-1].loss_gap


def _clamped_gap(raw_gap: float, scale: float) -> float:
    if raw_gap >= 0.0:
        return raw_gap
    if raw_gap < -_GAP_CLAMP_TOL * max(1.0, scale):
        raise RuntimeError(
            f"loss fell {-raw_gap:.3e} below the certified optimum; "
            "the problem's f_star is wrong"
        )
    return 0.0


class QuadraticProblem:
    """Clients share an SPD curvature A and differ by their centers a_i.

    F_i(w) = 0.5*(w-a_i)' A (w-a_i); the weighted optimum is w* = sum p_i a_i
    in closed form, so the optimality gap 0.5*(w-w*)' A (w-w*) is exact.
    """

    kind = "quadratic"

    def __init__(
        self,
        curvature: np.ndarray,
        centers: np.ndarray,
        weights: np.ndarray,
        certified: AssumptionParams,
    ):
        self.curvature = np.asarray(curvature, dtype=float)
        self.centers = np.asarray(centers, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        self.dim = self.curvature.shape[0]
        self.n_clients = self.centers.shape[0]
        self.w_star = self.weights @ self.centers
        diffs = self.centers - self.w_star
        self.f_star = 0.5 * float(np.sum(self.weights * np.einsum("ij,jk,ik->i", diffs, self.curvature, diffs)))
        self.certified = certified
        self._max_center_norm = float(np.max(np.linalg.norm(self.centers, axis=1)))

    def client_grad(self, i: int, w: np.ndarray) -> np.ndarray:
        return self.curvature @ (w - self.centers[i])

    def client_loss(self, i: int, w: np.ndarray) -> float:
        v = w - self.centers[i]
        return 0.5 * float(v @ (self.curvature @ v))

    def grad(self, w: np.ndarray) -> np.ndarray:
        return self.curvature @ (w - self.w_star)

    def gap(self, w: np.ndarray) -> float:
        v = w - self.w_star
        return _clamped_gap(0.5 * float(v @ (self.curvature @ v)), abs(self.f_star))

    def loss(self, w: np.ndarray) -> float:
        return self.f_star + self.gap(w)

    def grad_norm_bound(self, radius: float) -> float:
        """sup ||grad F|| over the radius-ball: rho * (radius + max ||a_i||)."""
        return self.certified.rho * (radius + self._max_center_norm)

    def divergence_bound(self) -> float:
        """max_i ||A (a_i - w*)||, exact and independent of w."""
        return float(np.max(np.linalg.norm((self.centers - self.w_star) @ self.curvature.T, axis=1)))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class LogisticProblem:
    """L2-regularized binary logistic regression on synthetic client data.

    Strong convexity with modulus l2_reg gives the PL constant; smoothness is
    0.25 * lambda_max(feature second moment) + l2_reg.
    """

    kind = "logistic"

    def __init__(
        self,
        features: tuple[np.ndarray, ...],
        labels: tuple[np.ndarray, ...],
        l2_reg: float,
        weights: np.ndarray,
        w_star: np.ndarray,
        certified: AssumptionParams,
    ):
        self.features = tuple(np.asarray(X, dtype=float) for X in features)
        self.labels = tuple(np.asarray(y, dtype=float) for y in labels)
        self.l2_reg = float(l2_reg)
        self.weights = np.asarray(weights, dtype=float)
        self.dim = self.features[0].shape[1]
        self.n_clients = len(self.features)
        self.w_star = np.asarray(w_star, dtype=float)
        self.certified = certified
        self._mean_row_norms = np.array(
            [float(np.mean(np.linalg.norm(X, axis=1))) for X in self.features]
        )
        self.f_star = self.loss(self.w_star)

    def client_loss(self, i: int, w: np.ndarray) -> float:
        margins = self.labels[i] * (self.features[i] @ w)
        return float(np.mean(np.logaddexp(0.0, -margins))) + 0.5 * self.l2_reg * float(w @ w)

    def client_grad(self, i: int, w: np.ndarray) -> np.ndarray:
        X, y = self.features[i], self.labels[i]
        s = _sigmoid(-y * (X @ w))
        return -(X.T @ (y * s)) / X.shape[0] + self.l2_reg * w

    def loss(self, w: np.ndarray) -> float:
        return float(sum(p * self.client_loss(i, w) for i, p in enumerate(self.weights)))

    def grad(self, w: np.ndarray) -> np.ndarray:
        g = np.zeros(self.dim)
        for i, p in enumerate(self.weights):
            g += p * self.client_grad(i, w)
        return g

    def gap(self, w: np.ndarray) -> float:
        return _clamped_gap(self.loss(w) - self.f_star, max(1.0, abs(self.f_star)))

    def grad_norm_bound(self, radius: float) -> float:
        return float(self.weights @ self._mean_row_norms) + self.l2_reg * radius

    def divergence_bound(self) -> float:
        pooled = float(self.weights @ self._mean_row_norms)
        return float(np.max(self._mean_row_norms)) + pooled


Problem = QuadraticProblem | LogisticProblem


def _normalized_weights(weights, n_clients: int) -> np.ndarray:
    if weights is None:
        return np.full(n_clients, 1.0 / n_clients)
    w = np.asarray(weights, dtype=float)
    if w.shape != (n_clients,) or np.any(w <= 0):
        raise ValueError("weights must be positive with one entry per client")
    return w / w.sum()


def make_quadratic(
    dim: int,
    n_clients: int,
    spread: float,
    curvature_min: float,
    curvature_max: float,
    rng: np.random.Generator,
    *,
    weights=None,
    mu: float = 1.0,
    clip_radius: float = 1.0,
) -> QuadraticProblem:
    """Random quadratic instance with exact certified constants.

    Eigenvalues of the shared curvature span [curvature_min, curvature_max]
    (equal bounds give an exactly isotropic A = c*I); centers are drawn
    uniformly in the origin ball of the given spread. certified.beta is the
    gradient sup over the clip_radius ball; re-derive with certify() once the
    actual clipping radius is known.
    """
    if dim < 1 or n_clients < 1:
        raise ValueError(f"dim and n_clients must be >= 1, got {dim}, {n_clients}")
    if not 0 < curvature_min <= curvature_max:
        raise ValueError(
            f"need 0 < curvature_min <= curvature_max, got {curvature_min}, {curvature_max}"
        )
    if spread < 0:
        raise ValueError(f"spread must be >= 0, got {spread}")
    if dim == 1 and curvature_min != curvature_max:
        raise ValueError("dim=1 has a single eigenvalue; set curvature_min == curvature_max")

    if curvature_min == curvature_max:
        A = curvature_min * np.eye(dim)
        lo, hi = curvature_min, curvature_max
    else:
        eigs = np.linspace(curvature_min, curvature_max, dim)
        q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
        A = (q * eigs) @ q.T
        A = 0.5 * (A + A.T)
        realized = np.linalg.eigvalsh(A)
        lo, hi = float(realized[0]), float(realized[-1])

    if spread == 0.0:
        centers = np.zeros((n_clients, dim))
    else:
        g = rng.standard_normal((n_clients, dim))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        radii = spread * rng.uniform(size=n_clients) ** (1.0 / dim)
        centers = g * radii[:, None]

    w = _normalized_weights(weights, n_clients)
    max_center = float(np.max(np.linalg.norm(centers, axis=1)))
    certified = AssumptionParams(
        rho=hi,
        B=float(np.max(np.linalg.norm((centers - w @ centers) @ A.T, axis=1))),
        mu=mu,
        l=lo,
        beta=hi * (clip_radius + max_center),
    )
    return QuadraticProblem(curvature=A, centers=centers, weights=w, certified=certified)


def make_logistic(
    n_samples_per_client: int,
    dim: int,
    n_clients: int,
    l2_reg: float,
    rng: np.random.Generator,
    *,
    weights=None,
    mu: float = 1.0,
    clip_radius: float = 1.0,
    solve_tol: float = 1e-11,
    max_iter: int = 500_000,
) -> LogisticProblem:
    """Synthetic separable-ish binary classification, one dataset per client.

    l2_reg > 0 is required: it is the strong-convexity modulus and hence the
    certified PL constant. The global optimum is solved by full-batch descent
    to gradient norm below solve_tol.
    """
    if l2_reg <= 0:
        raise ValueError(f"l2_reg must be > 0, got {l2_reg}")
    if n_samples_per_client < 1 or dim < 1 or n_clients < 1:
        raise ValueError("n_samples_per_client, dim, n_clients must all be >= 1")

    w_true = rng.standard_normal(dim)
    nrm = np.linalg.norm(w_true)
    if nrm > 0:
        w_true *= 2.0 / nrm
    features, labels = [], []
    for _ in range(n_clients):
        X = rng.standard_normal((n_samples_per_client, dim))
        margin = X @ w_true + 0.3 * rng.standard_normal(n_samples_per_client)
        y = np.where(margin >= 0, 1.0, -1.0)
        features.append(X)
        labels.append(y)

    w = _normalized_weights(weights, n_clients)
    second_moment = sum(
        p * (X.T @ X) / X.shape[0] for p, X in zip(w, features)
    )
    lam_max = float(np.linalg.eigvalsh(second_moment)[-1])
    rho = 0.25 * lam_max + l2_reg

    mean_row_norms = np.array([float(np.mean(np.linalg.norm(X, axis=1))) for X in features])
    pooled = float(w @ mean_row_norms)
    certified = AssumptionParams(
        rho=rho,
        B=float(np.max(mean_row_norms)) + pooled,
        mu=mu,
        l=l2_reg,
        beta=pooled + l2_reg * clip_radius,
    )

    problem = LogisticProblem(
        features=tuple(features),
        labels=tuple(labels),
        l2_reg=l2_reg,
        weights=w,
        w_star=np.zeros(dim),
        certified=certified,
    )
    wk = np.zeros(dim)
    lr = 1.0 / rho
    for _ in range(max_iter):
        g = problem.grad(wk)
        if float(np.linalg.norm(g)) < solve_tol:
            break
        wk -= lr * g
    else:
        raise OptimumSolveError(
            f"optimum solve exceeded {max_iter} iterations "
            f"(grad norm {float(np.linalg.norm(problem.grad(wk))):.3e})"
        )
    return LogisticProblem(
        features=tuple(features),
        labels=tuple(labels),
        l2_reg=l2_reg,
        weights=w,
        w_star=wk,
        certified=certified,
    )


def certify(
    problem: Problem,
    clip_radius: float,
    mu: float | None = None,
    B: float | None = None,
    beta: float | None = None,
) -> AssumptionParams:
    """Re-derive the certified constants for a final clipping radius.

    rho and l are intrinsic to the instance; beta depends on the clip ball
    and B may be overridden by a configured value.
    """
    base = problem.certified
    return AssumptionParams(
        rho=base.rho,
        B=base.B if B is None else B,
        mu=base.mu if mu is None else mu,
        l=base.l,
        beta=problem.grad_norm_bound(clip_radius) if beta is None else beta,
    )


@dataclass(frozen=True)
class FLState:
    """Server-side state after `round` aggregations.

    client_models are the clipped (pre-noise) uploads of the round that
    produced this state; agg_noise is the aggregate perturbation added that
    round, and preclip_norm_max the largest upload norm before clipping
    (both drive trajectory records and clip calibration).
    """

    round: int
    global_model: np.ndarray
    client_models: tuple[np.ndarray, ...] = ()
    rng: np.random.Generator | None = None
    agg_noise: np.ndarray | None = None
    preclip_norm_max: float = 0.0


def nbafl_round(
    state: FLState,
    problem: Problem,
    p: PrivacyConfig,
    noise: NoiseModel,
    lr: float,
    local_epochs: int,
    rng: np.random.Generator | None = None,
) -> FLState:
    """One aggregation round: local training, clipping, noising, averaging."""
    if lr <= 0:
        raise ValueError(f"lr must be > 0, got {lr}")
    if local_epochs < 1:
        raise ValueError(f"local_epochs must be >= 1, got {local_epochs}")
    gen = rng if rng is not None else state.rng
    if gen is None:
        raise ValueError("no generator: pass rng or use a state that carries one")

    w0 = state.global_model
    clipped = []
    preclip_max = 0.0
    for i in range(problem.n_clients):
        w = w0.copy()
        for _ in range(local_epochs):
            w -= lr * problem.client_grad(i, w)
        nrm = float(np.linalg.norm(w))
        preclip_max = max(preclip_max, nrm)
        if nrm > p.C:
            w *= p.C / nrm
            if float(np.linalg.norm(w)) > p.C * (1.0 + 1e-9):
                raise RuntimeError("clip projection failed to land inside the C-ball")
        clipped.append(w)

    weights = problem.weights
    if noise.kind == "per_client" and noise.per_coord_std > 0.0:
        agg = np.zeros(problem.dim)
        agg_noise = np.zeros(problem.dim)
        for i, w in enumerate(clipped):
            n_i = sample_noise(noise, gen)
            agg += weights[i] * (w + n_i)
            agg_noise += weights[i] * n_i
    else:
        agg = np.einsum("i,ij->j", weights, np.asarray(clipped))
        if noise.kind == "aggregate_matched":
            agg_noise = sample_noise(noise, gen)
            agg = agg + agg_noise
        else:
            agg_noise = np.zeros(problem.dim)

    if not np.all(np.isfinite(agg)):
        raise NonFiniteModelError(
            f"nonfinite global model at round {state.round + 1}: "
            f"max|w| = {float(np.max(np.abs(agg)))!r}, lr = {lr}, "
            f"noise std = {noise.per_coord_std}"
        )
    return FLState(
        round=state.round + 1,
        global_model=agg,
        client_models=tuple(clipped),
        rng=gen,
        agg_noise=agg_noise,
        preclip_norm_max=preclip_max,
    )


def run_training(
    problem: Problem,
    p: PrivacyConfig,
    noise: NoiseModel,
    lr: float,
    local_epochs: int,
    seed: int,
    w0: np.ndarray | None = None,
    config_fingerprint: str = "",
) -> Trajectory:
    """Run T aggregation rounds from w0 (default zeros) and record everything.

    Record t describes the state after t rounds: its noise fields hold the
    aggregate perturbation that produced that state (zero at t=0), and its
    increment is gap(t+1) - gap(t) (NaN on the final record).
    """
    if noise.dim != problem.dim:
        raise ValueError(f"noise dim {noise.dim} != problem dim {problem.dim}")
    gen = np.random.default_rng(seed)
    w = np.zeros(problem.dim) if w0 is None else np.asarray(w0, dtype=float).copy()
    state = FLState(round=0, global_model=w, rng=gen)

    gaps = [problem.gap(w)]
    grad_norms = [float(np.linalg.norm(problem.grad(w)))]
    noise_norms = [0.0]
    divergence = _divergence_at(problem, w)
    for _ in range(p.T):
        state = nbafl_round(state, problem, p, noise, lr, local_epochs)
        wt = state.global_model
        gaps.append(problem.gap(wt))
        grad_norms.append(float(np.linalg.norm(problem.grad(wt))))
        noise_norms.append(float(np.linalg.norm(state.agg_noise)))
        divergence = max(divergence, _divergence_at(problem, wt))

    records = []
    for t in range(p.T + 1):
        increment = gaps[t + 1] - gaps[t] if t < p.T else math.nan
        records.append(
            TrajectoryRecord(
                round=t,
                loss_gap=gaps[t],
                grad_norm=grad_norms[t],
                noise_norm=noise_norms[t],
                noise_sq_norm=noise_norms[t] ** 2,
                increment=increment,
            )
        )
    return Trajectory(
        records=tuple(records),
        seed=seed,
        config_fingerprint=config_fingerprint,
        divergence_estimate=divergence,
    )


def _divergence_at(problem: Problem, w: np.ndarray) -> float:
    g = problem.grad(w)
    return max(
        float(np.linalg.norm(problem.client_grad(i, w) - g))
        for i in range(problem.n_clients)
    )


def noiseless_norm_envelope(
    problem: Problem, T: int, lr: float, local_epochs: int
) -> float:
    """Largest pre-clip upload norm over a noiseless, clipless run from zeros.

    Used to pick a default clipping radius (1.5x this value) that is active
    but not dominant.
    """
    w = np.zeros(problem.dim)
    envelope = 0.0
    for _ in range(T):
        uploads = []
        for i in range(problem.n_clients):
            wi = w.copy()
            for _ in range(local_epochs):
                wi -= lr * problem.client_grad(i, wi)
            envelope = max(envelope, float(np.linalg.norm(wi)))
            uploads.append(wi)
        w = np.einsum("i,ij->j", problem.weights, np.asarray(uploads))
    return envelope


def _format(x: float) -> str:
    return format(x, ".17g")


def write_trajectory_csv(trajectories, path) -> None:
    """One CSV for a set of runs sharing a config fingerprint."""
    trajectories = list(trajectories)
    if not trajectories:
        raise ValueError("no trajectories to write")
    fingerprints = {t.config_fingerprint for t in trajectories}
    if len(fingerprints) != 1:
        raise ValueError(f"trajectories carry {len(fingerprints)} distinct fingerprints")
    path = Path(path)
    with path.open("w", newline="") as f:
        f.write(f"# config_fingerprint={trajectories[0].config_fingerprint}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(TRAJECTORY_COLUMNS)
        for traj in trajectories:
            for rec in traj.records:
                writer.writerow(
                    [
                        traj.seed,
                        rec.round,
                        _format(rec.loss_gap),
                        _format(rec.grad_norm),
                        _format(rec.noise_norm),
                        _format(rec.noise_sq_norm),
                        _format(rec.increment),
                    ]
                )


def read_trajectory_csv(path) -> tuple[str, list[Trajectory]]:
    """Inverse of write_trajectory_csv; returns (fingerprint, trajectories)."""
    path = Path(path)
    with path.open("r", newline="") as f:
        first = f.readline().strip()
        if not first.startswith("# config_fingerprint="):
            raise ValueError(f"{path}: missing config_fingerprint header comment")
        fingerprint = first.split("=", 1)[1]
        reader = csv.reader(f)
        header = next(reader)
        if tuple(header) != TRAJECTORY_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {header}")
        by_seed: dict[int, list[TrajectoryRecord]] = {}
        for row in reader:
            seed = int(row[0])
            by_seed.setdefault(seed, []).append(
                TrajectoryRecord(
                    round=int(row[1]),
                    loss_gap=float(row[2]),
                    grad_norm=float(row[3]),
                    noise_norm=float(row[4]),
                    noise_sq_norm=float(row[5]),
                    increment=float(row[6]),
                )
            )
    return fingerprint, [
        Trajectory(records=tuple(recs), seed=seed, config_fingerprint=fingerprint)
        for seed, recs in by_seed.items()
    ]
