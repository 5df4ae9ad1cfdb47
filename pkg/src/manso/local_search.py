"""Local stochastic solvers advanced one step at a time.

A run is a single local-solver trajectory. The driver advances each active
run by exactly one step per outer iteration, so both built-in solvers are
written as resumable objects: call ``step`` with an estimator, get back one
new iterate plus the evaluations it cost.

Two solvers are provided. The default is a simplified adaptive-sampling
trust-region method: a diagonal quadratic model interpolated on a 2d+1
coordinate stencil inside the current region, re-estimated every step with a
slowly growing per-point sample size, and a standard ratio test driving
radius doubling or halving. The alternative is simultaneous-perturbation
stochastic approximation (SPSA) with the usual decaying gain sequences.

A run "identifies" a minimum when its recent iterates cluster inside an
omega-diameter ball while the solver's internal radius has collapsed; the
cluster centroid is reported as the approximate minimum. This patience
window stands in for the unknowable time after which iterates would remain
near the minimum forever.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import BoxDomain, EstimateStats, RngStream, SamplePoint

__all__ = [
    "Estimator",
    "IdentificationConfig",
    "LsoRun",
    "LsoStepResult",
    "SpsaConfig",
    "SpsaSolver",
    "TrustRegionConfig",
    "TrustRegionSolver",
    "detect_identification",
    "make_solver",
]

# An estimator evaluates the stochastic objective: (x, n, rng) -> EstimateStats.
Estimator = Callable[[np.ndarray, int, RngStream], EstimateStats]


@dataclass(frozen=True)
class LsoStepResult:
    new_iterate: np.ndarray
    evals_consumed: int
    internal_radius: float
    proposed_converged: bool
    value_estimate: float
    value_var: float
    value_n: int = 2  # raw samples behind value_estimate


@dataclass(frozen=True)
class IdentificationConfig:
    """Stopping proxy for "iterates stay within omega of a minimum".

    Requires the last ``window`` iterates to span a diameter below omega and
    the solver's internal radius (trust region or step size) to sit below
    ``min_internal_radius``.
    """

    omega: float
    window: int = 10
    min_internal_radius: float = 1e-3

    def __post_init__(self):
        if self.window < 2:
            raise ValueError("identification window must be >= 2")
        if self.omega <= 0 or self.min_internal_radius <= 0:
            raise ValueError("omega and min_internal_radius must be positive")


@dataclass(frozen=True)
class TrustRegionConfig:
    initial_radius: Optional[float] = None  # default: 0.1 * largest box width
    eta1: float = 0.1
    expand: float = 2.0
    shrink: float = 0.5
    max_radius: Optional[float] = None


@dataclass(frozen=True)
class SpsaConfig:
    a: Optional[float] = None  # default: 0.1 * smallest box width
    c: Optional[float] = None  # default: 0.02 * smallest box width
    stability: float = 10.0  # the additive constant in the step-size decay
    alpha: float = 0.602
    gamma: float = 0.101


class TrustRegionSolver:
    """Derivative-free trust region with a diagonal quadratic model.

    Each step estimates the center and the 2d stencil points x +/- radius*e_i
    (projected into the box) with n_t = max(n, ceil(log^2(t+1))) samples per
    point, fits per-coordinate quadratics, minimizes the separable model over
    the box-intersected region, and accepts or rejects the candidate by the
    achieved-versus-predicted reduction ratio.
    """

    def __init__(
        self,
        domain: BoxDomain,
        start: np.ndarray,
        sampling_effort: int,
        rng: RngStream,
        cfg: TrustRegionConfig = TrustRegionConfig(),
    ):
        self.domain = domain
        self.x = np.array(start, dtype=float)
        self.n = int(sampling_effort)
        self.rng = rng
        self.cfg = cfg
        self.radius = cfg.initial_radius if cfg.initial_radius is not None else 0.1 * domain.max_width
        self.max_radius = cfg.max_radius if cfg.max_radius is not None else domain.max_width
        self.t = 0
        self.model_fallbacks = 0
        self.last_value = EstimateStats(n=1, mean=math.nan, var_of_mean=0.0)

    @property
    def internal_radius(self) -> float:
        return self.radius

    def _n_t(self) -> int:
        return max(self.n, int(math.ceil(math.log(self.t + 1) ** 2)) if self.t > 0 else self.n)

    def next_step_cost(self) -> int:
        return (2 * self.domain.dim + 2) * self._n_t()

    def step(self, estimate: Estimator) -> LsoStepResult:
        d = self.domain.dim
        n_t = self._n_t()
        self.t += 1
        evals = 0

        f0 = estimate(self.x, n_t, self.rng)
        evals += n_t

        g = np.zeros(d)
        h = np.zeros(d)
        for i in range(d):
            e = np.zeros(d)
            e[i] = self.radius
            xp = self.domain.project(self.x + e)
            xm = self.domain.project(self.x - e)
            fp = estimate(xp, n_t, self.rng)
            fm = estimate(xm, n_t, self.rng)
            evals += 2 * n_t
            dp = xp[i] - self.x[i]
            dm = self.x[i] - xm[i]
            if dp > 0 and dm > 0:
                slope_p = (fp.mean - f0.mean) / dp
                slope_m = (f0.mean - fm.mean) / dm
                g[i] = (slope_p * dm + slope_m * dp) / (dp + dm)
                h[i] = 2.0 * (slope_p - slope_m) / (dp + dm)
            elif dp > 0:
                g[i] = (fp.mean - f0.mean) / dp
                self.model_fallbacks += 1
            elif dm > 0:
                g[i] = (f0.mean - fm.mean) / dm
                self.model_fallbacks += 1
            else:  # degenerate coordinate; keep the model flat there
                self.model_fallbacks += 1

        v = self._minimize_model(g, h)
        predicted = -(g @ v + 0.5 * np.sum(h * v * v))

        converged = False
        if predicted <= 1e-14 * max(1.0, abs(f0.mean)):
            # No usable descent direction at this radius; contract.
            self.radius *= self.cfg.shrink
            converged = self.radius < 1e-12
        else:
            xc = self.domain.project(self.x + v)
            fc = estimate(xc, n_t, self.rng)
            evals += n_t
            rho = (f0.mean - fc.mean) / predicted
            step_len = float(np.max(np.abs(v)))
            if rho >= self.cfg.eta1:
                self.x = xc
                f0 = fc
                if step_len >= 0.5 * self.radius:
                    self.radius = min(self.radius * self.cfg.expand, self.max_radius)
                else:
                    # The model's minimizer sits well inside the region, so the
                    # useful scale is the step itself; a radius pinned above it
                    # would never contract on noiseless quadratic basins.
                    self.radius = max(2.0 * step_len, self.radius * self.cfg.shrink)
            else:
                self.radius *= self.cfg.shrink

        self.last_value = f0
        return LsoStepResult(
            new_iterate=self.x.copy(),
            evals_consumed=evals,
            internal_radius=self.radius,
            proposed_converged=converged,
            value_estimate=f0.mean,
            value_var=f0.var_of_mean,
            value_n=f0.n,
        )

    def _minimize_model(self, g: np.ndarray, h: np.ndarray) -> np.ndarray:
        lo = np.maximum(-self.radius, self.domain.lower - self.x)
        hi = np.minimum(self.radius, self.domain.upper - self.x)
        v = np.zeros_like(g)
        for i in range(g.size):
            if h[i] > 0:
                v[i] = np.clip(-g[i] / h[i], lo[i], hi[i])
            else:
                mlo = g[i] * lo[i] + 0.5 * h[i] * lo[i] ** 2
                mhi = g[i] * hi[i] + 0.5 * h[i] * hi[i] ** 2
                best = min(0.0, mlo, mhi)
                if best == 0.0:
                    v[i] = 0.0
                elif mlo <= mhi:
                    v[i] = lo[i]
                else:
                    v[i] = hi[i]
        return v


class SpsaSolver:
    """Simultaneous-perturbation gradient descent, projected onto the box.

    Step t uses gains a_t = a / (t + A)^0.602 and c_t = c / t^0.101 and a
    Rademacher direction; the two perturbed points are each estimated with n
    samples, so every step costs exactly 2n evaluations.
    """

    def __init__(
        self,
        domain: BoxDomain,
        start: np.ndarray,
        sampling_effort: int,
        rng: RngStream,
        cfg: SpsaConfig = SpsaConfig(),
    ):
        self.domain = domain
        self.x = np.array(start, dtype=float)
        self.n = int(sampling_effort)
        self.rng = rng
        self.a = cfg.a if cfg.a is not None else 0.1 * domain.min_width
        self.c = cfg.c if cfg.c is not None else 0.02 * domain.min_width
        self.A = cfg.stability
        self.alpha = cfg.alpha
        self.gamma = cfg.gamma
        self.t = 0
        self._last_displacement = math.inf

    @property
    def internal_radius(self) -> float:
        """Most recent iterate displacement, the natural step-size reading."""
        return self._last_displacement

    def next_step_cost(self) -> int:
        return 2 * self.n

    def estimate_gradient(self, estimate: Estimator, c_t: float) -> tuple:
        delta = self.rng.rademacher(self.domain.dim).astype(float)
        xp = self.domain.project(self.x + c_t * delta)
        xm = self.domain.project(self.x - c_t * delta)
        fp = estimate(xp, self.n, self.rng)
        fm = estimate(xm, self.n, self.rng)
        span = xp - xm
        grad = np.zeros_like(span)
        usable = np.abs(span) > 1e-15
        grad[usable] = (fp.mean - fm.mean) / span[usable]
        return grad, fp, fm

    def step(self, estimate: Estimator) -> LsoStepResult:
        self.t += 1
        a_t = self.a / (self.t + self.A) ** self.alpha
        c_t = self.c / self.t**self.gamma
        grad, fp, fm = self.estimate_gradient(estimate, c_t)
        x_new = self.domain.project(self.x - a_t * grad)
        self._last_displacement = float(np.linalg.norm(x_new - self.x))
        self.x = x_new
        return LsoStepResult(
            new_iterate=self.x.copy(),
            evals_consumed=2 * self.n,
            internal_radius=self._last_displacement,
            proposed_converged=False,
            value_estimate=0.5 * (fp.mean + fm.mean),
            value_var=0.25 * (fp.var_of_mean + fm.var_of_mean),
            value_n=self.n,
        )


SOLVERS = {"trust-region": TrustRegionSolver, "spsa": SpsaSolver}


def make_solver(
    name: str,
    domain: BoxDomain,
    start: np.ndarray,
    sampling_effort: int,
    rng: RngStream,
    options: Optional[dict] = None,
):
    options = dict(options or {})
    if name == "trust-region":
        return TrustRegionSolver(domain, start, sampling_effort, rng, TrustRegionConfig(**options))
    if name == "spsa":
        return SpsaSolver(domain, start, sampling_effort, rng, SpsaConfig(**options))
    raise ValueError(f"unknown solver {name!r}; choose from {sorted(SOLVERS)}")


class LsoRun:
    """State of one local run: start point, iterate history, status."""

    STATUSES = ("active", "terminated-by-proximity", "terminated-by-failure", "identified")

    def __init__(self, run_id: int, start_point: SamplePoint, solver, rng: RngStream):
        self.run_id = run_id
        self.start_point = start_point
        self.solver = solver
        self.rng = rng
        self.iterates: list[np.ndarray] = [np.array(start_point.x, dtype=float)]
        self.values: list[float] = [start_point.stats.mean]
        self.value_vars: list[float] = [start_point.stats.var_of_mean]
        self.status = "active"
        self.identified_center: Optional[np.ndarray] = None
        self.failure_reason: Optional[str] = None
        self.evals_consumed = 0
        self.evals_since_proximity_check = 0

    @property
    def internal_radius(self) -> float:
        return self.solver.internal_radius

    @property
    def current_iterate(self) -> np.ndarray:
        return self.iterates[-1]

    @property
    def current_value(self) -> float:
        return self.values[-1]

    def step(self, estimate: Estimator) -> LsoStepResult:
        if self.status != "active":
            raise RuntimeError(f"cannot step a {self.status} run")
        try:
            result = self.solver.step(estimate)
        except FloatingPointError as exc:  # pragma: no cover - defensive
            self.status = "terminated-by-failure"
            self.failure_reason = str(exc)
            raise
        self.iterates.append(result.new_iterate)
        self.values.append(result.value_estimate)
        self.value_vars.append(result.value_var)
        self.evals_consumed += result.evals_consumed
        self.evals_since_proximity_check += result.evals_consumed
        return result

    def mark_terminated(self, reason: str = "proximity") -> None:
        self._transition(f"terminated-by-{reason}")

    def mark_identified(self, center: np.ndarray) -> None:
        self._transition("identified")
        self.identified_center = np.array(center, dtype=float)

    def _transition(self, status: str) -> None:
        if self.status != "active":
            raise RuntimeError(f"run {self.run_id} already {self.status}")
        if status not in self.STATUSES:
            raise ValueError(f"unknown status {status}")
        self.status = status


def detect_identification(run: LsoRun, cfg: IdentificationConfig) -> Optional[np.ndarray]:
    """Centroid of the last W iterates when they have settled, else None.

    Settled means the W-iterate cluster has diameter strictly below omega and
    the solver's internal radius is strictly below the configured floor.
    """
    if run.status != "active" or len(run.iterates) < cfg.window:
        return None
    tail = np.asarray(run.iterates[-cfg.window :])
    diffs = tail[:, None, :] - tail[None, :, :]
    diameter = float(np.sqrt((diffs**2).sum(axis=2)).max())
    if diameter < cfg.omega and run.internal_radius < cfg.min_internal_radius:
        return tail.mean(axis=0)
    return None
