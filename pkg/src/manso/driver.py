"""Outer multistart loop: sampling, start decisions, stepping, termination.

Each iteration (i) draws one uniform point when the active-run count is
below the cap, (ii) recomputes the critical radius from the sample count,
(iii) starts local runs from every sampled point that passes the start
rules, (iv) advances every active run one solver step, (v) terminates runs
whose newest iterate strays within 2*omega of another run's earlier
iterates, and (vi) harvests settled runs into the identified-minima set.

Everything is driven by one master seed: the point sampler, the estimate
noise for sampled points, and each run's private stream are derived from it
with fixed stream ids, so a full run is a pure function of (config, seed)
regardless of how the work would be scheduled.

Evaluation accounting is strict: every raw objective measurement, whether
spent on a sampled point or inside a solver step, debits one unit from the
budget, and a sub-step is only begun if its worst-case cost still fits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import (
    BoxDomain,
    EstimateStats,
    RngStream,
    SamplePoint,
    radius_schedule,
    uniform_sample,
    update_estimate,
)
from .local_search import (
    IdentificationConfig,
    LsoRun,
    detect_identification,
    make_solver,
)
from .start_rules import StartDecision, StartRuleConfig, check_s2, check_s3, evaluate_start_conditions

__all__ = [
    "IdentifiedMinimum",
    "MansoConfig",
    "MansoState",
    "RunReport",
    "dedup_minimum",
    "manso_iteration",
    "run_to_budget",
]

# Stream id allocation under the master seed.
STREAM_SAMPLER = 0
STREAM_SAMPLE_NOISE = 1
STREAM_RUN_BASE = 1000


@dataclass(frozen=True)
class MansoConfig:
    """Everything the driver needs besides the objective itself."""

    start_rules: StartRuleConfig
    sigma: float = 5.0
    max_active_runs: int = 10
    evals_budget: int = 10_000
    solver: str = "trust-region"
    solver_options: dict = field(default_factory=dict)
    identification: Optional[IdentificationConfig] = None
    proximity_check_evals: int = 0  # 0: check every iteration; else per-run eval cadence
    master_seed: int = 0

    def __post_init__(self):
        if self.sigma <= 4:
            raise ValueError(f"sigma must exceed 4 (got {self.sigma})")
        if self.max_active_runs < 1:
            raise ValueError("max_active_runs must be >= 1")
        if self.evals_budget < 1:
            raise ValueError("evals_budget must be >= 1")
        if self.solver not in ("trust-region", "spsa"):
            raise ValueError(f"unknown solver {self.solver!r}")

    def identification_for(self, domain: BoxDomain) -> IdentificationConfig:
        if self.identification is not None:
            return self.identification
        return IdentificationConfig(
            omega=self.start_rules.omega,
            window=10,
            min_internal_radius=1e-3 * domain.min_width,
        )


@dataclass(frozen=True)
class IdentifiedMinimum:
    center: np.ndarray
    value: float
    variance: float
    run_id: int
    eval_index: int

    def __post_init__(self):
        c = np.array(self.center, dtype=float, copy=True)
        c.flags.writeable = False
        object.__setattr__(self, "center", c)


class _Budget:
    """Raw-evaluation ledger; sub-steps must fit before they begin."""

    def __init__(self, total: int):
        self.total = int(total)
        self.used = 0

    @property
    def remaining(self) -> int:
        return self.total - self.used

    def can_afford(self, cost: int) -> bool:
        return cost <= self.remaining

    def spend(self, cost: int) -> None:
        if cost > self.remaining:
            raise RuntimeError("budget overspend; sub-steps must pre-check affordability")
        self.used += cost


class MansoState:
    """Mutable aggregate of the sets S, A, L, X_hat plus counters and trace.

    Sampled points and iterates are mirrored into flat arrays so the
    per-iteration neighborhood scans stay vectorized. The start-rule S1 scan
    is served by an incrementally maintained cache: for every sampled point,
    the distance to (and index of) its nearest sampled neighbor whose mean
    does not exceed its own. Under the default plug-in margin, that point is
    S1-rejected exactly when this distance is within the current radius.
    """

    def __init__(self, domain: BoxDomain, cfg: MansoConfig):
        self.domain = domain
        self.cfg = cfg
        self._sampler_rng = RngStream(cfg.master_seed, STREAM_SAMPLER)
        self._sample_noise_rng = RngStream(cfg.master_seed, STREAM_SAMPLE_NOISE)
        self.S: list[SamplePoint] = []
        self.active: dict[int, LsoRun] = {}
        self.runs: dict[int, LsoRun] = {}
        self.L: list[SamplePoint] = []
        self.X_hat: list[IdentifiedMinimum] = []
        self.k = 0
        self.budget = _Budget(cfg.evals_budget)
        self.trace: list[dict] = []
        self.t_history: list[int] = []
        self._next_run_id = 0
        d = domain.dim
        cap = 256
        self._s_cap = cap
        self._s_x = np.empty((cap, d))
        self._s_mean = np.empty(cap)
        self._s_started = np.zeros(cap, dtype=bool)
        self._s_barred = np.zeros(cap, dtype=bool)  # permanent S3 rejections
        self._s_s2_blocked = np.zeros(cap, dtype=bool)  # within omega of a current minimum
        self._s_witness_dist = np.empty(cap)
        self._s_witness_idx = np.empty(cap, dtype=np.int64)
        self._l_cap = cap
        self._l_len = 0
        self._l_x = np.empty((cap, d))
        self._l_run = np.empty(cap, dtype=np.int64)
        self._event_sink: Optional[Callable[[dict], None]] = None

    def _grow_s(self) -> None:
        new_cap = self._s_cap * 2
        for name in ("_s_x", "_s_mean", "_s_started", "_s_barred", "_s_s2_blocked",
                     "_s_witness_dist", "_s_witness_idx"):
            old = getattr(self, name)
            shape = (new_cap,) + old.shape[1:]
            fresh = np.zeros(shape, dtype=old.dtype) if old.dtype == bool else np.empty(shape, dtype=old.dtype)
            fresh[: self._s_cap] = old
            setattr(self, name, fresh)
        self._s_cap = new_cap

    def _grow_l(self) -> None:
        new_cap = self._l_cap * 2
        for name in ("_l_x", "_l_run"):
            old = getattr(self, name)
            fresh = np.empty((new_cap,) + old.shape[1:], dtype=old.dtype)
            fresh[: self._l_cap] = old
            setattr(self, name, fresh)
        self._l_cap = new_cap

    # -- read access used by the start rules ---------------------------------

    @property
    def evals_used(self) -> int:
        return self.budget.used

    @property
    def evals_budget(self) -> int:
        return self.budget.total

    def started_flag(self, index: int) -> bool:
        return bool(self._s_started[index])

    def identified_centers(self) -> list[np.ndarray]:
        return [m.center for m in self.X_hat]

    # -- event log ------------------------------------------------------------

    def emit(self, event: str, *, run_id=None, x=None, value=None, variance=None, eval_index=None):
        record = {
            "event": event,
            "k": self.k,
            "eval_index": int(eval_index if eval_index is not None else self.budget.used),
            "run_id": run_id,
            "x": [float(v) for v in x] if x is not None else None,
            "value": float(value) if value is not None else None,
            "variance": float(variance) if variance is not None else None,
        }
        self.trace.append(record)
        if self._event_sink is not None:
            self._event_sink(record)

    # -- bookkeeping helpers ----------------------------------------------------

    def _append_sample(self, point: SamplePoint) -> None:
        self.S.append(point)
        m = len(self.S)
        if m > self._s_cap:
            self._grow_s()
        i = m - 1
        self._s_x[i] = point.x
        self._s_mean[i] = point.stats.mean
        self._s_started[i] = False
        # S3 is pure geometry, so one check at arrival settles it forever.
        self._s_barred[i] = not check_s3(point.x, self.domain, self.cfg.start_rules.tau)
        self._s_s2_blocked[i] = not check_s2(
            point.x, self.identified_centers(), self.cfg.start_rules.omega
        )
        if m == 1:
            self._s_witness_dist[0] = math.inf
            self._s_witness_idx[0] = -1
            return
        others = self._s_x[: m - 1]
        dists = np.linalg.norm(others - point.x[None, :], axis=1)
        # new point as witness for older, not-better points
        mask = self._s_mean[: m - 1] >= point.stats.mean
        closer = mask & (dists < self._s_witness_dist[: m - 1])
        self._s_witness_dist[: m - 1][closer] = dists[closer]
        self._s_witness_idx[: m - 1][closer] = i
        # nearest not-worse older point as witness for the new point
        mask_new = self._s_mean[: m - 1] <= point.stats.mean
        if mask_new.any():
            sub = np.where(mask_new)[0]
            j = sub[np.argmin(dists[sub])]
            self._s_witness_dist[i] = dists[j]
            self._s_witness_idx[i] = j
        else:
            self._s_witness_dist[i] = math.inf
            self._s_witness_idx[i] = -1

    def _append_iterate(self, point: SamplePoint) -> None:
        self.L.append(point)
        if len(self.L) > self._l_cap:
            self._grow_l()
        self._l_x[self._l_len] = point.x
        self._l_run[self._l_len] = point.run_id
        self._l_len += 1

    def _refresh_s2_mask(self) -> None:
        m = len(self.S)
        if m == 0:
            return
        blocked = np.zeros(m, dtype=bool)
        omega = self.cfg.start_rules.omega
        for entry in self.X_hat:
            dists = np.linalg.norm(self._s_x[:m] - entry.center[None, :], axis=1)
            blocked |= dists <= omega
        self._s_s2_blocked[:m] = blocked


def dedup_minimum(candidate: np.ndarray, x_hat: Sequence[IdentifiedMinimum], omega: float):
    """Accept a new minimum only when it clears every existing one by omega.

    Returns ("accept", None) or ("merge", index-of-nearest-entry). Merging
    keeps whichever of the pair has the lower estimated value.
    """
    candidate = np.asarray(candidate, dtype=float)
    best_idx, best_dist = None, math.inf
    for j, entry in enumerate(x_hat):
        dist = float(np.linalg.norm(candidate - entry.center))
        if dist < best_dist:
            best_idx, best_dist = j, dist
    if best_idx is None or best_dist > omega:
        return "accept", None
    return "merge", best_idx


def _make_estimator(problem, budget: _Budget):
    def estimate(x: np.ndarray, n: int, rng: RngStream) -> EstimateStats:
        budget.spend(n)
        return update_estimate(None, problem.evaluate(x, n, rng))

    return estimate


def _start_candidates(state: MansoState, r_k: float, cfg: MansoConfig) -> list[int]:
    """Indices passing S4/S3/S2/S1 this iteration, in sampling order.

    S4, S3, and S2 are maintained as masks. Under the default plug-in margin
    the S1 verdict reduces to "some not-worse sampled point lies within r_k",
    which the witness-distance cache answers in one vector comparison; any
    other margin falls back to the full rule evaluation per point.
    """
    rules = cfg.start_rules
    m = len(state.S)
    eligible = ~state._s_started[:m] & ~state._s_barred[:m] & ~state._s_s2_blocked[:m]
    if rules.epsilon_multiplier == 1.0:
        eligible &= state._s_witness_dist[:m] > r_k
        return [int(i) for i in np.where(eligible)[0]]
    out = []
    for i in np.where(eligible)[0]:
        if evaluate_start_conditions(state.S[i], state, r_k, rules).start:
            out.append(int(i))
    return out


def manso_iteration(state: MansoState, problem, cfg: MansoConfig) -> MansoState:
    """One outer iteration; sub-steps that no longer fit the budget are skipped."""
    rules = cfg.start_rules
    estimate = _make_estimator(problem, state.budget)
    ident_cfg = cfg.identification_for(state.domain)
    l_snapshot = len(state.L)  # proximity checks run against earlier iterations only

    # (1) sample one point when below the active-run cap
    if len(state.active) < cfg.max_active_runs and state.budget.can_afford(rules.n):
        sampler = state._sampler_rng
        noise = state._sample_noise_rng
        x = uniform_sample(state.domain, sampler)
        first_eval = state.budget.used + 1
        stats = estimate(x, rules.n, noise)
        point = SamplePoint(
            x=x,
            stats=stats,
            origin="uniform-sample",
            eval_index=first_eval,
            index=len(state.S),
        )
        state._append_sample(point)
        state.emit("sample", x=x, value=stats.mean, variance=stats.var_of_mean, eval_index=first_eval)

    # (2) critical radius needs at least two sampled points
    r_k = None
    if len(state.S) >= 2:
        r_k = radius_schedule(len(state.S), state.domain.dim, state.domain.volume(), cfg.sigma)

    # (3) start runs from qualifying points, respecting the active-run cap
    t_k = 0
    if r_k is not None:
        for i in _start_candidates(state, r_k, cfg):
            if len(state.active) >= cfg.max_active_runs:
                break
            point = state.S[i]
            run_id = state._next_run_id
            state._next_run_id += 1
            run_rng = RngStream(cfg.master_seed, STREAM_RUN_BASE + run_id)
            solver = make_solver(
                cfg.solver, state.domain, point.x, rules.n, run_rng, cfg.solver_options
            )
            run = LsoRun(run_id, point, solver, run_rng)
            state.runs[run_id] = run
            state.active[run_id] = run
            state._s_started[i] = True
            t_k += 1
            state.emit(
                "start",
                run_id=run_id,
                x=point.x,
                value=point.stats.mean,
                variance=point.stats.var_of_mean,
            )

    # (4) one solver step per active run
    guarded = _wrap_run_estimator(estimate)
    for run_id in sorted(state.active):
        run = state.active[run_id]
        if not state.budget.can_afford(run.solver.next_step_cost()):
            continue
        first_eval = state.budget.used + 1
        try:
            result = run.step(guarded)
        except _SolverFailure as exc:
            run.mark_terminated("failure")
            run.failure_reason = str(exc)
            del state.active[run_id]
            state.emit("terminate", run_id=run_id, x=run.current_iterate, value=run.current_value)
            continue
        iterate = SamplePoint(
            x=result.new_iterate,
            stats=EstimateStats(n=result.value_n, mean=result.value_estimate, var_of_mean=result.value_var),
            origin="lso-iterate",
            run_id=run_id,
            eval_index=first_eval,
            index=len(state.L),
        )
        state._append_iterate(iterate)
        state.emit(
            "step",
            run_id=run_id,
            x=result.new_iterate,
            value=result.value_estimate,
            variance=result.value_var,
            eval_index=first_eval,
        )

    # (5) cross-run proximity termination against earlier iterates
    _terminate_close_runs(state, rules.omega, cfg, l_snapshot)

    # (6) harvest settled runs into the identified set
    x_hat_changed = False
    for run_id in sorted(state.active):
        run = state.active[run_id]
        center = detect_identification(run, ident_cfg)
        if center is None:
            continue
        run.mark_identified(center)
        del state.active[run_id]
        entry = IdentifiedMinimum(
            center=center,
            value=run.current_value,
            variance=run.value_vars[-1],
            run_id=run_id,
            eval_index=state.budget.used,
        )
        action, target = dedup_minimum(center, state.X_hat, rules.omega)
        if action == "accept":
            state.X_hat.append(entry)
            x_hat_changed = True
        elif entry.value < state.X_hat[target].value:
            state.X_hat[target] = entry
            x_hat_changed = True
        state.emit("identify", run_id=run_id, x=center, value=entry.value, variance=entry.variance)
    if x_hat_changed:
        state._refresh_s2_mask()

    state.k += 1
    state.t_history.append(t_k)
    return state


class _SolverFailure(RuntimeError):
    pass


def _wrap_run_estimator(estimate):
    def guarded(x, n, rng):
        stats = estimate(x, n, rng)
        if not math.isfinite(stats.mean):
            raise _SolverFailure("objective estimate is not finite")
        return stats

    return guarded


def _terminate_close_runs(state: MansoState, omega: float, cfg: MansoConfig, l_snapshot: int):
    """Kill the later-started run when it enters another run's 2*omega tube.

    Comparisons use only iterates recorded before this iteration. A run dies
    when its newest iterate is within 2*omega of a point generated by an
    EARLIER run; a younger run's leftover trail never terminates the elder,
    otherwise a basin's incumbent would be destroyed by the corpses of the
    newcomers it already outlived. When two active runs flag each other in
    the same iteration, the higher current estimated value dies (ties break
    toward the higher run id).
    """
    if l_snapshot == 0 or not state.active:
        return
    threshold = 2.0 * omega
    flaggers: dict[int, set] = {}
    for run_id in sorted(state.active):
        run = state.active[run_id]
        if cfg.proximity_check_evals > 0:
            if run.evals_since_proximity_check < cfg.proximity_check_evals:
                continue
            run.evals_since_proximity_check = 0
        other = state._l_run[:l_snapshot] != run_id
        if not other.any():
            continue
        dists = np.linalg.norm(state._l_x[:l_snapshot][other] - run.current_iterate[None, :], axis=1)
        close = dists <= threshold
        if close.any():
            flaggers[run_id] = set(int(r) for r in state._l_run[:l_snapshot][other][close])

    doomed = set()
    for run_id, sources in flaggers.items():
        run = state.active[run_id]
        mutual = {
            r
            for r in sources
            if r in flaggers and r in state.active and run_id in flaggers.get(r, ())
        }
        if {r for r in sources - mutual if r < run_id}:
            doomed.add(run_id)
            continue
        for other_id in mutual:
            other = state.active[other_id]
            if (run.current_value, run_id) > (other.current_value, other_id):
                doomed.add(run_id)
                break

    for run_id in sorted(doomed):
        run = state.active.pop(run_id)
        run.mark_terminated("proximity")
        state.emit("terminate", run_id=run_id, x=run.current_iterate, value=run.current_value)


@dataclass
class RunReport:
    """Everything the evaluation harness needs from one completed run."""

    problem_name: str
    master_seed: int
    budget: int
    evals_used: int
    iterations: int
    t_history: list
    num_sampled: int
    num_runs: int
    num_identified: int
    stop_reason: str
    x_hat: list
    final_iterates: list  # (run_id, x, value, status) for every run ever started
    events: list

    def evaluation_sequence(self):
        """(first raw eval index, point) pairs for all sampled points and iterates."""
        idx, pts = [], []
        for ev in self.events:
            if ev["event"] in ("sample", "step"):
                idx.append(ev["eval_index"])
                pts.append(ev["x"])
        return np.asarray(idx, dtype=np.int64), np.asarray(pts, dtype=float)

    def best_candidates(self) -> list:
        """Identified centers plus each run's final iterate."""
        out = [np.asarray(m["center"], float) for m in self.x_hat]
        out.extend(np.asarray(rec["x"], float) for rec in self.final_iterates)
        return out


def run_to_budget(
    problem,
    cfg: MansoConfig,
    event_sink: Optional[Callable[[dict], None]] = None,
) -> tuple:
    """Iterate until the budget is spent or no affordable action remains."""
    state = MansoState(problem.domain, cfg)
    state._event_sink = event_sink

    stop_reason = "budget-exhausted"
    while state.budget.used < state.budget.total:
        events_before = len(state.trace)
        used_before = state.budget.used
        manso_iteration(state, problem, cfg)
        if state.budget.used == used_before and len(state.trace) == events_before:
            if state.budget.remaining >= cfg.start_rules.n:
                stop_reason = "stalled"
            break

    report = RunReport(
        problem_name=getattr(problem, "name", "unknown"),
        master_seed=cfg.master_seed,
        budget=cfg.evals_budget,
        evals_used=state.budget.used,
        iterations=state.k,
        t_history=list(state.t_history),
        num_sampled=len(state.S),
        num_runs=len(state.runs),
        num_identified=len(state.X_hat),
        stop_reason=stop_reason,
        x_hat=[
            {
                "center": [float(v) for v in m.center],
                "value": m.value,
                "variance": m.variance,
                "run_id": m.run_id,
                "eval_index": m.eval_index,
            }
            for m in state.X_hat
        ],
        final_iterates=[
            {
                "run_id": run.run_id,
                "x": [float(v) for v in run.current_iterate],
                "value": run.current_value,
                "status": run.status,
            }
            for run in state.runs.values()
        ],
        events=state.trace,
    )
    return state, report
