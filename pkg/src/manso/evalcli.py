"""Experiment orchestration: baselines, hit times, data profiles, CLI.

A problem instance counts a minimum as found once some evaluated point lands
within rho_d(zeta) of it, where the ball of radius rho_d(zeta) occupies a
fraction zeta of the search domain's volume. Data profiles then report, per
minimum and method, the fraction of instances whose first hit happened
within e evaluations, traced over a log-spaced grid of e.

The `run` verb executes every (method, instance) pair of a config file,
streaming one event log per pair, then derives the hits table, per-minimum
profile CSVs, and one vector plot per minimum. `profile` re-derives those
artifacts from existing event logs (holes left by an interrupted run are
filled in by rerunning `run`, which skips completed pairs). `report` prints
the final profile values.

Reruns with an identical config are byte-identical: all randomness is
derived from (base_seed, instance, method position), floats are serialized
with repr, and no timestamps enter any artifact.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from .benchmarks import BenchmarkProblem, branin_problem, serialize_registry, shekel_problem
from .core import BoxDomain, RngStream, uniform_sample
from .driver import MansoConfig, RunReport, run_to_budget
from .local_search import IdentificationConfig
from .qaoa import qaoa_problem
from .start_rules import StartRuleConfig

__all__ = [
    "ConfigError",
    "DataProfile",
    "EvaluationSet",
    "ExperimentConfig",
    "MethodSpec",
    "data_profile",
    "eval_grid",
    "first_hit_time",
    "identification_radius",
    "main",
    "random_search_baseline",
    "run_experiment",
]

OUTPUT_ROOT_ENV = "MANSO_OUTPUT_ROOT"
PROFILE_COLUMNS = ["method", "problem_instance", "minimum_id", "e", "d_value"]
HITS_COLUMNS = ["method", "problem_instance", "minimum_id", "t_hit"]
SUMMARY_COLUMNS = ["method", "problem_instance", "solved_e"]


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field."""


def identification_radius(d: int, volume: float, zeta: float) -> float:
    """Radius of a d-ball whose volume is zeta times the domain volume.

    rho = (1/sqrt(pi)) * [Gamma(1 + d/2) * volume * zeta]^(1/d)
    """
    if zeta <= 0:
        raise ValueError("zeta must be positive")
    if d < 1 or volume <= 0:
        raise ValueError("need d >= 1 and volume > 0")
    log_rho = (math.lgamma(1.0 + d / 2.0) + math.log(volume) + math.log(zeta)) / d - 0.5 * math.log(
        math.pi
    )
    return math.exp(log_rho)


@dataclass(frozen=True)
class EvaluationSet:
    """Evaluated points in order, each with its first raw-evaluation index."""

    points: np.ndarray  # (m, d)
    first_eval_indices: np.ndarray  # (m,), 1-based, nondecreasing
    budget: int

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        idx = np.asarray(self.first_eval_indices, dtype=np.int64)
        if pts.ndim != 2 or idx.shape != (pts.shape[0],):
            raise ValueError("points must be (m, d) with one eval index per point")
        if idx.size and (idx[0] < 1 or np.any(np.diff(idx) < 0)):
            raise ValueError("eval indices must be 1-based and nondecreasing")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "first_eval_indices", idx)

    @classmethod
    def from_report(cls, report: RunReport) -> "EvaluationSet":
        idx, pts = report.evaluation_sequence()
        return cls(points=pts, first_eval_indices=idx, budget=report.budget)

    @classmethod
    def from_event_log(cls, lines, budget: int) -> "EvaluationSet":
        idx, pts = [], []
        for line in lines:
            line = line.strip()
            if not line:
                continue
            ev = json.loads(line)
            if ev["event"] in ("sample", "step"):
                idx.append(ev["eval_index"])
                pts.append(ev["x"])
        pts_arr = np.asarray(pts, dtype=float) if pts else np.empty((0, 1))
        return cls(points=pts_arr, first_eval_indices=np.asarray(idx, dtype=np.int64), budget=budget)


def first_hit_time(E: EvaluationSet, x_star: np.ndarray, rho: float) -> Optional[int]:
    """Smallest evaluation index whose point lies within rho of the target."""
    if E.points.shape[0] == 0:
        return None
    dists = np.linalg.norm(E.points - np.asarray(x_star, dtype=float)[None, :], axis=1)
    hits = dists <= rho
    if not hits.any():
        return None
    return int(E.first_eval_indices[hits].min())


@dataclass(frozen=True)
class DataProfile:
    method: str
    minimum_id: int
    grid: np.ndarray
    values: np.ndarray
    num_problems: int


def eval_grid(n: int, budget: int, num: int = 200) -> np.ndarray:
    """Log-spaced evaluation counts from the sampling effort to the budget."""
    return np.geomspace(max(n, 1), max(budget, n + 1), num=num)


def data_profile(
    hit_times: Sequence[Optional[int]],
    grid: np.ndarray,
    method: str = "",
    minimum_id: int = 0,
) -> DataProfile:
    """Fraction of problem instances solved within e evaluations, per grid e."""
    if len(hit_times) == 0:
        raise ValueError("data profile requires at least one problem instance")
    finite = np.array([t if t is not None else np.inf for t in hit_times], dtype=float)
    values = np.array([(finite <= e).mean() for e in grid])
    return DataProfile(
        method=method,
        minimum_id=minimum_id,
        grid=np.asarray(grid, dtype=float),
        values=values,
        num_problems=len(hit_times),
    )


def random_search_baseline(problem, budget: int, n: int, rng: RngStream):
    """Uniform sampling, n evaluations per point, until the budget runs out.

    Returns (EvaluationSet, events) where the events mirror the driver's
    sample records so both methods share one log and CSV pipeline.
    """
    num_points = budget // n
    pts = np.empty((num_points, problem.domain.dim))
    idx = np.empty(num_points, dtype=np.int64)
    events = []
    noise = RngStream(rng.seed, rng.stream_id + 1)
    for j in range(num_points):
        x = uniform_sample(problem.domain, rng)
        pts[j] = x
        idx[j] = j * n + 1
        samples = problem.evaluate(x, n, noise)
        mean = float(np.mean(samples))
        var = float(np.var(samples, ddof=1) / n) if n >= 2 else 0.0
        events.append(
            {
                "event": "sample",
                "k": j,
                "eval_index": int(idx[j]),
                "run_id": None,
                "x": [float(v) for v in x],
                "value": mean,
                "variance": var,
            }
        )
    return EvaluationSet(points=pts, first_eval_indices=idx, budget=budget), events


# --------------------------------------------------------------------------
# experiment configuration
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MethodSpec:
    name: str
    kind: str  # "manso" | "random-search"
    n: int
    beta: float = 0.1
    omega: float = 0.05
    tau: float = 0.01
    sigma: float = 5.0
    max_active_runs: int = 10
    solver: str = "trust-region"
    solver_options: dict = field(default_factory=dict)
    identification_window: int = 10
    min_internal_radius: Optional[float] = None
    proximity_check_evals: int = 0

    def manso_config(self, domain: BoxDomain, budget: int, master_seed: int) -> MansoConfig:
        rules = StartRuleConfig(beta=self.beta, omega=self.omega, tau=self.tau, n=self.n)
        ident = None
        if self.min_internal_radius is not None:
            ident = IdentificationConfig(
                omega=self.omega,
                window=self.identification_window,
                min_internal_radius=self.min_internal_radius,
            )
        return MansoConfig(
            start_rules=rules,
            sigma=self.sigma,
            max_active_runs=self.max_active_runs,
            evals_budget=budget,
            solver=self.solver,
            solver_options=dict(self.solver_options),
            identification=ident,
            proximity_check_evals=self.proximity_check_evals,
            master_seed=master_seed,
        )


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    problem: dict
    budget: int
    zeta: float
    instances: int
    base_seed: int
    methods: tuple
    output: str

    @classmethod
    def from_mapping(cls, raw: dict) -> "ExperimentConfig":
        def need(section, key, typ, where):
            if key not in section:
                raise ConfigError(f"missing required field '{where}{key}'")
            value = section[key]
            try:
                return typ(value)
            except (TypeError, ValueError):
                raise ConfigError(f"field '{where}{key}' must be a {typ.__name__}, got {value!r}")

        if not isinstance(raw, dict):
            raise ConfigError("config root must be a mapping")
        exp = raw.get("experiment", {})
        name = str(exp.get("name", "experiment"))
        output = str(exp.get("output", name))

        problem = raw.get("problem")
        if not isinstance(problem, dict) or "name" not in problem:
            raise ConfigError("missing required field 'problem.name'")

        budget = need(raw, "budget", int, "")
        if budget < 1:
            raise ConfigError("field 'budget' must be positive")
        zeta = need(raw, "zeta", float, "")
        if zeta <= 0:
            raise ConfigError("field 'zeta' must be positive")
        instances = need(raw, "instances", int, "")
        if instances < 1:
            raise ConfigError("field 'instances' must be positive")
        base_seed = need(raw, "base_seed", int, "")

        raw_methods = raw.get("methods")
        if not raw_methods or not isinstance(raw_methods, list):
            raise ConfigError("missing required field 'methods' (a nonempty list)")
        methods = []
        names = set()
        for i, m in enumerate(raw_methods):
            where = f"methods[{i}]."
            kind = str(m.get("kind", "manso"))
            if kind not in ("manso", "random-search"):
                raise ConfigError(f"field '{where}kind' must be manso or random-search")
            mname = str(m.get("name", f"{kind}-{i}"))
            if mname in names:
                raise ConfigError(f"duplicate method name {mname!r}")
            names.add(mname)
            n = need(m, "n", int, where)
            if n < 2:
                raise ConfigError(f"field '{where}n' must be >= 2")
            kwargs = dict(name=mname, kind=kind, n=n)
            for key in (
                "beta",
                "omega",
                "tau",
                "sigma",
                "max_active_runs",
                "solver",
                "solver_options",
                "identification_window",
                "min_internal_radius",
                "proximity_check_evals",
            ):
                if key in m:
                    kwargs[key] = m[key]
            spec = MethodSpec(**kwargs)
            if kind == "manso":
                if not (0 < spec.beta < 0.5):
                    raise ConfigError(f"field '{where}beta' must lie in (0, 1/2)")
                if spec.sigma <= 4:
                    raise ConfigError(
                        f"field '{where}sigma' must exceed 4 (finitely many starts requires sigma > 4), got {spec.sigma}"
                    )
                if spec.omega <= 0 or spec.tau <= 0:
                    raise ConfigError(f"fields '{where}omega' and '{where}tau' must be positive")
            methods.append(spec)

        return cls(
            name=name,
            problem=dict(problem),
            budget=budget,
            zeta=zeta,
            instances=instances,
            base_seed=base_seed,
            methods=tuple(methods),
            output=output,
        )


def make_problem(problem_cfg: dict, instance: int = 0):
    name = problem_cfg["name"]
    noise_sigma = float(problem_cfg.get("noise_sigma", 1.0))
    if name == "branin":
        return branin_problem(noise_sigma=noise_sigma, instance=instance)
    if name == "shekel":
        d = int(problem_cfg.get("d", 4))
        return shekel_problem(d=d, noise_sigma=noise_sigma, instance=instance)
    if name == "qaoa-maxcut":
        depth = int(problem_cfg.get("depth", 1))
        shots = int(problem_cfg.get("shots", 256))
        return qaoa_problem(depth=depth, shots=shots, instance=instance)
    raise ConfigError(f"field 'problem.name' unknown: {name!r} (branin, shekel, qaoa-maxcut)")


def _validate_omega_against_minima(config: ExperimentConfig, problem) -> None:
    eta = problem.eta_hat
    for spec in config.methods:
        if spec.kind == "manso" and 2.0 * spec.omega >= eta:
            raise ConfigError(
                f"field 'methods.omega': 2*omega = {2 * spec.omega} must stay below the "
                f"minimum separation {eta:.4f} of problem {problem.name}"
            )


def _instance_seed(base_seed: int, instance: int, method_index: int) -> int:
    seq = np.random.SeedSequence(entropy=base_seed, spawn_key=(instance, method_index))
    return int(seq.generate_state(1, dtype=np.uint64)[0] % (2**63))


# --------------------------------------------------------------------------
# artifact pipeline
# --------------------------------------------------------------------------


def _events_path(outdir: Path, method: str, instance: int) -> Path:
    return outdir / "events" / method / f"instance-{instance:03d}.ndjson"


def _write_events_atomic(path: Path, events) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    with tmp.open("w") as fh:
        for ev in events:
            fh.write(json.dumps(ev) + "\n")
    tmp.replace(path)


def _execute_pair(config: ExperimentConfig, spec: MethodSpec, method_index: int, instance: int, outdir: Path):
    """Run one (method, instance) pair unless its event log already exists."""
    path = _events_path(outdir, spec.name, instance)
    if path.exists():
        return
    problem = make_problem(config.problem, instance=instance)
    seed = _instance_seed(config.base_seed, instance, method_index)
    if spec.kind == "random-search":
        rng = RngStream(seed, 0)
        _, events = random_search_baseline(problem, config.budget, spec.n, rng)
    else:
        cfg = spec.manso_config(problem.domain, config.budget, seed)
        _, report = run_to_budget(problem, cfg)
        events = report.events
    _write_events_atomic(path, events)


def _format_float(v: float) -> str:
    return repr(float(v))


def _compute_hits(config: ExperimentConfig, outdir: Path):
    """hits[method][instance] = list of per-minimum first-hit times."""
    problem = make_problem(config.problem, instance=0)
    rho = identification_radius(problem.dim, problem.domain.volume(), config.zeta)
    minima = [np.asarray(m.location, dtype=float) for m in problem.minima]
    hits: dict = {}
    for spec in config.methods:
        hits[spec.name] = {}
        for instance in range(config.instances):
            path = _events_path(outdir, spec.name, instance)
            if not path.exists():
                raise FileNotFoundError(f"missing event log {path}; run the experiment first")
            with path.open() as fh:
                E = EvaluationSet.from_event_log(fh, budget=config.budget)
            hits[spec.name][instance] = [first_hit_time(E, x_star, rho) for x_star in minima]
    return hits, minima, rho


def _write_hits_csv(config: ExperimentConfig, hits, outdir: Path) -> Path:
    path = outdir / "hits.csv"
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HITS_COLUMNS)
        for spec in config.methods:
            for instance in range(config.instances):
                for minimum_id, t in enumerate(hits[spec.name][instance]):
                    writer.writerow(
                        [spec.name, instance, minimum_id, "" if t is None else t]
                    )
    return path


def _write_summary_csv(config: ExperimentConfig, hits, outdir: Path) -> Path:
    """Per-instance solved time: the evaluation at which every minimum was hit."""
    path = outdir / "summary.csv"
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        for spec in config.methods:
            for instance in range(config.instances):
                times = hits[spec.name][instance]
                solved = "" if any(t is None for t in times) or not times else max(times)
                writer.writerow([spec.name, instance, solved])
    return path


def _profiles(config: ExperimentConfig, hits, num_minima: int, grid) -> list:
    out = []
    for spec in config.methods:
        for minimum_id in range(num_minima):
            times = [hits[spec.name][instance][minimum_id] for instance in range(config.instances)]
            out.append(data_profile(times, grid, method=spec.name, minimum_id=minimum_id))
    return out


def _write_profile_csvs(config: ExperimentConfig, profiles, outdir: Path) -> list:
    pdir = outdir / "profiles"
    pdir.mkdir(parents=True, exist_ok=True)
    paths = []
    for prof in profiles:
        path = pdir / f"{config.problem['name']}-min{prof.minimum_id}-{prof.method}.csv"
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(PROFILE_COLUMNS)
            for e, v in zip(prof.grid, prof.values):
                writer.writerow([prof.method, "all", prof.minimum_id, _format_float(e), _format_float(v)])
        paths.append(path)
    return paths


def _write_plots(config: ExperimentConfig, profiles, outdir: Path) -> list:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plot_dir = outdir / "plots"
    plot_dir.mkdir(parents=True, exist_ok=True)
    by_min: dict = {}
    for prof in profiles:
        by_min.setdefault(prof.minimum_id, []).append(prof)
    paths = []
    for minimum_id, profs in sorted(by_min.items()):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for prof in profs:
            ax.step(prof.grid, prof.values, where="post", label=prof.method)
        ax.set_xscale("log")
        ax.set_xlabel("function evaluations")
        ax.set_ylabel("fraction of instances")
        ax.set_ylim(-0.05, 1.05)
        ax.set_title(f"{config.problem['name']} minimum {minimum_id}")
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = plot_dir / f"{config.problem['name']}-min{minimum_id}.svg"
        fig.savefig(path)
        plt.close(fig)
        paths.append(path)
    return paths


def resolve_output_dir(config: ExperimentConfig, override: Optional[str] = None) -> Path:
    if override:
        return Path(override)
    root = os.environ.get(OUTPUT_ROOT_ENV, ".")
    return Path(root) / config.output


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    return ExperimentConfig.from_mapping(raw)


def run_experiment(config_path, output_dir: Optional[str] = None) -> Path:
    """Execute all (method, instance) pairs, then derive every artifact."""
    config = load_config(config_path)
    problem = make_problem(config.problem, instance=0)
    _validate_omega_against_minima(config, problem)
    outdir = resolve_output_dir(config, output_dir)
    outdir.mkdir(parents=True, exist_ok=True)

    (outdir / "config-echo.yaml").write_text(Path(config_path).read_text())
    registry = serialize_registry([problem]) if isinstance(problem, BenchmarkProblem) else ""
    if registry:
        (outdir / "registry.txt").write_text(registry)

    for method_index, spec in enumerate(config.methods):
        for instance in range(config.instances):
            _execute_pair(config, spec, method_index, instance, outdir)

    profile_artifacts(config, outdir)
    return outdir


def profile_artifacts(config: ExperimentConfig, outdir: Path):
    hits, minima, rho = _compute_hits(config, outdir)
    if not minima:
        raise ConfigError(f"problem {config.problem['name']} registers no minima to profile")
    min_n = min(spec.n for spec in config.methods)
    grid = eval_grid(min_n, config.budget)
    profiles = _profiles(config, hits, len(minima), grid)
    _write_hits_csv(config, hits, outdir)
    _write_summary_csv(config, hits, outdir)
    _write_profile_csvs(config, profiles, outdir)
    _write_plots(config, profiles, outdir)
    return profiles


def report_text(config: ExperimentConfig, outdir: Path) -> str:
    hits, minima, rho = _compute_hits(config, outdir)
    grid = eval_grid(min(spec.n for spec in config.methods), config.budget)
    profiles = _profiles(config, hits, len(minima), grid)
    buf = io.StringIO()
    buf.write(f"experiment {config.name}: problem {config.problem['name']}, ")
    buf.write(f"budget {config.budget}, zeta {config.zeta!r}, instances {config.instances}\n")
    buf.write(f"identification radius rho = {rho!r}\n")
    for prof in profiles:
        buf.write(
            f"  method {prof.method:24s} minimum {prof.minimum_id}: "
            f"final profile {prof.values[-1]:.3f}\n"
        )
    return buf.getvalue()


# --------------------------------------------------------------------------
# CLI
# --------------------------------------------------------------------------


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="manso",
        description="Run multistart optimization experiments and build data profiles.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="execute a config file end to end")
    p_run.add_argument("config")
    p_run.add_argument("-o", "--output", default=None, help="artifact directory override")

    p_prof = sub.add_parser("profile", help="rebuild profiles from an artifact directory")
    p_prof.add_argument("artifact_dir")

    p_rep = sub.add_parser("report", help="print final profile values")
    p_rep.add_argument("artifact_dir")

    args = parser.parse_args(argv)
    try:
        if args.verb == "run":
            outdir = run_experiment(args.config, args.output)
            print(f"artifacts written to {outdir}")
        elif args.verb == "profile":
            outdir = Path(args.artifact_dir)
            config = ExperimentConfig.from_mapping(
                yaml.safe_load((outdir / "config-echo.yaml").read_text())
            )
            profile_artifacts(config, outdir)
            print(f"profiles rebuilt in {outdir}")
        else:
            outdir = Path(args.artifact_dir)
            config = ExperimentConfig.from_mapping(
                yaml.safe_load((outdir / "config-echo.yaml").read_text())
            )
            sys.stdout.write(report_text(config, outdir))
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
