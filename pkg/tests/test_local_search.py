import numpy as np
import pytest

from manso.benchmarks import branin
from manso.core import BoxDomain, EstimateStats, RngStream, SamplePoint
from manso.local_search import (
    IdentificationConfig,
    LsoRun,
    SpsaConfig,
    SpsaSolver,
    TrustRegionConfig,
    TrustRegionSolver,
    detect_identification,
    make_solver,
)

BRANIN_MINIMA = np.array([(-np.pi, 12.275), (np.pi, 2.275), (9.42478, 2.475)])


def noiseless_estimator(f):
    def estimate(x, n, rng):
        return EstimateStats(n=max(n, 2), mean=float(f(np.asarray(x))), var_of_mean=0.0)

    return estimate


def run_from(x, solver):
    stats = EstimateStats(n=5, mean=0.0, var_of_mean=0.1)
    start = SamplePoint(x=np.asarray(x, float), stats=stats, index=0)
    return LsoRun(0, start, solver, RngStream(0, 0))


class TestTrustRegion:
    def test_sphere_converges(self):
        # noiseless sphere from (1, 1): within 0.1 of the origin in 200 steps
        dom = BoxDomain(np.array([-2.0, -2.0]), np.array([2.0, 2.0]))
        tr = TrustRegionSolver(dom, np.array([1.0, 1.0]), 5, RngStream(1, 0))
        est = noiseless_estimator(lambda x: float(np.sum(x**2)))
        for _ in range(200):
            res = tr.step(est)
        assert np.linalg.norm(res.new_iterate) < 0.1

    def test_exact_model_on_separable_quadratic(self):
        # model interpolation is exact, so one step lands on the minimizer
        # once the region contains it and the ratio equals one
        dom = BoxDomain(np.array([-4.0, -4.0]), np.array([4.0, 4.0]))
        center = np.array([0.5, -1.5])
        f = lambda x: float(np.sum((x - center) ** 2))
        tr = TrustRegionSolver(
            dom, np.array([0.0, 0.0]), 5, RngStream(2, 0), TrustRegionConfig(initial_radius=2.0)
        )
        res = tr.step(noiseless_estimator(f))
        assert np.allclose(res.new_iterate, center, atol=1e-6)

    def test_branin_reaches_a_minimum(self):
        dom = BoxDomain(np.array([-5.0, 0.0]), np.array([10.0, 15.0]))
        tr = TrustRegionSolver(dom, np.array([2.5, 7.5]), 5, RngStream(3, 0))
        est = noiseless_estimator(branin)
        for step in range(500):
            res = tr.step(est)
            d = np.linalg.norm(BRANIN_MINIMA - res.new_iterate[None, :], axis=1).min()
            if d < 0.05:
                break
        assert d < 0.05

    def test_iterates_stay_in_box(self):
        dom = BoxDomain(np.zeros(2), np.ones(2))
        tr = TrustRegionSolver(dom, np.array([0.0, 0.0]), 5, RngStream(4, 0))
        est = noiseless_estimator(lambda x: float(-np.sum(x)))  # pushes to the far corner
        for _ in range(30):
            res = tr.step(est)
            assert dom.contains(res.new_iterate)

    def test_step_cost_accounting(self):
        dom = BoxDomain(np.zeros(2), np.ones(2))
        tr = TrustRegionSolver(dom, np.array([0.5, 0.5]), 5, RngStream(5, 0))
        calls = []

        def counting(x, n, rng):
            calls.append(n)
            return EstimateStats(n=max(n, 2), mean=float(np.sum(x**2)), var_of_mean=0.0)

        res = tr.step(counting)
        assert res.evals_consumed == sum(calls)
        assert res.evals_consumed <= tr.next_step_cost() + sum(calls) - res.evals_consumed

    def test_adaptive_sampling_grows(self):
        dom = BoxDomain(np.zeros(2), np.ones(2))
        tr = TrustRegionSolver(dom, np.array([0.5, 0.5]), 2, RngStream(6, 0))
        est = noiseless_estimator(lambda x: float(np.sum(x**2)))
        costs = []
        for _ in range(300):
            costs.append(tr.step(est).evals_consumed)
        assert costs[-1] > costs[0]  # ceil(log^2 t) eventually exceeds n = 2


class TestSpsa:
    def test_gradient_estimate_noiseless_1d(self):
        # f(x) = x^2 at x = 3: the symmetric-difference estimate is exactly 6
        dom = BoxDomain(np.array([-10.0]), np.array([10.0]))
        solver = SpsaSolver(dom, np.array([3.0]), 5, RngStream(7, 0), SpsaConfig(a=0.0, c=0.1))
        est = noiseless_estimator(lambda x: float(x[0] ** 2))
        grads = [solver.estimate_gradient(est, 0.1)[0][0] for _ in range(10_000)]
        assert abs(np.mean(grads) - 6.0) / 6.0 < 0.05

    def test_symmetric_perturbations_on_linear(self):
        # on a linear function the two perturbed values are symmetric about f(x)
        dom = BoxDomain(np.array([-10.0, -10.0]), np.array([10.0, 10.0]))
        solver = SpsaSolver(dom, np.zeros(2), 5, RngStream(8, 0), SpsaConfig(a=0.1, c=0.2))
        f = lambda x: float(3.0 * x[0] - 2.0 * x[1])
        est = noiseless_estimator(f)
        _, fp, fm = solver.estimate_gradient(est, 0.2)
        assert fp.mean + fm.mean == pytest.approx(2.0 * f(np.zeros(2)), abs=1e-12)

    def test_respects_box_from_corner(self):
        dom = BoxDomain(np.zeros(2), np.ones(2))
        solver = SpsaSolver(dom, np.zeros(2), 5, RngStream(9, 0), SpsaConfig(a=5.0, c=0.5))
        est = noiseless_estimator(lambda x: float(np.sum((x - 2.0) ** 2)))
        for _ in range(50):
            res = solver.step(est)
            assert dom.contains(res.new_iterate)

    def test_constant_objective_does_not_move(self):
        dom = BoxDomain(np.zeros(2), np.ones(2))
        solver = SpsaSolver(dom, np.full(2, 0.5), 5, RngStream(10, 0), SpsaConfig(a=0.5, c=0.1))
        est = noiseless_estimator(lambda x: 1.0)
        for _ in range(20):
            res = solver.step(est)
        assert np.allclose(res.new_iterate, 0.5)

    def test_quadratic_convergence_fixed_seed(self):
        dom = BoxDomain(np.array([-2.0, -2.0]), np.array([2.0, 2.0]))
        solver = SpsaSolver(dom, np.array([1.0, 1.0]), 5, RngStream(11, 0), SpsaConfig(a=0.5, c=0.1))
        est = noiseless_estimator(lambda x: float(np.sum(x**2)))
        for _ in range(2000):
            res = solver.step(est)
        assert np.linalg.norm(res.new_iterate) < 0.05

    def test_cost_is_two_n(self):
        dom = BoxDomain(np.zeros(2), np.ones(2))
        solver = SpsaSolver(dom, np.full(2, 0.5), 7, RngStream(12, 0))
        est = noiseless_estimator(lambda x: float(np.sum(x)))
        assert solver.next_step_cost() == 14
        assert solver.step(est).evals_consumed == 14


class TestMakeSolver:
    def test_dispatch(self):
        dom = BoxDomain(np.zeros(2), np.ones(2))
        assert isinstance(
            make_solver("trust-region", dom, np.full(2, 0.5), 5, RngStream(0, 0)),
            TrustRegionSolver,
        )
        assert isinstance(
            make_solver("spsa", dom, np.full(2, 0.5), 5, RngStream(0, 0)), SpsaSolver
        )
        with pytest.raises(ValueError):
            make_solver("nelder-mead", dom, np.full(2, 0.5), 5, RngStream(0, 0))


class FixedRadiusSolver:
    """Test double with a controllable internal radius."""

    def __init__(self, radius):
        self.internal_radius = radius

    def next_step_cost(self):
        return 1


class TestDetectIdentification:
    CFG = IdentificationConfig(omega=0.1, window=5, min_internal_radius=1e-3)

    def _run_with_history(self, history, radius):
        run = run_from(history[0], FixedRadiusSolver(radius))
        run.iterates = [np.asarray(h, float) for h in history]
        run.values = [0.0] * len(history)
        run.value_vars = [0.0] * len(history)
        return run

    def test_identical_iterates_identify(self):
        run = self._run_with_history([[1.0, 2.0]] * 5, radius=1e-4)
        center = detect_identification(run, self.CFG)
        assert center is not None
        assert np.allclose(center, [1.0, 2.0])

    def test_oscillation_not_identified(self):
        pts = [[0.0, 0.0], [0.2, 0.0]] * 3
        run = self._run_with_history(pts[:5], radius=1e-4)
        assert detect_identification(run, self.CFG) is None

    def test_constructed_cluster(self):
        # five iterates inside a ball of radius 0.04 with tiny solver radius
        rng = np.random.default_rng(0)
        base = np.array([2.0, -1.0])
        pts = [base + 0.04 * rng.uniform(-1, 1, 2) / np.sqrt(2) for _ in range(5)]
        run = self._run_with_history(pts, radius=1e-4)
        center = detect_identification(run, self.CFG)
        assert center is not None
        assert np.linalg.norm(center - base) < 0.05

    def test_radius_condition_required(self):
        run = self._run_with_history([[1.0, 2.0]] * 5, radius=0.5)
        assert detect_identification(run, self.CFG) is None

    def test_needs_full_window(self):
        run = self._run_with_history([[1.0, 2.0]] * 4, radius=1e-4)
        assert detect_identification(run, self.CFG) is None

    def test_monotone_in_omega(self):
        pts = [[0.0, 0.0], [0.05, 0.0], [0.0, 0.05], [0.03, 0.03], [0.01, 0.0]]
        run = self._run_with_history(pts, radius=1e-4)
        small = detect_identification(run, IdentificationConfig(omega=0.05, window=5, min_internal_radius=1e-3))
        large = detect_identification(run, IdentificationConfig(omega=0.5, window=5, min_internal_radius=1e-3))
        assert small is None and large is not None


class TestLsoRun:
    def test_status_transitions_one_way(self):
        run = run_from([0.5, 0.5], FixedRadiusSolver(1.0))
        run.mark_terminated("proximity")
        assert run.status == "terminated-by-proximity"
        with pytest.raises(RuntimeError):
            run.mark_identified(np.zeros(2))
        with pytest.raises(RuntimeError):
            run.step(lambda *a: None)

    def test_history_starts_at_start_point(self):
        run = run_from([0.25, 0.75], FixedRadiusSolver(1.0))
        assert np.allclose(run.iterates[0], [0.25, 0.75])
