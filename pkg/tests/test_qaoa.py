import math

import numpy as np
import pytest

from manso.core import RngStream
from manso.qaoa import (
    Graph,
    QaoaCircuit,
    brute_force_maxcut,
    cut_values,
    exact_expectation,
    petersen_graph,
    qaoa_problem,
    sampled_objective,
    statevector,
)


class TestGraph:
    def test_petersen_shape(self):
        g = petersen_graph()
        assert g.num_vertices == 10
        assert len(g.edges) == 15
        degrees = np.zeros(10, dtype=int)
        for u, v in g.edges:
            degrees[u] += 1
            degrees[v] += 1
        assert np.all(degrees == 3)

    def test_rejects_self_loop_and_duplicates(self):
        with pytest.raises(ValueError):
            Graph(2, ((0, 0),))
        with pytest.raises(ValueError):
            Graph(2, ((0, 1), (1, 0)))

    def test_edge_list_text(self):
        g = Graph.from_edge_list_text("0 1\n1 2  # comment\n\n# full comment\n2 3\n")
        assert g.num_vertices == 4
        assert g.edges == ((0, 1), (1, 2), (2, 3))


class TestBruteForceMaxcut:
    def test_petersen_is_twelve(self):
        assert brute_force_maxcut(petersen_graph()) == 12

    def test_single_edge(self):
        assert brute_force_maxcut(Graph(2, ((0, 1),))) == 1

    def test_complete_graph_k4(self):
        edges = tuple((i, j) for i in range(4) for j in range(i + 1, 4))
        assert brute_force_maxcut(Graph(4, edges)) == 4


class TestStatevector:
    def test_zero_angles_uniform(self):
        circ = QaoaCircuit(petersen_graph(), 1, np.zeros(2))
        psi = statevector(circ)
        assert np.allclose(psi, 2.0 ** (-5), atol=1e-12)

    def test_norm_preserved_random_angles(self):
        rng = np.random.default_rng(3)
        g = petersen_graph()
        for _ in range(20):
            params = rng.uniform(0, 2 * np.pi, size=4)
            psi = statevector(QaoaCircuit(g, 2, params))
            assert abs(np.linalg.norm(psi) - 1.0) < 1e-10

    def test_gamma_two_pi_period(self):
        # integer-valued cost Hamiltonian: gamma and gamma + 2 pi coincide
        g = petersen_graph()
        a = statevector(QaoaCircuit(g, 1, np.array([0.7, 0.3])))
        b = statevector(QaoaCircuit(g, 1, np.array([0.7 + 2 * np.pi, 0.3])))
        assert np.max(np.abs(a - b)) < 1e-10

    def test_parameter_length_checked(self):
        with pytest.raises(ValueError):
            QaoaCircuit(petersen_graph(), 2, np.zeros(3))

    def test_too_many_qubits_rejected(self):
        edges = tuple((i, i + 1) for i in range(16))
        with pytest.raises(ValueError):
            statevector(QaoaCircuit(Graph(17, edges), 1, np.zeros(2)))


class TestExactExpectation:
    def test_uniform_state_cuts_half(self):
        circ = QaoaCircuit(petersen_graph(), 1, np.zeros(2))
        assert exact_expectation(circ) == pytest.approx(-7.5, abs=1e-12)

    def test_single_edge_zero_angles(self):
        circ = QaoaCircuit(Graph(2, ((0, 1),)), 1, np.zeros(2))
        assert exact_expectation(circ) == pytest.approx(-0.5, abs=1e-12)

    def test_variational_bound(self):
        g = petersen_graph()
        maxcut = brute_force_maxcut(g)
        rng = np.random.default_rng(11)
        for _ in range(25):
            params = rng.uniform(0, 2 * np.pi, size=2)
            val = exact_expectation(QaoaCircuit(g, 1, params))
            assert -maxcut - 1e-9 <= val <= 1e-9

    def test_closed_form_landscape_on_triangle_free_regular_graph(self):
        # for a triangle-free 3-regular graph with the e^(-i gamma H),
        # H = -cut convention, the p=1 landscape is
        # -|E| (1/2 - (1/2) sin(4 beta) sin(gamma) cos^2(gamma))
        g = petersen_graph()
        for gamma in (0.3, 1.1, 2.7, 4.0):
            for beta in (0.2, 0.9, 1.5, 2.8):
                expected = -15.0 * (0.5 - 0.5 * math.sin(4 * beta) * math.sin(gamma) * math.cos(gamma) ** 2)
                got = exact_expectation(QaoaCircuit(g, 1, np.array([gamma, beta])))
                assert got == pytest.approx(expected, abs=1e-10)

    def test_beta_pi_period_on_grid(self):
        g = petersen_graph()
        for gamma in (0.4, 1.9):
            for beta in (0.25, 1.0):
                a = exact_expectation(QaoaCircuit(g, 1, np.array([gamma, beta])))
                b = exact_expectation(QaoaCircuit(g, 1, np.array([gamma, beta + np.pi])))
                assert a == pytest.approx(b, abs=1e-10)


class TestSampledObjective:
    def test_unbiased_within_clt_band(self):
        g = petersen_graph()
        circ = QaoaCircuit(g, 1, np.array([0.61547971, np.pi / 8]))
        exact = exact_expectation(circ)
        rng = RngStream(77, 0)
        shots = 10_000
        val = sampled_objective(circ, shots, rng)
        h = -cut_values(g).astype(float)
        psi = statevector(circ)
        probs = (psi.conj() * psi).real
        sigma = math.sqrt(float(np.sum(probs * h**2) - exact**2))
        assert abs(val - exact) <= 3.0 * sigma / math.sqrt(shots)

    def test_zero_angles_concentration(self):
        circ = QaoaCircuit(petersen_graph(), 1, np.zeros(2))
        val = sampled_objective(circ, 10_000, RngStream(78, 0))
        assert abs(val - (-7.5)) < 0.15

    def test_deterministic_state_returns_constant(self):
        # beta = 0 leaves the phase-only state with uniform probabilities on
        # bitstrings; instead force a basis state via a graph with no edges
        g = Graph(2, ())
        circ = QaoaCircuit(g, 1, np.array([0.4, 0.0]))
        vals = {sampled_objective(circ, 16, RngStream(79, i)) for i in range(4)}
        assert vals == {0.0}

    def test_shots_validated(self):
        circ = QaoaCircuit(petersen_graph(), 1, np.zeros(2))
        with pytest.raises(ValueError):
            sampled_objective(circ, 0, RngStream(0, 0))


class TestQaoaProblem:
    def test_known_p1_minima(self):
        prob = qaoa_problem(depth=1, shots=64)
        assert len(prob.minima) == 8
        best = -7.5 - 7.5 * (2.0 / (3.0 * math.sqrt(3.0)))
        for m in prob.minima:
            assert m.value == pytest.approx(best, abs=1e-6)
            assert prob.domain.contains(m.location)

    def test_problem_interface(self):
        prob = qaoa_problem(depth=1, shots=32)
        assert prob.dim == 2
        draws = prob.evaluate(np.array([0.5, 0.3]), 4, RngStream(1, 0))
        assert draws.shape == (4,)
        assert np.all(draws <= 0.0)

    def test_evaluate_reproducible(self):
        prob = qaoa_problem(depth=1, shots=32)
        a = prob.evaluate(np.array([0.5, 0.3]), 3, RngStream(2, 9))
        b = prob.evaluate(np.array([0.5, 0.3]), 3, RngStream(2, 9))
        assert np.array_equal(a, b)

    def test_depth_two_domain(self):
        prob = qaoa_problem(depth=2, shots=16)
        assert prob.dim == 4
        assert np.allclose(prob.domain.upper, [2 * np.pi, 2 * np.pi, np.pi, np.pi])
