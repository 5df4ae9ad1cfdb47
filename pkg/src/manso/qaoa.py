"""Small statevector simulator for QAOA maxcut objectives.

The alternating-operator circuit on V <= 16 qubits is simulated exactly: the
cost layer is a diagonal phase in the computational basis and the mixer is a
product of single-qubit X rotations applied axis by axis, O(p * V * 2^V)
work per evaluation. The classical objective assigns each bitstring the
negated cut size, so minimizing the expectation drives the state toward
maximum cuts (best possible value is minus the maxcut).

Both an exact-expectation mode and a shot-sampled mode are provided; the
sampled estimate is the mean of the per-shot values and is unbiased for the
exact expectation, which lets the objective plug into the same stochastic
interface as the synthetic benchmarks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import BoxDomain, RngStream

__all__ = [
    "Graph",
    "QaoaCircuit",
    "QaoaMaxcutProblem",
    "brute_force_maxcut",
    "cut_values",
    "exact_expectation",
    "petersen_graph",
    "qaoa_problem",
    "sampled_objective",
    "statevector",
]

_MAX_SIM_QUBITS = 16
_MAX_BRUTE_FORCE_QUBITS = 24


@dataclass(frozen=True)
class Graph:
    """Simple undirected graph given by a vertex count and edge list."""

    num_vertices: int
    edges: tuple

    def __post_init__(self):
        if self.num_vertices < 1:
            raise ValueError("graph needs at least one vertex")
        seen = set()
        norm = []
        for u, v in self.edges:
            if not (0 <= u < self.num_vertices and 0 <= v < self.num_vertices):
                raise ValueError(f"edge ({u}, {v}) out of range")
            if u == v:
                raise ValueError("self-loops are not allowed")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise ValueError(f"duplicate edge {key}")
            seen.add(key)
            norm.append(key)
        object.__setattr__(self, "edges", tuple(norm))

    @classmethod
    def from_edge_list_text(cls, text: str) -> "Graph":
        """Parse 'u v' pairs, one edge per line; '#' starts a comment."""
        edges = []
        vmax = -1
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            u, v = (int(tok) for tok in line.split())
            edges.append((u, v))
            vmax = max(vmax, u, v)
        return cls(num_vertices=vmax + 1, edges=tuple(edges))


def petersen_graph() -> Graph:
    """The 10-vertex 3-regular Petersen graph (outer 5-cycle, inner pentagram)."""
    edges = []
    for i in range(5):
        edges.append((i, (i + 1) % 5))  # outer cycle
        edges.append((i, i + 5))  # spokes
        edges.append((i + 5, 5 + (i + 2) % 5))  # inner pentagram
    return Graph(num_vertices=10, edges=tuple(edges))


def cut_values(graph: Graph) -> np.ndarray:
    """Cut size of every bitstring, indexed by the integer encoding."""
    if graph.num_vertices > _MAX_BRUTE_FORCE_QUBITS:
        raise ValueError(f"graph too large ({graph.num_vertices} > {_MAX_BRUTE_FORCE_QUBITS} vertices)")
    y = np.arange(1 << graph.num_vertices, dtype=np.int64)
    total = np.zeros(y.shape, dtype=np.int64)
    for u, v in graph.edges:
        total += ((y >> u) & 1) ^ ((y >> v) & 1)
    return total


def brute_force_maxcut(graph: Graph) -> int:
    """Exhaustive maximum cut over all bitstrings."""
    return int(cut_values(graph).max())


@dataclass(frozen=True)
class QaoaCircuit:
    """Alternating-operator circuit: depth p, parameters (gamma_1..p, beta_1..p)."""

    graph: Graph
    depth: int
    params: np.ndarray

    def __post_init__(self):
        params = np.array(self.params, dtype=float, copy=True)
        params.flags.writeable = False
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if params.shape != (2 * self.depth,):
            raise ValueError(f"expected {2 * self.depth} parameters, got {params.shape}")
        object.__setattr__(self, "params", params)

    @property
    def gammas(self) -> np.ndarray:
        return self.params[: self.depth]

    @property
    def betas(self) -> np.ndarray:
        return self.params[self.depth :]


def _mixer_layer(psi: np.ndarray, beta: float, num_qubits: int) -> np.ndarray:
    """Apply exp(-i beta X_j) to every qubit j via pairwise amplitude mixing."""
    cb = math.cos(beta)
    sb = math.sin(beta)
    for j in range(num_qubits):
        shaped = psi.reshape(-1, 2, 1 << j)
        a0 = shaped[:, 0, :].copy()
        a1 = shaped[:, 1, :]
        shaped[:, 0, :] = cb * a0 - 1j * sb * a1
        shaped[:, 1, :] = cb * a1 - 1j * sb * a0
    return psi


def statevector(circuit: QaoaCircuit) -> np.ndarray:
    """Exact state after alternating cost phases and mixer rotations.

    Starts from the uniform superposition; layer l applies the diagonal
    phase exp(-i gamma_l h) with h equal to minus the cut size, then the
    transverse mixer with angle beta_l.
    """
    v = circuit.graph.num_vertices
    if v > _MAX_SIM_QUBITS:
        raise ValueError(f"statevector limited to {_MAX_SIM_QUBITS} qubits, got {v}")
    dim = 1 << v
    h = -cut_values(circuit.graph).astype(float)
    psi = np.full(dim, 1.0 / math.sqrt(dim), dtype=np.complex128)
    for gamma, beta in zip(circuit.gammas, circuit.betas):
        psi *= np.exp(-1j * gamma * h)
        psi = _mixer_layer(psi, beta, v)
    return psi


def exact_expectation(circuit: QaoaCircuit) -> float:
    """<psi| H |psi> with H diagonal at minus the cut size per bitstring."""
    psi = statevector(circuit)
    h = -cut_values(circuit.graph).astype(float)
    return float(np.real(np.sum((psi.conj() * psi).real * h)))


def sampled_objective(circuit: QaoaCircuit, shots: int, rng: RngStream) -> float:
    """Mean of h over `shots` bitstrings drawn from the measured state.

    Unbiased for the exact expectation, with variance shrinking as 1/shots.
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    psi = statevector(circuit)
    probs = (psi.conj() * psi).real
    probs = np.maximum(probs, 0.0)
    probs /= probs.sum()
    h = -cut_values(circuit.graph).astype(float)
    idx = rng.choice(probs.size, size=shots, p=probs)
    return float(np.mean(h[idx]))


@dataclass(frozen=True)
class QaoaMaxcutProblem:
    """Shot-sampled QAOA objective behind the common stochastic interface.

    The angle box is [0, 2 pi]^p x [0, pi]^p: the cost Hamiltonian is
    integer-valued so gamma is 2 pi periodic, and the expectation is pi
    periodic in each beta. One raw evaluation is the mean over one batch of
    ``shots`` measurements.
    """

    graph: Graph
    depth: int
    shots: int
    minima: tuple = ()
    instance: int = 0
    name: str = "qaoa-maxcut"
    default_omega: float = 0.05
    _h: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_h", -cut_values(self.graph).astype(float))

    @property
    def domain(self) -> BoxDomain:
        p = self.depth
        return BoxDomain(np.zeros(2 * p), np.concatenate([np.full(p, 2 * np.pi), np.full(p, np.pi)]))

    @property
    def dim(self) -> int:
        return 2 * self.depth

    @property
    def eta_hat(self) -> float:
        locs = [m.location for m in self.minima]
        if len(locs) < 2:
            return math.inf
        dists = [
            float(np.linalg.norm(locs[i] - locs[j]))
            for i in range(len(locs))
            for j in range(i + 1, len(locs))
        ]
        return min(dists)

    def noiseless(self, x: np.ndarray) -> float:
        return exact_expectation(QaoaCircuit(self.graph, self.depth, np.asarray(x, float)))

    def evaluate(self, x: np.ndarray, n: int, rng: RngStream) -> np.ndarray:
        circuit = QaoaCircuit(self.graph, self.depth, np.asarray(x, float))
        psi = statevector(circuit)
        probs = np.maximum((psi.conj() * psi).real, 0.0)
        probs /= probs.sum()
        out = np.empty(n, dtype=float)
        for i in range(n):
            idx = rng.choice(probs.size, size=self.shots, p=probs)
            out[i] = np.mean(self._h[idx])
        return out

    def with_instance(self, instance: int) -> "QaoaMaxcutProblem":
        return QaoaMaxcutProblem(
            graph=self.graph,
            depth=self.depth,
            shots=self.shots,
            minima=self.minima,
            instance=instance,
            name=self.name,
            default_omega=self.default_omega,
        )


def _p1_known_minima(graph: Graph) -> tuple:
    """Global minima of the exact p=1 landscape on a triangle-free regular graph.

    For a triangle-free D-regular graph this convention's landscape is
    -|E| (1/2 - (1/2) sin(4 beta) sin(gamma) cos^(D-1)(gamma)), so minima
    pair gamma with tan^2(gamma) = 1/(D-1) against sin(4 beta) = -1 (and the
    mirrored gamma range against sin(4 beta) = +1), up to the period
    symmetries. Returns the minima inside the angle box, refined numerically
    and deduplicated.
    """
    from scipy.optimize import minimize as _scipy_minimize
    from .benchmarks import Minimum

    degrees = np.zeros(graph.num_vertices, dtype=int)
    for u, v in graph.edges:
        degrees[u] += 1
        degrees[v] += 1
    if len(set(degrees.tolist())) != 1:
        return ()
    deg = int(degrees[0])
    gamma_star = math.atan(1.0 / math.sqrt(deg - 1))
    gammas = [gamma_star, math.pi - gamma_star, math.pi + gamma_star, 2 * math.pi - gamma_star]
    betas_neg = [3 * math.pi / 8, 7 * math.pi / 8]  # sin(4 beta) = -1
    betas_pos = [math.pi / 8, 5 * math.pi / 8]  # sin(4 beta) = +1

    def f(x):
        return exact_expectation(QaoaCircuit(graph, 1, x))

    seeds = []
    for g in gammas[:2]:  # sin(gamma) cos^2(gamma) > 0
        for b in betas_neg:
            seeds.append((g, b))
    for g in gammas[2:]:  # sin(gamma) cos^2(gamma) < 0
        for b in betas_pos:
            seeds.append((g, b))

    found = []
    for seed in seeds:
        res = _scipy_minimize(f, np.array(seed), method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-12})
        loc = np.asarray(res.x)
        if any(np.linalg.norm(loc - m.location) < 1e-6 for m in found):
            continue
        found.append(Minimum(location=loc, value=float(res.fun)))
    return tuple(found)


def qaoa_problem(
    depth: int = 1,
    shots: int = 256,
    graph: Optional[Graph] = None,
    instance: int = 0,
    with_minima: bool = True,
) -> QaoaMaxcutProblem:
    graph = graph if graph is not None else petersen_graph()
    minima = _p1_known_minima(graph) if (with_minima and depth == 1) else ()
    return QaoaMaxcutProblem(graph=graph, depth=depth, shots=shots, minima=minima, instance=instance)
