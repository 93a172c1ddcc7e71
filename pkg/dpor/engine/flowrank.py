"""
HodgeRank on the transfer graph.

The damped Markov chain of the out-transfer matrix gives a log-ratio edge flow
Y. Its Hodge decomposition splits Y into a gradient part (the global ranking
score s), a curl part supported on triangles, and a harmonic remainder. The
inconsistent parts point at loops and the accounts involved in them.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import cg, lsmr, spsolve

from ..config import SolveParams
from ..errors import ConvergenceError, DegenerateRoundError
from .txgraph import TransferGraph

logger = logging.getLogger(__name__)

# Curl projections at or below this many operator entries use a dense SVD solve.
_DENSE_CURL_LIMIT = 4_000_000
# Inconsistent energy below this fraction of the flow energy is rounding noise.
_NOISE_ENERGY = 1e-20


@dataclass(frozen=True, eq=False)
class MarkovChain:
    accounts: Tuple[str, ...]
    M: np.ndarray
    alpha: float


@dataclass(frozen=True, eq=False)
class EdgeFlow:
    """Antisymmetric flow on the undirected edge set F.

    Edges are stored once as ``(i, j)`` with ``i < j``; ``values[e]`` is Y_ij and
    Y_ji = -Y_ij is implied.
    """

    accounts: Tuple[str, ...]
    edges: np.ndarray
    values: np.ndarray
    weights: np.ndarray

    @property
    def size(self) -> int:
        return len(self.accounts)

    def value(self, i: int, j: int) -> float:
        lo, hi = (i, j) if i < j else (j, i)
        hits = np.flatnonzero((self.edges[:, 0] == lo) & (self.edges[:, 1] == hi))
        if hits.size == 0:
            return 0.0
        y = float(self.values[hits[0]])
        return y if i < j else -y

    def as_matrix(self) -> np.ndarray:
        Y = np.zeros((self.size, self.size))
        if len(self.edges):
            Y[self.edges[:, 0], self.edges[:, 1]] = self.values
            Y[self.edges[:, 1], self.edges[:, 0]] = -self.values
        return Y


@dataclass(frozen=True, eq=False)
class HodgeResult:
    accounts: Tuple[str, ...]
    edges: np.ndarray
    weights: np.ndarray
    flow: np.ndarray
    scores: np.ndarray
    gradient: np.ndarray
    residual: np.ndarray
    curl_fit: np.ndarray
    harmonic: np.ndarray
    triangles: np.ndarray
    triangle_curl: np.ndarray
    components: int

    def _energy(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values * values))

    @property
    def total_energy(self) -> float:
        return self._energy(self.flow)

    @property
    def gradient_energy(self) -> float:
        return self._energy(self.gradient)

    @property
    def curl_energy(self) -> float:
        return self._energy(self.curl_fit)

    @property
    def harmonic_energy(self) -> float:
        return self._energy(self.harmonic)

    @property
    def consistency_ratio(self) -> float:
        """Share of the flow energy captured by the gradient; 1 for a zero flow."""
        total = self.total_energy
        return self.gradient_energy / total if total > 0 else 1.0


@dataclass(frozen=True)
class Ranking:
    scores: Dict[str, float]
    order: List[str]


@dataclass(frozen=True)
class LoopReport:
    shares: Dict[str, float]
    flagged: List[str]
    triangles: List[Tuple[str, str, str]]
    triangle_curl: List[float]
    inconsistent_energy: float
    tau: float


def markov_chain(graph: TransferGraph, alpha: float) -> MarkovChain:
    """M_ij = alpha * L_ij / a_i + (1 - alpha) / m with a_i the row sum of L.

    Accounts without out-transfers get the uniform row.

    Raises:
        DegenerateRoundError: when the graph carries no transfers
    """
    if not 0 < alpha < 1:
        raise ValueError(f"damping alpha must be in (0, 1), got {alpha}")
    if graph.degenerate or graph.size == 0:
        raise DegenerateRoundError("degenerate round: no transfer volume to build a Markov chain from")
    m = graph.size
    L = graph.L.toarray()
    out = L.sum(axis=1)
    active = out > 0
    M = np.full((m, m), 1.0 / m)
    M[active] = alpha * L[active] / out[active, None] + (1.0 - alpha) / m
    M /= M.sum(axis=1, keepdims=True)
    logger.debug(f"Markov chain: m={m}, alpha={alpha}, dangling rows={int((~active).sum())}")
    return MarkovChain(graph.accounts, M, alpha)


def support_edges(graph: TransferGraph) -> np.ndarray:
    """F: pairs {i, j} with L_ij + L_ji > 0, as sorted ``(i, j)`` rows with i < j."""
    S = sp.triu(graph.L + graph.L.T, k=1).tocoo()
    mask = S.data > 0
    edges = np.column_stack((S.row[mask], S.col[mask])).astype(np.int64)
    if len(edges) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    return edges[np.lexsort((edges[:, 1], edges[:, 0]))]


def edge_flow(chain: MarkovChain, edges: np.ndarray) -> EdgeFlow:
    """Y_ij = log M_ij - log M_ji on each edge of F."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if np.any(edges[:, 0] >= edges[:, 1]):
        raise ValueError("edges must be given as (i, j) with i < j")
    log_m = np.log(chain.M)
    values = log_m[edges[:, 0], edges[:, 1]] - log_m[edges[:, 1], edges[:, 0]]
    return EdgeFlow(chain.accounts, edges, values, np.ones(len(edges)))


def incidence_matrix(edges: np.ndarray, m: int) -> sp.csr_matrix:
    """Gradient operator: (grad s)_e = s_j - s_i for edge e = (i, j)."""
    count = len(edges)
    rows = np.repeat(np.arange(count), 2)
    cols = edges.reshape(-1)
    data = np.tile([-1.0, 1.0], count)
    return sp.csr_matrix((data, (rows, cols)), shape=(count, m))


def enumerate_triangles(edges: np.ndarray, m: int) -> np.ndarray:
    """T(F) as sorted index triples (i, j, k), i < j < k."""
    higher: List[set] = [set() for _ in range(m)]
    for i, j in edges:
        higher[int(i)].add(int(j))
    triangles = []
    for i in range(m):
        for j in sorted(higher[i]):
            for k in sorted(higher[i] & higher[j]):
                triangles.append((i, j, k))
    return np.asarray(triangles, dtype=np.int64).reshape(-1, 3)


def curl_matrix(edges: np.ndarray, triangles: np.ndarray) -> sp.csr_matrix:
    """(curl X)(i, j, k) = X_ij + X_jk - X_ik for edges stored low-to-high."""
    position = {(int(i), int(j)): e for e, (i, j) in enumerate(edges)}
    rows, cols, data = [], [], []
    for t, (i, j, k) in enumerate(triangles):
        for pair, sign in (((i, j), 1.0), ((j, k), 1.0), ((i, k), -1.0)):
            rows.append(t)
            cols.append(position[(int(pair[0]), int(pair[1]))])
            data.append(sign)
    return sp.csr_matrix((data, (rows, cols)), shape=(len(triangles), len(edges)))


def _solve_scores(B: sp.csr_matrix, flow: np.ndarray, m: int, params: SolveParams) -> Tuple[np.ndarray, int]:
    """Least-squares potential: B^T B s = B^T Y, mean zero on each component."""
    laplacian = (B.T @ B).tocsc()
    rhs = B.T @ flow
    adjacency = abs(laplacian) > 0
    count, labels = connected_components(adjacency, directed=False)
    scores = np.zeros(m)
    for component in range(count):
        nodes = np.flatnonzero(labels == component)
        if len(nodes) < 2:
            continue
        # ground the first node; the reduced Laplacian is positive definite
        free = nodes[1:]
        reduced = laplacian[free][:, free]
        if params.method == "cg":
            maxiter = params.iterations_for(len(free))
            x, info = cg(reduced, rhs[free], rtol=params.tol, atol=0.0, maxiter=maxiter)
            if info > 0:
                raise ConvergenceError("conjugate gradient did not reach the Laplacian tolerance", info)
        else:
            x = np.atleast_1d(spsolve(reduced.tocsc(), rhs[free]))
        scores[free] = x
        scores[nodes] -= scores[nodes].mean()
    return scores, count


def _project_onto_curls(C: sp.csr_matrix, residual: np.ndarray, params: SolveParams) -> np.ndarray:
    if C.shape[0] == 0:
        return np.zeros_like(residual)
    if C.shape[0] * C.shape[1] <= _DENSE_CURL_LIMIT:
        Ct = C.T.toarray()
        z, *_ = np.linalg.lstsq(Ct, residual, rcond=None)
        return Ct @ z
    logger.debug(f"Sparse curl projection over {C.shape[0]} triangles")
    z = lsmr(C.T.tocsr(), residual, atol=params.tol, btol=params.tol, maxiter=params.iterations_for(C.shape[0]))[0]
    return C.T @ z


def hodge_decompose(flow: EdgeFlow, params: SolveParams = SolveParams()) -> HodgeResult:
    """Split Y into gradient, curl and harmonic parts.

    The score s minimises sum over F of (s_j - s_i - Y_ij)^2, gauge fixed to
    mean zero per connected component. The curl part is the least-squares
    projection of the residual onto the span of triangle curls; the harmonic
    part is what remains.
    """
    if len(flow.edges) == 0:
        raise DegenerateRoundError("edge flow has no edges to decompose")
    m = flow.size
    Y = flow.values
    B = incidence_matrix(flow.edges, m)
    scores, components = _solve_scores(B, Y, m, params)
    gradient = B @ scores
    residual = Y - gradient

    triangles = enumerate_triangles(flow.edges, m)
    C = curl_matrix(flow.edges, triangles)
    curl_fit = _project_onto_curls(C, residual, params)
    harmonic = residual - curl_fit
    result = HodgeResult(
        accounts=flow.accounts,
        edges=flow.edges,
        weights=flow.weights,
        flow=Y,
        scores=scores,
        gradient=gradient,
        residual=residual,
        curl_fit=curl_fit,
        harmonic=harmonic,
        triangles=triangles,
        triangle_curl=C @ Y if len(triangles) else np.zeros(0),
        components=components,
    )
    logger.debug(
        f"Hodge decomposition: |F|={len(Y)}, |T|={len(triangles)}, components={components}, "
        f"consistency={result.consistency_ratio:.6g}"
    )
    return result


def global_ranking(result: HodgeResult) -> Ranking:
    """Scores s and the descending order, ties broken by account id."""
    scores = {account: float(s) + 0.0 for account, s in zip(result.accounts, result.scores)}
    order = sorted(scores, key=lambda account: (-scores[account], account))
    return Ranking(scores, order)


def detect_loops(result: HodgeResult, tau: float) -> LoopReport:
    """Attribute inconsistent (harmonic + curl) energy to accounts.

    Each edge's energy splits half-half between its endpoints. Accounts whose
    share exceeds ``tau`` are flagged, largest share first.
    """
    edge_energy = result.weights * (result.harmonic**2 + result.curl_fit**2)
    total = float(edge_energy.sum())
    shares = np.zeros(len(result.accounts))
    np.add.at(shares, result.edges[:, 0], edge_energy / 2)
    np.add.at(shares, result.edges[:, 1], edge_energy / 2)
    if total > _NOISE_ENERGY * max(result.total_energy, 1.0):
        shares /= total
    else:
        total = 0.0
        shares[:] = 0.0
    by_account = {account: float(share) for account, share in zip(result.accounts, shares)}
    flagged = sorted((a for a, share in by_account.items() if share > tau), key=lambda a: (-by_account[a], a))
    if flagged:
        logger.info(f"Loop detector flagged {len(flagged)} account(s) above tau={tau}: {', '.join(flagged[:10])}")
    names = result.accounts
    return LoopReport(
        shares=by_account,
        flagged=flagged,
        triangles=[(names[i], names[j], names[k]) for i, j, k in result.triangles],
        triangle_curl=[float(abs(c)) for c in result.triangle_curl],
        inconsistent_energy=total,
        tau=tau,
    )


def rank_transfer_graph(graph: TransferGraph, alpha: float, params: SolveParams = SolveParams()) -> HodgeResult:
    """Chain, flow and decomposition in one call."""
    chain = markov_chain(graph, alpha)
    return hodge_decompose(edge_flow(chain, support_edges(graph)), params)
