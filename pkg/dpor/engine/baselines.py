"""
Comparison rankers: PageRank, NCDawareRank and the NEM positive-net-flow
outlink matrix.

All three are built from the same weighted transfer totals W as HodgeRank.
"""

import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from numpy import linalg as LA

from ..errors import ConvergenceError, PartitionError
from .txgraph import TransferGraph

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class StochasticMatrix:
    """Row-stochastic A. Dangling rows are stored empty and read as uniform."""

    accounts: Tuple[str, ...]
    A: sp.csr_matrix
    dangling: np.ndarray

    @property
    def size(self) -> int:
        return len(self.accounts)

    def dense(self) -> np.ndarray:
        m = self.size
        A = self.A.toarray()
        A[self.dangling] = 1.0 / m
        return A

    @classmethod
    def from_weights(cls, accounts: Sequence[str], W: sp.spmatrix) -> "StochasticMatrix":
        W = sp.csr_matrix(W, dtype=float)
        if W.nnz and W.data.min() < 0:
            raise ValueError("out-link weights must be non-negative")
        out = np.asarray(W.sum(axis=1)).ravel()
        dangling = out <= 0
        inv = np.zeros_like(out)
        inv[~dangling] = 1.0 / out[~dangling]
        A = (sp.diags(inv) @ W).tocsr()
        return cls(tuple(accounts), A, dangling)

    @classmethod
    def from_graph(cls, graph: TransferGraph) -> "StochasticMatrix":
        """Row-normalised W; amounts count, not just the presence of a link."""
        return cls.from_weights(graph.accounts, graph.W)


@dataclass(frozen=True)
class BlockPartition:
    """Disjoint account groups covering every account."""

    blocks: Dict[str, Tuple[str, ...]]

    def block_of(self) -> Dict[str, str]:
        owner = {}
        for block_id, members in self.blocks.items():
            for account in members:
                if account in owner:
                    raise PartitionError(f"account '{account}' is in blocks '{owner[account]}' and '{block_id}'")
                owner[account] = block_id
        return owner

    @classmethod
    def singletons(cls, accounts: Iterable[str]) -> "BlockPartition":
        return cls({account: (account,) for account in accounts})


@dataclass(frozen=True, eq=False)
class RankVector:
    accounts: Tuple[str, ...]
    values: np.ndarray
    iterations: int = 0

    def as_dict(self) -> Dict[str, float]:
        return {account: float(v) for account, v in zip(self.accounts, self.values)}

    def order(self) -> List[str]:
        """Descending by score, ties by account id."""
        scores = self.as_dict()
        return sorted(scores, key=lambda account: (-scores[account], account))

    def position(self, account: str) -> int:
        """1-based rank of ``account``."""
        return self.order().index(account) + 1


def load_partition(lines: Iterable[str], accounts: Optional[Sequence[str]] = None) -> BlockPartition:
    """Parse ``block,<block_id>,<account>`` lines.

    When ``accounts`` is given every one of them must be covered.
    """
    blocks: Dict[str, List[str]] = defaultdict(list)
    for line_no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3 or parts[0] != "block" or not parts[1] or not parts[2]:
            raise PartitionError(f"line {line_no}: expected block,<block_id>,<account>")
        blocks[parts[1]].append(parts[2])
    partition = BlockPartition({block_id: tuple(members) for block_id, members in blocks.items()})
    owner = partition.block_of()
    if accounts is not None:
        missing = sorted(set(accounts) - set(owner))
        if missing:
            raise PartitionError(f"accounts missing from partition: {', '.join(missing[:10])}")
    return partition


def _personalization(m: int, personalization: Optional[np.ndarray]) -> np.ndarray:
    if personalization is None:
        return np.full(m, 1.0 / m)
    p = np.asarray(personalization, dtype=float)
    if p.shape != (m,) or np.any(p < 0) or p.sum() <= 0:
        raise ValueError("personalization must be a non-negative vector with positive mass")
    return p / p.sum()


def _power_iteration(step, m: int, tol: float, max_iter: int, what: str) -> Tuple[np.ndarray, int]:
    x = np.full(m, 1.0 / m)
    for iteration in range(1, max_iter + 1):
        new_x = step(x)
        new_x /= new_x.sum()
        delta = LA.norm(new_x - x, 1)
        x = new_x
        if delta < tol:
            logger.debug(f"{what} converged in {iteration} iterations (delta={delta:.3g})")
            return x, iteration
    raise ConvergenceError(f"{what} power iteration did not converge to tol={tol}", max_iter)


def pagerank(
    matrix: StochasticMatrix,
    alpha: float = 0.85,
    tol: float = 1e-12,
    max_iter: int = 10000,
    personalization: Optional[np.ndarray] = None,
) -> RankVector:
    """Stationary vector of H = alpha*A + (1 - alpha)*e p^T by power iteration.

    Args:
        matrix: row-stochastic out-link matrix
        alpha: damping factor in (0, 1)
        tol: L1 change between iterates at which to stop
        max_iter: iteration budget
        personalization: teleport distribution p; uniform when omitted

    Raises:
        ConvergenceError: when the budget runs out
    """
    if not 0 < alpha < 1:
        raise ValueError(f"damping alpha must be in (0, 1), got {alpha}")
    m = matrix.size
    p = _personalization(m, personalization)
    AT = matrix.A.T.tocsr()
    dangling = matrix.dangling

    def step(x: np.ndarray) -> np.ndarray:
        return alpha * (AT @ x + x[dangling].sum() / m) + (1.0 - alpha) * p

    values, iterations = _power_iteration(step, m, tol, max_iter, "PageRank")
    return RankVector(matrix.accounts, values, iterations)


def ncd_proximity(partition: BlockPartition, matrix: StochasticMatrix) -> sp.csr_matrix:
    """Inter-level proximity P.

    X_u is the union of the blocks of u and of every account u links to;
    P_uv = 1 / (N_u * |B(v)|) for v in X_u, with N_u the number of distinct
    blocks in X_u. An account without out-links is proximal to its own block.

    Raises:
        PartitionError: when an account is not covered by the partition
    """
    owner = partition.block_of()
    missing = [account for account in matrix.accounts if account not in owner]
    if missing:
        raise PartitionError(f"accounts missing from partition: {', '.join(missing[:10])}")
    index = {account: i for i, account in enumerate(matrix.accounts)}
    members = {block_id: [index[a] for a in accounts if a in index] for block_id, accounts in partition.blocks.items()}

    rows, cols, data = [], [], []
    A = matrix.A
    for u, account in enumerate(matrix.accounts):
        linked = A.indices[A.indptr[u] : A.indptr[u + 1]]
        proximal = {owner[account]} | {owner[matrix.accounts[v]] for v in linked}
        for block_id in sorted(proximal):
            block = members[block_id]
            weight = 1.0 / (len(proximal) * len(block))
            for v in block:
                rows.append(u)
                cols.append(v)
                data.append(weight)
    m = matrix.size
    return sp.csr_matrix((data, (rows, cols)), shape=(m, m))


def ncdawarerank(
    matrix: StochasticMatrix,
    partition: BlockPartition,
    alpha: float = 0.85,
    mu: float = 0.1,
    tol: float = 1e-12,
    max_iter: int = 10000,
) -> RankVector:
    """Stationary vector of Q = alpha*A + mu*P + (1 - alpha - mu)*E.

    With mu = 0 this is PageRank.
    """
    if alpha <= 0 or mu < 0 or alpha + mu >= 1:
        raise ValueError(f"need alpha > 0, mu >= 0 and alpha + mu < 1, got alpha={alpha}, mu={mu}")
    m = matrix.size
    AT = matrix.A.T.tocsr()
    PT = ncd_proximity(partition, matrix).T.tocsr()
    dangling = matrix.dangling
    teleport = 1.0 - alpha - mu

    def step(x: np.ndarray) -> np.ndarray:
        return alpha * (AT @ x + x[dangling].sum() / m) + mu * (PT @ x) + teleport / m

    values, iterations = _power_iteration(step, m, tol, max_iter, "NCDawareRank")
    return RankVector(matrix.accounts, values, iterations)


def nem_net_flows(graph: TransferGraph) -> sp.csr_matrix:
    """w~_ij = W_ji - W_ij where positive, else 0."""
    W = graph.W.tocsr()
    net = (W.T - W).tocsr()
    net.data = np.where(net.data > 0, net.data, 0.0)
    net.eliminate_zeros()
    return net


def nem_netflow_matrix(graph: TransferGraph) -> sp.csr_matrix:
    """Positive net-flow outlink matrix, each row normalised to sum 1.

    Rows without positive net flow stay zero, so any symmetric W gives the zero
    matrix.
    """
    net = nem_net_flows(graph)
    out = np.asarray(net.sum(axis=1)).ravel()
    inv = np.zeros_like(out)
    inv[out > 0] = 1.0 / out[out > 0]
    return (sp.diags(inv) @ net).tocsr()


def activity_personalization(graph: TransferGraph) -> np.ndarray:
    """Teleport weights proportional to each account's in- plus out-transfer volume."""
    W = graph.W
    volume = np.asarray(W.sum(axis=0)).ravel() + np.asarray(W.sum(axis=1)).ravel()
    if volume.sum() <= 0:
        return np.full(graph.size, 1.0 / max(graph.size, 1))
    return volume / volume.sum()


def compare_rankers(
    graph: TransferGraph,
    hodge_scores: Mapping[str, float],
    partition: BlockPartition,
    alpha: float,
    mu: float,
    tol: float,
    max_iter: int,
) -> List[Tuple[str, float, float, float]]:
    """(account, HodgeRank s, PageRank, NCDawareRank) rows in account order."""
    matrix = StochasticMatrix.from_graph(graph)
    pr = pagerank(matrix, alpha, tol, max_iter).as_dict()
    ncd = ncdawarerank(matrix, partition, alpha, mu, tol, max_iter).as_dict()
    return [(account, hodge_scores.get(account, 0.0), pr[account], ncd[account]) for account in graph.accounts]
