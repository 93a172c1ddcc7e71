"""
Shrinkage-weighted out-transfer matrix L built from the blocks of a round.
"""

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from decimal import Decimal, localcontext
from typing import Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from ..config import ShrinkParams
from .ledger import AMOUNT_CONTEXT, Block, LedgerRound, block_day

logger = logging.getLogger(__name__)

Pair = Tuple[str, str]


def shrink_factor(day: int, phi: float, eta: float) -> float:
    """phi^(-eta * day)."""
    return phi ** (-eta * day)


def transaction_weight(amount, k: int, d: int, n: int, phi: float, eta: float) -> float:
    """Weighted amount of a transfer in block k of n collected over d days.

    w = x * phi^(-eta * ceil(k*d/n)); zero iff the amount is zero.
    """
    if not 1 <= k <= n or d < 1:
        raise ValueError(f"need 1 <= k <= n and d >= 1, got k={k}, n={n}, d={d}")
    return float(amount) * shrink_factor(block_day(k, d, n), phi, eta)


def shrink_curve(amount: float, phi: float, eta: float, days: int) -> List[Tuple[int, float]]:
    """(day, weighted amount) for days 1..days."""
    return [(day, float(amount) * shrink_factor(day, phi, eta)) for day in range(1, days + 1)]


def aggregate_block_transfers(block: Block) -> Dict[Pair, Decimal]:
    """Sum the transfers of one block per ordered account pair.

    Repeated transfers i->j inside a block count as one transfer of the added-up
    total. Directions stay distinct; nothing is netted.
    """
    totals: Dict[Pair, Decimal] = defaultdict(Decimal)
    with localcontext(AMOUNT_CONTEXT):
        for tx in block.transactions:
            totals[(tx.from_account, tx.to_account)] += tx.amount
    return dict(totals)


@dataclass(frozen=True, eq=False)
class TransferGraph:
    """Weighted transfer totals between the transacting accounts of a round.

    ``W`` and ``L`` are CSR matrices indexed by position in ``accounts``.
    """

    accounts: Tuple[str, ...]
    W: sp.csr_matrix
    L: sp.csr_matrix
    normalizer: float
    shrunk: bool
    volume: Decimal
    shrunk_volume: float
    transaction_counts: Tuple[int, ...]
    degenerate: bool
    index: Dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "index", {account: i for i, account in enumerate(self.accounts)})

    @property
    def size(self) -> int:
        return len(self.accounts)

    def weight(self, source: str, target: str) -> float:
        return float(self.W[self.index[source], self.index[target]])

    def share(self, source: str, target: str) -> float:
        return float(self.L[self.index[source], self.index[target]])


def build_transfer_graph(ledger: LedgerRound, params: ShrinkParams, accounts: Optional[List[str]] = None) -> TransferGraph:
    """Build W, the normalizer (C or C-hat) and L = W / normalizer.

    When the shrunk normalizer is selected the same per-block factor is applied
    to W and to the block volumes, so L still sums to 1.

    Args:
        ledger: the round
        params: shrinkage parameters
        accounts: matrix index; defaults to the accounts with at least one
            transaction
    """
    accounts = tuple(accounts if accounts is not None else ledger.transacting_accounts())
    index = {account: i for i, account in enumerate(accounts)}
    m = len(accounts)
    n = ledger.block_count
    d = ledger.round_days
    shrunk = params.use_shrunk_normalizer

    weights: Dict[Tuple[int, int], float] = defaultdict(float)
    shrunk_volume = 0.0
    for block in ledger.blocks:
        factor = shrink_factor(block.block_day, params.phi, params.eta)
        shrunk_volume += float(block.volume) * factor
        for (source, target), amount in aggregate_block_transfers(block).items():
            if amount == 0:
                continue
            weights[(index[source], index[target])] += float(amount) * factor

    volume = ledger.total_volume
    normalizer = shrunk_volume if shrunk else float(volume)
    if weights:
        rows, cols = zip(*weights.keys())
        data = list(weights.values())
    else:
        rows, cols, data = (), (), []
    W = sp.csr_matrix((np.asarray(data, dtype=float), (np.asarray(rows, dtype=int), np.asarray(cols, dtype=int))), shape=(m, m))

    degenerate = normalizer <= 0 or W.nnz == 0
    if degenerate:
        logger.warning(f"Round has no transfer volume ({n} blocks, {m} accounts); transfer graph is degenerate")
        L = sp.csr_matrix((m, m), dtype=float)
    else:
        L = (W / normalizer).tocsr()
    logger.debug(
        f"Transfer graph: m={m}, pairs={W.nnz}, C={volume}, C_hat={shrunk_volume:.6g}, "
        f"normalizer={'C_hat' if shrunk else 'C'} (phi={params.phi}, eta={params.eta}, d={d}, n={n})"
    )
    return TransferGraph(
        accounts=accounts,
        W=W,
        L=L,
        normalizer=normalizer,
        shrunk=shrunk,
        volume=volume,
        shrunk_volume=shrunk_volume,
        transaction_counts=ledger.transaction_counts,
        degenerate=degenerate,
    )
