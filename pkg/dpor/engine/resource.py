"""
Resource usage score U: a tent-shaped weight of the daily usage ratio,
maximal on the optimal band, averaged over the round.
"""

from collections import defaultdict
from typing import Dict, List, Sequence

import numpy as np

from ..config import UsageParams
from .ledger import LedgerRound


def usage_weight(x: float, params: UsageParams) -> float:
    """Weight of one daily usage ratio.

    Rises linearly from 0 at x=0 to 1 at ``lo``, stays 1 up to ``hi`` and falls
    linearly to 0 at full saturation.
    """
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"usage ratio {x} outside [0, 1]")
    if x < params.lo:
        return x / params.lo
    if x <= params.hi:
        return 1.0
    return (1.0 - x) / (1.0 - params.hi)


def account_usage_score(readings: Sequence[float], params: UsageParams) -> float:
    """Mean weight over an account's readings; 0 without readings."""
    if len(readings) == 0:
        return 0.0
    return float(np.mean([usage_weight(x, params) for x in readings]))


def usage_scores(ledger: LedgerRound, params: UsageParams) -> Dict[str, float]:
    """U for every registered account, readings taken in day order."""
    readings: Dict[str, List[float]] = defaultdict(list)
    for reading in sorted(ledger.usage, key=lambda r: (r.account, r.day)):
        readings[reading.account].append(reading.ratio)
    return {account: account_usage_score(readings.get(account, []), params) for account in ledger.accounts()}
