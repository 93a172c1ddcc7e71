"""
Stake converter: staked tokens move to the staking contract 10% per day and
become stake power P = a / A.
"""

import logging
from collections import defaultdict
from dataclasses import dataclass
from decimal import Decimal
from typing import Dict, Iterable, List, Mapping, Optional, Tuple, Union

from ..config import StakeParams
from .ledger import AMOUNT_QUANTUM, StakeEvent

logger = logging.getLogger(__name__)

# Fixed for the entire network, not configurable.
DAILY_RATE = Decimal("0.10")
_KEEP = 1 - DAILY_RATE

Tokens = Union[Decimal, int, str]


def convertible_amount(staked: Tokens, theta: Tokens, days: int) -> Decimal:
    """Tokens of a stake that have reached the staking contract after ``days``.

    Day 0 is the staking day. The pending part S*0.9^d moves in one piece once
    it drops below the threshold, so a stake smaller than theta converts in full
    immediately.

    Args:
        staked: the staked amount S (> 0)
        theta: common minimum threshold (> 0)
        days: days elapsed since staking (>= 0)
    """
    staked = Decimal(staked)
    theta = Decimal(theta)
    if staked <= 0 or theta <= 0 or days < 0:
        raise ValueError(f"need S > 0, theta > 0, d >= 0; got S={staked}, theta={theta}, d={days}")
    pending = staked * _KEEP**days
    if pending < theta:
        return staked
    return (staked - pending).quantize(AMOUNT_QUANTUM)


def full_conversion_day(staked: Tokens, theta: Tokens) -> int:
    """Smallest d with S*0.9^d < theta."""
    staked = Decimal(staked)
    theta = Decimal(theta)
    day = 0
    pending = staked
    while pending >= theta:
        pending *= _KEEP
        day += 1
    return day


def stake_curve(staked: Tokens, theta: Tokens, days: int) -> List[Tuple[int, Decimal]]:
    """(d, a(d)) for d = 0..days."""
    return [(d, convertible_amount(staked, theta, d)) for d in range(days + 1)]


@dataclass(frozen=True)
class StakePosition:
    account: str
    staked: Decimal
    days_elapsed: int
    convertible: Decimal


@dataclass(frozen=True)
class StakeState:
    positions: Tuple[StakePosition, ...]
    convertibles: Dict[str, Decimal]
    total: Decimal

    def power(self, accounts: Optional[Iterable[str]] = None) -> Dict[str, float]:
        return stake_power(self.convertibles, accounts)


def stake_state(stakes: Iterable[StakeEvent], round_days: int, params: StakeParams) -> StakeState:
    """Evaluate every stake event at the end of the round.

    Each committed amount runs its own schedule; an account's convertible is
    the sum over its events.
    """
    positions = []
    convertibles: Dict[str, Decimal] = defaultdict(Decimal)
    for event in stakes:
        elapsed = round_days - event.day
        if elapsed < 0:
            raise ValueError(f"stake by '{event.account}' on day {event.day} is after round end {round_days}")
        a = convertible_amount(event.amount, params.theta, elapsed)
        positions.append(StakePosition(event.account, event.amount, elapsed, a))
        convertibles[event.account] += a
    total = sum(convertibles.values(), Decimal(0))
    logger.debug(f"Stake state: {len(positions)} positions, {len(convertibles)} stakers, A={total}")
    return StakeState(tuple(positions), dict(convertibles), total)


def stake_power(
    convertibles: Mapping[str, Union[Decimal, float, int]],
    accounts: Optional[Iterable[str]] = None,
) -> Dict[str, float]:
    """P_i = a_i / A. When A is 0 every account has power 0.

    Args:
        convertibles: account -> convertible amount a (>= 0)
        accounts: accounts to report; those without stake get 0. Defaults to
            the keys of ``convertibles``.
    """
    amounts = {account: Decimal(str(a)) if isinstance(a, float) else Decimal(a) for account, a in convertibles.items()}
    if any(a < 0 for a in amounts.values()):
        raise ValueError("convertible amounts must be non-negative")
    names = sorted(set(amounts) | set(accounts or ()))
    total = sum(amounts.values(), Decimal(0))
    if total == 0:
        return {account: 0.0 for account in names}
    return {account: float(amounts.get(account, Decimal(0)) / total) for account in names}
