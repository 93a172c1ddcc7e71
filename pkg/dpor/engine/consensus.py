"""
Reputation scores and reputation-weighted delegate elections.
"""

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from ..config import ElectionParams, RepWeights
from ..errors import BallotError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AccountReputation:
    account: str
    P: float
    U: float
    R_raw: float
    R_norm: float
    Rep: float


@dataclass(frozen=True)
class ReputationReport:
    rows: Tuple[AccountReputation, ...]
    metadata: Dict[str, str] = field(default_factory=dict)

    def rep(self) -> Dict[str, float]:
        return {row.account: row.Rep for row in self.rows}

    def row(self, account: str) -> AccountReputation:
        for row in self.rows:
            if row.account == account:
                return row
        raise KeyError(account)


@dataclass(frozen=True)
class Ballot:
    voter: str
    choices: Tuple[str, ...]


@dataclass(frozen=True)
class ElectionResult:
    totals: Dict[str, float]
    ordering: List[str]
    producers: List[str]
    standby: List[str]


def normalize_ranking(raw: Mapping[str, float]) -> Dict[str, float]:
    """Min-max rescale scores to [0, 1]; all-equal scores map to 0.5."""
    if not raw:
        return {}
    lo = min(raw.values())
    hi = max(raw.values())
    if hi == lo:
        return {account: 0.5 for account in raw}
    span = hi - lo
    return {account: (value - lo) / span for account, value in raw.items()}


def reputation_score(P: float, U: float, R_norm: float, weights: RepWeights = RepWeights()) -> float:
    """Rep = w1*P + w2*U + w3*R."""
    total = weights.w1 + weights.w2 + weights.w3
    if abs(total - 1.0) > 1e-12:
        raise ValueError(f"reputation weights must add up to 1, got {total}")
    return weights.w1 * P + weights.w2 * U + weights.w3 * R_norm


def build_report(
    accounts: Iterable[str],
    power: Mapping[str, float],
    usage: Mapping[str, float],
    ranking: Mapping[str, float],
    weights: RepWeights,
    metadata: Optional[Mapping[str, str]] = None,
) -> ReputationReport:
    """Combine P, U and raw ranking scores into one row per account.

    Accounts missing from a mapping get 0 for that factor.
    """
    names = sorted(set(accounts))
    raw = {account: float(ranking.get(account, 0.0)) for account in names}
    normalized = normalize_ranking(raw)
    rows = []
    for account in names:
        P = float(power.get(account, 0.0))
        U = float(usage.get(account, 0.0))
        R = normalized[account]
        rows.append(AccountReputation(account, P, U, raw[account], R, reputation_score(P, U, R, weights)))
    return ReputationReport(tuple(rows), dict(metadata or {}))


def load_ballots(lines: Iterable[str]) -> List[Ballot]:
    """Parse ``vote,<voter>,<choice1>[,<choice2>...]`` lines."""
    ballots = []
    for line_no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if parts[0] != "vote" or len(parts) < 3 or not all(parts[1:]):
            raise BallotError(f"line {line_no}: expected vote,<voter>,<choice>[,<choice>...]")
        ballots.append(Ballot(parts[1], tuple(parts[2:])))
    return ballots


def tally_votes(ballots: Sequence[Ballot], report: ReputationReport, params: ElectionParams = ElectionParams()) -> ElectionResult:
    """Every chosen delegate receives the voter's full Rep.

    Producers are the top ``params.producers`` delegates, standby the following
    ranks through ``params.standby_through``. Ties go to the smaller account id.
    Totals are exactly rounded sums, so ballot order never matters.

    Raises:
        BallotError: for more than ``vmax`` choices, duplicate choices, repeated
            voters, or voters/delegates not in the report
    """
    rep = report.rep()
    contributions: Dict[str, List[float]] = defaultdict(list)
    seen_voters = set()
    for ballot in ballots:
        if ballot.voter not in rep:
            raise BallotError(f"voter '{ballot.voter}' is not a registered account")
        if ballot.voter in seen_voters:
            raise BallotError(f"voter '{ballot.voter}' cast more than one ballot")
        seen_voters.add(ballot.voter)
        if len(ballot.choices) > params.vmax:
            raise BallotError(f"ballot of '{ballot.voter}' has {len(ballot.choices)} choices, limit is {params.vmax}")
        if len(set(ballot.choices)) != len(ballot.choices):
            raise BallotError(f"ballot of '{ballot.voter}' repeats a delegate")
        for choice in ballot.choices:
            if choice not in rep:
                raise BallotError(f"ballot of '{ballot.voter}' names unregistered delegate '{choice}'")
            contributions[choice].append(rep[ballot.voter])

    totals = {delegate: math.fsum(values) for delegate, values in contributions.items()}
    ordering = sorted(totals, key=lambda delegate: (-totals[delegate], delegate))
    producers = ordering[: params.producers]
    standby = ordering[params.producers : params.standby_through]
    logger.info(f"Tallied {len(ballots)} ballots for {len(totals)} delegates: {len(producers)} producers, {len(standby)} standby")
    return ElectionResult(totals, ordering, producers, standby)
