"""
Deterministic scenario ledgers and the loop-attack multiplicity sweep.

A scenario mixes honest traffic with a whale staker, a token ring run by one
attacker and a Sybil fan-out star. Every concern draws from its own child
stream of one seeded PCG64 generator, so changing the attack leaves the honest
traffic untouched.
"""

import logging
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Dict, List, Literal, Sequence, Tuple, Union

import numpy as np
from numpy.random import PCG64, Generator, SeedSequence
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..config import Settings, nest_group, read_key_values
from ..engine.baselines import StochasticMatrix, activity_personalization, nem_netflow_matrix, pagerank
from ..engine.flowrank import global_ranking
from ..engine.ledger import LedgerRound, StakeEvent, TransactionRecord, UsageReading, build_round
from ..errors import ScenarioError
from .pipeline import RoundPipeline

logger = logging.getLogger(__name__)

GENERATOR_NAME = "PCG64"
_STREAMS = ("traffic", "stakes", "usage")


class ScenarioConfig(BaseModel):
    """Parameters of a generated round. Amounts are whole tokens."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    seed: int = Field(default=42, ge=0, lt=2**64)
    honest_accounts: int = Field(default=20, ge=2, le=999)
    blocks: int = Field(default=50, gt=0)
    days: int = Field(default=30, gt=0)
    topology: Literal["random", "chain"] = "random"
    # random topology only; chain sends both ways on every edge in every block
    tx_per_block: int = Field(default=5, ge=0)
    amount_min: int = Field(default=50, gt=0)
    amount_max: int = Field(default=150, gt=0)
    honest_stake_max: int = Field(default=1000, ge=0)
    usage_readings: bool = True

    ring_size: int = 3
    multiplicity: int = Field(default=1, ge=0)
    hop_amount: int = Field(default=600, gt=0)
    funding_amount: int = Field(default=1, ge=0)

    whale_stake: int = Field(default=0, ge=0)
    sybil_fanout: int = Field(default=0, ge=0, le=999)
    sybil_amount: int = Field(default=10, gt=0)

    @model_validator(mode="after")
    def _amount_range(self) -> "ScenarioConfig":
        if self.amount_max < self.amount_min:
            raise ValueError(f"amount_max {self.amount_max} is below amount_min {self.amount_min}")
        return self

    @property
    def honest(self) -> List[str]:
        return [f"h-{i:03d}" for i in range(self.honest_accounts)]

    @property
    def ring(self) -> List[str]:
        return [f"ring-{i}" for i in range(self.ring_size)]

    @property
    def sybils(self) -> List[str]:
        return [f"sybil-{i:03d}" for i in range(self.sybil_fanout)]

    @property
    def attack_volume(self) -> Decimal:
        """Tokens moved by the ring, its funding and the Sybil star."""
        return Decimal(
            self.ring_size * self.multiplicity * self.hop_amount
            + self.funding_amount
            + self.sybil_fanout * self.sybil_amount
        )


@dataclass(frozen=True)
class ExperimentRow:
    """One multiplicity of the loop-attack sweep.

    ``pagerank_rank`` uses uniform teleportation on the amount-weighted chain.
    Each ring account sends only to its successor, so its normalised row is the
    same for every multiplicity and so is this rank. ``activity_pagerank_rank``
    teleports in proportion to each account's transfer volume and is the column
    that rises with the multiplicity.
    """

    multiplicity: int
    attacker_s: float
    attacker_rank: int
    score_range: float
    ring_energy_share: float
    ring_top_shares: bool
    pagerank_rank: int
    activity_pagerank_rank: int
    nem_ring_mass: float
    consistency_ratio: float


@dataclass(frozen=True)
class ExperimentResult:
    attacker: str
    rows: Tuple[ExperimentRow, ...]
    metadata: Dict[str, str] = field(default_factory=dict)

    def attacker_s_spread(self) -> float:
        values = [row.attacker_s for row in self.rows]
        return max(values) - min(values)


def _streams(seed: int) -> Dict[str, Generator]:
    children = SeedSequence(seed).spawn(len(_STREAMS))
    return {name: Generator(PCG64(child)) for name, child in zip(_STREAMS, children)}


def _honest_traffic(config: ScenarioConfig, rng: Generator) -> List[TransactionRecord]:
    honest = config.honest
    m = len(honest)
    txs = []
    for height in range(1, config.blocks + 1):
        if config.topology == "chain":
            for i in range(m - 1):
                for source, target in ((i, i + 1), (i + 1, i)):
                    amount = int(rng.integers(config.amount_min, config.amount_max + 1))
                    txs.append(TransactionRecord(height, honest[source], honest[target], Decimal(amount)))
        else:
            for _ in range(config.tx_per_block):
                source = int(rng.integers(m))
                target = (source + int(rng.integers(1, m))) % m
                amount = int(rng.integers(config.amount_min, config.amount_max + 1))
                txs.append(TransactionRecord(height, honest[source], honest[target], Decimal(amount)))
    return txs


def _attack_traffic(config: ScenarioConfig) -> List[TransactionRecord]:
    n = config.blocks
    txs = []
    ring = config.ring
    if config.funding_amount > 0:
        txs.append(TransactionRecord(1, config.honest[0], ring[0], Decimal(config.funding_amount)))
    # ring hops go round-robin over consecutive blocks
    for t in range(config.ring_size * config.multiplicity):
        hop = t % config.ring_size
        txs.append(TransactionRecord(t % n + 1, ring[hop], ring[(hop + 1) % config.ring_size], Decimal(config.hop_amount)))
    for i, sybil in enumerate(config.sybils):
        txs.append(TransactionRecord(i % n + 1, "sybil-master", sybil, Decimal(config.sybil_amount)))
    return txs


def generate_scenario(config: ScenarioConfig) -> LedgerRound:
    """Build the round described by ``config``.

    Raises:
        ScenarioError: when the ring has fewer than two accounts
    """
    if config.ring_size < 2:
        raise ScenarioError(f"ring needs at least 2 accounts, got {config.ring_size}")
    streams = _streams(config.seed)
    txs = _honest_traffic(config, streams["traffic"]) + _attack_traffic(config)

    stakes = []
    if config.honest_stake_max > 0:
        for account in config.honest:
            day = int(streams["stakes"].integers(0, config.days + 1))
            amount = int(streams["stakes"].integers(1, config.honest_stake_max + 1))
            stakes.append(StakeEvent(account, day, Decimal(amount)))
    if config.whale_stake > 0:
        stakes.append(StakeEvent("whale", 0, Decimal(config.whale_stake)))

    usage = []
    if config.usage_readings:
        for account in config.honest:
            ratios = np.round(streams["usage"].uniform(0.0, 1.0, size=config.days), 4)
            usage.extend(UsageReading(account, day, float(r)) for day, r in enumerate(ratios, start=1))

    ledger = build_round(txs, stakes, usage, config.days, config.blocks)
    logger.debug(
        f"Generated scenario seed={config.seed}: {len(txs)} transactions, {len(stakes)} stakes, "
        f"ring k={config.multiplicity}, {len(ledger.account_registry)} accounts"
    )
    return ledger


def load_scenario(path: Union[str, Path]) -> ScenarioConfig:
    """Read ``scenario.*`` keys from a key=value file."""
    try:
        return ScenarioConfig.model_validate(nest_group(read_key_values(path), "scenario"))
    except ValidationError as e:
        raise ScenarioError(f"invalid scenario: {e}") from e


def _ring_nem_mass(graph, ring: Sequence[str]) -> float:
    members = [graph.index[a] for a in ring if a in graph.index]
    if not members:
        return 0.0
    N = nem_netflow_matrix(graph)
    return float(N[members][:, members].sum())


def loop_attack_experiment(base: ScenarioConfig, multiplicities: Sequence[int], settings: Settings) -> ExperimentResult:
    """Rerun the same scenario with the ring repeated k times for every k.

    The attacker is the first ring account. Every row reports its HodgeRank
    score and position, the ring's share of the inconsistent flow energy and the
    attacker's PageRank position, with uniform and with volume-weighted
    teleportation, on the same transfer graph.
    """
    if not multiplicities:
        raise ScenarioError("multiplicity sweep is empty")
    if base.ring_size < 2:
        raise ScenarioError(f"ring needs at least 2 accounts, got {base.ring_size}")
    attacker = base.ring[0]
    pipeline = RoundPipeline(settings)
    rows = []
    for k in multiplicities:
        config = base.model_copy(update={"multiplicity": int(k)})
        outcome = pipeline.score(generate_scenario(config))
        if outcome.hodge is None or attacker not in outcome.graph.index:
            raise ScenarioError(f"attacker '{attacker}' has no transfers at multiplicity {k}")
        ranking = global_ranking(outcome.hodge)
        shares = outcome.loops.shares
        ring = [a for a in config.ring if a in shares]
        top = sorted(shares, key=lambda a: (-shares[a], a))[: len(ring)]

        graph = outcome.graph
        matrix = StochasticMatrix.from_graph(graph)
        b = settings.baseline
        uniform = pagerank(matrix, settings.rank.alpha, b.tol, b.max_iter)
        weighted = pagerank(matrix, settings.rank.alpha, b.tol, b.max_iter, activity_personalization(graph))
        scores = list(ranking.scores.values())
        row = ExperimentRow(
            multiplicity=int(k),
            attacker_s=ranking.scores[attacker],
            attacker_rank=ranking.order.index(attacker) + 1,
            score_range=max(scores) - min(scores),
            ring_energy_share=sum(shares[a] for a in ring),
            ring_top_shares=set(top) == set(ring),
            pagerank_rank=uniform.position(attacker),
            activity_pagerank_rank=weighted.position(attacker),
            nem_ring_mass=_ring_nem_mass(graph, ring),
            consistency_ratio=outcome.hodge.consistency_ratio,
        )
        logger.info(
            f"k={k}: attacker s={row.attacker_s:.6g} rank={row.attacker_rank}, ring energy share="
            f"{row.ring_energy_share:.4f}, PageRank rank={row.pagerank_rank}/{row.activity_pagerank_rank}"
        )
        rows.append(row)
    metadata = {"generator": GENERATOR_NAME, "seed": str(base.seed), "attacker": attacker}
    return ExperimentResult(attacker, tuple(rows), metadata)
