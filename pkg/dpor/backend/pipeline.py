"""
Round pipeline: stake power, resource usage and HodgeRank combined into the
reputation report, followed by the reputation-weighted election.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Sequence

from .. import __version__
from ..config import Settings
from ..engine.consensus import Ballot, ElectionResult, ReputationReport, build_report, tally_votes
from ..engine.flowrank import HodgeResult, LoopReport, detect_loops, global_ranking, rank_transfer_graph
from ..engine.ledger import LedgerRound
from ..engine.resource import usage_scores
from ..engine.stake import StakeState, stake_state
from ..engine.txgraph import TransferGraph, build_transfer_graph

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RoundOutcome:
    report: ReputationReport
    stake: StakeState
    graph: TransferGraph
    hodge: Optional[HodgeResult]
    loops: Optional[LoopReport]
    election: Optional[ElectionResult]


class RoundPipeline:
    """Runs every stage of a rating round with one set of settings."""

    def __init__(self, settings: Settings):
        """Initialize the pipeline.

        Args:
            settings: validated parameters of every stage
        """
        self.settings = settings

    def _rank(self, graph: TransferGraph) -> Optional[HodgeResult]:
        if graph.degenerate:
            logger.warning("Degenerate round: every account gets R_raw = 0 and R_norm = 0.5")
            return None
        return rank_transfer_graph(graph, self.settings.rank.alpha, self.settings.solve)

    def _metadata(self, ledger: LedgerRound, graph: TransferGraph, hodge: Optional[HodgeResult]) -> Dict[str, str]:
        metadata = {
            "version": __version__,
            "round_days": str(ledger.round_days),
            "blocks": str(ledger.block_count),
            "accounts": str(len(ledger.account_registry)),
            "graph_accounts": str(graph.size),
            "volume": f"{ledger.total_volume:f}",
            "normalizer": "C_hat" if graph.shrunk else "C",
            "dropped_self_transfers": str(ledger.dropped_self_transfers),
        }
        if hodge is not None:
            metadata["consistency_ratio"] = format(hodge.consistency_ratio, ".12g")
            metadata["components"] = str(hodge.components)
        return metadata

    def score(self, ledger: LedgerRound) -> RoundOutcome:
        """Build the reputation report of a round, without an election."""
        settings = self.settings
        accounts = ledger.accounts()
        stake = stake_state(ledger.stakes, ledger.round_days, settings.stake)
        power = stake.power(accounts)
        usage = usage_scores(ledger, settings.usage)
        graph = build_transfer_graph(ledger, settings.graph)
        hodge = self._rank(graph)

        ranking: Dict[str, float] = {}
        loops = None
        if hodge is not None:
            ranking = global_ranking(hodge).scores
            loops = detect_loops(hodge, settings.loops.tau)
        report = build_report(accounts, power, usage, ranking, settings.rep, self._metadata(ledger, graph, hodge))
        logger.info(f"Scored {len(report.rows)} accounts over {ledger.block_count} blocks")
        return RoundOutcome(report, stake, graph, hodge, loops, None)

    def run(self, ledger: LedgerRound, ballots: Optional[Sequence[Ballot]] = None) -> RoundOutcome:
        """Score the round and, when ballots are given, tally the election."""
        outcome = self.score(ledger)
        if ballots is None:
            return outcome
        election = tally_votes(ballots, outcome.report, self.settings.election)
        return RoundOutcome(outcome.report, outcome.stake, outcome.graph, outcome.hodge, outcome.loops, election)


def run_round(ledger: LedgerRound, settings: Settings, ballots: Optional[Sequence[Ballot]] = None) -> RoundOutcome:
    return RoundPipeline(settings).run(ledger, ballots)
