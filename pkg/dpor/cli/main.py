"""
CLI entry point for the DPoR reputation engine.
"""

import logging
import sys
from pathlib import Path
from typing import List, Optional, Type

import click
import typer
from rich.panel import Panel
from rich.table import Table

from ..app_setup import configure_logging, console
from ..backend.pipeline import RoundPipeline
from ..backend.simulation import generate_scenario, load_scenario, loop_attack_experiment
from ..config import load_settings
from ..engine.baselines import BlockPartition, compare_rankers, load_partition
from ..engine.consensus import load_ballots, tally_votes
from ..engine.ledger import LedgerRound, parse_ledger, serialize_ledger, validate_ledger
from ..engine.stake import stake_curve
from ..engine.txgraph import shrink_curve
from ..errors import (
    EXIT_DATA,
    EXIT_USAGE,
    BallotError,
    DegenerateRoundError,
    DporError,
    LedgerFormatError,
    PartitionError,
)
from .output import (
    RunManifest,
    read_report,
    write_comparison,
    write_curve,
    write_election,
    write_experiment,
    write_loops,
    write_report,
)

logger = logging.getLogger(__name__)

cli = typer.Typer(
    name="dpor",
    help="Delegated Proof of Reputation scoring engine and simulator",
    add_completion=False,
)


def _config_option() -> Optional[Path]:
    return typer.Option(None, "--config", "-c", exists=True, dir_okay=False, help="key=value configuration file")


def _read_lines(path: Path, error: Type[DporError]) -> List[str]:
    """Lines of a UTF-8 input file; undecodable bytes raise ``error``."""
    try:
        return path.read_text(encoding="utf-8").splitlines()
    except UnicodeDecodeError as e:
        raise error(f"{path}: not valid UTF-8 at byte {e.start}") from None


def _read_ledger(path: Path) -> LedgerRound:
    return parse_ledger(_read_lines(path, LedgerFormatError))


def _parse_sweep(text: str) -> List[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise typer.BadParameter(f"expected comma-separated integers, got '{text}'") from None
    if not values or any(v < 0 for v in values):
        raise typer.BadParameter("sweep needs at least one non-negative multiplicity")
    return values


@cli.callback()
def main_callback(verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug logging")):
    """Delegated Proof of Reputation scoring engine and simulator."""
    configure_logging(verbose)


@cli.command()
def ingest(
    ledger: Path = typer.Option(..., exists=True, dir_okay=False, help="Round ledger file"),
    out_dir: Path = typer.Option(Path("."), help="Directory for manifest.json"),
):
    """Parse and validate a ledger without scoring it."""
    round_ = _read_ledger(ledger)
    violations = validate_ledger(round_)

    table = Table(title=f"Ledger {ledger.name}")
    table.add_column("Field", style="cyan")
    table.add_column("Value", style="green")
    table.add_row("round days", str(round_.round_days))
    table.add_row("blocks", str(round_.block_count))
    table.add_row("transactions", str(sum(round_.transaction_counts)))
    table.add_row("volume", f"{round_.total_volume:f}")
    table.add_row("stake events", str(len(round_.stakes)))
    table.add_row("usage readings", str(len(round_.usage)))
    table.add_row("accounts", str(len(round_.account_registry)))
    table.add_row("dropped self-transfers", str(round_.dropped_self_transfers))
    console.print(table)

    RunManifest.collect("ingest", {}, [ledger], []).write(out_dir)
    if violations:
        for violation in violations:
            console.print(f"[red]{violation.record}: {violation.rule}[/red]")
        raise typer.Exit(EXIT_DATA)
    console.print("[green]Ledger is valid[/green]")


@cli.command()
def score(
    ledger: Path = typer.Option(..., exists=True, dir_okay=False, help="Round ledger file"),
    config: Optional[Path] = _config_option(),
    out: Path = typer.Option(Path("rep.csv"), help="Reputation report CSV"),
    loops: Optional[Path] = typer.Option(None, help="Also write the loop report CSV here"),
):
    """Compute P, U, R and Rep for every account of a round."""
    settings = load_settings(config)
    round_ = _read_ledger(ledger)
    outcome = RoundPipeline(settings).score(round_)

    outputs = [write_report(out, outcome.report)]
    if loops is not None:
        outputs.append(write_loops(loops, outcome.loops, round_.accounts()))
    RunManifest.collect("score", settings.snapshot(), [ledger, config], outputs).write(out.parent)

    ratio = outcome.report.metadata.get("consistency_ratio", "n/a")
    console.print(f"[green]Scored {len(outcome.report.rows)} accounts[/green] (consistency ratio {ratio})")


@cli.command()
def elect(
    ballots: Path = typer.Option(..., exists=True, dir_okay=False, help="Ballot file"),
    report: Path = typer.Option(..., exists=True, dir_okay=False, help="rep.csv from the score command"),
    config: Optional[Path] = _config_option(),
    out_dir: Path = typer.Option(Path("."), help="Directory for producers.csv and standby.csv"),
):
    """Tally reputation-weighted votes into producers and standby delegates."""
    settings = load_settings(config)
    parsed = load_ballots(_read_lines(ballots, BallotError))
    election = tally_votes(parsed, read_report(report), settings.election)
    outputs = write_election(out_dir, election)
    RunManifest.collect("elect", settings.snapshot(), [ballots, report, config], outputs).write(out_dir)

    table = Table(title="Block producers")
    table.add_column("Rank", style="cyan")
    table.add_column("Delegate", style="green")
    table.add_column("Votes", style="yellow")
    for rank, delegate in enumerate(election.producers, start=1):
        table.add_row(str(rank), delegate, f"{election.totals[delegate]:.6g}")
    console.print(table)
    console.print(f"[green]{len(election.producers)} producers, {len(election.standby)} standby[/green]")


@cli.command()
def simulate(
    scenario: Path = typer.Option(..., exists=True, dir_okay=False, help="scenario.* key=value file"),
    sweep: str = typer.Option("1,10,100", help="Comma-separated loop multiplicities"),
    config: Optional[Path] = _config_option(),
    out: Path = typer.Option(Path("exp.csv"), help="Experiment CSV"),
    ledger_out: Optional[Path] = typer.Option(None, help="Also write the scenario ledger here"),
):
    """Run the loop-attack multiplicity sweep on a generated scenario."""
    multiplicities = _parse_sweep(sweep)
    settings = load_settings(config)
    base = load_scenario(scenario)
    result = loop_attack_experiment(base, multiplicities, settings)

    outputs = [write_experiment(out, result)]
    if ledger_out is not None:
        ledger_out.parent.mkdir(parents=True, exist_ok=True)
        ledger_out.write_text(serialize_ledger(generate_scenario(base)), encoding="utf-8")
        logger.info(f"Wrote {ledger_out}")
        outputs.append(ledger_out)
    snapshot = {**settings.snapshot(), **{f"scenario.{k}": str(v) for k, v in base.model_dump().items()}}
    snapshot.update(result.metadata)
    RunManifest.collect("simulate", snapshot, [scenario, config], outputs).write(out.parent)

    table = Table(title=f"Loop attack ({result.attacker})")
    for column in ("k", "s", "HodgeRank", "ring energy", "PageRank", "PageRank (volume)"):
        table.add_column(column)
    for row in result.rows:
        table.add_row(
            str(row.multiplicity),
            f"{row.attacker_s:.6g}",
            str(row.attacker_rank),
            f"{row.ring_energy_share:.4f}",
            str(row.pagerank_rank),
            str(row.activity_pagerank_rank),
        )
    console.print(table)


@cli.command("detect-loops")
def detect_loops_command(
    ledger: Path = typer.Option(..., exists=True, dir_okay=False, help="Round ledger file"),
    config: Optional[Path] = _config_option(),
    out: Path = typer.Option(Path("loopreport.csv"), help="Loop report CSV"),
):
    """Flag accounts carrying a large share of the inconsistent flow energy."""
    settings = load_settings(config)
    round_ = _read_ledger(ledger)
    outcome = RoundPipeline(settings).score(round_)
    path = write_loops(out, outcome.loops, round_.accounts())
    RunManifest.collect("detect-loops", settings.snapshot(), [ledger, config], [path]).write(out.parent)

    if outcome.loops is None or not outcome.loops.flagged:
        console.print(f"[green]No account above tau={settings.loops.tau}[/green]")
        return
    table = Table(title=f"Flagged accounts (tau={settings.loops.tau})")
    table.add_column("Account", style="cyan")
    table.add_column("Share", style="red")
    for account in outcome.loops.flagged:
        table.add_row(account, f"{outcome.loops.shares[account]:.4f}")
    console.print(table)


@cli.command("compare-rankers")
def compare_rankers_command(
    ledger: Path = typer.Option(..., exists=True, dir_okay=False, help="Round ledger file"),
    config: Optional[Path] = _config_option(),
    partition: Optional[Path] = typer.Option(None, exists=True, dir_okay=False, help="block,<id>,<account> file"),
    out: Path = typer.Option(Path("rankers.csv"), help="Side-by-side scores CSV"),
):
    """HodgeRank, PageRank and NCDawareRank scores on the same transfer graph."""
    settings = load_settings(config)
    round_ = _read_ledger(ledger)
    outcome = RoundPipeline(settings).score(round_)
    if outcome.hodge is None:
        raise DegenerateRoundError("degenerate round: nothing to rank")
    graph = outcome.graph
    if partition is not None:
        blocks = load_partition(_read_lines(partition, PartitionError), graph.accounts)
    else:
        blocks = BlockPartition.singletons(graph.accounts)
    hodge_scores = {account: float(s) for account, s in zip(outcome.hodge.accounts, outcome.hodge.scores)}
    b = settings.baseline
    rows = compare_rankers(graph, hodge_scores, blocks, settings.rank.alpha, b.mu, b.tol, b.max_iter)
    path = write_comparison(out, rows)
    RunManifest.collect("compare-rankers", settings.snapshot(), [ledger, config, partition], [path]).write(out.parent)
    console.print(f"[green]Compared rankers on {graph.size} accounts[/green]")


@cli.command("export-plot")
def export_plot(
    config: Optional[Path] = _config_option(),
    out_dir: Path = typer.Option(Path("."), help="Directory for stake_curve.csv and shrink_curve.csv"),
    stake: int = typer.Option(1000, min=1, help="Staked amount S of the stake curve"),
    theta: Optional[int] = typer.Option(None, min=1, help="Threshold; defaults to stake.theta"),
    days: int = typer.Option(30, min=0, help="Last day of the stake curve"),
    amount: int = typer.Option(1000, min=1, help="Transfer amount of the shrinkage curve"),
    shrink_days: int = typer.Option(365, min=1, help="Last day of the shrinkage curve"),
):
    """Stake conversion and transaction shrinkage curves as CSV."""
    settings = load_settings(config)
    threshold = theta if theta is not None else settings.stake.theta
    graph = settings.graph
    outputs = [
        write_curve(out_dir / "stake_curve.csv", ("day", "convertible"), stake_curve(stake, threshold, days)),
        write_curve(out_dir / "shrink_curve.csv", ("day", "weight"), shrink_curve(amount, graph.phi, graph.eta, shrink_days)),
    ]
    RunManifest.collect("export-plot", settings.snapshot(), [config], outputs).write(out_dir)
    console.print(Panel(f"stake S={stake}, theta={threshold}; shrink phi={graph.phi:.6g}, eta={graph.eta:.6g}", title="Curves"))


# Recent typer releases ship their own copy of click; catch both copies.
_USAGE_ERRORS = tuple(
    {click.ClickException, *(c for c in typer.BadParameter.__mro__ if c.__name__ == "ClickException")}
)
_ABORTS = tuple({click.Abort, typer.Abort})


def run_cli(argv: Optional[List[str]] = None) -> int:
    """Run one CLI command and return its exit code."""
    command = typer.main.get_command(cli)
    try:
        rv = command.main(args=argv, prog_name="dpor", standalone_mode=False)
    except _USAGE_ERRORS as e:
        e.show()
        return EXIT_USAGE
    except _ABORTS:
        console.print("[red]Aborted[/red]")
        return EXIT_USAGE
    except DporError as e:
        console.print(f"[red]Error: {e}[/red]")
        return e.exit_code
    except FileNotFoundError as e:
        console.print(f"[red]Error: {e}[/red]")
        return EXIT_USAGE
    return rv if isinstance(rv, int) else 0


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
