"""
CSV files and the run manifest written by the CLI.

Real values carry 12 significant digits so that reruns produce identical bytes.
"""

import csv
import hashlib
import io
import logging
from decimal import Decimal
from pathlib import Path
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple, Union

from pydantic import BaseModel, Field

from .. import __version__
from ..backend.simulation import ExperimentResult
from ..engine.consensus import AccountReputation, ElectionResult, ReputationReport
from ..engine.flowrank import LoopReport
from ..errors import DporError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

REPORT_COLUMNS = ("account", "P", "U", "R_raw", "R_norm", "Rep")


def fmt(value: Union[float, Decimal, int]) -> str:
    """12 significant digits, no negative zero."""
    return format(float(value) + 0.0, ".12g")


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    logger.info(f"Wrote {path}")
    return path


def write_report(path: PathLike, report: ReputationReport) -> Path:
    rows = ((r.account, fmt(r.P), fmt(r.U), fmt(r.R_raw), fmt(r.R_norm), fmt(r.Rep)) for r in report.rows)
    return write_csv(path, REPORT_COLUMNS, rows)


def read_report(path: PathLike) -> ReputationReport:
    """Re-read a rep.csv written by :func:`write_report`."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as e:
        raise DporError(f"{path}: not valid UTF-8 at byte {e.start}") from None
    with io.StringIO(text, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(header) != REPORT_COLUMNS:
            raise DporError(f"{path}: expected header {','.join(REPORT_COLUMNS)}")
        rows = []
        for line_no, record in enumerate(reader, start=2):
            if len(record) != len(REPORT_COLUMNS):
                raise DporError(f"{path}: line {line_no} has {len(record)} fields")
            try:
                values = [float(v) for v in record[1:]]
            except ValueError:
                raise DporError(f"{path}: line {line_no} has a non-numeric value") from None
            rows.append(AccountReputation(record[0], *values))
    return ReputationReport(tuple(rows), {"source": str(path)})


def write_loops(path: PathLike, loops: Optional[LoopReport], accounts: Sequence[str]) -> Path:
    """One row per account, largest inconsistent-energy share first."""
    shares = {account: 0.0 for account in accounts}
    flagged = set()
    if loops is not None:
        shares.update(loops.shares)
        flagged = set(loops.flagged)
    order = sorted(shares, key=lambda a: (-shares[a], a))
    return write_csv(path, ("account", "share", "flagged"), ((a, fmt(shares[a]), int(a in flagged)) for a in order))


def write_election(out_dir: PathLike, election: ElectionResult) -> Tuple[Path, Path]:
    out_dir = Path(out_dir)
    header = ("rank", "delegate", "votes")
    producers = write_csv(
        out_dir / "producers.csv",
        header,
        ((rank, d, fmt(election.totals[d])) for rank, d in enumerate(election.producers, start=1)),
    )
    offset = len(election.producers)
    standby = write_csv(
        out_dir / "standby.csv",
        header,
        ((rank, d, fmt(election.totals[d])) for rank, d in enumerate(election.standby, start=offset + 1)),
    )
    return producers, standby


def write_comparison(path: PathLike, rows: Iterable[Tuple[str, float, float, float]]) -> Path:
    return write_csv(
        path,
        ("account", "hodgerank", "pagerank", "ncdawarerank"),
        ((account, fmt(s), fmt(pr), fmt(ncd)) for account, s, pr, ncd in rows),
    )


def write_curve(path: PathLike, header: Tuple[str, str], points: Iterable[Tuple[int, Union[float, Decimal]]]) -> Path:
    return write_csv(path, header, ((x, fmt(y)) for x, y in points))


def file_digest(path: PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


class RunManifest(BaseModel):
    """What a run read, with which settings, and what it wrote."""

    command: str
    version: str = __version__
    config: Dict[str, str] = Field(default_factory=dict)
    inputs: Dict[str, str] = Field(default_factory=dict)
    outputs: Dict[str, str] = Field(default_factory=dict)

    @classmethod
    def collect(
        cls,
        command: str,
        config: Mapping[str, str],
        inputs: Iterable[Optional[PathLike]],
        outputs: Iterable[PathLike],
    ) -> "RunManifest":
        return cls(
            command=command,
            config=dict(config),
            inputs={str(p): file_digest(p) for p in inputs if p is not None},
            outputs={str(p): file_digest(p) for p in outputs},
        )

    def write(self, out_dir: PathLike) -> Path:
        path = Path(out_dir) / "manifest.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.model_dump_json(indent=2) + "\n", encoding="utf-8")
        logger.info(f"Wrote {path}")
        return path


EXPERIMENT_COLUMNS = (
    "multiplicity",
    "attacker_s",
    "attacker_rank",
    "score_range",
    "ring_energy_share",
    "ring_top_shares",
    "pagerank_rank",
    "activity_pagerank_rank",
    "nem_ring_mass",
    "consistency_ratio",
)


def write_experiment(path: PathLike, result: ExperimentResult) -> Path:
    rows = (
        (
            row.multiplicity,
            fmt(row.attacker_s),
            row.attacker_rank,
            fmt(row.score_range),
            fmt(row.ring_energy_share),
            int(row.ring_top_shares),
            row.pagerank_rank,
            row.activity_pagerank_rank,
            fmt(row.nem_ring_mass),
            fmt(row.consistency_ratio),
        )
        for row in result.rows
    )
    return write_csv(path, EXPERIMENT_COLUMNS, rows)
