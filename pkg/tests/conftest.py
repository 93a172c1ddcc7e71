from decimal import Decimal
from pathlib import Path
from typing import Iterable, Tuple

import numpy as np
import pytest

from dpor.engine.ledger import LedgerRound, StakeEvent, TransactionRecord, UsageReading, build_round

DATA_DIR = Path(__file__).resolve().parent.parent / "dpor" / "data"


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0xD9012)


@pytest.fixture
def data_dir() -> Path:
    return DATA_DIR


def make_round(
    transfers: Iterable[Tuple[int, str, str, str]] = (),
    stakes: Iterable[Tuple[str, int, str]] = (),
    usage: Iterable[Tuple[str, int, float]] = (),
    round_days: int = 10,
    block_count: int = 1,
) -> LedgerRound:
    """Build a round from plain tuples; amounts are decimal strings."""
    return build_round(
        [TransactionRecord(h, a, b, Decimal(x)) for h, a, b, x in transfers],
        [StakeEvent(a, d, Decimal(x)) for a, d, x in stakes],
        [UsageReading(a, d, r) for a, d, r in usage],
        round_days,
        block_count,
    )
