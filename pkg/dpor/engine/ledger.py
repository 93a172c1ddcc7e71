"""
Round input data: blocks of transactions, stake events and resource-usage readings.

Token amounts are fixed-point decimals with 6 places so that block and round
totals are exact. Real-valued math starts at the transfer-graph boundary.
"""

import logging
import re
from collections import defaultdict
from dataclasses import dataclass, field, replace
from decimal import Context, Decimal, InvalidOperation, localcontext
from typing import Dict, FrozenSet, Iterable, List, Optional, Set, Tuple

from ..errors import LedgerFormatError

logger = logging.getLogger(__name__)

AMOUNT_PLACES = 6
AMOUNT_QUANTUM = Decimal(1).scaleb(-AMOUNT_PLACES)
# Integer digits allowed in one amount. Totals are summed in AMOUNT_CONTEXT,
# which keeps any sum of such amounts exact.
AMOUNT_DIGITS = 20
AMOUNT_CONTEXT = Context(prec=64)
_ACCOUNT_RE = re.compile(r"^[!-+\--~]+$")  # printable ASCII, no space, no comma


@dataclass(frozen=True)
class TransactionRecord:
    block_height: int
    from_account: str
    to_account: str
    amount: Decimal


@dataclass(frozen=True)
class Block:
    height: int
    transactions: Tuple[TransactionRecord, ...]
    block_day: int

    @property
    def volume(self) -> Decimal:
        """C_k, the token sum of the block."""
        with localcontext(AMOUNT_CONTEXT):
            return sum((tx.amount for tx in self.transactions), Decimal(0))

    @property
    def transaction_count(self) -> int:
        """T_k. Recorded only; no weighting uses it."""
        return len(self.transactions)


@dataclass(frozen=True)
class StakeEvent:
    account: str
    day: int
    amount: Decimal


@dataclass(frozen=True)
class UsageReading:
    account: str
    day: int
    ratio: float


@dataclass(frozen=True)
class LedgerRound:
    blocks: Tuple[Block, ...]
    stakes: Tuple[StakeEvent, ...]
    usage: Tuple[UsageReading, ...]
    round_days: int
    account_registry: FrozenSet[str]
    dropped_self_transfers: int = field(default=0, compare=False)

    @property
    def block_count(self) -> int:
        return len(self.blocks)

    @property
    def total_volume(self) -> Decimal:
        """C = sum of C_k over all blocks."""
        with localcontext(AMOUNT_CONTEXT):
            return sum((block.volume for block in self.blocks), Decimal(0))

    @property
    def transaction_counts(self) -> Tuple[int, ...]:
        return tuple(block.transaction_count for block in self.blocks)

    def accounts(self) -> List[str]:
        return sorted(self.account_registry)

    def transacting_accounts(self) -> List[str]:
        """Accounts with at least one retained transaction, sorted."""
        seen: Set[str] = set()
        for block in self.blocks:
            for tx in block.transactions:
                seen.add(tx.from_account)
                seen.add(tx.to_account)
        return sorted(seen)

    def transactions(self) -> Iterable[TransactionRecord]:
        for block in self.blocks:
            yield from block.transactions


@dataclass(frozen=True)
class Violation:
    record: str
    rule: str


def block_day(k: int, d: int, n: int) -> int:
    """Birthday of the k-th of n blocks collected over d days: ceil(k*d/n)."""
    return (k * d + n - 1) // n


def build_round(
    transactions: Iterable[TransactionRecord],
    stakes: Iterable[StakeEvent],
    usage: Iterable[UsageReading],
    round_days: int,
    block_count: int,
) -> LedgerRound:
    """Assemble a round with blocks 1..block_count, deriving each block day.

    Transactions keep their input order inside a block.
    """
    by_height: Dict[int, List[TransactionRecord]] = defaultdict(list)
    for tx in transactions:
        by_height[tx.block_height].append(tx)
    stray = sorted(h for h in by_height if not 1 <= h <= block_count)
    if stray:
        raise LedgerFormatError(f"transactions reference blocks outside 1..{block_count}: {stray[:5]}")

    blocks = tuple(
        Block(height=k, transactions=tuple(by_height.get(k, ())), block_day=block_day(k, round_days, block_count))
        for k in range(1, block_count + 1)
    )
    stakes = tuple(stakes)
    usage = tuple(usage)
    registry: Set[str] = set()
    for block in blocks:
        for tx in block.transactions:
            registry.update((tx.from_account, tx.to_account))
    registry.update(s.account for s in stakes)
    registry.update(u.account for u in usage)
    return LedgerRound(
        blocks=blocks,
        stakes=stakes,
        usage=usage,
        round_days=round_days,
        account_registry=frozenset(registry),
    )


def _field(parts: List[str], index: int, name: str, line_no: int) -> str:
    value = parts[index].strip()
    if not value:
        raise LedgerFormatError("empty value", line_no, name)
    return value


def _parse_account(text: str, line_no: int, name: str) -> str:
    if not _ACCOUNT_RE.match(text):
        raise LedgerFormatError(f"invalid account id '{text}'", line_no, name)
    return text


def _parse_int(text: str, line_no: int, name: str, minimum: int) -> int:
    try:
        value = int(text)
    except ValueError:
        raise LedgerFormatError(f"expected an integer, got '{text}'", line_no, name) from None
    if value < minimum:
        raise LedgerFormatError(f"must be >= {minimum}, got {value}", line_no, name)
    return value


def parse_amount(text: str, line_no: Optional[int] = None, name: str = "amount") -> Decimal:
    """Parse a non-negative token amount with at most 6 decimal places."""
    try:
        value = Decimal(text)
    except InvalidOperation:
        raise LedgerFormatError(f"expected a token amount, got '{text}'", line_no, name) from None
    if not value.is_finite():
        raise LedgerFormatError(f"amount must be finite, got '{text}'", line_no, name)
    if value < 0:
        raise LedgerFormatError(f"negative amount {text}", line_no, name)
    if value.adjusted() >= AMOUNT_DIGITS:
        raise LedgerFormatError(f"amount {text} has more than {AMOUNT_DIGITS} integer digits", line_no, name)
    quantized = value.quantize(AMOUNT_QUANTUM, context=AMOUNT_CONTEXT)
    if quantized != value:
        raise LedgerFormatError(f"amount {text} has more than {AMOUNT_PLACES} decimal places", line_no, name)
    return quantized


def _parse_ratio(text: str, line_no: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise LedgerFormatError(f"expected a ratio, got '{text}'", line_no, "ratio") from None
    if not 0.0 <= value <= 1.0:
        raise LedgerFormatError(f"ratio {text} outside [0, 1]", line_no, "ratio")
    return value


_ARITY = {"tx": 5, "stake": 4, "usage": 4, "meta": 3, "block": 2}


def parse_ledger(stream: Iterable[str]) -> LedgerRound:
    """Parse a line-delimited round file.

    Self-transfers are dropped and counted; zero-amount transfers are kept.

    Raises:
        LedgerFormatError: on the first malformed line, on missing or repeated
            ``meta`` records and on non-consecutive block heights
    """
    transactions: List[TransactionRecord] = []
    stakes: List[StakeEvent] = []
    usage: List[UsageReading] = []
    heights: Set[int] = set()
    round_days: Optional[int] = None
    dropped = 0

    for line_no, raw in enumerate(stream, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split(",")
        tag = parts[0].strip()
        if tag not in _ARITY:
            raise LedgerFormatError(f"unknown record tag '{tag}'", line_no, "tag")
        if len(parts) != _ARITY[tag]:
            raise LedgerFormatError(f"'{tag}' record needs {_ARITY[tag]} fields, got {len(parts)}", line_no)

        if tag == "tx":
            height = _parse_int(_field(parts, 1, "block_height", line_no), line_no, "block_height", 1)
            sender = _parse_account(_field(parts, 2, "from", line_no), line_no, "from")
            receiver = _parse_account(_field(parts, 3, "to", line_no), line_no, "to")
            amount = parse_amount(_field(parts, 4, "amount", line_no), line_no)
            heights.add(height)
            if sender == receiver:
                dropped += 1
                continue
            transactions.append(TransactionRecord(height, sender, receiver, amount))
        elif tag == "block":
            heights.add(_parse_int(_field(parts, 1, "block_height", line_no), line_no, "block_height", 1))
        elif tag == "stake":
            account = _parse_account(_field(parts, 1, "account", line_no), line_no, "account")
            day = _parse_int(_field(parts, 2, "day", line_no), line_no, "day", 0)
            amount = parse_amount(_field(parts, 3, "amount", line_no), line_no)
            if amount == 0:
                raise LedgerFormatError("stake amount must be positive", line_no, "amount")
            stakes.append(StakeEvent(account, day, amount))
        elif tag == "usage":
            account = _parse_account(_field(parts, 1, "account", line_no), line_no, "account")
            day = _parse_int(_field(parts, 2, "day", line_no), line_no, "day", 0)
            usage.append(UsageReading(account, day, _parse_ratio(_field(parts, 3, "ratio", line_no), line_no)))
        else:
            if parts[1].strip() != "d":
                raise LedgerFormatError(f"unknown meta key '{parts[1].strip()}'", line_no, "key")
            if round_days is not None:
                raise LedgerFormatError("more than one meta,d record", line_no)
            round_days = _parse_int(_field(parts, 2, "round_days", line_no), line_no, "round_days", 1)

    if round_days is None:
        raise LedgerFormatError("missing meta,d,<round_days> record")
    block_count = max(heights, default=0)
    if heights != set(range(1, block_count + 1)):
        missing = sorted(set(range(1, block_count + 1)) - heights)
        raise LedgerFormatError(f"non-consecutive block heights, missing {missing[:5]}", field="block_height")
    late = [s for s in stakes if s.day > round_days]
    if late:
        raise LedgerFormatError(f"stake by '{late[0].account}' on day {late[0].day} is after the round end {round_days}")

    if dropped:
        logger.warning(f"Dropped {dropped} self-transfer(s)")
    ledger = replace(build_round(transactions, stakes, usage, round_days, block_count), dropped_self_transfers=dropped)
    logger.info(
        f"Parsed {ledger.block_count} blocks, {len(transactions)} transactions, "
        f"{len(stakes)} stake events, {len(usage)} usage readings, {len(ledger.account_registry)} accounts"
    )
    return ledger


def serialize_ledger(ledger: LedgerRound) -> str:
    """Render a round in the line format read by :func:`parse_ledger`."""
    lines = [f"meta,d,{ledger.round_days}"]
    for block in ledger.blocks:
        lines.append(f"block,{block.height}")
        for tx in block.transactions:
            lines.append(f"tx,{tx.block_height},{tx.from_account},{tx.to_account},{tx.amount:f}")
    for stake in ledger.stakes:
        lines.append(f"stake,{stake.account},{stake.day},{stake.amount:f}")
    for reading in ledger.usage:
        lines.append(f"usage,{reading.account},{reading.day},{reading.ratio!r}")
    return "\n".join(lines) + "\n"


def validate_ledger(ledger: LedgerRound) -> List[Violation]:
    """Check every record invariant. Returns an empty list for a well-formed round."""
    violations: List[Violation] = []
    registry = ledger.account_registry

    def unknown(account: str, record: str) -> None:
        if account not in registry:
            violations.append(Violation(record, f"account '{account}' not in registry"))

    if ledger.round_days < 1:
        violations.append(Violation("meta", "round days must be positive"))

    n = ledger.block_count
    consecutive = True
    for index, block in enumerate(ledger.blocks):
        if block.height != index + 1:
            violations.append(Violation(f"block {block.height}", "non-consecutive height"))
            consecutive = False
            break

    previous_day = 0
    for block in ledger.blocks:
        name = f"block {block.height}"
        if consecutive and ledger.round_days >= 1:
            if block.block_day != block_day(block.height, ledger.round_days, n):
                violations.append(Violation(name, "block day differs from ceil(k*d/n)"))
            if block.block_day < previous_day:
                violations.append(Violation(name, "block day decreases"))
            if block.block_day > ledger.round_days:
                violations.append(Violation(name, "block day after the round end"))
            previous_day = block.block_day
        for position, tx in enumerate(block.transactions):
            record = f"{name} tx {position}"
            if tx.block_height != block.height:
                violations.append(Violation(record, "transaction height differs from its block"))
            if tx.amount < 0:
                violations.append(Violation(record, "negative amount"))
            elif tx.amount.adjusted() >= AMOUNT_DIGITS:
                violations.append(Violation(record, f"amount has more than {AMOUNT_DIGITS} integer digits"))
            elif tx.amount.quantize(AMOUNT_QUANTUM, context=AMOUNT_CONTEXT) != tx.amount:
                violations.append(Violation(record, "amount has more than 6 decimal places"))
            if tx.from_account == tx.to_account:
                violations.append(Violation(record, "self-transfer"))
            unknown(tx.from_account, record)
            unknown(tx.to_account, record)

    for position, stake in enumerate(ledger.stakes):
        record = f"stake {position}"
        if stake.amount <= 0:
            violations.append(Violation(record, "stake amount must be positive"))
        if stake.day < 0:
            violations.append(Violation(record, "negative day"))
        elif stake.day > ledger.round_days:
            violations.append(Violation(record, "stake after the round end"))
        unknown(stake.account, record)

    for position, reading in enumerate(ledger.usage):
        record = f"usage {position}"
        if not 0.0 <= reading.ratio <= 1.0:
            violations.append(Violation(record, "ratio out of range"))
        if reading.day < 0:
            violations.append(Violation(record, "negative day"))
        unknown(reading.account, record)

    return violations
