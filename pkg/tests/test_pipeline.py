import math

import numpy as np
import pytest

from conftest import make_round
from dpor.backend.pipeline import RoundPipeline, run_round
from dpor.config import Settings
from dpor.engine.consensus import Ballot
from dpor.engine.ledger import parse_ledger


def handcrafted_round():
    transfers = [
        (1, "a", "b", "100"),
        (1, "b", "c", "50"),
        (2, "c", "a", "25"),
        (2, "a", "c", "75"),
        (2, "d", "a", "10"),
    ]
    stakes = [("a", 0, "1000"), ("b", 9, "1000"), ("e", 5, "60")]
    usage = [("a", 1, 0.75), ("b", 1, 0.34), ("c", 1, 0.94), ("e", 1, 1.0)]
    return make_round(transfers, stakes, usage, round_days=10, block_count=2)


def test_staker_only_round():
    ledger = make_round(stakes=[("a", 0, "50")], usage=[("b", 1, 0.7)])
    outcome = run_round(ledger, Settings())
    assert outcome.hodge is None
    assert outcome.loops is None
    assert outcome.election is None
    a, b = outcome.report.rows
    assert (a.P, b.P) == (1.0, 0.0)
    assert (a.R_raw, a.R_norm, b.R_norm) == (0.0, 0.5, 0.5)
    assert b.U == 1.0


def test_handcrafted_round_step_by_step():
    settings = Settings(graph={"eta": 0})
    outcome = run_round(handcrafted_round(), settings)
    rows = {row.account: row for row in outcome.report.rows}
    assert sorted(rows) == ["a", "b", "c", "d", "e"]

    # stake at day 10: a converts 1000 - 1000*0.9^10, b one installment, e is below theta
    a_conv = 651.32156
    total = a_conv + 100 + 60
    assert rows["a"].P == pytest.approx(a_conv / total)
    assert rows["b"].P == pytest.approx(100 / total)
    assert rows["e"].P == pytest.approx(60 / total)
    assert rows["c"].P == rows["d"].P == 0.0

    assert rows["a"].U == 1.0
    assert rows["b"].U == pytest.approx(0.5)
    assert rows["c"].U == pytest.approx(0.5)
    assert rows["e"].U == 0.0

    # transfer graph over a, b, c, d with L = W / C
    accounts = ["a", "b", "c", "d"]
    W = np.zeros((4, 4))
    for i, j, x in [(0, 1, 100), (1, 2, 50), (2, 0, 25), (0, 2, 75), (3, 0, 10)]:
        W[i, j] += x
    L = W / W.sum()
    out = L.sum(axis=1)
    M = np.full((4, 4), 0.25)
    for i in range(4):
        if out[i] > 0:
            M[i] = 0.85 * L[i] / out[i] + 0.15 / 4
    edges = [(i, j) for i in range(4) for j in range(i + 1, 4) if W[i, j] + W[j, i] > 0]
    B = np.zeros((len(edges), 4))
    Y = np.zeros(len(edges))
    for e, (i, j) in enumerate(edges):
        B[e, i], B[e, j] = -1.0, 1.0
        Y[e] = math.log(M[i, j]) - math.log(M[j, i])
    s, *_ = np.linalg.lstsq(B, Y, rcond=None)
    for k, account in enumerate(accounts):
        assert rows[account].R_raw == pytest.approx(s[k], abs=1e-10)
    assert rows["e"].R_raw == 0.0

    raw = {a: rows[a].R_raw for a in rows}
    lo, hi = min(raw.values()), max(raw.values())
    for account, row in rows.items():
        assert row.R_norm == pytest.approx((raw[account] - lo) / (hi - lo))
        assert row.Rep == pytest.approx(0.4 * row.P + 0.3 * row.U + 0.3 * row.R_norm)


def test_runs_are_deterministic(data_dir):
    with open(data_dir / "sample_ledger.txt") as f:
        ledger = parse_ledger(f)
    first = run_round(ledger, Settings())
    second = run_round(ledger, Settings())
    assert first.report == second.report
    assert first.loops.shares == second.loops.shares


def test_ballots_produce_an_election():
    ledger = handcrafted_round()
    ballots = [Ballot("a", ("b", "c")), Ballot("e", ("b",))]
    outcome = RoundPipeline(Settings()).run(ledger, ballots)
    rep = outcome.report.rep()
    assert outcome.election.totals["b"] == pytest.approx(rep["a"] + rep["e"])
    assert outcome.election.producers == ["b", "c"]


def test_report_metadata():
    outcome = run_round(handcrafted_round(), Settings())
    metadata = outcome.report.metadata
    assert metadata["round_days"] == "10"
    assert metadata["graph_accounts"] == "4"
    assert metadata["normalizer"] == "C_hat"
    assert 0.0 <= float(metadata["consistency_ratio"]) <= 1.0
