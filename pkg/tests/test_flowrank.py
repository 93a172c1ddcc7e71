import math
from dataclasses import replace

import numpy as np
import pytest

from conftest import make_round
from dpor.config import ShrinkParams, SolveParams
from dpor.engine.flowrank import (
    EdgeFlow,
    MarkovChain,
    curl_matrix,
    detect_loops,
    edge_flow,
    enumerate_triangles,
    global_ranking,
    hodge_decompose,
    incidence_matrix,
    markov_chain,
    rank_transfer_graph,
    support_edges,
)
from dpor.engine.txgraph import build_transfer_graph
from dpor.errors import DegenerateRoundError

NO_SHRINK = ShrinkParams(eta=0)


def flow(accounts, edges, values):
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    return EdgeFlow(tuple(accounts), edges, np.asarray(values, dtype=float), np.ones(len(edges)))


def random_flow(rng, m, density=0.3):
    pairs = [(i, j) for i in range(m) for j in range(i + 1, m) if rng.random() < density]
    if not pairs:
        pairs = [(0, 1)]
    return flow([f"n{i:02d}" for i in range(m)], pairs, rng.normal(size=len(pairs)))


def test_markov_chain_mutual_pair():
    graph = build_transfer_graph(make_round([(1, "a", "b", "5"), (1, "b", "a", "5")]), NO_SHRINK)
    M = markov_chain(graph, 0.85).M
    np.testing.assert_allclose(M, [[0.075, 0.925], [0.925, 0.075]], atol=1e-15)


def test_dangling_row_is_uniform():
    graph = build_transfer_graph(make_round([(1, "a", "b", "5"), (1, "a", "c", "5")]), NO_SHRINK)
    M = markov_chain(graph, 0.85).M
    np.testing.assert_allclose(M[1], [1 / 3] * 3)
    np.testing.assert_allclose(M.sum(axis=1), 1.0)


def test_small_damping_approaches_uniform():
    graph = build_transfer_graph(make_round([(1, "a", "b", "5"), (1, "b", "c", "1")]), NO_SHRINK)
    M = markov_chain(graph, 0.01).M
    assert np.abs(M - 1 / 3).max() < 0.01


def test_markov_chain_rejects_degenerate_graph():
    graph = build_transfer_graph(make_round([(1, "a", "b", "0")]), NO_SHRINK)
    with pytest.raises(DegenerateRoundError):
        markov_chain(graph, 0.85)
    with pytest.raises(ValueError):
        markov_chain(build_transfer_graph(make_round([(1, "a", "b", "1")]), NO_SHRINK), 1.0)


def test_symmetric_pair_has_zero_flow():
    graph = build_transfer_graph(make_round([(1, "a", "b", "1000"), (1, "b", "a", "1000")]), NO_SHRINK)
    Y = edge_flow(markov_chain(graph, 0.85), support_edges(graph))
    np.testing.assert_array_equal(Y.values, [0.0])


def test_edge_flow_log_ratio():
    chain = MarkovChain(("a", "b"), np.array([[0.075, 0.925], [0.075, 0.925]]), 0.85)
    Y = edge_flow(chain, np.array([[0, 1]]))
    assert Y.values[0] == pytest.approx(math.log(0.925 / 0.075))
    assert Y.values[0] == pytest.approx(2.512, abs=1e-3)
    assert Y.value(1, 0) == -Y.values[0]


def test_empty_edge_set():
    chain = MarkovChain(("a", "b"), np.full((2, 2), 0.5), 0.85)
    Y = edge_flow(chain, np.zeros((0, 2)))
    assert len(Y.values) == 0
    with pytest.raises(DegenerateRoundError):
        hodge_decompose(Y)


def test_support_edges_are_sorted_pairs():
    ledger = make_round([(1, "c", "a", "1"), (1, "b", "c", "1"), (1, "a", "b", "1"), (1, "b", "a", "1")])
    edges = support_edges(build_transfer_graph(ledger, NO_SHRINK))
    np.testing.assert_array_equal(edges, [[0, 1], [0, 2], [1, 2]])


def test_triangles_and_curl_operator():
    edges = np.array([[0, 1], [0, 2], [1, 2], [2, 3]])
    triangles = enumerate_triangles(edges, 4)
    np.testing.assert_array_equal(triangles, [[0, 1, 2]])
    C = curl_matrix(edges, triangles).toarray()
    np.testing.assert_array_equal(C, [[1, -1, 1, 0]])
    B = incidence_matrix(edges, 4)
    # curl of a gradient vanishes
    assert np.abs(C @ (B @ np.arange(4.0))).max() == 0


def test_gradient_flow_is_fully_consistent():
    result = hodge_decompose(flow("uvt", [(0, 1), (0, 2), (1, 2)], [1.0, 2.0, 1.0]))
    np.testing.assert_allclose(result.scores, [-1.0, 0.0, 1.0], atol=1e-12)
    assert np.abs(result.residual).max() < 1e-12
    assert result.consistency_ratio == pytest.approx(1.0)


def test_pure_cycle_is_all_curl():
    # Y01 = Y12 = Y20 = 1
    result = hodge_decompose(flow("abc", [(0, 1), (0, 2), (1, 2)], [1.0, -1.0, 1.0]))
    np.testing.assert_allclose(result.scores, 0.0, atol=1e-12)
    np.testing.assert_allclose(result.curl_fit, result.flow, atol=1e-12)
    np.testing.assert_allclose(result.harmonic, 0.0, atol=1e-12)
    assert result.consistency_ratio == pytest.approx(0.0, abs=1e-12)
    assert abs(result.triangle_curl[0]) == pytest.approx(3.0)


def test_square_cycle_is_harmonic():
    result = hodge_decompose(flow("abcd", [(0, 1), (1, 2), (2, 3), (0, 3)], [1.0, 1.0, 1.0, -1.0]))
    assert len(result.triangles) == 0
    np.testing.assert_allclose(result.harmonic, result.flow, atol=1e-12)
    assert result.harmonic_energy == pytest.approx(4.0)


def test_random_graphs_match_dense_oracle(rng):
    for _ in range(100):
        m = int(rng.integers(3, 31))
        Y = random_flow(rng, m)
        result = hodge_decompose(Y)

        B = incidence_matrix(Y.edges, m).toarray()
        oracle, *_ = np.linalg.lstsq(B, Y.values, rcond=None)
        assert np.abs(result.scores - oracle).max() < 1e-8

        assert abs(np.dot(result.gradient, result.residual)) < 1e-8
        assert abs(np.dot(result.curl_fit, result.harmonic)) < 1e-8
        parts = result.gradient_energy + result.curl_energy + result.harmonic_energy
        assert abs(result.total_energy - parts) < 1e-8

        # the harmonic part is divergence free and curl free
        assert np.abs(B.T @ result.harmonic).max() < 1e-8
        if len(result.triangles):
            C = curl_matrix(Y.edges, result.triangles).toarray()
            assert np.abs(C @ result.harmonic).max() < 1e-8


def test_cg_matches_direct_solve(rng):
    for _ in range(10):
        Y = random_flow(rng, 25, density=0.4)
        direct = hodge_decompose(Y)
        iterative = hodge_decompose(Y, SolveParams(method="cg", tol=1e-12))
        assert np.abs(direct.scores - iterative.scores).max() < 1e-8


def test_scores_are_mean_zero_per_component():
    result = hodge_decompose(flow("abcde", [(0, 1), (2, 3), (3, 4)], [2.0, 1.0, 1.0]))
    assert result.components == 2
    assert result.scores[:2].sum() == pytest.approx(0.0, abs=1e-12)
    assert result.scores[2:].sum() == pytest.approx(0.0, abs=1e-12)


def test_constant_shift_of_scores_changes_nothing(rng):
    for _ in range(20):
        m = int(rng.integers(3, 20))
        # a path through every account keeps the scores distinct
        path = {(i, i + 1) for i in range(m - 1)}
        extra = {(i, j) for i in range(m) for j in range(i + 2, m) if rng.random() < 0.3}
        pairs = sorted(path | extra)
        result = hodge_decompose(flow([f"n{i:02d}" for i in range(m)], pairs, rng.normal(size=len(pairs))))
        B = incidence_matrix(result.edges, m)
        for c in (-7.0, 2.5, 1000.0):
            shifted_scores = result.scores + c
            gradient = B @ shifted_scores
            np.testing.assert_allclose(gradient, result.gradient, atol=1e-9)
            shifted = replace(result, scores=shifted_scores, gradient=gradient, residual=result.flow - gradient)
            assert global_ranking(shifted).order == global_ranking(result).order
            assert shifted.gradient_energy == pytest.approx(result.gradient_energy, rel=1e-9, abs=1e-12)
            assert shifted.consistency_ratio == pytest.approx(result.consistency_ratio, rel=1e-9, abs=1e-12)
            assert shifted.curl_energy == result.curl_energy
            assert shifted.harmonic_energy == result.harmonic_energy


def test_reversible_chains_recover_log_stationary(rng):
    for _ in range(50):
        m = int(rng.integers(3, 21))
        pi = rng.uniform(0.5, 2.0, size=m)
        pi /= pi.sum()
        S = rng.uniform(0.1, 1.0, size=(m, m))
        S = (S + S.T) / 2
        np.fill_diagonal(S, 0.0)
        S *= pi.min() / (2 * S.sum(axis=1).max())
        M = S / pi[:, None]
        np.fill_diagonal(M, 1.0 - M.sum(axis=1))
        # detailed balance: pi_i M_ij = pi_j M_ji
        edges = np.array([(i, j) for i in range(m) for j in range(i + 1, m)])
        accounts = tuple(f"n{i:02d}" for i in range(m))
        result = hodge_decompose(edge_flow(MarkovChain(accounts, M, 0.85), edges))
        target = np.log(pi) - np.log(pi).mean()
        assert np.abs(result.scores - target).max() < 1e-6


def test_global_ranking_order():
    result = hodge_decompose(flow("uvt", [(0, 1), (1, 2)], [1.0, 1.0]))
    assert global_ranking(result).order == ["t", "v", "u"]


def test_global_ranking_ties_are_lexicographic():
    result = hodge_decompose(flow("cab", [(0, 1), (1, 2)], [0.0, 0.0]))
    ranking = global_ranking(result)
    assert ranking.order == ["a", "b", "c"]
    assert set(ranking.scores.values()) == {0.0}


def test_pure_gradient_has_nothing_to_flag():
    report = detect_loops(hodge_decompose(flow("uvt", [(0, 1), (0, 2), (1, 2)], [1.0, 2.0, 1.0])), 0.2)
    assert report.inconsistent_energy == 0.0
    assert report.flagged == []
    assert set(report.shares.values()) == {0.0}


def ring_on_chain():
    transfers = []
    honest = ["a", "b", "c", "d", "e"]
    for h in range(1, 4):
        for x, y in zip(honest, honest[1:]):
            transfers += [(h, x, y, "100"), (h, y, x, "80")]
        transfers += [(h, "r0", "r1", "600"), (h, "r1", "r2", "600"), (h, "r2", "r0", "600")]
    transfers.append((1, "a", "r0", "1"))
    return make_round(transfers, round_days=3, block_count=3)


def test_ring_accounts_carry_the_loop_energy():
    result = rank_transfer_graph(build_transfer_graph(ring_on_chain(), ShrinkParams()), 0.85)
    report = detect_loops(result, 0.2)
    top = sorted(report.shares, key=lambda a: -report.shares[a])[:3]
    assert set(top) == {"r0", "r1", "r2"}
    assert sum(report.shares[a] for a in ("r0", "r1", "r2")) == pytest.approx(1.0)
    assert set(report.flagged) == {"r0", "r1", "r2"}
    assert report.triangles == [("r0", "r1", "r2")]


def test_tau_one_never_flags():
    result = rank_transfer_graph(build_transfer_graph(ring_on_chain(), ShrinkParams()), 0.85)
    assert detect_loops(result, 1.0).flagged == []
