import math
from functools import lru_cache

import numpy as np
import pytest

from rad.errors import DimensionMismatch, MalformedRanking
from rad.mcdm import (
    SAATY_VALUES,
    ConsistencyReport,
    LevelPartition,
    PairwiseMatrix,
    ReachabilityMatrix,
    WeightVector,
    aggregate_rankings,
    ahp_weights,
    consistency,
    consistent_matrix,
    estimate_random_index,
    ism_partition,
    rank_gap_intensity,
    random_index,
    ranks_to_comparison_matrix,
    snap_to_saaty,
    transitive_closure,
)


def _relations(k, edges):
    cells = np.zeros((k, k), dtype=np.int8)
    for a, b in edges:
        cells[a, b] = 1
    return cells


def _random_saaty_matrix(rng, m):
    cells = np.ones((m, m))
    for a in range(m):
        for b in range(a + 1, m):
            value = float(rng.choice(SAATY_VALUES))
            cells[a, b] = value
            cells[b, a] = 1.0 / value
    return cells


def _eig_lambda(cells):
    return float(np.max(np.linalg.eigvals(cells).real))


# ---- ISM ------------------------------------------------------------------------
def test_closure_of_chain_adds_indirect_reach():
    reach = transitive_closure(_relations(3, [(0, 1), (1, 2)]))
    assert reach.cells.tolist() == [[1, 1, 1], [0, 1, 1], [0, 0, 1]]


def test_chain_partitions_into_three_levels():
    reach = transitive_closure(_relations(3, [(0, 1), (1, 2)]))
    partition = ism_partition(reach)
    assert partition.levels == ((2,), (1,), (0,))
    assert partition.level_of(0) == 3
    assert partition.ids == [0, 1, 2]


def test_cycle_members_share_a_level():
    reach = transitive_closure(_relations(3, [(0, 1), (1, 0), (2, 0)]))
    assert ism_partition(reach).levels == ((0, 1), (2,))


def test_no_relations_gives_single_level():
    reach = transitive_closure(np.zeros((4, 4), dtype=np.int8))
    assert ism_partition(reach).to_list() == [[0, 1, 2, 3]]


def test_closure_rejects_bad_relations():
    with pytest.raises(ValueError):
        transitive_closure(np.eye(2, dtype=np.int8))
    with pytest.raises(ValueError):
        transitive_closure(np.array([[0, 2], [0, 0]]))
    with pytest.raises(DimensionMismatch):
        transitive_closure(np.zeros((2, 3)))


def test_reachability_matrix_must_be_closed_and_reflexive():
    with pytest.raises(ValueError):
        ReachabilityMatrix(np.array([[1, 1, 0], [0, 1, 1], [0, 0, 1]]))
    with pytest.raises(ValueError):
        ReachabilityMatrix(np.zeros((2, 2)))


def test_level_partition_rejects_overlap():
    with pytest.raises(ValueError):
        LevelPartition(((0, 1), (1,)))


def _oracle_levels(relations):
    k = relations.shape[0]
    reach = [[False] * k for _ in range(k)]
    for start in range(k):
        frontier = [start]
        reach[start][start] = True
        while frontier:
            node = frontier.pop()
            for nxt in range(k):
                if relations[node, nxt] and not reach[start][nxt]:
                    reach[start][nxt] = True
                    frontier.append(nxt)

    @lru_cache(maxsize=None)
    def level(a):
        below = [level(b) for b in range(k) if reach[a][b] and not reach[b][a]]
        return 1 + max(below, default=0)

    depth = max(level(a) for a in range(k))
    grouped = tuple(tuple(a for a in range(k) if level(a) == n) for n in range(1, depth + 1))
    return reach, grouped


def test_ism_matches_brute_force_on_random_graphs():
    rng = np.random.default_rng(20240611)
    for _ in range(1000):
        k = int(rng.integers(1, 9))
        density = float(rng.uniform(0.0, 0.6))
        relations = (rng.random((k, k)) < density).astype(np.int8)
        np.fill_diagonal(relations, 0)
        reach, expected = _oracle_levels(relations)
        closure = transitive_closure(relations)
        assert closure.cells.astype(bool).tolist() == reach
        assert ism_partition(closure).levels == expected


def test_closure_is_idempotent():
    rng = np.random.default_rng(7)
    for _ in range(200):
        k = int(rng.integers(1, 9))
        relations = (rng.random((k, k)) < 0.3).astype(np.int8)
        np.fill_diagonal(relations, 0)
        once = transitive_closure(relations)
        hollow = once.cells.copy()
        np.fill_diagonal(hollow, 0)
        assert transitive_closure(hollow).cells.tolist() == once.cells.tolist()


def test_each_level_reaches_only_itself_and_levels_below():
    rng = np.random.default_rng(11)
    for _ in range(200):
        k = int(rng.integers(1, 9))
        relations = (rng.random((k, k)) < 0.35).astype(np.int8)
        np.fill_diagonal(relations, 0)
        reach = transitive_closure(relations)
        partition = ism_partition(reach)
        assert sorted(partition.ids) == list(range(k))
        allowed = set()
        for level in partition.levels:
            allowed |= set(level)
            for a in level:
                assert set(np.flatnonzero(reach.cells[a]).tolist()) <= allowed


# ---- Rank aggregation -----------------------------------------------------------------
def test_aggregate_rankings_mean_positions():
    assert aggregate_rankings([[0, 1, 2], [1, 0, 2]]) == [1.5, 1.5, 3.0]
    assert aggregate_rankings([[5, 3]], ids=[3, 5]) == [2.0, 1.0]


def test_aggregate_rankings_rejects_non_permutations():
    with pytest.raises(MalformedRanking):
        aggregate_rankings([[0, 1], [0, 0]])
    with pytest.raises(MalformedRanking):
        aggregate_rankings([[0, 1], [0, 1, 2]])
    with pytest.raises(MalformedRanking):
        aggregate_rankings([])


def test_rank_gaps_map_to_saaty_intensities():
    assert ranks_to_comparison_matrix([1, 2]).cells[0, 1] == 2.0
    assert ranks_to_comparison_matrix([1, 1.5]).cells[0, 1] == 2.0
    assert ranks_to_comparison_matrix([1, 1.4]).cells[0, 1] == 1.0
    assert ranks_to_comparison_matrix([1, 20]).cells[0, 1] == 9.0
    matrix = ranks_to_comparison_matrix([3, 1])
    assert matrix.cells[1, 0] == 3.0
    assert matrix.cells[0, 1] == pytest.approx(1 / 3)
    assert rank_gap_intensity(0.0) == 1.0


def test_pairwise_matrix_validation():
    with pytest.raises(ValueError):
        PairwiseMatrix(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(ValueError):
        PairwiseMatrix(np.array([[1.0, 12.0], [1 / 12, 1.0]]))


# ---- AHP ---------------------------------------------------------------------------
def test_single_criterion_weight_is_one():
    weights, lam = ahp_weights(np.ones((1, 1)))
    assert weights.weights == (1.0,)
    assert lam == 1.0


def test_ahp_recovers_weights_from_consistent_matrices():
    rng = np.random.default_rng(11)
    for _ in range(100):
        m = int(rng.integers(2, 9))
        raw = rng.uniform(0.05, 1.0, size=m)
        w = raw / raw.sum()
        weights, lam = ahp_weights(consistent_matrix(w))
        assert np.allclose(weights.as_array(), w, atol=1e-9, rtol=0)
        assert lam == pytest.approx(m, abs=1e-9)
        assert math.fsum(weights.weights) == pytest.approx(1.0, abs=1e-12)


def test_consistency_ratio_matches_eigen_solver():
    rng = np.random.default_rng(5)
    for m in range(3, 8):
        for _ in range(10):
            cells = _random_saaty_matrix(rng, m)
            _, lam = ahp_weights(cells)
            report = consistency(cells, lam)
            expected_ci = (_eig_lambda(cells) - m) / (m - 1)
            assert report.cr == pytest.approx(expected_ci / random_index(m), abs=1e-6)
            assert report.consistent == (report.cr <= 0.1)


def test_two_by_two_is_always_consistent():
    cells = np.array([[1.0, 9.0], [1 / 9, 1.0]])
    weights, lam = ahp_weights(cells)
    report = consistency(cells, lam)
    assert report.cr == 0.0
    assert report.consistent
    assert weights.weights == pytest.approx((0.9, 0.1), abs=1e-12)


def test_consistency_report_round_trip():
    report = ConsistencyReport(3, 3.05, 0.025, 0.58, 0.025 / 0.58, True)
    assert ConsistencyReport.from_dict(report.to_dict()) == report
    assert set(report.to_dict()) == {"size", "lambda_max", "CI", "RI", "CR", "consistent"}


def test_weights_are_monotone_in_average_rank():
    rng = np.random.default_rng(3)
    for _ in range(200):
        m = int(rng.integers(2, 8))
        ranks = rng.uniform(1, m, size=m)
        weights, _ = ahp_weights(ranks_to_comparison_matrix(ranks))
        w = weights.as_array()
        for a in range(m):
            for b in range(m):
                if ranks[a] <= ranks[b]:
                    assert w[a] >= w[b] - 1e-12


def test_weight_vector_must_sum_to_one():
    with pytest.raises(ValueError):
        WeightVector((0.5, 0.4))
    with pytest.raises(ValueError):
        WeightVector(())


def test_random_index_falls_back_to_largest_entry():
    assert random_index(3) == 0.58
    assert random_index(12) == 1.49
    assert random_index(4, {3: 0.5, 4: 0.8}) == 0.8


def test_snap_to_saaty_uses_log_distance():
    assert snap_to_saaty(4.5) == 5.0
    assert snap_to_saaty(1 / 4.5) == pytest.approx(1 / 5)
    assert snap_to_saaty(0.9) == 1.0
    assert snap_to_saaty(100.0) == 9.0
    with pytest.raises(ValueError):
        snap_to_saaty(0.0)


def test_estimated_random_index_grows_with_size():
    assert estimate_random_index(2) == 0.0
    ri3 = estimate_random_index(3, samples=200, seed=1)
    ri5 = estimate_random_index(5, samples=200, seed=1)
    assert 0.0 < ri3 < ri5
