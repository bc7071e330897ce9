import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rdcnn import retrieval
from rdcnn.errors import ConfigError, FormatError, ShapeError
from rdcnn.retrieval import GroundTruthRanking, RetrievalResult


def test_cosine_values():
    v = np.array([0.3, -1.2, 2.0])
    assert retrieval.cosine_similarity(v, v) == pytest.approx(1.0, abs=1e-15)
    assert retrieval.cosine_similarity([1, 0], [0, 1]) == 0.0
    assert retrieval.cosine_similarity([1, 0], [1, 1]) == pytest.approx(1 / math.sqrt(2), abs=1e-12)
    with pytest.raises(ConfigError):
        retrieval.cosine_similarity([0, 0], [1, 1])
    with pytest.raises(ShapeError):
        retrieval.cosine_similarity([1, 0], [1, 1, 1])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100), st.floats(0.01, 100))
def test_cosine_symmetric_scale_invariant(seed, alpha, beta):
    rs = np.random.default_rng(seed)
    a, b = rs.normal(size=8), rs.normal(size=8)
    base = retrieval.cosine_similarity(a, b)
    assert abs(retrieval.cosine_similarity(b, a) - base) <= 1e-12
    assert abs(retrieval.cosine_similarity(alpha * a, beta * b) - base) <= 1e-12


def exhaustive(gallery, query, ids):
    """Score each row separately, then sort by (-similarity, id)."""
    scored = [(-retrieval.cosine_similarity(row, query), ids[i]) for i, row in enumerate(gallery)]
    return [item for _, item in sorted(scored)]


def test_self_query_rank_one():
    rs = np.random.default_rng(0)
    g = rs.normal(size=(20, 6))
    res = retrieval.knn_query(g, g[7], 3)
    assert res.neighbors[0][0] == "7"
    assert res.neighbors[0][1] == pytest.approx(1.0, abs=1e-12)


def test_full_gallery_ordering_and_hand_built_case():
    g = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [-1.0, 0.0], [2.0, 0.1]])
    res = retrieval.knn_query(g, np.array([1.0, 0.0]), 5)
    assert [i for i, _ in res.neighbors] == exhaustive(g, np.array([1.0, 0.0]), [str(i) for i in range(5)])
    assert [i for i, _ in res.neighbors] == ["0", "4", "2", "1", "3"]


def test_ties_broken_by_item_id():
    g = np.array([[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]])
    res = retrieval.knn_query(g, np.array([1.0, 0.0]), 3, item_ids=["c", "a", "b"])
    assert [i for i, _ in res.neighbors] == ["a", "b", "c"]


def test_k_bounds():
    with pytest.raises(ConfigError):
        retrieval.knn_query(np.ones((3, 2)), np.ones(2), 4)


def test_euclidean_metric_orders_by_distance():
    g = np.array([[0.0, 0.0], [5.0, 5.0], [1.0, 1.0]])
    res = retrieval.knn_query(g, np.array([0.9, 0.9]), 3, metric="euclidean")
    assert [i for i, _ in res.neighbors] == ["2", "0", "1"]


def test_matches_exhaustive_oracle_on_1000_rows():
    rs = np.random.default_rng(4)
    g = rs.normal(size=(1000, 16))
    ids = [f"item{i:04d}" for i in range(1000)]
    for q in range(5):
        query = rs.normal(size=16)
        res = retrieval.knn_query(g, query, 1000, item_ids=ids)
        assert [i for i, _ in res.neighbors] == exhaustive(g, query, ids)


def test_prefix_consistency():
    rs = np.random.default_rng(5)
    g = rs.normal(size=(50, 4))
    q = rs.normal(size=4)
    for k in range(1, 49):
        assert retrieval.knn_query(g, q, k).neighbors == retrieval.knn_query(g, q, k + 1).neighbors[:k]


def truth(scores, ids=None):
    ids = ids or [f"t{i}" for i in range(len(scores))]
    return GroundTruthRanking("q", list(zip(ids, scores)))


def test_precision_values():
    t = truth([5, 4, 3, 2, 1])
    same = RetrievalResult("q", [(f"t{i}", 0.0) for i in range(5)])
    assert retrieval.precision_at_k(same, t, 5) == 1.0
    other = RetrievalResult("q", [(f"x{i}", 0.0) for i in range(5)])
    assert retrieval.precision_at_k(other, t, 5) == 0.0
    two = RetrievalResult("q", [("t0", 0), ("x1", 0), ("t3", 0), ("x2", 0), ("x3", 0)])
    assert retrieval.precision_at_k(two, t, 5) == pytest.approx(0.4)


def test_score_sum_values():
    t = truth([5, 4, 3, 2, 1])
    assert retrieval.intersection_score_sum(RetrievalResult("q", [("zz", 0)] * 5), t, 5) == 0.0
    same = RetrievalResult("q", [(f"t{i}", 0.0) for i in range(5)])
    assert retrieval.intersection_score_sum(same, t, 3) == 12.0
    ranks_1_3 = RetrievalResult("q", [("t0", 0), ("a", 0), ("t2", 0), ("b", 0), ("c", 0)])
    assert retrieval.intersection_score_sum(ranks_1_3, t, 5) == 8.0


def test_metric_k_bounds():
    t = truth([2, 1])
    with pytest.raises(ConfigError):
        retrieval.precision_at_k(RetrievalResult("q", [("t0", 1.0)] * 3), t, 3)


def test_self_precision_is_one():
    rs = np.random.default_rng(6)
    res = retrieval.knn_query(rs.normal(size=(30, 5)), rs.normal(size=5), 30)
    t = retrieval.as_ground_truth(res)
    for k in range(1, 31):
        assert retrieval.precision_at_k(res, t, k) == 1.0


def test_ground_truth_invariants():
    with pytest.raises(ConfigError):
        GroundTruthRanking("q", [("a", 1.0), ("a", 0.5)])
    with pytest.raises(ConfigError):
        GroundTruthRanking("q", [("a", 1.0), ("b", 2.0)])


def test_ground_truth_csv(tmp_path):
    p = tmp_path / "gt.csv"
    p.write_text("query_id,item_id,score\nq1,a,1.5\nq1,b,3\nq2,c,0\n", encoding="utf-8")
    gt = retrieval.read_ground_truth(p)
    assert gt["q1"].entries == [("b", 3.0), ("a", 1.5)]
    assert gt["q2"].entries == [("c", 0.0)]
    bad = tmp_path / "bad.csv"
    bad.write_text("query,item,score\n", encoding="utf-8")
    with pytest.raises(FormatError):
        retrieval.read_ground_truth(bad)
    neg = tmp_path / "neg.csv"
    neg.write_text("query_id,item_id,score\nq,a,-1\n", encoding="utf-8")
    with pytest.raises(FormatError):
        retrieval.read_ground_truth(neg)


def test_results_csv(tmp_path):
    p = tmp_path / "r.csv"
    retrieval.write_results([RetrievalResult("q", [("a", 1.0), ("b", 0.5)])], p)
    assert p.read_text().splitlines() == ["query_id,rank,item_id,similarity", "q,1,a,1.0", "q,2,b,0.5"]
