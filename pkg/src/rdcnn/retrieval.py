"""Exact k-nearest-neighbor retrieval and precision metrics against ranked ground truth."""

import csv
import dataclasses
from collections import OrderedDict

import numpy as np

from .errors import ConfigError, FormatError, ShapeError


@dataclasses.dataclass
class GroundTruthRanking:
    """Human-ranked items for one query, best first."""

    query_id: str
    entries: list  # [(item_id, score)], descending score

    def __post_init__(self):
        ids = [item for item, _ in self.entries]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"duplicate item ids in ground truth for query {self.query_id!r}")
        scores = [s for _, s in self.entries]
        if any(s < 0 for s in scores):
            raise ConfigError(f"negative score in ground truth for query {self.query_id!r}")
        if any(a < b for a, b in zip(scores, scores[1:])):
            raise ConfigError(f"ground truth for query {self.query_id!r} is not sorted by score")

    def top(self, k):
        return self.entries[:k]


@dataclasses.dataclass
class RetrievalResult:
    query_id: str
    neighbors: list  # [(item_id, similarity)], best first

    def top(self, k):
        return self.neighbors[:k]


def cosine_similarity(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeError(f"vectors must be 1-D and equal length, got {a.shape} and {b.shape}",
                         dimension="length")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ConfigError("cosine similarity is undefined for a zero vector")
    return float(np.clip((a @ b) / (na * nb), -1.0, 1.0))


def similarities(gallery, query, metric="cosine"):
    """Score of every gallery row against ``query``; larger is closer.

    ``euclidean`` scores are negated distances so the ordering rule is shared.
    """
    g = np.asarray(getattr(gallery, "values", gallery), dtype=np.float64)
    q = np.asarray(query, dtype=np.float64)
    if q.shape != (g.shape[1],):
        raise ShapeError(f"query width {q.shape} does not match gallery width {g.shape[1]}",
                         dimension="n_features")
    if metric == "cosine":
        qn = np.linalg.norm(q)
        gn = np.linalg.norm(g, axis=1)
        if qn == 0 or (gn == 0).any():
            raise ConfigError("cosine similarity is undefined for a zero vector")
        return np.clip((g @ q) / (gn * qn), -1.0, 1.0)
    if metric == "euclidean":
        return -np.linalg.norm(g - q, axis=1)
    raise ConfigError(f"unknown metric {metric!r}")


def knn_query(gallery, query, k, *, item_ids=None, query_id="query", metric="cosine"):
    """Top ``k`` gallery rows by similarity; equal scores ordered by ascending item id."""
    g = np.asarray(getattr(gallery, "values", gallery))
    n = g.shape[0]
    if not 1 <= k <= n:
        raise ConfigError(f"k must be in [1, {n}], got {k}")
    if item_ids is None:
        item_ids = [str(i) for i in range(n)]
    elif len(item_ids) != n:
        raise ShapeError(f"{len(item_ids)} item ids for {n} gallery rows", dimension="n_samples")
    sims = similarities(g, query, metric)
    # lexsort: last key is primary
    rank_of_id = np.argsort(np.argsort(np.asarray(item_ids, dtype=object), kind="stable"), kind="stable")
    order = np.lexsort((rank_of_id, -sims))[:k]
    return RetrievalResult(query_id, [(item_ids[i], float(sims[i])) for i in order])


def _topk_sets(result, truth, k):
    if k < 1 or k > len(result.neighbors) or k > len(truth.entries):
        raise ConfigError(
            f"k={k} exceeds result ({len(result.neighbors)}) or ground truth ({len(truth.entries)}) length"
        )
    return {i for i, _ in result.top(k)}, {i for i, _ in truth.top(k)}


def precision_at_k(result, truth, k):
    got, want = _topk_sets(result, truth, k)
    return len(got & want) / k


def intersection_score_sum(result, truth, k):
    got, want = _topk_sets(result, truth, k)
    shared = got & want
    return float(sum(score for item, score in truth.top(k) if item in shared))


def as_ground_truth(result):
    """Treat a retrieval result as ground truth, scoring by similarity (shifted to be >= 0)."""
    return GroundTruthRanking(result.query_id, [(i, s + 1.0) for i, s in result.neighbors])


def read_ground_truth(path):
    """Parse ``query_id,item_id,score`` CSV into ``{query_id: GroundTruthRanking}``."""
    grouped = OrderedDict()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["query_id", "item_id", "score"]:
            raise FormatError("ground truth header must be query_id,item_id,score", path=path)
        for line, row in enumerate(reader, start=2):
            try:
                score = float(row["score"])
            except (TypeError, ValueError):
                raise FormatError(f"bad score on line {line}: {row['score']!r}", path=path) from None
            if score < 0 or not np.isfinite(score):
                raise FormatError(f"score must be a nonnegative number (line {line})", path=path)
            grouped.setdefault(row["query_id"], []).append((row["item_id"], score))
    out = {}
    for qid, entries in grouped.items():
        # stable sort keeps file order among equal scores
        entries.sort(key=lambda e: -e[1])
        out[qid] = GroundTruthRanking(qid, entries)
    return out


def write_results(results, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["query_id", "rank", "item_id", "similarity"])
        for res in results:
            for rank, (item, sim) in enumerate(res.neighbors, start=1):
                w.writerow([res.query_id, rank, item, repr(float(sim))])
