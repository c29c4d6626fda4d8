"""Retrieval quality metrics over ranked results and a taxonomy.

Two families are computed: classic mean average precision with binary
same-class relevance, and hierarchical precision, where each retrieved item
earns graded relevance ``1 - semantic_distance(query label, item label)``.
HP@k is the ratio of the relevance gathered in the top k to the best sum any
k database items could achieve; AHP@k averages HP over cutoffs 1..k.  Means
across queries use exact (compensated) summation so aggregation order cannot
change results.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import KTooLarge, LengthMismatch, NoRelevantItems, ShapeMismatch
from .hashing import HashCode, HashIndex, hamming_to_all
from .hierarchy import Taxonomy, distance_matrix, semantic_distance


@dataclass
class MetricsReport:
    map: float
    mahp_at_k: dict[int, float]
    hp_curve: list[tuple[int, float]]
    per_query: Optional[list[tuple[int, float, float]]] = None
    map_skipped_queries: int = 0
    n_queries: int = 0
    ranking: str = "hamming"

    def __post_init__(self) -> None:
        ks = [k for k, _ in self.hp_curve]
        if any(b <= a for a, b in zip(ks, ks[1:])):
            raise ShapeMismatch("hp_curve cutoffs must be strictly increasing")

    def to_json_dict(self) -> dict:
        per_query = None
        if self.per_query is not None:
            per_query = [
                {
                    "query_id": qid,
                    "ap": None if math.isnan(ap) else ap,
                    "ahp": ahp,
                }
                for qid, ap, ahp in self.per_query
            ]
        return {
            "map": self.map,
            "mahp_at_k": {str(k): v for k, v in sorted(self.mahp_at_k.items())},
            "map_skipped_queries": self.map_skipped_queries,
            "n_queries": self.n_queries,
            "ranking": self.ranking,
            "per_query": per_query,
        }

    def hp_curve_csv(self) -> str:
        lines = ["k,mean_hp"]
        lines.extend(f"{k},{v!r}" for k, v in self.hp_curve)
        return "\n".join(lines) + "\n"


def relevance(t: Taxonomy, query_label: int, item_label: int) -> float:
    """Graded relevance in [0, 1]: 1 for the same class, 0 at maximal distance."""
    return 1.0 - semantic_distance(t, query_label, item_label)


def hp_at_k(
    ranked_labels: Sequence[int], query_label: int, k: int, t: Taxonomy
) -> float:
    """Relevance captured in the top k over the best any k items could give.

    The candidate list must be the complete ranked database (query already
    excluded).  When even the ideal top k has zero relevance the ratio is
    defined as 1.0.
    """
    n = len(ranked_labels)
    if k < 1 or k > n:
        raise KTooLarge(f"k={k} outside [1, {n}]")
    rel = np.array([relevance(t, query_label, lab) for lab in ranked_labels])
    got = float(rel[:k].sum())
    ideal = float(np.sort(rel)[::-1][:k].sum())
    if ideal == 0.0:
        return 1.0
    return got / ideal


def ahp_at_k(
    ranked_labels: Sequence[int], query_label: int, k_max: int, t: Taxonomy
) -> float:
    """Mean of hp_at_k over cutoffs 1..k_max."""
    n = len(ranked_labels)
    if k_max < 1 or k_max > n:
        raise KTooLarge(f"k_max={k_max} outside [1, {n}]")
    return math.fsum(hp_at_k(ranked_labels, query_label, k, t) for k in range(1, k_max + 1)) / k_max


def average_precision(ranked_labels: Sequence[int], query_label: int) -> float:
    """AP with binary same-class relevance over a complete ranking."""
    rel = np.asarray([lab == query_label for lab in ranked_labels], dtype=np.float64)
    total = rel.sum()
    if total == 0:
        raise NoRelevantItems(f"no item shares label {query_label}")
    hits = np.flatnonzero(rel)
    precisions = (np.arange(len(hits)) + 1.0) / (hits + 1.0)
    return math.fsum(precisions) / total


def hamming_ranking(
    index: HashIndex, code: HashCode, exclude_id: Optional[int] = None
) -> np.ndarray:
    """Positions of index entries ranked by (Hamming distance, sample id)."""
    dists = hamming_to_all(index, code)
    order = np.lexsort((index.ids, dists))
    if exclude_id is not None:
        order = order[index.ids[order] != exclude_id]
    return order


def manhattan_ranking(
    values: np.ndarray, ids: np.ndarray, query_vec: np.ndarray, exclude_id: Optional[int] = None
) -> np.ndarray:
    """Positions ranked by (Manhattan distance, sample id) over raw embeddings."""
    values = np.asarray(values, dtype=np.float64)
    dists = np.abs(values - np.asarray(query_vec, dtype=np.float64)[None, :]).sum(axis=1)
    order = np.lexsort((ids, dists))
    if exclude_id is not None:
        order = order[np.asarray(ids)[order] != exclude_id]
    return order


def mean_ap(
    index: HashIndex,
    queries: HashIndex,
    rank_fn: Optional[Callable[[HashIndex, HashCode, Optional[int]], np.ndarray]] = None,
) -> tuple[float, int]:
    """Mean AP over queries; queries without a same-class item are skipped.

    Returns (map, skipped count).  Each query's own id is excluded from its
    candidates.
    """
    rank_fn = rank_fn or hamming_ranking
    q_codes = queries.codes()
    values, skipped = [], 0
    for qi in range(len(queries)):
        order = rank_fn(index, q_codes[qi], int(queries.ids[qi]))
        labels = index.labels[order]
        try:
            values.append(average_precision(labels.tolist(), int(queries.labels[qi])))
        except NoRelevantItems:
            skipped += 1
    if not values:
        raise NoRelevantItems("every query was skipped")
    return math.fsum(values) / len(values), skipped


def _evaluate_rankings(
    ranked_label_lists: list[np.ndarray],
    query_ids: Sequence[int],
    query_labels: Sequence[int],
    t: Taxonomy,
    k_max: int,
    per_query: bool,
    ranking: str,
) -> MetricsReport:
    n_queries = len(ranked_label_lists)
    if n_queries == 0:
        raise ShapeMismatch("no queries to evaluate")
    min_candidates = min(len(r) for r in ranked_label_lists)
    if k_max < 1 or k_max > min_candidates:
        raise KTooLarge(f"k_max={k_max} outside [1, {min_candidates}]")

    # one relevance lookup per (query label, item label) pair
    label_ids = sorted({int(l) for r in ranked_label_lists for l in r} | {int(l) for l in query_labels})
    pos = {lab: i for i, lab in enumerate(label_ids)}
    rel_table = 1.0 - distance_matrix(t, label_ids).values

    hp_rows = np.empty((n_queries, k_max))
    ap_values: list[float] = []
    per_query_rows: list[tuple[int, float, float]] = []
    skipped = 0
    for qi, ranked in enumerate(ranked_label_lists):
        q_label = int(query_labels[qi])
        item_idx = np.array([pos[int(l)] for l in ranked], dtype=np.int64)
        rel = rel_table[pos[q_label]][item_idx]
        got = np.cumsum(rel)[:k_max]
        ideal = np.cumsum(np.sort(rel)[::-1])[:k_max]
        hp = np.where(ideal > 0, got / np.maximum(ideal, 1e-300), 1.0)
        hp_rows[qi] = hp

        binary = rel == 1.0
        total = int(binary.sum())
        if total == 0:
            ap = math.nan
            skipped += 1
        else:
            hits = np.flatnonzero(binary)
            ap = math.fsum((np.arange(total) + 1.0) / (hits + 1.0)) / total
            ap_values.append(ap)
        if per_query:
            ahp = math.fsum(hp) / k_max
            per_query_rows.append((int(query_ids[qi]), ap, ahp))

    hp_curve = [
        (k + 1, math.fsum(hp_rows[:, k]) / n_queries) for k in range(k_max)
    ]
    ahp_per_query = [math.fsum(row) / k_max for row in hp_rows]
    mahp = math.fsum(ahp_per_query) / n_queries
    map_value = math.fsum(ap_values) / len(ap_values) if ap_values else math.nan
    return MetricsReport(
        map=map_value,
        mahp_at_k={k_max: mahp},
        hp_curve=hp_curve,
        per_query=per_query_rows if per_query else None,
        map_skipped_queries=skipped,
        n_queries=n_queries,
        ranking=ranking,
    )


def evaluate(
    index: HashIndex,
    queries: Optional[HashIndex],
    t: Taxonomy,
    k_max: int,
    per_query: bool = False,
) -> MetricsReport:
    """Score Hamming-ranked retrieval; queries default to the index itself.

    Each query's own id is excluded from its candidate set, so with
    ``queries=None`` this is a leave-one-out evaluation of the index.
    """
    queries = queries if queries is not None else index
    if queries.code_length != index.code_length:
        raise LengthMismatch("query and index code lengths differ")
    q_codes = queries.codes()
    rankings = [
        index.labels[hamming_ranking(index, q_codes[qi], int(queries.ids[qi]))]
        for qi in range(len(queries))
    ]
    return _evaluate_rankings(
        rankings, queries.ids.tolist(), queries.labels.tolist(), t, k_max, per_query, "hamming"
    )


def evaluate_embeddings(
    values: np.ndarray,
    ids: Sequence[int],
    labels: Sequence[int],
    t: Taxonomy,
    k_max: int,
    per_query: bool = False,
) -> MetricsReport:
    """Leave-one-out evaluation of continuous embeddings under Manhattan ranking."""
    values = np.asarray(values, dtype=np.float64)
    ids = np.asarray(ids, dtype=np.int64)
    labels_arr = np.asarray(labels, dtype=np.int64)
    if values.ndim != 2 or values.shape[0] != ids.shape[0] or ids.shape != labels_arr.shape:
        raise ShapeMismatch("values, ids and labels must be parallel")
    rankings = [
        labels_arr[manhattan_ranking(values, ids, values[qi], int(ids[qi]))]
        for qi in range(values.shape[0])
    ]
    return _evaluate_rankings(
        rankings, ids.tolist(), labels_arr.tolist(), t, k_max, per_query, "manhattan"
    )
