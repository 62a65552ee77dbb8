"""Ranking and classification metrics for scored reasoning chains.

Rankings are evaluated per question (NDCG, precision-at-1) and predictions
globally (AUC-ROC via the rank statistic, positive-class F1).  A consistency
report summarizes how much scores move between original and edited chains,
and ``upper_bound`` measures the best precision-at-1 any scorer could reach
on a candidate pool.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence, Union

from .dataio import AnnotatedChain
from .retrieval import ChainCandidate

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RankedExplanations:
    """Binary validity labels for one question's chains in rank order."""

    question_id: str
    labels: tuple[int, ...]
    chain_ids: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.labels:
            raise ValueError("empty ranking")
        if any(y not in (0, 1) for y in self.labels):
            raise ValueError("labels must be 0 or 1")
        object.__setattr__(self, "labels", tuple(int(y) for y in self.labels))
        if self.chain_ids and len(self.chain_ids) != len(self.labels):
            raise ValueError("chain_ids and labels differ in length")


Ranking = Union[RankedExplanations, Sequence[int]]


def _ranked_labels(ranked: Ranking) -> tuple[int, ...]:
    if isinstance(ranked, RankedExplanations):
        return ranked.labels
    labels = tuple(ranked)
    if not labels:
        raise ValueError("empty ranking")
    if any(y not in (0, 1) for y in labels):
        raise ValueError("labels must be 0 or 1")
    return tuple(int(y) for y in labels)


def ndcg(ranked: Ranking) -> float:
    """Normalized discounted cumulative gain of a binary ranking.

    Gain at position i (1-based) is ``y_i / log2(i + 1)``, normalized by the
    ideal ordering's gain.  A ranking with no valid chains scores 0.
    """
    labels = _ranked_labels(ranked)
    positives = sum(labels)
    if positives == 0:
        return 0.0
    dcg = sum(y / math.log2(i + 1) for i, y in enumerate(labels, start=1))
    ideal = sum(1.0 / math.log2(i + 1) for i in range(1, positives + 1))
    return dcg / ideal


def p_at_1(ranked: Ranking) -> float:
    """1.0 when the top-ranked chain is valid, else 0.0."""
    return float(_ranked_labels(ranked)[0])


def mean_ndcg(rankings: Iterable[Ranking]) -> float:
    values = [ndcg(r) for r in rankings]
    if not values:
        raise ValueError("empty ranking collection")
    return sum(values) / len(values)


def mean_p_at_1(rankings: Iterable[Ranking]) -> float:
    values = [p_at_1(r) for r in rankings]
    if not values:
        raise ValueError("empty ranking collection")
    return sum(values) / len(values)


def _validate_scored(scores: Sequence[float], labels: Sequence[int]) -> None:
    if len(scores) != len(labels):
        raise ValueError("scores and labels differ in length")
    if any(y not in (0, 1) for y in labels):
        raise ValueError("labels must be 0 or 1")


def auc_roc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Area under the ROC curve, valid chains as the positive class.

    Computed as the Mann-Whitney rank statistic: the probability that a
    random positive outscores a random negative, ties counted half.
    """
    _validate_scored(scores, labels)
    n = len(scores)
    n_pos = sum(1 for y in labels if y == 1)
    n_neg = n - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("undefined AUC: need at least one positive and one negative")

    order = sorted(range(n), key=lambda i: scores[i])
    ranks = [0.0] * n
    i = 0
    while i < n:
        j = i
        while j + 1 < n and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        average_rank = (i + j + 2) / 2.0  # 1-based ranks i+1 .. j+1
        for t in range(i, j + 1):
            ranks[order[t]] = average_rank
        i = j + 1

    positive_rank_sum = sum(r for r, y in zip(ranks, labels) if y == 1)
    return (positive_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def f1_positive(scores: Sequence[float], labels: Sequence[int], threshold: float) -> float:
    """F1 of the positive class with predictions ``score >= threshold``."""
    _validate_scored(scores, labels)
    tp = fp = fn = 0
    for score, label in zip(scores, labels):
        predicted = score >= threshold
        if predicted and label == 1:
            tp += 1
        elif predicted and label == 0:
            fp += 1
        elif not predicted and label == 1:
            fn += 1
    if tp == 0:
        if fp == 0 and fn == 0:
            log.warning(
                "F1 undefined: no positive predictions and no positive labels; reporting 0.0"
            )
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


def select_threshold(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Pick the score value that maximizes F1; ties go to the lowest threshold."""
    _validate_scored(scores, labels)
    if not scores:
        raise ValueError("empty score list")
    best_threshold = None
    best_f1 = -1.0
    for candidate in sorted(set(scores)):
        value = f1_positive(scores, labels, candidate)
        if value > best_f1:
            best_f1 = value
            best_threshold = candidate
    assert best_threshold is not None
    return best_threshold


_HISTOGRAM_EDGES = [round(0.1 * i, 1) for i in range(11)]


def _histogram_bin(delta: float) -> str:
    if delta == 0.0:
        return "0.0"
    for lo, hi in zip(_HISTOGRAM_EDGES, _HISTOGRAM_EDGES[1:]):
        if delta <= hi:
            return f"({lo}, {hi}]"
    return "> 1.0"


@dataclass(frozen=True)
class ConsistencyReport:
    """How scores moved between original and edited chains."""

    pairs: int
    fraction_zero_change: float
    mean_abs_change: float
    histogram: tuple[tuple[str, int], ...]


def consistency(
    original_scores: Mapping[str, float], edited_scores: Mapping[str, float]
) -> ConsistencyReport:
    """Compare scores of original/edited pairs matched by a shared id.

    Zero change means the two scores are exactly equal as emitted; no
    tolerance is applied.
    """
    missing = set(original_scores) ^ set(edited_scores)
    if missing:
        raise ValueError(f"unmatched pair ids: {sorted(missing)[:5]}")
    if not original_scores:
        raise ValueError("no pairs to compare")

    deltas = [
        abs(original_scores[key] - edited_scores[key]) for key in sorted(original_scores)
    ]
    bins = {"0.0": 0}
    for lo, hi in zip(_HISTOGRAM_EDGES, _HISTOGRAM_EDGES[1:]):
        bins[f"({lo}, {hi}]"] = 0
    bins["> 1.0"] = 0
    for delta in deltas:
        bins[_histogram_bin(delta)] += 1

    return ConsistencyReport(
        pairs=len(deltas),
        fraction_zero_change=sum(1 for d in deltas if d == 0.0) / len(deltas),
        mean_abs_change=sum(deltas) / len(deltas),
        histogram=tuple(bins.items()),
    )


def _group_by_question(chains: Iterable[AnnotatedChain]) -> dict[str, list[AnnotatedChain]]:
    groups: dict[str, list[AnnotatedChain]] = {}
    for chain in chains:
        groups.setdefault(chain.question_id, []).append(chain)
    return groups


def upper_bound(chains: Iterable[AnnotatedChain]) -> float:
    """Fraction of questions whose candidate pool contains a valid chain.

    No scorer's precision-at-1 can exceed this on the same pool.
    """
    groups = _group_by_question(chains)
    if not groups:
        raise ValueError("no chains")
    covered = sum(1 for group in groups.values() if any(c.label for c in group))
    return covered / len(groups)


def gold_injection_eval(
    chains: Iterable[AnnotatedChain],
    gold: Mapping[str, ChainCandidate],
    scorer: Callable[[ChainCandidate], float],
) -> float:
    """Precision-at-1 after guaranteeing each pool contains its gold chain.

    A question's gold chain (always valid) is appended to its candidate pool
    unless an identical chain is already present; questions without a gold
    chain are skipped with a warning.
    """
    groups = _group_by_question(chains)
    if not groups:
        raise ValueError("no chains")

    contributions = []
    for question_id in sorted(groups):
        if question_id not in gold:
            log.warning("question %s has no gold chain; skipped", question_id)
            continue
        pool = [(c.chain, 1 if c.label else 0) for c in groups[question_id]]
        gold_chain = gold[question_id]
        present = any(
            candidate.f1.id == gold_chain.f1.id and candidate.f2.id == gold_chain.f2.id
            for candidate, _ in pool
        )
        if not present:
            pool.append((gold_chain, 1))
        ranked = sorted(
            ((scorer(candidate), candidate, label) for candidate, label in pool),
            key=lambda item: (-item[0], item[1].f1.id, item[1].f2.id),
        )
        contributions.append(ranked[0][2])
    if not contributions:
        raise ValueError("no questions had a gold chain")
    return sum(contributions) / len(contributions)


@dataclass(frozen=True)
class EvalReport:
    """Summary metrics for one scored dataset."""

    questions: int
    records: int
    ndcg: float
    p_at_1: float
    upper_bound_p_at_1: float
    auc_roc: float | None
    f1: float | None
    threshold: float | None
    threshold_mode: str
    per_question: tuple[tuple[str, float, float], ...]


def evaluate(
    scored_rows: Sequence[Mapping],
    *,
    threshold: float | str = 0.5,
    dev_rows: Sequence[Mapping] | None = None,
) -> EvalReport:
    """Build an :class:`EvalReport` from scored, labeled rows.

    Each row is a mapping with ``question_id``, ``chain_id``, ``score`` and
    ``label``.  Within a question, rows rank by descending score with ties
    broken by ``chain_id``.  ``threshold="auto"`` tunes the F1 threshold on
    ``dev_rows`` and freezes it; without dev rows it falls back to tuning on
    the evaluated rows themselves (reported as ``self-tuned``).
    """
    rows = list(scored_rows)
    if not rows:
        raise ValueError("no scored rows")

    groups: dict[str, list[Mapping]] = {}
    for row in rows:
        groups.setdefault(str(row["question_id"]), []).append(row)

    rankings = []
    for question_id in sorted(groups):
        ordered = sorted(
            groups[question_id], key=lambda r: (-float(r["score"]), str(r["chain_id"]))
        )
        rankings.append(
            RankedExplanations(
                question_id=question_id,
                labels=tuple(int(r["label"]) for r in ordered),
                chain_ids=tuple(str(r["chain_id"]) for r in ordered),
            )
        )

    scores = [float(r["score"]) for r in rows]
    labels = [int(r["label"]) for r in rows]

    auc: float | None
    try:
        auc = auc_roc(scores, labels)
    except ValueError as exc:
        log.warning("%s; AUC omitted from report", exc)
        auc = None

    if threshold == "auto":
        if dev_rows:
            chosen = select_threshold(
                [float(r["score"]) for r in dev_rows],
                [int(r["label"]) for r in dev_rows],
            )
            mode = "dev-tuned"
        else:
            log.warning(
                "threshold='auto' without dev rows: tuning on the evaluated rows themselves"
            )
            chosen = select_threshold(scores, labels)
            mode = "self-tuned"
    else:
        chosen = float(threshold)
        mode = "fixed"

    covered = sum(1 for ranking in rankings if any(ranking.labels))
    return EvalReport(
        questions=len(rankings),
        records=len(rows),
        ndcg=mean_ndcg(rankings),
        p_at_1=mean_p_at_1(rankings),
        upper_bound_p_at_1=covered / len(rankings),
        auc_roc=auc,
        f1=f1_positive(scores, labels, chosen),
        threshold=chosen,
        threshold_mode=mode,
        per_question=tuple(
            (ranking.question_id, ndcg(ranking), p_at_1(ranking)) for ranking in rankings
        ),
    )
