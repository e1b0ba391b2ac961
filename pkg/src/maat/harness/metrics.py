"""Strategy evaluation metrics: informativeness (AUC), coverage, estimate error."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..cdm import DiagnosisModel
from ..diversity import nkc
from ..environment import ConceptGraph, Record
from ..errors import ContractViolationError, UndefinedMetricError


def mann_whitney_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Rank-based AUC; tied scores contribute 1/2 via midranks."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs at least one positive and one negative label")

    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores), dtype=np.float64)
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1

    rank_sum = float(np.sum(ranks[labels == 1]))
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def auc_informativeness(model: DiagnosisModel, state: np.ndarray,
                        eval_records: Sequence[Record]) -> float:
    """AUC of the model's predictions against the recorded answers."""
    if not eval_records:
        raise UndefinedMetricError("empty evaluation record set")
    questions = [r.question for r in eval_records]
    labels = [r.answer for r in eval_records]
    scores = model.predict_many(state, questions)
    return mann_whitney_auc(scores, labels)


def coverage_metric(tested, graph: ConceptGraph) -> float:
    """Fraction of concepts touched by the administered set (unweighted)."""
    return nkc(tested, graph)


def see_metric(estimated, reference) -> float:
    """Mean squared L2 error between estimated and reference states."""
    est = np.atleast_2d(np.asarray(estimated, dtype=np.float64))
    ref = np.atleast_2d(np.asarray(reference, dtype=np.float64))
    if est.shape != ref.shape:
        raise ContractViolationError(
            f"state shape mismatch: estimated {est.shape} vs reference {ref.shape}")
    return float(np.mean(np.sum((est - ref) ** 2, axis=1)))
