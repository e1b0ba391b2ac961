"""Question-quality scoring by Expected Model Change (step stage 1).

A question is informative to the extent that observing its answer would
move the diagnosis state.  The retraining displacement is approximated by
the loss-gradient norm at the current state, and the expectation is taken
under the model's own correctness prediction:

    score(q) = p * ||grad_if_correct|| + (1 - p) * ||grad_if_incorrect||
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .cdm import DiagnosisModel
from .errors import ContractViolationError


@dataclass(frozen=True)
class EmcScore:
    question: int
    score: float

    def __post_init__(self):
        if not (np.isfinite(self.score) and self.score >= 0.0):
            raise ContractViolationError(
                f"score must be finite and non-negative, got {self.score!r}")


def expected_model_change(model: DiagnosisModel, state: np.ndarray,
                          question: int) -> EmcScore:
    p = model.predict(state, question)
    g1 = np.linalg.norm(model.loss_gradient(state, question, 1))
    g0 = np.linalg.norm(model.loss_gradient(state, question, 0))
    return EmcScore(question=int(question), score=float(p * g1 + (1.0 - p) * g0))


def emc_scores(model: DiagnosisModel, state: np.ndarray,
               questions: Sequence[int]) -> np.ndarray:
    """Vectorized scores, identical to per-question expected_model_change."""
    qs = np.asarray(list(questions), dtype=np.int64)
    p = model.predict_many(state, qs)
    g1, g0 = model.gradient_norms(state, qs)
    return p * g1 + (1.0 - p) * g0


def select_candidates(model: DiagnosisModel, state: np.ndarray,
                      untested: Iterable[int], k_c: int) -> list[int]:
    """Top-k_c untested questions by descending score, ids ascending on ties."""
    if k_c < 1:
        raise ContractViolationError(f"k_c must be >= 1, got {k_c}")
    pool = sorted(set(int(q) for q in untested))
    if not pool:
        raise ContractViolationError("untested pool is empty")
    scores = emc_scores(model, state, pool)
    order = sorted(range(len(pool)), key=lambda i: (-scores[i], pool[i]))
    return [pool[i] for i in order[:min(k_c, len(pool))]]
