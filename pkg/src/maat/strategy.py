"""Selection-strategy contract and the two-stage quality+diversity strategy."""

from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np

from .cdm import DiagnosisModel
from .diversity import CoverageState, select_diverse
from .environment import ConceptGraph, SessionState
from .errors import PoolExhaustedError
from .importance import ImportanceTable
from .quality import select_candidates


class Strategy(ABC):
    """Picks the next question from the untested pool, given only the
    model's public contract (predict / gradient / update)."""

    name: str

    @abstractmethod
    def select(self, session: SessionState, model: DiagnosisModel,
               state: np.ndarray) -> int:
        """Return a member of the session's selectable untested pool."""

    def _pool(self, session: SessionState) -> list[int]:
        pool = sorted(session.selectable_untested)
        if not pool:
            raise PoolExhaustedError(
                f"no selectable question remains for examinee {session.examinee}")
        return pool


class MaatStrategy(Strategy):
    """Stage 1 keeps the top-k_c questions by expected model change; stage 2
    picks the one with the largest importance-weighted coverage gain.

    ``k_c=None`` means the candidate set is the whole untested pool
    (diversity-only boundary); ``k_c=1`` degenerates to pure quality.
    """

    name = "maat"

    def __init__(self, graph: ConceptGraph, importance: ImportanceTable,
                 k_c: int | None = 10):
        self.graph = graph
        self.importance = importance
        self.k_c = k_c
        self._weights = importance.as_array(graph.n_concepts)

    def select(self, session: SessionState, model: DiagnosisModel,
               state: np.ndarray) -> int:
        pool = self._pool(session)
        k_c = len(pool) if self.k_c is None else self.k_c
        candidates = select_candidates(model, state, pool, k_c)
        coverage = CoverageState.from_tested(self.graph, self._weights, session.tested)
        return select_diverse(coverage, candidates)
