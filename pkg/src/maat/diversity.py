"""Knowledge-coverage scoring and marginal-gain greedy selection (step stage 2).

Coverage of a concept saturates softly: with c tested questions linked to
it the concept contributes c / (c + 1), so repeat hits yield diminishing
returns.  The importance-weighted sum of these terms (IWKC) is a
nonnegative monotone submodular set function, which is what makes the
per-step greedy argmax carry the classic 1 - 1/e guarantee when it runs
over the whole pool.
"""

from __future__ import annotations

import heapq
import math
from itertools import combinations
from typing import Iterable, Mapping, Sequence

import numpy as np

from .environment import ConceptGraph
from .errors import CapacityError, ContractViolationError, UnknownConceptError

BRUTE_FORCE_MAX_COMBINATIONS = 10 ** 6


def inc_cov(count: int) -> float:
    """Soft coverage of a single concept hit `count` times: count / (count + 1)."""
    if count < 0:
        raise ContractViolationError(f"count must be >= 0, got {count}")
    return count / (count + 1.0)


def nkc(tested: Iterable[int], graph: ConceptGraph) -> float:
    """Naive coverage: fraction of concepts touched by at least one tested question."""
    covered: set[int] = set()
    for q in tested:
        covered |= graph.concepts_of(q)
    return len(covered) / graph.n_concepts


class CoverageState:
    """Per-concept hit counts for a growing tested set, plus concept weights.

    Gains are maintained incrementally: evaluating a question touches only
    its linked concepts, not all of K.
    """

    def __init__(self, graph: ConceptGraph, weights: Mapping[int, float] | Sequence[float]):
        self.graph = graph
        w = np.zeros(graph.n_concepts)
        if isinstance(weights, Mapping):
            items = weights.items()
        else:
            items = enumerate(weights)
        seen = set()
        for k, value in items:
            if not (0 <= int(k) < graph.n_concepts):
                raise UnknownConceptError(k)
            if value <= 0:
                raise ContractViolationError(f"weight for concept {k} must be > 0, got {value}")
            w[int(k)] = float(value)
            seen.add(int(k))
        if len(seen) != graph.n_concepts:
            missing = sorted(set(range(graph.n_concepts)) - seen)
            raise ContractViolationError(f"weights missing for concepts {missing[:5]}...")
        self.weights = w
        self.weight_sum = float(np.sum(w))
        self.counts = np.zeros(graph.n_concepts, dtype=np.int64)
        self.tested: set[int] = set()

    @classmethod
    def from_tested(cls, graph: ConceptGraph, weights, tested: Iterable[int]) -> "CoverageState":
        state = cls(graph, weights)
        for q in tested:
            state.add(q)
        return state

    def copy(self) -> "CoverageState":
        clone = CoverageState.__new__(CoverageState)
        clone.graph = self.graph
        clone.weights = self.weights
        clone.weight_sum = self.weight_sum
        clone.counts = self.counts.copy()
        clone.tested = set(self.tested)
        return clone

    def cnt(self, concept: int) -> int:
        if not (0 <= concept < self.graph.n_concepts):
            raise UnknownConceptError(concept)
        return int(self.counts[concept])

    def add(self, question: int) -> None:
        if question in self.tested:
            raise ContractViolationError(f"question {question} already tested")
        for k in self.graph.concepts_of(question):
            self.counts[k] += 1
        self.tested.add(question)

    def iwkc(self) -> float:
        cov = self.counts / (self.counts + 1.0)
        return float(np.dot(self.weights, cov) / self.weight_sum)

    def marginal_gain(self, question: int) -> float:
        """IWKC(tested + {q}) - IWKC(tested), touching only q's concepts."""
        if question in self.tested:
            raise ContractViolationError(f"question {question} already tested")
        gain = 0.0
        for k in self.graph.concepts_of(question):
            c = self.counts[k]
            gain += self.weights[k] / ((c + 1.0) * (c + 2.0))
        return gain / self.weight_sum


def iwkc(state: CoverageState) -> float:
    return state.iwkc()


def marginal_gain(state: CoverageState, question: int) -> float:
    return state.marginal_gain(question)


def select_diverse(state: CoverageState, candidates: Sequence[int]) -> int:
    """Candidate with the largest marginal gain.

    Ties keep candidate-list order (stage-1 quality rank first), then
    ascending id for duplicate entries.
    """
    if not candidates:
        raise ContractViolationError("candidate list is empty")
    best_q = None
    best_gain = -math.inf
    for q in candidates:
        if q in state.tested:
            raise ContractViolationError(f"candidate {q} already tested")
        gain = state.marginal_gain(q)
        if gain > best_gain:
            best_gain = gain
            best_q = q
    return int(best_q)


def greedy_maximize(graph: ConceptGraph, weights, pool: Iterable[int], n: int,
                    lazy: bool = False) -> list[int]:
    """n-step greedy sequence over the whole pool (ties by ascending id).

    With ``lazy=True`` stale heap entries are re-evaluated only when they
    surface; submodularity makes the result identical to the eager scan.
    """
    remaining = sorted(set(int(q) for q in pool))
    if n > len(remaining):
        raise ContractViolationError(f"n={n} exceeds pool size {len(remaining)}")
    state = CoverageState(graph, weights)
    picked: list[int] = []

    if not lazy:
        for _ in range(n):
            best = select_diverse(state, remaining)
            state.add(best)
            remaining.remove(best)
            picked.append(best)
        return picked

    # Lazy greedy: heap keyed on (-gain, id); an entry computed at an older
    # step may overestimate the true gain, never underestimate it.
    heap = [(-state.marginal_gain(q), q, 0) for q in remaining]
    heapq.heapify(heap)
    step = 0
    while len(picked) < n:
        neg_gain, q, computed_at = heapq.heappop(heap)
        if computed_at == step:
            state.add(q)
            picked.append(q)
            step += 1
        else:
            heapq.heappush(heap, (-state.marginal_gain(q), q, step))
    return picked


def brute_force_optimum(graph: ConceptGraph, weights, pool: Iterable[int],
                        n: int) -> tuple[frozenset[int], float]:
    """Exact IWKC maximum over n-subsets by enumeration (small instances only)."""
    items = sorted(set(int(q) for q in pool))
    if n > len(items):
        raise ContractViolationError(f"n={n} exceeds pool size {len(items)}")
    if math.comb(len(items), n) > BRUTE_FORCE_MAX_COMBINATIONS:
        raise CapacityError(
            f"C({len(items)}, {n}) exceeds {BRUTE_FORCE_MAX_COMBINATIONS} combinations")

    base = CoverageState(graph, weights)
    w = base.weights
    wsum = base.weight_sum
    concept_lists = {q: sorted(graph.concepts_of(q)) for q in items}

    best_value = -math.inf
    best_set: tuple[int, ...] = ()
    counts = np.zeros(graph.n_concepts, dtype=np.int64)
    for combo in combinations(items, n):
        counts[:] = 0
        for q in combo:
            for k in concept_lists[q]:
                counts[k] += 1
        value = float(np.dot(w, counts / (counts + 1.0)) / wsum)
        if value > best_value:
            best_value = value
            best_set = combo
    return frozenset(best_set), best_value
