"""Per-concept importance weights from answer-profile question embeddings.

Historical answer records are treated as a corpus: all records of one
examinee form a context window, and a skip-gram model with negative
sampling learns an output vector per question.  Questions on which
examinees perform similarly land close together; a question's density
(mean similarity to its nearest neighbors) measures how representative it
is, and a concept's weight is the mean density of its linked questions.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .environment import ConceptGraph, Record
from .errors import (ContractViolationError, DataFormatError, TrainingError)

logger = logging.getLogger(__name__)

IMPORTANCE_FORMAT_VERSION = 1
NOISE_POWER = 0.75


@dataclass(frozen=True)
class ResponseEncoding:
    """Sparse view of the 2|Q|-long record input vector.

    Position q flags which question was answered; position |Q|+q is set
    only when the answer was correct.
    """

    question: int
    answer: int
    n_questions: int

    def nonzero_positions(self) -> tuple[int, ...]:
        if self.answer == 1:
            return (self.question, self.n_questions + self.question)
        return (self.question,)

    def to_dense(self) -> np.ndarray:
        x = np.zeros(2 * self.n_questions)
        x[list(self.nonzero_positions())] = 1.0
        return x


def encode_record(record: Record, n_questions: int) -> ResponseEncoding:
    return ResponseEncoding(question=record.question, answer=record.answer,
                            n_questions=n_questions)


@dataclass(frozen=True)
class EmbeddingConfig:
    dim: int = 20
    n_negative: int = 10
    epochs: int = 5
    learning_rate: float = 0.025
    window_cap: int = 100
    seed: int = 0


class QuestionEmbedding:
    """SGNS parameters: input projection (d x 2|Q|) and output vectors (|Q| x d).

    The output vector serves as the question's embedding.
    """

    def __init__(self, input_weights: np.ndarray, output_vectors: np.ndarray,
                 config: EmbeddingConfig):
        self.input_weights = input_weights
        self.output_vectors = output_vectors
        self.config = config
        self.epoch_objectives: list[float] = []
        if input_weights.shape != (config.dim, 2 * output_vectors.shape[0]):
            raise ValueError("input projection shape does not match the question pool")

    @property
    def n_questions(self) -> int:
        return self.output_vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.output_vectors.shape[1]

    def vector(self, question: int) -> np.ndarray:
        return self.output_vectors[question]


def train_embeddings(records: Sequence[Record], n_questions: int,
                     config: EmbeddingConfig | None = None) -> QuestionEmbedding:
    """Train skip-gram-with-negative-sampling embeddings on answer records.

    Each examinee's records pair all-with-all (capped at ``window_cap``
    context records per center, seeded subsample); each positive pair gets
    ``n_negative`` noise questions drawn from the record-frequency unigram
    raised to the 3/4 power.  Deterministic given the seed.
    """
    cfg = config or EmbeddingConfig()
    if cfg.dim < 2:
        raise ContractViolationError(f"embedding dim must be >= 2, got {cfg.dim}")
    rng = np.random.default_rng(cfg.seed)

    by_examinee: dict[int, list[Record]] = {}
    for r in records:
        by_examinee.setdefault(r.examinee, []).append(r)
    usable = {e: rs for e, rs in sorted(by_examinee.items()) if len(rs) >= 2}
    skipped = len(by_examinee) - len(usable)
    if skipped:
        logger.warning("skipping %d examinees with fewer than 2 records", skipped)
    if not usable:
        raise TrainingError("every examinee has fewer than 2 records; nothing to train on")

    freq = np.zeros(n_questions)
    for rs in usable.values():
        for r in rs:
            freq[r.question] += 1
    noise = freq ** NOISE_POWER
    noise /= noise.sum()

    # Input side gets the random symmetry-breaking init, output vectors
    # start at zero so questions with matching context streams stay close.
    w_in = rng.uniform(-0.5, 0.5, size=(cfg.dim, 2 * n_questions)) / cfg.dim
    v_out = np.zeros((n_questions, cfg.dim))

    total_centers = cfg.epochs * sum(len(rs) for rs in usable.values())
    centers_done = 0
    epoch_objectives = []

    for _ in range(cfg.epochs):
        obj_sum = 0.0
        obj_pairs = 0
        for examinee in sorted(usable):
            rs = usable[examinee]
            n = len(rs)
            questions = np.array([r.question for r in rs], dtype=np.int64)
            answers = np.array([r.answer for r in rs], dtype=np.int64)
            for i in range(n):
                lr = cfg.learning_rate * max(1e-4, 1.0 - centers_done / total_centers)
                centers_done += 1

                ctx_idx = np.delete(np.arange(n), i)
                if len(ctx_idx) > cfg.window_cap:
                    ctx_idx = rng.choice(ctx_idx, size=cfg.window_cap, replace=False)
                pos_targets = questions[ctx_idx]
                # Self-pairs are outside the model's support (contexts pair
                # j != i), so the center's own question never serves as a
                # negative either.
                neg_targets = rng.choice(n_questions,
                                         size=len(pos_targets) * cfg.n_negative,
                                         p=noise)
                neg_targets = neg_targets[neg_targets != questions[i]]
                targets = np.concatenate([pos_targets, neg_targets])
                labels = np.zeros(len(targets))
                labels[:len(pos_targets)] = 1.0

                u = w_in[:, questions[i]].copy()
                if answers[i] == 1:
                    u += w_in[:, n_questions + questions[i]]
                scores = v_out[targets] @ u
                sig = 1.0 / (1.0 + np.exp(-scores))

                # Objective of Eq-style log-likelihood, before the update.
                logsig = np.log(np.clip(np.where(labels == 1, sig, 1.0 - sig),
                                        1e-12, None))
                obj_sum += float(np.sum(logsig))
                obj_pairs += len(pos_targets)

                g = sig - labels
                grad_u = g @ v_out[targets]
                np.add.at(v_out, targets, -lr * np.outer(g, u))
                w_in[:, questions[i]] -= lr * grad_u
                if answers[i] == 1:
                    w_in[:, n_questions + questions[i]] -= lr * grad_u

        epoch_objectives.append(obj_sum / max(obj_pairs, 1))
        if not np.isfinite(epoch_objectives[-1]):
            raise TrainingError("embedding training diverged (objective not finite)")

    emb = QuestionEmbedding(w_in, v_out, cfg)
    emb.epoch_objectives = epoch_objectives
    return emb


def embedding_similarity(emb: QuestionEmbedding, q_i: int, q_j: int,
                           gamma: float = 0.1) -> float:
    """exp(-gamma * ||v_i - v_j||): 1 iff the embeddings coincide."""
    if gamma <= 0:
        raise ContractViolationError(f"gamma must be > 0, got {gamma}")
    dist = float(np.linalg.norm(emb.vector(q_i) - emb.vector(q_j)))
    return float(np.exp(-gamma * dist))


def _pairwise_distances(emb: QuestionEmbedding) -> np.ndarray:
    v = emb.output_vectors
    sq = np.sum(v * v, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (v @ v.T)
    return np.sqrt(np.clip(d2, 0.0, None))


def nearest_neighbors(emb: QuestionEmbedding, question: int, k_n: int) -> list[int]:
    """k nearest by embedding distance, excluding the question itself; ties by id."""
    if k_n < 1:
        raise ContractViolationError(f"k_n must be >= 1, got {k_n}")
    if emb.n_questions < k_n + 1:
        raise ContractViolationError(
            f"pool of {emb.n_questions} questions is too small for k_n={k_n}")
    dist = np.linalg.norm(emb.output_vectors - emb.vector(question), axis=1)
    order = sorted(q for q in range(emb.n_questions) if q != question)
    order.sort(key=lambda q: (dist[q], q))
    return order[:k_n]


def embedding_density(emb: QuestionEmbedding, question: int,
                        k_n: int = 10, gamma: float = 0.1) -> float:
    """Mean similarity to the k nearest neighbors."""
    neighbors = nearest_neighbors(emb, question, k_n)
    return float(np.mean([embedding_similarity(emb, n, question, gamma)
                          for n in neighbors]))


def all_densities(emb: QuestionEmbedding, k_n: int = 10,
                  gamma: float = 0.1) -> np.ndarray:
    """Vectorized density for every question (same values as the scalar op)."""
    if k_n < 1:
        raise ContractViolationError(f"k_n must be >= 1, got {k_n}")
    n = emb.n_questions
    if n < k_n + 1:
        raise ContractViolationError(f"pool of {n} questions is too small for k_n={k_n}")
    dist = _pairwise_distances(emb)
    np.fill_diagonal(dist, np.inf)
    densities = np.empty(n)
    ids = np.arange(n)
    for q in range(n):
        order = np.lexsort((ids, dist[q]))[:k_n]
        densities[q] = np.mean(np.exp(-gamma * dist[q, order]))
    return densities


@dataclass
class ImportanceTable:
    """Positive weight per concept, with the provenance of its computation."""

    weights: dict[int, float]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for k, w in self.weights.items():
            if w <= 0:
                raise ContractViolationError(f"importance weight for concept {k} "
                                             f"must be > 0, got {w}")

    def as_array(self, n_concepts: int | None = None) -> np.ndarray:
        n = n_concepts if n_concepts is not None else (max(self.weights) + 1)
        arr = np.zeros(n)
        for k, w in self.weights.items():
            arr[k] = w
        return arr

    def save(self, path: str | Path) -> None:
        payload = {
            "format_version": IMPORTANCE_FORMAT_VERSION,
            "weights": {str(k): w for k, w in sorted(self.weights.items())},
            "metadata": self.metadata,
        }
        Path(path).write_text(json.dumps(payload))

    @classmethod
    def load(cls, path: str | Path) -> "ImportanceTable":
        try:
            payload = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"invalid importance table: {exc}", path=str(path)) from None
        version = payload.get("format_version")
        if version != IMPORTANCE_FORMAT_VERSION:
            raise DataFormatError(f"unsupported importance format_version {version!r}",
                                  path=str(path))
        weights = {int(k): float(w) for k, w in payload["weights"].items()}
        return cls(weights=weights, metadata=payload.get("metadata", {}))


def compute_importance(emb: QuestionEmbedding, graph: ConceptGraph,
                       k_n: int = 10, gamma: float = 0.1) -> ImportanceTable:
    """Concept weight = mean embedding density of its linked questions."""
    densities = all_densities(emb, k_n=k_n, gamma=gamma)
    weights = {k: float(np.mean([densities[q] for q in sorted(graph.questions_of(k))]))
               for k in range(graph.n_concepts)}
    return ImportanceTable(weights=weights, metadata={
        "gamma": gamma, "k_n": k_n, "dim": emb.dim,
        "seed": emb.config.seed, "n_questions": emb.n_questions,
        "n_concepts": graph.n_concepts,
    })


def uniform_importance(graph: ConceptGraph) -> ImportanceTable:
    """Unit weight per concept; coverage then ignores importance."""
    return ImportanceTable(weights={k: 1.0 for k in range(graph.n_concepts)},
                           metadata={"uniform": True, "n_concepts": graph.n_concepts})
