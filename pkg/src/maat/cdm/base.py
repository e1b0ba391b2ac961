"""Abstract diagnosis-model contract.

A diagnosis model captures an examinee's knowledge state in a flat real
vector ``state`` and exposes exactly four capabilities: predict the chance
of a correct answer, differentiate the per-record loss w.r.t. the state,
refit the state on accumulated records, and pretrain the frozen
question-side parameters on historical data.  Selection strategies built
on this contract never see model internals.
"""

from __future__ import annotations

import json
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import ClassVar, Sequence

import numpy as np

from ..environment import ConceptGraph, Record
from ..errors import TrainingError, UnknownQuestionError

CHECKPOINT_FORMAT_VERSION = 1

_P_EPS = 1e-12


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64)))


def bce(p, y):
    """Binary cross-entropy, elementwise; p clipped away from {0, 1}."""
    p = np.clip(p, _P_EPS, 1.0 - _P_EPS)
    y = np.asarray(y, dtype=np.float64)
    return -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))


@dataclass(frozen=True)
class UpdateConfig:
    """Full-batch refit of the examinee state after each answer."""

    learning_rate: float = 0.05
    epochs: int = 5
    max_backoff: int = 4


@dataclass(frozen=True)
class PretrainConfig:
    """Minibatch SGD settings for fitting question-side parameters."""

    learning_rate: float = 0.5
    epochs: int = 40
    batch_size: int = 128
    seed: int = 0
    latent_dim: int = 3       # MIRT only
    hidden_width: int = 64    # neural model only


class DiagnosisModel(ABC):
    """Question-side parameters are immutable after pretraining."""

    kind: ClassVar[str]

    n_questions: int
    state_dim: int
    training_losses: list[float]

    @abstractmethod
    def init_state(self) -> np.ndarray:
        """Symmetric prior state (predictions near 0.5 before evidence)."""

    @abstractmethod
    def predict(self, state: np.ndarray, question: int) -> float:
        """P(correct) in [0, 1]."""

    @abstractmethod
    def loss_gradient(self, state: np.ndarray, question: int, answer: int) -> np.ndarray:
        """d BCE(predict, answer) / d state, shape (state_dim,)."""

    def _check_question(self, question: int) -> None:
        if not (0 <= int(question) < self.n_questions):
            raise UnknownQuestionError(question)

    # -- batch helpers ---------------------------------------------------
    # Semantically identical to looping the scalar operations; subclasses
    # override with vectorized versions for pool-wide scoring.

    def predict_many(self, state: np.ndarray, questions: Sequence[int]) -> np.ndarray:
        return np.array([self.predict(state, int(q)) for q in questions], dtype=np.float64)

    def gradient_norms(self, state: np.ndarray,
                       questions: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
        """L2 norms of the state gradient under each hypothesized answer.

        Returns (norm_if_correct, norm_if_incorrect), one entry per question.
        """
        g1 = np.array([np.linalg.norm(self.loss_gradient(state, int(q), 1))
                       for q in questions])
        g0 = np.array([np.linalg.norm(self.loss_gradient(state, int(q), 0))
                       for q in questions])
        return g1, g0

    # -- state refit -----------------------------------------------------

    @abstractmethod
    def _state_gradient_batch(self, state: np.ndarray, questions: np.ndarray,
                              answers: np.ndarray) -> np.ndarray:
        """Gradient of mean BCE over the given records w.r.t. state."""

    def _project_state(self, state: np.ndarray) -> np.ndarray:
        """Hook for models whose state lives in a box (no-op by default)."""
        return state

    def mean_bce(self, state: np.ndarray, records: Sequence[Record]) -> float:
        qs = [r.question for r in records]
        ys = np.array([r.answer for r in records], dtype=np.float64)
        return float(np.mean(bce(self.predict_many(state, qs), ys)))

    def update(self, state: np.ndarray, records: Sequence[Record],
               config: UpdateConfig | None = None) -> np.ndarray:
        """Refit the state on the examinee's records, question side frozen.

        Warm-starts from ``state``; guaranteed not to increase the training
        BCE on those records (learning rate is halved and the pass retried
        if a step overshoots).
        """
        if not records:
            return np.array(state, dtype=np.float64, copy=True)
        examinees = {r.examinee for r in records}
        if len(examinees) != 1:
            raise TrainingError(f"update expects one examinee's records, got {sorted(examinees)}")
        cfg = config or UpdateConfig()

        questions = np.array([r.question for r in records], dtype=np.int64)
        for q in questions:
            self._check_question(int(q))
        answers = np.array([r.answer for r in records], dtype=np.float64)
        start = np.array(state, dtype=np.float64, copy=True)
        loss_before = self.mean_bce(start, records)

        lr = cfg.learning_rate
        for _ in range(cfg.max_backoff + 1):
            current = start.copy()
            for _ in range(cfg.epochs):
                grad = self._state_gradient_batch(current, questions, answers)
                current = self._project_state(current - lr * grad)
            if not np.all(np.isfinite(current)):
                raise TrainingError(
                    f"state update diverged (learning_rate={cfg.learning_rate})")
            if self.mean_bce(current, records) <= loss_before + 1e-12:
                return current
            lr *= 0.5
        return start

    # -- persistence -----------------------------------------------------

    @abstractmethod
    def _params_payload(self) -> dict:
        """Question-side parameters as JSON-serializable structures."""

    def graph_pairs(self) -> list[list[int]] | None:
        """Question-concept relation when the model carries one."""
        return None

    def save(self, path: str | Path, graph: "ConceptGraph | None" = None) -> None:
        """Write a self-contained checkpoint.

        Passing ``graph`` embeds the question-concept relation so the
        session service can boot from the checkpoint alone.
        """
        pairs = self.graph_pairs()
        if graph is not None:
            pairs = [[q, k] for q, k in sorted(graph.pairs)]
        payload = {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "kind": self.kind,
            "n_questions": self.n_questions,
            "state_dim": self.state_dim,
            "params": self._params_payload(),
            "graph": pairs,
        }
        Path(path).write_text(json.dumps(payload))


class _MinibatchTrainer:
    """Seeded minibatch SGD over records with shared-parameter models.

    Subclass models provide ``_apply_batch(e, q, y, lr)`` which computes
    gradients and mutates parameters in place for one batch.
    """

    def __init__(self, records: Sequence[Record], config: PretrainConfig):
        if not records:
            raise TrainingError("cannot pretrain on an empty historical record set")
        self.cfg = config
        self.e = np.array([r.examinee for r in records], dtype=np.int64)
        self.q = np.array([r.question for r in records], dtype=np.int64)
        self.y = np.array([r.answer for r in records], dtype=np.float64)
        self.rng = np.random.default_rng(config.seed)

    def run(self, apply_batch, epoch_loss) -> list[float]:
        n = len(self.y)
        losses = []
        for _ in range(self.cfg.epochs):
            order = self.rng.permutation(n)
            for start in range(0, n, self.cfg.batch_size):
                idx = order[start:start + self.cfg.batch_size]
                apply_batch(self.e[idx], self.q[idx], self.y[idx])
            loss = epoch_loss()
            if not np.isfinite(loss):
                raise TrainingError(
                    f"pretraining diverged, loss is not finite "
                    f"(learning_rate={self.cfg.learning_rate})")
            losses.append(float(loss))
        return losses
