"""Two-parameter logistic model: P(correct) = sigmoid(a_j * (theta - b_j))."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..environment import Record
from .base import (DiagnosisModel, PretrainConfig, _MinibatchTrainer, bce, sigmoid)

A_MIN, A_MAX = 0.1, 4.0


class IrtModel(DiagnosisModel):
    kind = "irt"

    def __init__(self, discrimination: np.ndarray, difficulty: np.ndarray):
        a = np.asarray(discrimination, dtype=np.float64)
        b = np.asarray(difficulty, dtype=np.float64)
        if a.shape != b.shape or a.ndim != 1:
            raise ValueError("discrimination and difficulty must be 1-d arrays of equal length")
        if np.any(a <= 0):
            raise ValueError("discrimination must be positive")
        self.a = a
        self.b = b
        self.n_questions = len(a)
        self.state_dim = 1
        self.training_losses: list[float] = []

    def init_state(self) -> np.ndarray:
        return np.zeros(1)

    def predict(self, state, question: int) -> float:
        self._check_question(question)
        theta = float(np.asarray(state).reshape(-1)[0])
        return float(sigmoid(self.a[question] * (theta - self.b[question])))

    def predict_many(self, state, questions: Sequence[int]) -> np.ndarray:
        qs = np.asarray(questions, dtype=np.int64)
        theta = float(np.asarray(state).reshape(-1)[0])
        return sigmoid(self.a[qs] * (theta - self.b[qs]))

    def loss_gradient(self, state, question: int, answer: int) -> np.ndarray:
        p = self.predict(state, question)
        return np.array([(p - answer) * self.a[question]])

    def gradient_norms(self, state, questions: Sequence[int]):
        qs = np.asarray(questions, dtype=np.int64)
        p = self.predict_many(state, qs)
        return (1.0 - p) * self.a[qs], p * self.a[qs]

    def _state_gradient_batch(self, state, questions, answers) -> np.ndarray:
        p = self.predict_many(state, questions)
        return np.array([np.mean((p - answers) * self.a[questions])])

    def _params_payload(self) -> dict:
        return {"discrimination": self.a.tolist(), "difficulty": self.b.tolist()}

    @classmethod
    def pretrain(cls, records: Sequence[Record], n_questions: int,
                 config: PretrainConfig | None = None) -> "IrtModel":
        cfg = config or PretrainConfig()
        trainer = _MinibatchTrainer(records, cfg)
        n_examinees = int(trainer.e.max()) + 1

        a = np.ones(n_questions)
        b = np.zeros(n_questions)
        theta = np.zeros(n_examinees)
        lr = cfg.learning_rate

        def apply_batch(e, q, y):
            z = a[q] * (theta[e] - b[q])
            r = (sigmoid(z) - y) / len(y)
            grad_a = r * (theta[e] - b[q])
            grad_b = -r * a[q]
            grad_theta = r * a[q]
            np.add.at(a, q, -lr * grad_a)
            np.add.at(b, q, -lr * grad_b)
            np.add.at(theta, e, -lr * grad_theta)
            np.clip(a, A_MIN, A_MAX, out=a)

        def epoch_loss():
            p = sigmoid(a[trainer.q] * (theta[trainer.e] - b[trainer.q]))
            return np.mean(bce(p, trainer.y))

        losses = trainer.run(apply_batch, epoch_loss)
        model = cls(a, b)
        model.training_losses = losses
        model.historical_states = theta.reshape(-1, 1)
        return model
