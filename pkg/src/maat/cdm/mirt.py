"""Compensatory multidimensional 2PL: P(correct) = sigmoid(a_j . theta + d_j)."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..environment import Record
from .base import (DiagnosisModel, PretrainConfig, _MinibatchTrainer, bce, sigmoid)

A_MIN, A_MAX = 0.05, 4.0


class MirtModel(DiagnosisModel):
    kind = "mirt"

    def __init__(self, discrimination: np.ndarray, intercept: np.ndarray):
        a = np.asarray(discrimination, dtype=np.float64)
        d = np.asarray(intercept, dtype=np.float64)
        if a.ndim != 2 or d.shape != (a.shape[0],):
            raise ValueError("discrimination must be (n_questions, dim), intercept (n_questions,)")
        if np.any(a < 0):
            raise ValueError("discrimination components must be >= 0")
        self.a = a
        self.d = d
        self.n_questions, self.state_dim = a.shape
        self.training_losses: list[float] = []

    @property
    def latent_dim(self) -> int:
        return self.state_dim

    def init_state(self) -> np.ndarray:
        return np.zeros(self.state_dim)

    def predict(self, state, question: int) -> float:
        self._check_question(question)
        theta = np.asarray(state, dtype=np.float64).reshape(self.state_dim)
        return float(sigmoid(self.a[question] @ theta + self.d[question]))

    def predict_many(self, state, questions: Sequence[int]) -> np.ndarray:
        qs = np.asarray(questions, dtype=np.int64)
        theta = np.asarray(state, dtype=np.float64).reshape(self.state_dim)
        return sigmoid(self.a[qs] @ theta + self.d[qs])

    def loss_gradient(self, state, question: int, answer: int) -> np.ndarray:
        p = self.predict(state, question)
        return (p - answer) * self.a[question]

    def gradient_norms(self, state, questions: Sequence[int]):
        qs = np.asarray(questions, dtype=np.int64)
        p = self.predict_many(state, qs)
        norms = np.linalg.norm(self.a[qs], axis=1)
        return (1.0 - p) * norms, p * norms

    def _state_gradient_batch(self, state, questions, answers) -> np.ndarray:
        p = self.predict_many(state, questions)
        return (p - answers) @ self.a[questions] / len(answers)

    def _params_payload(self) -> dict:
        return {"discrimination": self.a.tolist(), "intercept": self.d.tolist()}

    @classmethod
    def pretrain(cls, records: Sequence[Record], n_questions: int,
                 config: PretrainConfig | None = None) -> "MirtModel":
        cfg = config or PretrainConfig()
        trainer = _MinibatchTrainer(records, cfg)
        n_examinees = int(trainer.e.max()) + 1
        dim = cfg.latent_dim

        # Random positive init breaks the symmetry between latent dimensions.
        a = np.abs(trainer.rng.normal(0.5, 0.1, size=(n_questions, dim)))
        d = np.zeros(n_questions)
        theta = np.zeros((n_examinees, dim))
        lr = cfg.learning_rate

        def apply_batch(e, q, y):
            z = np.einsum("ij,ij->i", a[q], theta[e]) + d[q]
            r = (sigmoid(z) - y) / len(y)
            grad_a = r[:, None] * theta[e]
            grad_d = r
            grad_theta = r[:, None] * a[q]
            np.add.at(a, q, -lr * grad_a)
            np.add.at(d, q, -lr * grad_d)
            np.add.at(theta, e, -lr * grad_theta)
            np.clip(a, A_MIN, A_MAX, out=a)

        def epoch_loss():
            z = np.einsum("ij,ij->i", a[trainer.q], theta[trainer.e]) + d[trainer.q]
            return np.mean(bce(sigmoid(z), trainer.y))

        losses = trainer.run(apply_batch, epoch_loss)
        model = cls(a, d)
        model.training_losses = losses
        model.historical_states = theta
        return model
