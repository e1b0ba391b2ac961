"""Lite neural diagnosis model over per-concept mastery.

The examinee state is a mastery vector in [0, 1]^|K|.  A question's input
is its concept-masked mastery minus a per-question difficulty vector,
scaled by a discrimination scalar, fed through a two-layer sigmoid network
whose interaction weights are kept non-negative: raising any mastery
component can never lower the predicted probability.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..environment import ConceptGraph, Record
from .base import (DiagnosisModel, PretrainConfig, _MinibatchTrainer, bce, sigmoid)

DISC_MIN, DISC_MAX = 0.1, 4.0


def _concept_mask(graph: ConceptGraph) -> np.ndarray:
    mask = np.zeros((graph.n_questions, graph.n_concepts))
    for q, k in graph.pairs:
        mask[q, k] = 1.0
    return mask


class NeuralCdmLite(DiagnosisModel):
    kind = "ncdm"

    def __init__(self, graph: ConceptGraph, difficulty: np.ndarray,
                 discrimination: np.ndarray, w1: np.ndarray, b1: np.ndarray,
                 w2: np.ndarray, b2: float):
        self.graph = graph
        self.mask = _concept_mask(graph)
        self.difficulty = np.asarray(difficulty, dtype=np.float64)
        self.discrimination = np.asarray(discrimination, dtype=np.float64)
        self.w1 = np.asarray(w1, dtype=np.float64)
        self.b1 = np.asarray(b1, dtype=np.float64)
        self.w2 = np.asarray(w2, dtype=np.float64)
        self.b2 = float(b2)
        if np.any(self.w1 < 0) or np.any(self.w2 < 0):
            raise ValueError("interaction weights must be non-negative")
        if np.any(self.discrimination <= 0):
            raise ValueError("discrimination must be positive")
        self.n_questions = graph.n_questions
        self.n_concepts = graph.n_concepts
        self.state_dim = graph.n_concepts
        self.hidden_width = self.w1.shape[0]
        self.training_losses: list[float] = []

    def init_state(self) -> np.ndarray:
        return np.full(self.state_dim, 0.5)

    def _forward(self, state: np.ndarray, qs: np.ndarray):
        theta = np.asarray(state, dtype=np.float64).reshape(self.state_dim)
        x = self.discrimination[qs, None] * self.mask[qs] * (theta[None, :] - self.difficulty[qs])
        h = sigmoid(x @ self.w1.T + self.b1)
        p = sigmoid(h @ self.w2 + self.b2)
        return x, h, p

    def predict(self, state, question: int) -> float:
        self._check_question(question)
        _, _, p = self._forward(state, np.array([question]))
        return float(p[0])

    def predict_many(self, state, questions: Sequence[int]) -> np.ndarray:
        qs = np.asarray(questions, dtype=np.int64)
        _, _, p = self._forward(state, qs)
        return p

    def _state_jacobians(self, state, qs: np.ndarray):
        """d logit / d state, one row of shape (|K|,) per question."""
        _, h, p = self._forward(state, qs)
        s = (self.w2[None, :] * h * (1.0 - h)) @ self.w1
        jac = s * self.discrimination[qs, None] * self.mask[qs]
        return jac, p

    def loss_gradient(self, state, question: int, answer: int) -> np.ndarray:
        self._check_question(question)
        jac, p = self._state_jacobians(state, np.array([question]))
        return (p[0] - answer) * jac[0]

    def gradient_norms(self, state, questions: Sequence[int]):
        qs = np.asarray(questions, dtype=np.int64)
        jac, p = self._state_jacobians(state, qs)
        norms = np.linalg.norm(jac, axis=1)
        return (1.0 - p) * norms, p * norms

    def _state_gradient_batch(self, state, questions, answers) -> np.ndarray:
        jac, p = self._state_jacobians(state, questions)
        return (p - answers) @ jac / len(answers)

    def _project_state(self, state: np.ndarray) -> np.ndarray:
        return np.clip(state, 0.0, 1.0)

    def _params_payload(self) -> dict:
        return {
            "difficulty": self.difficulty.tolist(),
            "discrimination": self.discrimination.tolist(),
            "w1": self.w1.tolist(),
            "b1": self.b1.tolist(),
            "w2": self.w2.tolist(),
            "b2": self.b2,
        }

    def graph_pairs(self) -> list[list[int]]:
        return [[q, k] for q, k in sorted(self.graph.pairs)]

    @classmethod
    def pretrain(cls, records: Sequence[Record], graph: ConceptGraph,
                 config: PretrainConfig | None = None) -> "NeuralCdmLite":
        cfg = config or PretrainConfig()
        trainer = _MinibatchTrainer(records, cfg)
        n_examinees = int(trainer.e.max()) + 1
        n_q, n_k, width = graph.n_questions, graph.n_concepts, cfg.hidden_width
        mask = _concept_mask(graph)
        rng = trainer.rng

        diff = np.full((n_q, n_k), 0.5)
        disc = np.ones(n_q)
        w1 = np.abs(rng.normal(0.0, 1.0 / np.sqrt(n_k), size=(width, n_k)))
        b1 = np.zeros(width)
        w2 = np.abs(rng.normal(0.0, 1.0 / np.sqrt(width), size=width))
        b2 = np.zeros(1)
        theta = np.full((n_examinees, n_k), 0.5)
        lr = cfg.learning_rate

        def apply_batch(e, q, y):
            nonlocal w1, b1, w2
            pre = mask[q] * (theta[e] - diff[q])
            x = disc[q, None] * pre
            h = sigmoid(x @ w1.T + b1)
            p = sigmoid(h @ w2 + b2[0])
            r = (p - y) / len(y)

            grad_w2 = r @ h
            grad_b2 = np.sum(r)
            dh = (r[:, None] * w2[None, :]) * h * (1.0 - h)
            grad_w1 = dh.T @ x
            grad_b1 = dh.sum(axis=0)
            dx = dh @ w1
            masked = dx * disc[q, None] * mask[q]
            grad_disc = np.einsum("ij,ij->i", dx, pre)

            np.add.at(theta, e, -lr * masked)
            np.add.at(diff, q, lr * masked)
            np.add.at(disc, q, -lr * grad_disc)
            w1 -= lr * grad_w1
            b1 -= lr * grad_b1
            w2 -= lr * grad_w2
            b2[0] -= lr * grad_b2

            np.clip(w1, 0.0, None, out=w1)
            np.clip(w2, 0.0, None, out=w2)
            np.clip(theta, 0.0, 1.0, out=theta)
            np.clip(diff, 0.0, 1.0, out=diff)
            np.clip(disc, DISC_MIN, DISC_MAX, out=disc)

        def epoch_loss():
            x = disc[trainer.q, None] * mask[trainer.q] * (theta[trainer.e] - diff[trainer.q])
            h = sigmoid(x @ w1.T + b1)
            p = sigmoid(h @ w2 + b2[0])
            return np.mean(bce(p, trainer.y))

        losses = trainer.run(apply_batch, epoch_loss)
        model = cls(graph, diff, disc, w1, b1, w2, float(b2[0]))
        model.training_losses = losses
        model.historical_states = theta
        return model
