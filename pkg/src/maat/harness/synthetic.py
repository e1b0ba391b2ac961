"""Synthetic testing environments with known ground-truth parameters.

Stands in for real response data at desk scale: question parameters and
true abilities are sampled from configurable distributions, the
question-concept relation is random with Zipf-skewed concept popularity,
and every answer is a Bernoulli draw from the generator model, so the
simulated-estimate-error metric has an exact reference.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Callable

import numpy as np

from ..cdm.base import sigmoid
from ..environment import ConceptGraph, Environment, Record, default_seed, save_dataset
from ..errors import ConfigurationError


@dataclass(frozen=True)
class SyntheticSpec:
    n_examinees: int = 200
    n_questions: int = 300
    n_concepts: int = 20
    concepts_per_question: tuple[int, int] = (1, 3)
    model_kind: str = "irt"
    latent_dim: int = 3          # mirt generator only
    a_sigma: float = 0.3         # discrimination ~ LogNormal(0, a_sigma)
    a_clamp: tuple[float, float] = (0.5, 2.5)
    b_mean: float = 0.0
    b_sigma: float = 1.0
    theta_mean: float = 0.0
    theta_sigma: float = 1.0
    zipf_exponent: float = 0.7
    testing_fraction: float = 0.25
    records_per_historical: int = 40
    records_per_testing: int = 150
    seed: int | None = None

    def __post_init__(self):
        if min(self.n_examinees, self.n_questions, self.n_concepts) < 1:
            raise ConfigurationError("population counts must be >= 1")
        lo, hi = self.concepts_per_question
        if not (1 <= lo <= hi <= self.n_concepts):
            raise ConfigurationError(
                f"concepts_per_question range {self.concepts_per_question} is invalid")
        if self.model_kind not in ("irt", "mirt"):
            raise ConfigurationError(f"unsupported generator kind {self.model_kind!r}")


@dataclass
class SyntheticDataset:
    """Generated environment plus everything the generator knows."""

    spec: SyntheticSpec
    graph: ConceptGraph
    answers: np.ndarray                 # (n_examinees, n_questions) in {0, 1}
    true_theta: np.ndarray              # (n_examinees, state_dim)
    true_params: dict[str, np.ndarray]  # question-side generator parameters
    historical_examinees: tuple[int, ...]
    testing_examinees: tuple[int, ...]
    historical_records: tuple[Record, ...]
    testing_records: tuple[Record, ...] = ()

    def answer_oracle(self, examinee: int) -> Callable[[int], int]:
        row = self.answers[examinee]
        return lambda question: int(row[question])

    def eval_records(self, examinee: int) -> list[Record]:
        """Ground-truth answers over the whole pool for one examinee."""
        row = self.answers[examinee]
        return [Record(examinee, q, int(row[q])) for q in range(self.graph.n_questions)]

    def to_environment(self) -> Environment:
        records = tuple(sorted(self.historical_records + self.testing_records,
                               key=lambda r: (r.examinee, r.question)))
        return Environment(graph=self.graph, records=records,
                           n_examinees=self.spec.n_examinees)

    def save(self, path: str | Path) -> None:
        """Write records.csv / concepts.csv plus the generator ground truth."""
        root = Path(path)
        save_dataset(self.to_environment(), root)
        truth = {
            "spec": asdict(self.spec),
            "true_theta": self.true_theta.tolist(),
            "true_params": {k: v.tolist() for k, v in self.true_params.items()},
            "historical_examinees": list(self.historical_examinees),
            "testing_examinees": list(self.testing_examinees),
        }
        (root / "ground_truth.json").write_text(json.dumps(truth))


def _random_graph(rng: np.random.Generator, spec: SyntheticSpec) -> ConceptGraph:
    popularity = 1.0 / np.arange(1, spec.n_concepts + 1) ** spec.zipf_exponent
    popularity /= popularity.sum()
    lo, hi = spec.concepts_per_question
    pairs: set[tuple[int, int]] = set()
    for q in range(spec.n_questions):
        n_links = int(rng.integers(lo, hi + 1))
        concepts = rng.choice(spec.n_concepts, size=n_links, replace=False, p=popularity)
        pairs.update((q, int(k)) for k in concepts)
    covered = {k for _, k in pairs}
    for k in range(spec.n_concepts):
        if k not in covered:
            pairs.add((int(rng.integers(spec.n_questions)), k))
    return ConceptGraph(pairs, spec.n_questions, spec.n_concepts)


def generate_synthetic(spec: SyntheticSpec) -> SyntheticDataset:
    seed = spec.seed if spec.seed is not None else default_seed()
    rng = np.random.default_rng(seed)

    graph = _random_graph(rng, spec)

    if spec.model_kind == "irt":
        a = np.clip(rng.lognormal(0.0, spec.a_sigma, spec.n_questions), *spec.a_clamp)
        b = rng.normal(spec.b_mean, spec.b_sigma, spec.n_questions)
        theta = rng.normal(spec.theta_mean, spec.theta_sigma, (spec.n_examinees, 1))
        probabilities = sigmoid(a[None, :] * (theta - b[None, :]))
        true_params = {"discrimination": a, "difficulty": b}
    else:  # mirt
        dim = spec.latent_dim
        a = np.clip(rng.lognormal(0.0, spec.a_sigma, (spec.n_questions, dim)),
                    *spec.a_clamp) / np.sqrt(dim)
        d = rng.normal(spec.b_mean, spec.b_sigma, spec.n_questions)
        theta = rng.normal(spec.theta_mean, spec.theta_sigma, (spec.n_examinees, dim))
        probabilities = sigmoid(theta @ a.T + d[None, :])
        true_params = {"discrimination": a, "intercept": d}

    answers = (rng.random((spec.n_examinees, spec.n_questions)) < probabilities
               ).astype(np.int8)

    n_testing = max(1, round(spec.n_examinees * spec.testing_fraction))
    testing = np.sort(rng.choice(spec.n_examinees, size=n_testing, replace=False))
    testing_set = set(int(e) for e in testing)
    historical = tuple(e for e in range(spec.n_examinees) if e not in testing_set)

    def sample_records(examinees, per_examinee):
        out = []
        size = min(per_examinee, spec.n_questions)
        for e in examinees:
            qs = np.sort(rng.choice(spec.n_questions, size=size, replace=False))
            out.extend(Record(int(e), int(q), int(answers[e, q])) for q in qs)
        return tuple(out)

    historical_records = sample_records(historical, spec.records_per_historical)
    testing_records = sample_records(sorted(testing_set), spec.records_per_testing)

    return SyntheticDataset(
        spec=spec,
        graph=graph,
        answers=answers,
        true_theta=theta,
        true_params=true_params,
        historical_examinees=historical,
        testing_examinees=tuple(int(e) for e in testing),
        historical_records=historical_records,
        testing_records=testing_records,
    )
