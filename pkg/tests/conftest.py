import numpy as np
import pytest

from maat.environment import ConceptGraph


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_graph():
    """4 questions x 3 concepts with overlapping links."""
    pairs = [(0, 0), (1, 0), (1, 1), (2, 1), (2, 2), (3, 2)]
    return ConceptGraph(pairs, n_questions=4, n_concepts=3)


def random_graph(rng, n_questions, n_concepts, max_links=3):
    """Random relation where every question and concept stays linked."""
    pairs = set()
    cap = min(max_links, n_concepts)
    for q in range(n_questions):
        n_links = int(rng.integers(1, cap + 1))
        for k in rng.choice(n_concepts, size=n_links, replace=False):
            pairs.add((q, int(k)))
    for k in range(n_concepts):
        if not any(p[1] == k for p in pairs):
            pairs.add((int(rng.integers(n_questions)), k))
    return ConceptGraph(pairs, n_questions, n_concepts)


def write_dataset(path, records, relation):
    """Write raw CSV rows (original ids) into a dataset directory."""
    path.mkdir(parents=True, exist_ok=True)
    with open(path / "records.csv", "w") as fh:
        fh.write("examinee_id,question_id,answer\n")
        for e, q, a in records:
            fh.write(f"{e},{q},{a}\n")
    with open(path / "concepts.csv", "w") as fh:
        fh.write("question_id,concept_id\n")
        for q, k in relation:
            fh.write(f"{q},{k}\n")
    return path
