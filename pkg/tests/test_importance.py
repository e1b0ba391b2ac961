"""Record encoding, embedding training, similarity/density, concept weights."""

import numpy as np
import pytest

from maat.environment import ConceptGraph, Record
from maat.errors import ContractViolationError, TrainingError
from maat.importance import (EmbeddingConfig, ImportanceTable, QuestionEmbedding,
                             all_densities, compute_importance, encode_record,
                             nearest_neighbors, embedding_density,
                             embedding_similarity, train_embeddings,
                             uniform_importance)

from conftest import random_graph


def crafted_embedding(vectors):
    """Embedding with hand-placed output vectors (input side unused)."""
    vectors = np.asarray(vectors, dtype=np.float64)
    cfg = EmbeddingConfig(dim=vectors.shape[1])
    return QuestionEmbedding(np.zeros((cfg.dim, 2 * len(vectors))), vectors, cfg)


class TestEncodeRecord:
    def test_correct_answer_sets_two_positions(self):
        enc = encode_record(Record(0, 3, 1), n_questions=5)
        assert enc.nonzero_positions() == (3, 8)

    def test_incorrect_answer_sets_one_position(self):
        enc = encode_record(Record(0, 3, 0), n_questions=5)
        assert enc.nonzero_positions() == (3,)

    def test_dense_expansion_matches_literal_construction(self):
        """Oracle: build the concatenated one-hot vector from scratch."""
        n = 7
        for q in range(n):
            for a in (0, 1):
                one_hot = np.zeros(n)
                one_hot[q] = 1.0
                literal = np.concatenate([one_hot, one_hot if a else np.zeros(n)])
                np.testing.assert_array_equal(
                    encode_record(Record(0, q, a), n).to_dense(), literal)


def answer_driven_population(seed, n_examinees=400, identical_answers=True):
    """Adaptive-log-like corpus: each twin's answer selects its follow-ups.

    Questions 0 and 1 are the twins.  With identical answers they share
    follow-up sets examinee by examinee; randomizing the answers decouples
    the contexts the two questions appear in.
    """
    follow_up_0 = {1: [2, 3], 0: [4, 5]}
    follow_up_1 = {1: [6, 7], 0: [8, 9]}
    rng = np.random.default_rng(seed)
    records = []
    for e in range(n_examinees):
        a0 = int(rng.random() < 0.5)
        a1 = a0 if identical_answers else int(rng.random() < 0.5)
        records.append(Record(e, 0, a0))
        records.append(Record(e, 1, a1))
        for q in follow_up_0[a0] + follow_up_1[a1]:
            records.append(Record(e, q, int(rng.random() < 0.5)))
        if rng.random() < 0.5:
            records.append(Record(e, 10 + int(rng.random() < 0.5),
                                  int(rng.random() < 0.5)))
    return records, 12


def cosine(u, v):
    return float(u @ v / (np.linalg.norm(u) * np.linalg.norm(v)))


class TestTrainEmbeddings:
    CFG = EmbeddingConfig(dim=10, epochs=20, seed=3, learning_rate=0.05)

    def test_twin_questions_embed_together(self):
        records, n = answer_driven_population(42)
        emb = train_embeddings(records, n, self.CFG)
        assert cosine(emb.vector(0), emb.vector(1)) >= 0.9

    def test_shuffled_answers_weaken_twins(self):
        """Control: same corpus shape with decoupled answers scores lower."""
        records, n = answer_driven_population(42)
        emb = train_embeddings(records, n, self.CFG)
        control_records, _ = answer_driven_population(42, identical_answers=False)
        control = train_embeddings(control_records, n, self.CFG)
        assert (cosine(control.vector(0), control.vector(1))
                < cosine(emb.vector(0), emb.vector(1)))

    def test_objective_improves_over_epochs(self):
        records, n = answer_driven_population(7, n_examinees=120)
        emb = train_embeddings(records, n, EmbeddingConfig(dim=8, epochs=5, seed=1))
        assert emb.epoch_objectives[-1] >= emb.epoch_objectives[0]

    def test_deterministic_given_seed(self):
        records, n = answer_driven_population(11, n_examinees=60)
        cfg = EmbeddingConfig(dim=6, epochs=2, seed=9)
        a = train_embeddings(records, n, cfg)
        b = train_embeddings(records, n, cfg)
        np.testing.assert_array_equal(a.output_vectors, b.output_vectors)
        np.testing.assert_array_equal(a.input_weights, b.input_weights)

    def test_single_record_examinees_skipped(self, caplog):
        records = [Record(0, 0, 1), Record(1, 0, 1), Record(1, 1, 0)]
        emb = train_embeddings(records, 2, EmbeddingConfig(dim=4, epochs=1, seed=0))
        assert emb.n_questions == 2

    def test_all_examinees_too_short_rejected(self):
        records = [Record(e, 0, 1) for e in range(5)]
        with pytest.raises(TrainingError):
            train_embeddings(records, 1, EmbeddingConfig(dim=4, epochs=1, seed=0))


class TestSimilarity:
    def test_identical_embeddings_score_one(self):
        emb = crafted_embedding([[1.0, 2.0], [1.0, 2.0], [0.0, 0.0]])
        assert embedding_similarity(emb, 0, 1, gamma=0.1) == pytest.approx(1.0)

    def test_known_distance_value(self):
        emb = crafted_embedding([[0.0, 0.0], [10.0, 0.0]])
        assert embedding_similarity(emb, 0, 1, gamma=0.1) == \
            pytest.approx(np.exp(-1.0), abs=1e-12)

    def test_distinct_embeddings_score_below_one(self, rng):
        emb = crafted_embedding(rng.normal(0, 1, (6, 3)))
        for i in range(6):
            for j in range(i + 1, 6):
                assert embedding_similarity(emb, i, j) < 1.0

    def test_symmetric_on_random_pairs(self, rng):
        emb = crafted_embedding(rng.normal(0, 1, (8, 4)))
        for _ in range(20):
            i, j = rng.integers(8, size=2)
            assert embedding_similarity(emb, int(i), int(j)) == \
                pytest.approx(embedding_similarity(emb, int(j), int(i)), abs=1e-15)

    def test_bad_gamma_rejected(self):
        emb = crafted_embedding([[0.0, 0.0], [1.0, 1.0]])
        with pytest.raises(ContractViolationError):
            embedding_similarity(emb, 0, 1, gamma=0.0)


class TestDensity:
    def test_coincident_neighbor_gives_one(self):
        emb = crafted_embedding([[0.0, 0.0], [0.0, 0.0], [9.0, 9.0]])
        assert embedding_density(emb, 0, k_n=1, gamma=0.1) == pytest.approx(1.0)

    def test_equidistant_pool_uniform_density(self):
        """Vertices of a regular simplex: every pairwise distance equal."""
        r = np.sqrt(2.0)
        emb = crafted_embedding(np.eye(4))
        for q in range(4):
            assert embedding_density(emb, q, k_n=3, gamma=0.1) == \
                pytest.approx(np.exp(-0.1 * r), abs=1e-12)

    def test_matches_full_sort_oracle(self, rng):
        vectors = rng.normal(0, 1, (15, 5))
        emb = crafted_embedding(vectors)
        for q in range(15):
            dist = np.linalg.norm(vectors - vectors[q], axis=1)
            order = sorted((float(dist[j]), j) for j in range(15) if j != q)
            expected = np.mean([np.exp(-0.1 * d) for d, _ in order[:4]])
            assert embedding_density(emb, q, k_n=4, gamma=0.1) == \
                pytest.approx(expected, abs=1e-12)
            assert nearest_neighbors(emb, q, 4) == [j for _, j in order[:4]]

    def test_neighbor_ties_break_by_id(self):
        emb = crafted_embedding([[0.0], [1.0], [-1.0], [1.0]])
        # questions 1, 2, 3 all at distance 1 from question 0
        assert nearest_neighbors(emb, 0, 2) == [1, 2]

    def test_translation_invariance(self, rng):
        vectors = rng.normal(0, 1, (12, 4))
        shifted = vectors + np.array([5.0, -3.0, 2.0, 100.0])
        a = all_densities(crafted_embedding(vectors), k_n=5)
        b = all_densities(crafted_embedding(shifted), k_n=5)
        np.testing.assert_allclose(a, b, atol=1e-9)

    def test_pool_too_small_rejected(self):
        emb = crafted_embedding([[0.0], [1.0]])
        with pytest.raises(ContractViolationError):
            embedding_density(emb, 0, k_n=2)

    def test_vectorized_densities_match_scalar(self, rng):
        emb = crafted_embedding(rng.normal(0, 1, (10, 3)))
        dense = all_densities(emb, k_n=3, gamma=0.2)
        for q in range(10):
            assert dense[q] == pytest.approx(
                embedding_density(emb, q, k_n=3, gamma=0.2), abs=1e-12)


class TestComputeImportance:
    def test_single_question_concept_equals_its_density(self, rng):
        graph = ConceptGraph([(0, 0), (1, 1), (2, 1), (3, 1)], 4, 2)
        emb = crafted_embedding(rng.normal(0, 1, (4, 3)))
        table = compute_importance(emb, graph, k_n=2, gamma=0.1)
        densities = all_densities(emb, k_n=2, gamma=0.1)
        assert table.weights[0] == pytest.approx(densities[0], abs=1e-12)

    def test_constant_densities_constant_weights(self):
        graph = ConceptGraph([(0, 0), (1, 0), (2, 1), (3, 1)], 4, 2)
        emb = crafted_embedding(np.eye(4))  # all equidistant
        table = compute_importance(emb, graph, k_n=3, gamma=0.1)
        values = list(table.weights.values())
        assert values[0] == pytest.approx(values[1], abs=1e-12)

    def test_matches_independent_recompute(self, rng):
        graph = random_graph(rng, 12, 4)
        emb = crafted_embedding(rng.normal(0, 1, (12, 5)))
        table = compute_importance(emb, graph, k_n=4, gamma=0.3)
        for k in range(4):
            linked = sorted(graph.questions_of(k))
            expected = np.mean([embedding_density(emb, q, k_n=4, gamma=0.3)
                                for q in linked])
            assert table.weights[k] == pytest.approx(expected, abs=1e-12)

    def test_weights_strictly_positive(self, rng):
        graph = random_graph(rng, 10, 3)
        emb = crafted_embedding(rng.normal(0, 5, (10, 4)))
        table = compute_importance(emb, graph, k_n=4)
        assert all(w > 0 for w in table.weights.values())

    def test_table_round_trip(self, tmp_path):
        table = ImportanceTable({0: 0.5, 1: 1.25}, metadata={"gamma": 0.1})
        table.save(tmp_path / "importance.json")
        loaded = ImportanceTable.load(tmp_path / "importance.json")
        assert loaded.weights == table.weights
        assert loaded.metadata["gamma"] == 0.1

    def test_nonpositive_weight_rejected(self):
        with pytest.raises(ContractViolationError):
            ImportanceTable({0: 0.0})

    def test_uniform_importance_covers_all_concepts(self, small_graph):
        table = uniform_importance(small_graph)
        assert set(table.weights) == {0, 1, 2}
