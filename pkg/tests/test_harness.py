"""Metrics, synthetic generation, the session loop, and experiment plumbing."""

import numpy as np
import pytest

from maat.baselines import RandStrategy
from maat.cdm import IrtModel, pretrain, PretrainConfig
from maat.diversity import CoverageState
from maat.environment import Record, SessionState
from maat.errors import (ConfigurationError, ContractViolationError,
                         PoolExhaustedError, UndefinedMetricError)
from maat.harness import (ExperimentConfig, SyntheticSpec, auc_informativeness,
                          generate_synthetic, mann_whitney_auc,
                          run_experiment, run_session, see_metric)
from maat.harness.experiment import aggregate_runs, config_from_dict
from maat.importance import uniform_importance
from maat.quality import select_candidates
from maat.strategy import MaatStrategy


class TestMannWhitneyAuc:
    def test_perfect_separation(self):
        assert mann_whitney_auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0

    def test_all_tied_scores(self):
        assert mann_whitney_auc([0.5] * 6, [1, 0, 1, 0, 1, 0]) == 0.5

    def test_matches_pairwise_oracle(self, rng):
        """Oracle: count wins and half-ties over all positive-negative pairs."""
        for _ in range(30):
            n = int(rng.integers(5, 40))
            scores = np.round(rng.random(n), 2)  # rounding forces ties
            labels = rng.integers(0, 2, n)
            if labels.min() == labels.max():
                continue
            pos = scores[labels == 1]
            neg = scores[labels == 0]
            wins = sum((p > q) + 0.5 * (p == q) for p in pos for q in neg)
            oracle = wins / (len(pos) * len(neg))
            assert mann_whitney_auc(scores, labels) == pytest.approx(oracle, abs=1e-12)

    def test_single_class_undefined(self):
        with pytest.raises(UndefinedMetricError):
            mann_whitney_auc([0.1, 0.2], [1, 1])

    def test_model_wrapper(self, rng):
        model = IrtModel(np.ones(4), np.array([-1.0, 0.0, 1.0, 2.0]))
        records = [Record(0, q, a) for q, a in [(0, 1), (1, 1), (2, 0), (3, 0)]]
        value = auc_informativeness(model, np.array([0.5]), records)
        assert value == 1.0  # higher predictions on the correctly answered pair


class TestSeeMetric:
    def test_exact_match_is_zero(self):
        assert see_metric([[0.5], [1.0]], [[0.5], [1.0]]) == 0.0

    def test_scalar_errors_mean_of_squares(self):
        assert see_metric([[1.0], [-1.0]], [[0.0], [0.0]]) == pytest.approx(1.0)

    def test_vector_case_hand_computed(self):
        estimated = [[1.0, 2.0], [0.0, 0.0]]
        reference = [[0.0, 2.0], [0.0, 3.0]]
        # squared L2 errors: 1.0 and 9.0
        assert see_metric(estimated, reference) == pytest.approx(5.0)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ContractViolationError):
            see_metric([[1.0, 2.0]], [[1.0]])


class TestGenerateSynthetic:
    def test_balanced_design_hits_half(self):
        """Ability equal to difficulty everywhere: correct rate 0.5 +/- 0.02."""
        spec = SyntheticSpec(n_examinees=100, n_questions=120, n_concepts=8,
                             b_sigma=0.0, theta_sigma=0.0, seed=9)
        ds = generate_synthetic(spec)
        assert ds.answers.size >= 10_000
        assert np.mean(ds.answers) == pytest.approx(0.5, abs=0.02)

    def test_strong_population_mostly_correct(self):
        spec = SyntheticSpec(n_examinees=60, n_questions=200, n_concepts=8,
                             theta_mean=5.0, theta_sigma=0.0, b_sigma=0.0,
                             a_clamp=(1.0, 1.0), seed=9)
        ds = generate_synthetic(spec)
        assert np.mean(ds.answers) > 0.95

    def test_deterministic(self):
        spec = SyntheticSpec(n_examinees=30, n_questions=40, n_concepts=6, seed=4)
        a, b = generate_synthetic(spec), generate_synthetic(spec)
        np.testing.assert_array_equal(a.answers, b.answers)
        assert a.graph == b.graph
        assert a.historical_records == b.historical_records

    def test_graph_invariants_and_split(self):
        spec = SyntheticSpec(n_examinees=40, n_questions=50, n_concepts=10,
                             testing_fraction=0.25, seed=3)
        ds = generate_synthetic(spec)
        assert ds.graph.n_questions == 50
        for k in range(10):
            assert len(ds.graph.questions_of(k)) >= 1
        assert len(ds.testing_examinees) == 10
        assert set(ds.testing_examinees).isdisjoint(ds.historical_examinees)

    def test_save_writes_environment_and_truth(self, tmp_path):
        spec = SyntheticSpec(n_examinees=20, n_questions=25, n_concepts=5, seed=2,
                             records_per_historical=10, records_per_testing=15)
        generate_synthetic(spec).save(tmp_path / "ds")
        assert (tmp_path / "ds" / "records.csv").exists()
        assert (tmp_path / "ds" / "concepts.csv").exists()
        assert (tmp_path / "ds" / "ground_truth.json").exists()


@pytest.fixture(scope="module")
def tiny_world():
    """Shared small synthetic world with a pretrained unidimensional model."""
    spec = SyntheticSpec(n_examinees=30, n_questions=40, n_concepts=8,
                         records_per_historical=25, seed=11)
    ds = generate_synthetic(spec)
    model = pretrain("irt", ds.historical_records, ds.graph,
                     PretrainConfig(epochs=25, seed=1))
    importance = uniform_importance(ds.graph)
    return ds, model, importance


class TestRunSession:
    def test_single_step_trace(self, tiny_world):
        ds, model, importance = tiny_world
        strategy = MaatStrategy(ds.graph, importance, k_c=5)
        examinee = ds.testing_examinees[0]
        result = run_session(strategy, model, examinee,
                             ds.answer_oracle(examinee), n_steps=1)
        assert len(result.questions) == 1
        assert len(result.states) == 1
        assert result.session.step == 1

    def test_quality_only_boundary(self, tiny_world):
        """k_c = 1 reduces every pick to the pure quality argmax."""
        ds, model, importance = tiny_world
        strategy = MaatStrategy(ds.graph, importance, k_c=1)
        examinee = ds.testing_examinees[1]
        result = run_session(strategy, model, examinee,
                             ds.answer_oracle(examinee), n_steps=8)
        # replay the loop, asking the quality stage directly at each step
        state = model.init_state()
        session = SessionState.fresh(examinee, model.n_questions)
        for picked in result.questions:
            expected = select_candidates(model, state, session.untested, k_c=1)[0]
            assert picked == expected
            session.administer(Record(examinee, picked,
                                      ds.answer_oracle(examinee)(picked)))
            state = model.update(state, session.records)

    def test_diversity_only_boundary(self, tiny_world):
        """k_c = None considers the whole pool: every pick maximizes the
        coverage marginal gain over all untested questions."""
        ds, model, importance = tiny_world
        strategy = MaatStrategy(ds.graph, importance, k_c=None)
        examinee = ds.testing_examinees[2]
        result = run_session(strategy, model, examinee,
                             ds.answer_oracle(examinee), n_steps=8)
        coverage = CoverageState(ds.graph, importance.as_array(ds.graph.n_concepts))
        for picked in result.questions:
            gains = {q: coverage.marginal_gain(q)
                     for q in set(range(model.n_questions)) - coverage.tested}
            assert coverage.marginal_gain(picked) == pytest.approx(
                max(gains.values()), abs=1e-12)
            coverage.add(picked)

    def test_replay_mode_respects_recorded_pool(self, tiny_world):
        ds, model, importance = tiny_world
        examinee = ds.testing_examinees[0]
        selectable = {1, 5, 9, 12, 20}
        result = run_session(MaatStrategy(ds.graph, importance, k_c=3), model,
                             examinee, ds.answer_oracle(examinee), n_steps=5,
                             selectable=selectable)
        assert set(result.questions) == selectable

    def test_pool_exhaustion(self, tiny_world):
        ds, model, importance = tiny_world
        examinee = ds.testing_examinees[0]
        with pytest.raises(PoolExhaustedError):
            run_session(MaatStrategy(ds.graph, importance, k_c=3), model,
                        examinee, ds.answer_oracle(examinee), n_steps=4,
                        selectable={2, 7, 30})

    def test_no_question_repeats(self, tiny_world):
        ds, model, importance = tiny_world
        examinee = ds.testing_examinees[3]
        result = run_session(RandStrategy(seed=5), model, examinee,
                             ds.answer_oracle(examinee), n_steps=20)
        assert len(set(result.questions)) == 20


SMALL_CONFIG = dict(
    strategies=("maat", "rand"),
    models=("irt",),
    n_steps=6,
    auc_steps=(3, 6),
    seed=17,
    pretrain_overrides={"irt": {"epochs": 15}},
    embedding_epochs=2,
    importance_k_n=4,
)


def small_config(**overrides):
    spec = SyntheticSpec(n_examinees=24, n_questions=30, n_concepts=6,
                         records_per_historical=18, seed=17)
    merged = {**SMALL_CONFIG, "synthetic": spec, **overrides}
    return ExperimentConfig(**merged)


class TestRunExperiment:
    def test_report_shape_and_monotone_coverage(self):
        report = run_experiment(small_config(strategies=("rand",), n_steps=2,
                                             auc_steps=(2,)))
        cov = report.curve("rand", "irt", "cov")
        assert [c.step for c in cov] == [1, 2]
        assert cov[0].mean <= cov[1].mean
        assert all(0.0 <= c.mean <= 1.0 for c in cov)

    def test_rerun_writes_identical_bytes(self, tmp_path):
        cfg = small_config()
        run_experiment(cfg).write(tmp_path / "a")
        run_experiment(cfg).write(tmp_path / "b")
        for name in ("curves.csv", "runs.csv", "report.json"):
            assert (tmp_path / "a" / name).read_bytes() == \
                (tmp_path / "b" / name).read_bytes(), name

    def test_aggregation_reproducible_from_runs_csv(self, tmp_path):
        import csv

        from maat.harness.experiment import RunRow
        report = run_experiment(small_config())
        report.write(tmp_path / "run")
        parsed = []
        with open(tmp_path / "run" / "runs.csv", newline="") as fh:
            for row in csv.DictReader(fh):
                parsed.append(RunRow(row["strategy"], row["model"],
                                     int(row["examinee"]), int(row["step"]),
                                     row["metric"], float(row["value"])))
        recomputed = aggregate_runs(parsed)
        assert recomputed == report.curves

    def test_incompatible_pair_rejected_with_names(self):
        with pytest.raises(ConfigurationError) as err:
            small_config(strategies=("dopt",), models=("irt",))
        assert "dopt" in str(err.value) and "irt" in str(err.value)

    def test_see_reference_is_generator_truth(self):
        report = run_experiment(small_config(strategies=("rand",)))
        see = report.curve("rand", "irt", "see")
        assert len(see) == 6
        assert all(c.mean >= 0 for c in see)

    def test_real_data_replay_never_leaves_recorded_pool(self, tmp_path):
        """Round-trip through CSV: selection must stay within each testing
        examinee's recorded questions."""
        spec = SyntheticSpec(n_examinees=24, n_questions=30, n_concepts=6,
                             records_per_historical=18, records_per_testing=20,
                             seed=17)
        generate_synthetic(spec).save(tmp_path / "ds")
        cfg = small_config(dataset_path=str(tmp_path / "ds"), synthetic=None,
                           min_testing_records=20, n_steps=5)
        report = run_experiment(cfg)
        assert report.n_testing_examinees > 0
        cov = report.curve("maat", "irt", "cov")
        assert len(cov) == 5

    def test_config_from_toml_dict(self):
        cfg = config_from_dict({
            "strategies": ["maat"], "models": ["irt"], "n_steps": 4,
            "k_c": "all", "seed": 3,
            "synthetic": {"n_examinees": 10, "n_questions": 12, "n_concepts": 3},
            "pretrain": {"irt": {"epochs": 5}},
        })
        assert cfg.k_c is None
        assert cfg.synthetic.n_questions == 12
        assert cfg.pretrain_config("irt").epochs == 5

    def test_unknown_config_key_rejected(self):
        with pytest.raises(ConfigurationError):
            config_from_dict({"strategies": ["maat"], "modles": ["irt"]})
