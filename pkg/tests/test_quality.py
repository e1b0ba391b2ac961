"""Expected-model-change scoring and candidate selection."""

import numpy as np
import pytest
from scipy.stats import spearmanr

from maat.cdm import IrtModel, UpdateConfig
from maat.cdm.base import DiagnosisModel
from maat.environment import Record
from maat.errors import ContractViolationError
from maat.quality import emc_scores, expected_model_change, select_candidates


class StubModel(DiagnosisModel):
    """Fixed predictions and gradients, for scoring arithmetic in isolation."""

    kind = "stub"

    def __init__(self, probabilities, gradients):
        self.p = np.asarray(probabilities, dtype=np.float64)
        self.g = np.asarray(gradients, dtype=np.float64)  # (n, state_dim)
        self.n_questions = len(self.p)
        self.state_dim = self.g.shape[1]
        self.training_losses = []

    def init_state(self):
        return np.zeros(self.state_dim)

    def predict(self, state, question):
        return float(self.p[question])

    def loss_gradient(self, state, question, answer):
        # same magnitude either way; sign flips with the hypothesized answer
        return self.g[question] * (1.0 if answer == 0 else -1.0)

    def _state_gradient_batch(self, state, questions, answers):
        raise NotImplementedError

    def _params_payload(self):
        return {}


class TestExpectedModelChange:
    def test_zero_gradients_zero_score(self):
        model = StubModel([0.3, 0.7], np.zeros((2, 3)))
        assert expected_model_change(model, model.init_state(), 0).score == 0.0

    def test_irt_balanced_point_scores_half(self):
        """a = 1 at p = 0.5: both hypothesized gradients have norm 1/2."""
        model = IrtModel(np.array([1.0]), np.array([0.4]))
        result = expected_model_change(model, np.array([0.4]), 0)
        assert result.question == 0
        assert result.score == pytest.approx(0.5)

    def test_expectation_weights_by_prediction(self):
        model = StubModel([0.25], np.array([[2.0]]))
        # p*|g1| + (1-p)*|g0| = 0.25*2 + 0.75*2 = 2 (symmetric magnitudes)
        assert expected_model_change(model, model.init_state(), 0).score == \
            pytest.approx(2.0)

    def test_scaling_gradients_scales_score_linearly(self):
        base = StubModel([0.3, 0.6], np.array([[1.0, 2.0], [0.5, 0.5]]))
        scaled = StubModel([0.3, 0.6], 3.0 * np.array([[1.0, 2.0], [0.5, 0.5]]))
        s_base = emc_scores(base, base.init_state(), [0, 1])
        s_scaled = emc_scores(scaled, scaled.init_state(), [0, 1])
        np.testing.assert_allclose(s_scaled, 3.0 * s_base, rtol=1e-12)
        # ranking is invariant under the uniform scaling
        assert list(np.argsort(-s_base)) == list(np.argsort(-s_scaled))

    def test_batch_scores_match_scalar_op(self, rng):
        model = IrtModel(np.clip(rng.lognormal(0, 0.3, 15), 0.5, 2.5),
                         rng.normal(0, 1, 15))
        state = np.array([0.3])
        batch = emc_scores(model, state, range(15))
        for q in range(15):
            assert batch[q] == pytest.approx(
                expected_model_change(model, state, q).score, abs=1e-12)

    def test_irt_score_peaks_near_half_probability(self):
        """Among equal-discrimination questions the score is largest where
        the predicted probability is closest to 1/2 (checked on a grid)."""
        b_grid = np.linspace(-3, 3, 61)
        model = IrtModel(np.ones(61), b_grid)
        scores = emc_scores(model, np.array([0.0]), range(61))
        best = int(np.argmax(scores))
        assert abs(model.b[best]) == pytest.approx(0.0)
        p = model.predict_many(np.array([0.0]), range(61))
        assert abs(p[best] - 0.5) == min(abs(p - 0.5))


class TestRetrainingFidelity:
    def test_gradient_norm_tracks_retraining_displacement(self, rng):
        """Oracle: score each question by the expected state displacement of
        an actual refit; rank correlation with the gradient-norm score must
        be at least 0.8 on a 50-question pool at 5 ability levels."""
        n_questions = 50
        model = IrtModel(np.clip(rng.lognormal(0, 0.3, n_questions), 0.5, 2.5),
                         rng.normal(0, 1, n_questions))
        cfg = UpdateConfig()
        for theta0 in rng.normal(0, 1.2, 5):
            state = np.array([theta0])
            by_gradient = emc_scores(model, state, range(n_questions))
            by_retraining = np.zeros(n_questions)
            for q in range(n_questions):
                p = model.predict(state, q)
                moved_1 = model.update(state, [Record(0, q, 1)], cfg)
                moved_0 = model.update(state, [Record(0, q, 0)], cfg)
                by_retraining[q] = (p * np.linalg.norm(moved_1 - state)
                                    + (1 - p) * np.linalg.norm(moved_0 - state))
            rho = spearmanr(by_gradient, by_retraining).statistic
            assert rho >= 0.8


class TestSelectCandidates:
    def _model(self, rng, n=10):
        return IrtModel(np.clip(rng.lognormal(0, 0.3, n), 0.5, 2.5),
                        rng.normal(0, 1, n))

    def test_top_one_is_argmax(self, rng):
        model = self._model(rng)
        state = np.array([0.2])
        picked = select_candidates(model, state, range(10), k_c=1)
        scores = emc_scores(model, state, range(10))
        assert picked == [int(np.argmax(scores))]

    def test_saturation_returns_whole_pool_sorted(self, rng):
        model = self._model(rng)
        state = np.array([-0.5])
        picked = select_candidates(model, state, range(10), k_c=50)
        assert len(picked) == 10
        scores = emc_scores(model, state, picked)
        assert all(a >= b for a, b in zip(scores, scores[1:]))

    def test_top_three_matches_exhaustive_sort(self, rng):
        model = self._model(rng)
        state = np.array([0.0])
        scores = emc_scores(model, state, range(10))
        oracle = [q for q, _ in sorted(enumerate(scores), key=lambda t: (-t[1], t[0]))]
        assert select_candidates(model, state, range(10), k_c=3) == oracle[:3]

    def test_ties_break_by_ascending_id(self):
        model = StubModel([0.5, 0.5, 0.5], np.ones((3, 2)))
        assert select_candidates(model, model.init_state(), [2, 0, 1], k_c=2) == [0, 1]

    def test_subset_and_uniqueness(self, rng):
        model = self._model(rng)
        untested = {1, 4, 7, 9}
        picked = select_candidates(model, np.array([0.1]), untested, k_c=3)
        assert set(picked) <= untested
        assert len(set(picked)) == len(picked)

    def test_empty_pool_rejected(self, rng):
        model = self._model(rng)
        with pytest.raises(ContractViolationError):
            select_candidates(model, np.array([0.0]), [], k_c=1)

    def test_bad_k_rejected(self, rng):
        model = self._model(rng)
        with pytest.raises(ContractViolationError):
            select_candidates(model, np.array([0.0]), [1, 2], k_c=0)
