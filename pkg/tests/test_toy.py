"""Two-component 2-D demonstration: few-shot adaptation vs from-scratch EM."""

import numpy as np
import pytest

from patchprior.toy import GENERIC_TRUTH, TARGET_TRUTH, mean_error, run_trial


class TestMeanError:
    def test_zero_for_exact_match(self):
        assert mean_error(GENERIC_TRUTH, GENERIC_TRUTH) == pytest.approx(0.0, abs=1e-12)

    def test_permutation_invariant(self):
        flipped = type(GENERIC_TRUTH)(
            weights=GENERIC_TRUTH.weights[::-1].copy(),
            means=GENERIC_TRUTH.means[::-1].copy(),
            covariances=GENERIC_TRUTH.covariances[::-1].copy())
        assert mean_error(flipped, GENERIC_TRUTH) == pytest.approx(0.0, abs=1e-12)

    def test_positive_for_distinct_models(self):
        assert mean_error(GENERIC_TRUTH, TARGET_TRUTH) > 0.5


class TestTrial:
    def test_single_trial_structure(self):
        trial = run_trial(seed=0)
        assert trial.generic_points.shape == (400, 2)
        assert trial.target_points.shape == (20, 2)
        assert trial.scratch_error > 0.0
        assert trial.adapted_error > 0.0
        for model in (trial.generic_model, trial.scratch_model, trial.adapted_model):
            assert model.n_components == 2
            assert model.dim == 2

    def test_deterministic_per_seed(self):
        a = run_trial(seed=3)
        b = run_trial(seed=3)
        assert a.scratch_error == b.scratch_error
        assert a.adapted_error == b.adapted_error
        assert np.array_equal(a.adapted_model.means, b.adapted_model.means)

    def test_adaptation_usually_beats_scratch(self):
        wins = sum(run_trial(seed).adapted_error < run_trial(seed).scratch_error
                   for seed in range(4))
        assert wins >= 3
