import numpy as np
import pytest

from core.steps.modules.controller import (
    build_predictor,
    draft_until_stop,
    empirical_wdt,
    extract_features,
    first_rejection,
    per_position_fp,
    run_policy_trial,
    stop_distribution,
    trial_waste,
    wdt_bound,
)
from core.steps.modules.workload import gen_draft_window
from models.errors import ContractError
from models.predictor import (
    ConstantPredictor,
    DraftPolicyOutcome,
    FalseAlarmPredictor,
    OraclePredictor,
    PolicyTrial,
    PredictorSettings,
)
from models.workload import DraftFeatures, DraftStep
from utils.rng import substream


def step(accepted: bool, latent: float = 0.7) -> DraftStep:
    features = DraftFeatures(confidence=0.5, entropy=1.0, margin=0.4, stddev=0.8)
    return DraftStep(latent_accept_prob=latent, features=features, token=0, verify_uniform=0.1 if accepted else 0.95)


def windows(profile, n, k_max=8, seed=0):
    """``n`` windows of ``k_max`` steps with per-window difficulty."""
    rng = substream(seed, "workload", 0)
    difficulty = np.repeat(rng.uniform(0.2, 0.8, n), k_max)
    steps = gen_draft_window(profile, difficulty, n * k_max, rng)
    return [steps[i * k_max:(i + 1) * k_max] for i in range(n)]


class TestDraftUntilStop:
    def test_extract_features(self):
        assert extract_features(step(True)).tolist() == [0.5, 1.0, 0.4, 0.8]

    def test_fixed_window_without_predictor(self):
        outcome = draft_until_stop(iter([step(True)] * 10), None, 6)
        assert outcome == DraftPolicyOutcome(k_theta=6, stopped_by_predictor=False)

    def test_always_reject_stops_after_first(self):
        outcome = draft_until_stop(iter([step(True)] * 5), ConstantPredictor(False), 5)
        assert outcome == DraftPolicyOutcome(k_theta=1, stopped_by_predictor=True)

    def test_oracle_stops_at_first_rejection(self):
        window = [step(True), step(True), step(False), step(True)]
        outcome = draft_until_stop(iter(window), OraclePredictor(), 4)
        assert outcome.k_theta == 3 and outcome.stopped_by_predictor

    def test_short_source_ends_early(self):
        outcome = draft_until_stop(iter([step(True)] * 2), OraclePredictor(), 8)
        assert outcome.k_theta == 2 and not outcome.stopped_by_predictor

    def test_bad_inputs(self):
        with pytest.raises(ContractError):
            draft_until_stop(iter([step(True)]), None, 0)
        with pytest.raises(ContractError):
            draft_until_stop(iter([]), None, 4)


class TestTrials:
    def test_first_rejection(self):
        assert first_rejection([step(True), step(False)]) == 2
        assert first_rejection([step(True), step(True)]) == 3

    def test_waste_conventions(self):
        # predictor stopped at the true rejection: the stopping token is the only waste
        stopped = PolicyTrial(DraftPolicyOutcome(3, True), stop_index=3, k_max=8)
        assert trial_waste(stopped, "system") == 1
        assert trial_waste(stopped, "launch") == 0
        # false alarm missed the rejection at 2 and drafted to the end
        missed = PolicyTrial(DraftPolicyOutcome(8, False), stop_index=2, k_max=8)
        assert trial_waste(missed, "system") == 7
        assert trial_waste(missed, "launch") == 7
        with pytest.raises(ContractError):
            trial_waste(stopped, "other")

    def test_empirical_wdt_scales_with_tau(self):
        trials = [PolicyTrial(DraftPolicyOutcome(8, False), stop_index=5, k_max=8)] * 4
        assert empirical_wdt(trials) == 4.0
        assert empirical_wdt(trials, tau_d=0.02) == pytest.approx(0.08)
        with pytest.raises(ContractError):
            empirical_wdt([])

    def test_oracle_wastes_at_most_the_stopping_token(self, profile):
        for window in windows(profile, 500):
            trial = run_policy_trial(window, OraclePredictor())
            assert trial_waste(trial, "system") <= 1
            assert trial_waste(trial, "launch") == 0


class TestFalseAlarmWaste:
    def test_lower_fpr_wastes_less_and_respects_bound(self, profile):
        k_max = 8
        data = windows(profile, 30_000, k_max=k_max, seed=42)
        low = [run_policy_trial(w, FalseAlarmPredictor(0.2)) for w in data]
        high = [run_policy_trial(w, FalseAlarmPredictor(0.4)) for w in data]

        for a, b in zip(low, high):
            assert a.stop_index == b.stop_index
            assert a.policy.k_theta <= b.policy.k_theta

        assert empirical_wdt(low) <= empirical_wdt(high)
        assert empirical_wdt(low, convention="launch") <= empirical_wdt(high, convention="launch")

        for trials in (low, high):
            waste = np.array([trial_waste(t, "launch") for t in trials])
            sigma = waste.std(ddof=1) / np.sqrt(len(waste))
            assert waste.mean() <= wdt_bound(trials, k_max) + 3 * sigma

    def test_per_position_false_positive_rate(self, profile):
        data = windows(profile, 20_000, seed=7)
        trials = [run_policy_trial(w, FalseAlarmPredictor(0.3)) for w in data]
        fp = per_position_fp(trials, 8)
        dist = stop_distribution(trials, 8)
        assert fp[0] == pytest.approx(0.3, abs=0.03)
        assert dist.sum() <= 1.0
        assert dist[0] > dist[-1]

    def test_accept_sets_are_nested(self, profile):
        steps = [s for w in windows(profile, 500, seed=3) for s in w]
        for s in steps:
            if FalseAlarmPredictor(0.1).predict_accept(s):
                assert FalseAlarmPredictor(0.5).predict_accept(s)
            if s.accepted:
                assert FalseAlarmPredictor(0.1).predict_accept(s)


class TestBuildPredictor:
    @pytest.mark.parametrize(
        "mode, expected",
        [("oracle", OraclePredictor), ("always_accept", ConstantPredictor), ("false_alarm", FalseAlarmPredictor)],
    )
    def test_modes(self, mode, expected):
        assert isinstance(build_predictor(PredictorSettings(mode=mode), seed=0), expected)

    def test_off(self):
        assert build_predictor(PredictorSettings(mode="off"), seed=0) is None
