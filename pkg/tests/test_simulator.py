from collections import defaultdict

import pytest

from core.steps.modules.latency import load_preset
from core.steps.modules.simulator import EventKind, Simulator, run_sim
from core.steps.modules.workload import draw_lengths
from models.errors import SimulationError
from models.predictor import FalseAlarmPredictor, OraclePredictor
from models.scheduler import SchedulerConfig
from models.simulation import DeviceFleetConfig, SimulationConfig
from models.workload import WorkloadConfig
from utils.rng import substream


def overall_violation_rate(metrics):
    n = sum(c.n for c in metrics.per_class.values())
    return sum(c.violations for c in metrics.per_class.values()) / n


class TestUnconstrainedLimit:
    def test_speed_is_draft_speed(self):
        config = SimulationConfig(
            n_devices=6, duration_s=10.0, batch_noise_sigma=0.0, fleet=DeviceFleetConfig(rtt_range=(0.0, 0.0))
        )
        result = run_sim(
            config,
            load_preset("instant"),
            SchedulerConfig(dwell_s=0.0),
            WorkloadConfig(rtt_jitter_s=0.0),
            predictor=OraclePredictor(),
            seed=1,
        )
        speeds = {p.device_id: p.draft_speed_s_d for p in result.profiles}
        assert result.records
        for r in result.records:
            assert r.t_queue == 0.0 and r.t_verify == 0.0 and r.t_network == 0.0
            assert r.dispatch == r.completion
            if r.n_verified == r.accepted_len + 1:
                # oracle stops at the first rejection, so nothing drafted goes to waste
                assert r.wasted <= 1
                assert r.achieved_speed >= speeds[r.device_id] * (1 - 1e-9)
                assert not r.violated


class TestDeterminism:
    def test_same_seed_same_trace(self, appendix_model, small_sim):
        model = appendix_model.scaled(4.0)
        a = run_sim(small_sim, model, seed=3)
        b = run_sim(small_sim, model, seed=3)
        assert a.records == b.records
        assert a.metrics == b.metrics

    def test_different_seed_differs(self, appendix_model, small_sim):
        a = run_sim(small_sim, appendix_model, seed=3)
        b = run_sim(small_sim, appendix_model, seed=4)
        assert a.records != b.records

    def test_result_unpacks(self, appendix_model, small_sim):
        records, metrics = run_sim(small_sim, appendix_model, seed=0)
        assert metrics.iterations <= len(records)


class TestInvariants:
    @pytest.fixture
    def result(self, appendix_model, small_sim):
        return run_sim(small_sim, appendix_model.scaled(4.0), seed=5)

    def test_causality(self, result):
        for r in result.records:
            assert r.start_time <= r.arrival <= r.dispatch <= r.completion <= r.delivered
            assert r.t_queue >= 0 and r.t_verify > 0

    def test_batches_do_not_overlap(self, result):
        batches = sorted(result.batches, key=lambda b: b.dispatch)
        for prev, nxt in zip(batches, batches[1:]):
            assert nxt.dispatch >= prev.completion

    def test_device_iterations_are_sequential(self, result):
        by_device = defaultdict(list)
        for r in result.records:
            by_device[r.device_id].append(r)
        for records in by_device.values():
            for prev, nxt in zip(records, records[1:]):
                assert nxt.start_time >= prev.delivered

    def test_token_accounting(self, result):
        for r in result.records:
            assert r.accepted_len + r.wasted == r.k
            assert 1 <= r.n_verified <= r.accepted_len + 1

    def test_batch_membership(self, result):
        sizes = defaultdict(int)
        for r in result.records:
            sizes[r.batch_id] += 1
        for b in result.batches:
            assert sizes[b.batch_id] <= b.size

    def test_self_check(self, result):
        assert result.metrics.self_check_passed

    def test_event_priorities(self):
        assert EventKind.BATCH_COMPLETE < EventKind.RESPONSE_DELIVERED < EventKind.EPOCH_DISPATCH


class TestSessions:
    def test_sessions_commit_their_response_length(self, appendix_model):
        config = SimulationConfig(n_devices=4, duration_s=None, sessions_per_device=2)
        workload = WorkloadConfig(response_len_range=(16, 48))
        result = run_sim(config, appendix_model, workload=workload, seed=2)
        committed = defaultdict(int)
        for r in result.records:
            committed[(r.device_id, r.session)] += r.n_verified
        assert sorted(committed) == [(d, s) for d in range(4) for s in range(2)]
        for (device, session), total in committed.items():
            _, response = draw_lengths(workload, substream(2, "workload", device, session))
            assert total == response

    def test_unservable_memory(self, appendix_model):
        config = SimulationConfig(n_devices=2, duration_s=5.0)
        with pytest.raises(SimulationError):
            run_sim(config, appendix_model, SchedulerConfig(memory_budget_pages=1), seed=0)


class TestSchedulers:
    def test_wisp_not_worse_than_fcfs(self, appendix_model):
        model = appendix_model.scaled(4.0)
        base = dict(n_devices=24, duration_s=30.0)
        wisp = run_sim(SimulationConfig(scheduler="wisp", **base), model, seed=11).metrics
        fcfs = run_sim(SimulationConfig(scheduler="fcfs", **base), model, seed=11).metrics
        assert overall_violation_rate(wisp) <= overall_violation_rate(fcfs) + 0.02

    @pytest.mark.parametrize("scheduler", ["edf", "oracle"])
    def test_other_policies_run(self, appendix_model, scheduler):
        config = SimulationConfig(scheduler=scheduler, n_devices=20, duration_s=5.0)
        result = run_sim(config, appendix_model, seed=0)
        assert result.records and result.metrics.self_check_passed
        if scheduler == "oracle":
            assert max(b.size for b in result.batches) <= 16

    def test_prefix_cache_shrinks_batches(self, appendix_model, small_sim):
        cached = run_sim(small_sim, appendix_model, seed=6).metrics
        uncached = run_sim(small_sim.model_copy(update={"prefix_cache": False}), appendix_model, seed=6).metrics
        assert uncached.batches.mean_predicted_s > cached.batches.mean_predicted_s


class TestPredictor:
    def test_stopping_early_raises_goodput(self, appendix_model, small_sim):
        model = appendix_model.scaled(4.0)
        off = run_sim(small_sim, model, seed=8).metrics
        on = run_sim(small_sim, model, predictor=FalseAlarmPredictor(fpr=0.3, fnr=0.0), seed=8).metrics
        assert on.mean_wasted_tokens < off.mean_wasted_tokens
        assert on.goodput_tps >= off.goodput_tps

    def test_waste_anticorrelates_with_goodput(self, appendix_model):
        config = SimulationConfig(n_devices=16, duration_s=30.0, fleet=DeviceFleetConfig(alpha_range=(0.5, 0.9)))
        metrics = run_sim(config, appendix_model, seed=4).metrics
        assert metrics.wdt_goodput_corr is not None
        assert metrics.wdt_goodput_corr < 0


class TestSpikes:
    def test_spiked_violations_attributed_to_compute(self, appendix_model, small_sim):
        config = small_sim.model_copy(update={"spike_prob": 0.1, "spike_factor": 5.0})
        result = run_sim(config, appendix_model.scaled(2.0), seed=9)
        violated = [r for r in result.records if r.violated]
        spiked = [r for r in violated if r.spike]
        calm = [r for r in violated if not r.spike]
        assert spiked and calm
        share = lambda rows: sum(r.attribution == "compute_dominant" for r in rows) / len(rows)
        assert share(spiked) > share(calm)
        assert result.metrics.batches.spikes > 0


class TestSimulatorObject:
    def test_profiles_can_be_supplied(self, appendix_model, small_sim, profile):
        profiles = [profile.model_copy(update={"device_id": i}) for i in range(3)]
        sim = Simulator(small_sim, appendix_model, profiles=profiles, seed=0)
        result = sim.run()
        assert {r.device_id for r in result.records} == {0, 1, 2}
        assert result.metrics.n_devices == 3

    def test_doomed_relaxation_is_a_simulation_setting(self, appendix_model, small_sim):
        assert Simulator(small_sim, appendix_model, SchedulerConfig()).scheduler_config.relax_doomed
        strict = small_sim.model_copy(update={"relax_doomed": False})
        assert not Simulator(strict, appendix_model, SchedulerConfig()).scheduler_config.relax_doomed

    def test_strict_run_batches_meet_every_deadline(self, appendix_model, small_sim):
        config = small_sim.model_copy(update={"relax_doomed": False})
        result = run_sim(config, appendix_model.scaled(4.0), seed=5)
        batches = {b.batch_id: b for b in result.batches}
        scheduled = [r for r in result.records if not batches[r.batch_id].forced]
        assert scheduled
        for r in scheduled:
            b = batches[r.batch_id]
            assert b.dispatch + b.predicted <= r.deadline + 1e-9
