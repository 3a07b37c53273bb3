import pytest

from core.steps.modules.metrics import (
    attribute_violations,
    capacity,
    capacity_table,
    compute_metrics,
    goodput,
    record_self_check,
    summary_table,
    write_summary,
    write_trace,
)
from core.steps.modules.simulator import BatchRecord
from core.steps.modules.speculative import achieved_speed
from models.errors import ContractError
from models.simulation import ClassMetrics, DeviceFleetConfig, IterationRecord, SLOClass, SimMetrics
from utils.helpers import read_json, read_rows

_ids = iter(range(10**6))


def record(
    t_verify=0.05,
    completion=1.0,
    batch_id=0,
    violated=None,
    n_verified=4,
    device_id=0,
    slo_class="class1",
    slo_speed=2.0,
    arrival=0.5,
    k=5,
    accepted_len=3,
):
    t_draft, t_network = 0.1, 0.04
    t_queue = max(0.0, completion - t_verify - arrival)
    speed = achieved_speed(n_verified, t_draft, t_network, t_queue, t_verify)
    return IterationRecord(
        run_id="test",
        request_id=next(_ids),
        device_id=device_id,
        session=0,
        iteration=0,
        slo_class=slo_class,
        slo_speed=slo_speed,
        start_time=arrival - t_draft - t_network / 2,
        arrival=arrival,
        dispatch=completion - t_verify,
        completion=completion,
        delivered=completion + t_network / 2,
        deadline=arrival + 1.0,
        t_draft=t_draft,
        t_network=t_network,
        t_queue=t_queue,
        t_verify=t_verify,
        k=k,
        accepted_len=accepted_len,
        wasted=k - accepted_len,
        n_verified=n_verified,
        achieved_speed=speed,
        violated=speed < slo_speed if violated is None else violated,
        batch_id=batch_id,
        tau_d=0.02,
    )


def metrics_with(rates, scheduler="wisp", n_devices=8):
    per_class = {
        name: ClassMetrics(name=name, speed=2.0, n=100, violations=int((rate or 0) * 100), violation_rate=rate)
        for name, rate in rates.items()
    }
    return SimMetrics(
        run_id="x",
        scheduler=scheduler,
        n_devices=n_devices,
        seed=0,
        span_s=10.0,
        steady_start_s=1.0,
        iterations=100,
        per_class=per_class,
        goodput_tps=1.0,
        per_device_goodput={},
        mean_wdt_s=0.0,
        mean_wasted_tokens=0.0,
        committed_fraction=0.5,
        born_violated=0,
    )


class TestGoodput:
    def test_tokens_over_span(self):
        records = [record(n_verified=25, completion=1.0 + i) for i in range(4)]
        assert goodput(records, span=10.0) == pytest.approx(10.0)

    def test_default_span(self):
        records = [record(n_verified=50, arrival=0.5, completion=1.0), record(n_verified=50, arrival=5.0, completion=9.0)]
        span = records[1].delivered - records[0].start_time
        assert goodput(records) == pytest.approx(100 / span)

    def test_empty_and_degenerate(self):
        assert goodput([]) == 0.0
        with pytest.raises(ContractError):
            goodput([record()], span=0.0)


class TestAttribution:
    def history(self, n=20):
        return [record(t_verify=0.05, completion=1.0 + 0.1 * i, batch_id=i, violated=False) for i in range(n)]

    def test_spike_is_compute_dominant(self):
        records = self.history() + [record(t_verify=0.10, completion=5.0, batch_id=99, violated=True)]
        assert attribute_violations(records)[-1] == "compute_dominant"

    def test_normal_verify_is_queue_dominant(self):
        records = self.history() + [record(t_verify=0.05, completion=5.0, batch_id=99, violated=True)]
        assert attribute_violations(records)[-1] == "queue_dominant"

    def test_unviolated_records_get_none(self):
        labels = attribute_violations(self.history() + [record(t_verify=0.5, completion=5.0, batch_id=99, violated=False)])
        assert set(labels) == {"none"}

    def test_no_history_is_queue_dominant(self):
        assert attribute_violations([record(t_verify=1.0, violated=True)]) == ["queue_dominant"]

    def test_batch_mates_do_not_count_as_history(self):
        mates = [record(t_verify=0.10, completion=5.0, batch_id=7, violated=True) for _ in range(30)]
        labels = attribute_violations(self.history() + mates)
        assert labels[-30:] == ["compute_dominant"] * 30

    def test_labels_follow_input_order(self):
        records = self.history()
        spike = record(t_verify=0.10, completion=5.0, batch_id=99, violated=True)
        assert attribute_violations([spike] + records)[0] == "compute_dominant"

    def test_batches_mode_uses_one_entry_per_batch(self):
        records = [record(t_verify=0.05, completion=1.0, batch_id=0, violated=False) for _ in range(10)]
        records += [record(t_verify=0.20, completion=2.0, batch_id=1, violated=False)]
        records += [record(t_verify=0.12, completion=3.0, batch_id=2, violated=True)]
        # events: MA = (10 * 0.05 + 0.20) / 11 -> rho ~ 1.9; batches: MA = 0.125 -> rho ~ 0.96
        assert attribute_violations(records, mode="events")[-1] == "compute_dominant"
        assert attribute_violations(records, mode="batches")[-1] == "queue_dominant"

    def test_parameter_checks(self):
        with pytest.raises(ContractError):
            attribute_violations([], window_W=0)
        with pytest.raises(ContractError):
            attribute_violations([], rho_threshold=1.0)
        with pytest.raises(ContractError):
            attribute_violations([], mode="other")


class TestSelfCheck:
    def test_consistent_records_pass(self):
        assert record_self_check([record(completion=1.0 + i) for i in range(5)])

    def test_tampered_speed_fails(self):
        r = record()
        r.achieved_speed += 1.0
        assert not record_self_check([r])

    def test_tampered_flag_fails(self):
        r = record()
        r.violated = not r.violated
        assert not record_self_check([r])


class TestCapacity:
    def step(self, limit):
        return lambda n: 0.0 if n <= limit else 0.5

    def test_step_function(self):
        sweep = [4, 8, 16, 24, 32]
        assert capacity(self.step(20), sweep, 0.05) == 16
        assert capacity(self.step(20), sweep, 0.05, bisect=True) == 20
        assert capacity(self.step(2), sweep, 0.05) == 0
        assert capacity(self.step(2), sweep, 0.05, bisect=True) == 2

    def test_epsilon_one_admits_everything(self):
        assert capacity(self.step(0), [4, 8, 64], 1.0) == 64

    def test_unmeasured_points_never_pass(self):
        assert capacity(lambda n: None, [4, 8], 0.01) == 0
        rates = {1: None, 2: None, 4: 0.5, 8: None}
        assert capacity(rates.__getitem__, [1, 2, 4, 8], 0.1) == 0
        rates = {1: 0.0, 2: None, 4: 0.0, 8: None}
        assert capacity(rates.__getitem__, [1, 2, 4, 8], 0.1) == 4
        assert capacity(rates.__getitem__, [1, 2, 4, 8], 0.1, bisect=True) == 4

    def test_bad_inputs(self):
        with pytest.raises(ContractError):
            capacity(self.step(1), [4], 0.0)
        with pytest.raises(ContractError):
            capacity(self.step(1), [], 0.1)

    def test_capacity_table(self):
        sweep = {
            "wisp": {4: metrics_with({"class1": 0.0, "class2": 0.01}), 8: metrics_with({"class1": 0.02, "class2": 0.2})},
            "fcfs": {4: metrics_with({"class1": 0.1, "class2": 0.3}), 8: metrics_with({"class1": 0.4, "class2": 0.5})},
        }
        rows = capacity_table(sweep, ["class1", "class2"], 0.05)
        table = {(r["scheduler"], r["class"]): (r["capacity"], r["violation_at_capacity"]) for r in rows}
        assert table[("wisp", "class1")] == (8, 0.02)
        assert table[("wisp", "class2")] == (4, 0.01)
        assert table[("fcfs", "class1")] == (0, None)


class TestComputeMetrics:
    def fleet(self):
        return DeviceFleetConfig(slo_classes=[SLOClass(name="slow", speed=2.0), SLOClass(name="fast", speed=50.0)], class_mix=[1, 1])

    def run(self):
        records = [
            record(device_id=0, slo_class="slow", slo_speed=2.0, arrival=0.5, completion=0.8, batch_id=0),
            record(device_id=0, slo_class="slow", slo_speed=2.0, arrival=2.0, completion=2.3, batch_id=1),
            record(device_id=1, slo_class="fast", slo_speed=50.0, arrival=3.0, completion=3.4, batch_id=2, k=8, accepted_len=2),
        ]
        batches = [
            BatchRecord(batch_id=i, dispatch=r.dispatch, completion=r.completion, size=1, predicted=0.05, actual=r.t_verify, memory=4, policy="wisp")
            for i, r in enumerate(records)
        ]
        return records, batches

    def test_steady_state_window(self):
        records, batches = self.run()
        m = compute_metrics(
            records, batches, self.fleet(), run_id="r", scheduler="wisp", n_devices=2, seed=0, span_end=10.0, warmup_fraction=0.1
        )
        assert m.steady_start_s == pytest.approx(1.0)
        assert m.iterations == 2
        assert m.per_class["slow"].n == 1 and m.per_class["fast"].n == 1
        assert m.per_class["fast"].violation_rate == 1.0
        assert m.per_class["slow"].violation_rate == 0.0
        assert m.goodput_tps == pytest.approx(8 / 9.0)
        assert m.committed_fraction == pytest.approx(5 / 13)
        assert m.mean_wasted_tokens == pytest.approx(4.0)
        assert m.batches.count == 2
        assert m.self_check_passed
        assert m.violation_rate("fast") == 1.0

    def test_unobserved_class_has_no_rate(self):
        records, batches = self.run()
        m = compute_metrics(
            records[:1], batches[:1], self.fleet(), run_id="r", scheduler="wisp", n_devices=2, seed=0, span_end=10.0, warmup_fraction=0.0
        )
        assert m.per_class["fast"].violation_rate is None
        assert [row["class"] for row in summary_table(m)] == ["slow", "fast"]

    def test_artifacts(self, tmp_path):
        records, batches = self.run()
        m = compute_metrics(
            records, batches, self.fleet(), run_id="r", scheduler="wisp", n_devices=2, seed=0, span_end=10.0, warmup_fraction=0.0
        )
        trace = write_trace(tmp_path / "trace.csv", records)
        columns, rows = read_rows(trace)
        assert columns[:3] == ["run_id", "request_id", "slo_class"] and len(rows) == 3
        summary = read_json(write_summary(tmp_path / "summary.json", m))
        assert summary["per_class"]["slow"]["n"] == 2
