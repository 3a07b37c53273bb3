import json
from dataclasses import replace

import numpy as np
import pytest

from app import main
from core.steps.modules.models.predictor import save_predictor
from core.steps.modules.workload import feature_transform, write_corpus
from models.predictor import LayerWeights, PredictorModel
from models.workload import CorpusRecord
from utils.helpers import read_json, read_rows

pytestmark = pytest.mark.usefixtures("prefect_harness")

QUICK = ["--set", "simulation.duration_s=3", "--set", "simulation.n_devices=4", "--set", "predictor.mode=off"]


def error_payload(stderr):
    """The structured error line the CLI prints before exiting."""
    for line in reversed(stderr.strip().splitlines()):
        try:
            payload = json.loads(line)
        except ValueError:
            continue
        if isinstance(payload, dict) and isinstance(payload.get("error"), str):
            return payload
    raise AssertionError("no error payload on stderr")


def trace_body(path):
    return [line for line in path.read_text().splitlines() if not line.startswith("#")]


def corpus(n=300, seed=0):
    rng = np.random.default_rng(seed)
    latent = rng.uniform(0.0, 1.0, n)
    feats = feature_transform(latent, 16)
    return [
        CorpusRecord(
            session_id=i,
            iteration=0,
            position=1,
            confidence=float(f[0]),
            entropy=float(f[1]),
            margin=float(f[2]),
            stddev=float(f[3]),
            latent_accept_prob=float(x),
            label=int(f[0] >= 0.5),
        )
        for i, (x, f) in enumerate(zip(latent, feats))
    ]


class TestSimulate:
    def test_writes_artifacts(self, out_dir, capsys):
        assert main(["simulate", "--seed", "1", "--out", str(out_dir), *QUICK]) == 0
        for name in ("trace.csv", "batches.csv", "summary.json", "meta.json", "config.yaml"):
            assert (out_dir / name).exists(), name
        columns, rows = read_rows(out_dir / "trace.csv")
        assert rows and columns[0] == "run_id"
        assert "goodput_tps" in capsys.readouterr().out

    def test_same_seed_same_trace(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["simulate", "--seed", "7", "--out", str(a), *QUICK]) == 0
        assert main(["simulate", "--seed", "7", "--out", str(b), *QUICK]) == 0
        assert trace_body(a / "trace.csv") == trace_body(b / "trace.csv")

    def test_scheduler_shortcut(self, out_dir):
        assert main(["simulate", "--out", str(out_dir), "--scheduler", "fcfs", *QUICK]) == 0
        assert read_json(out_dir / "summary.json")["scheduler"] == "fcfs"

    def test_invalid_config_exits_2(self, out_dir, capsys):
        code = main(["simulate", "--out", str(out_dir), *QUICK, "--set", "simulation.n_devices=0"])
        assert code == 2
        error = error_payload(capsys.readouterr().err)
        assert error["error"] == "config"
        assert "n_devices" in error["field"]

    def test_unknown_key_exits_2(self, out_dir):
        assert main(["simulate", "--out", str(out_dir), "--set", "simulation.bogus=1"]) == 2

    def test_usage_error_exits_2(self):
        assert main(["simulate", "--scheduler", "random"]) == 2

    def test_report(self, out_dir, capsys):
        assert main(["simulate", "--out", str(out_dir), *QUICK]) == 0
        capsys.readouterr()
        assert main(["report", str(out_dir)]) == 0
        assert "class1" in capsys.readouterr().out

    def test_report_missing_run_exits_3(self, tmp_path):
        assert main(["report", str(tmp_path / "missing")]) == 3


class TestFitEstimator:
    def test_preset(self, out_dir):
        assert main(["fit-estimator", "--preset", "appendix-c", "--out", str(out_dir)]) == 0
        model = read_json(out_dir / "latency_model.json")["model"]
        assert model["a"] == pytest.approx(3.314e-5)

    def test_noiseless_synthetic_fit(self, out_dir):
        code = main(["fit-estimator", "--synthetic", "--noise", "0", "--bootstrap", "0", "--out", str(out_dir)])
        assert code == 0
        report = read_json(out_dir / "fit_report.json")
        assert report["train"]["r2"] == pytest.approx(1.0)
        assert (out_dir / "profile.csv").exists()

    def test_missing_source_exits_2(self, out_dir):
        assert main(["fit-estimator", "--out", str(out_dir)]) == 2


class TestPredictor:
    def test_eval_with_exact_model(self, tmp_path, out_dir):
        model = PredictorModel(
            layers=[
                LayerWeights(n_in=4, n_out=1, weight=[[1.0, 0.0, 0.0, 0.0]], bias=[0.0]),
                LayerWeights(n_in=1, n_out=1, weight=[[10.0]], bias=[-5.0]),
            ],
            feature_mean=[0.0] * 4,
            feature_scale=[1.0] * 4,
            threshold=0.5,
        )
        model_path = save_predictor(model, tmp_path / "predictor.json")
        corpus_path = write_corpus(tmp_path / "corpus.csv", corpus(), command="test")
        code = main(["predictor", "eval", "--model", str(model_path), "--corpus", str(corpus_path), "--out", str(out_dir)])
        assert code == 0
        report = read_json(out_dir / "eval_report.json")
        assert report["fpr"] == 0.0
        assert report["recall_accepted"] == 1.0

    def test_single_class_corpus_exits_4(self, tmp_path, out_dir, capsys):
        records = [replace(r, label=1) for r in corpus(50)]
        corpus_path = write_corpus(tmp_path / "corpus.csv", records, command="test")
        code = main(["predictor", "train", "--corpus", str(corpus_path), "--out", str(out_dir)])
        assert code == 4
        assert error_payload(capsys.readouterr().err)["error"] == "training"

    def test_eval_rejects_non_predictor_file(self, tmp_path, out_dir):
        corpus_path = write_corpus(tmp_path / "corpus.csv", corpus(20), command="test")
        code = main(["predictor", "eval", "--model", str(corpus_path), "--corpus", str(corpus_path), "--out", str(out_dir)])
        assert code == 3


class TestCapacity:
    def test_epsilon_one_reaches_sweep_max(self, out_dir):
        code = main(
            [
                "capacity",
                "--epsilon",
                "1",
                "--sweep",
                "2,4",
                "--out",
                str(out_dir),
                "--set",
                "capacity.schedulers=[wisp]",
                "--set",
                "simulation.duration_s=3",
                "--set",
                "predictor.mode=off",
            ]
        )
        assert code == 0
        _, rows = read_rows(out_dir / "capacity.csv")
        assert {r["capacity"] for r in rows} == {"4"}
        assert len(rows) == 4

    def test_unknown_class_exits_2(self, out_dir):
        assert main(["capacity", "--class", "gold", "--out", str(out_dir), "--set", "predictor.mode=off"]) == 2


class TestGenWorkload:
    def test_writes_corpus_and_profile(self, out_dir, capsys):
        code = main(["gen-workload", "--out", str(out_dir), "--set", "predictor.corpus_samples=200"])
        assert code == 0
        output = capsys.readouterr().out
        assert "corpus" in output and "profile" in output
