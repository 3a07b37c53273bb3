from dataclasses import replace

import numpy as np
import pytest
import torch

from core.steps.modules.controller import evaluate_predictor, train_predictor, tune_predictor
from core.steps.modules.models.predictor import (
    RejectionClassifier,
    RejectionPredictorModule,
    export_classifier,
    layer_summary,
    load_predictor,
    save_predictor,
)
from core.steps.utils.classification import classifier_report, roc_auc, select_threshold
from core.steps.modules.workload import feature_transform
from models.errors import ArtifactIOError, TrainingError
from models.predictor import LayerWeights, PredictorModel, PredictorTrainConfig
from models.workload import CorpusRecord
from utils.helpers import write_json

FAST = PredictorTrainConfig(hidden_sizes=[16], epochs=15, batch_size=64, fpr_target=0.2)


def separable_corpus(n: int = 1200, seed: int = 0):
    """Records whose label is ``latent >= 0.5`` with a gap around the boundary."""
    rng = np.random.default_rng(seed)
    latent = np.where(rng.random(n) < 0.5, rng.uniform(0.0, 0.4, n), rng.uniform(0.6, 1.0, n))
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
            label=int(x >= 0.5),
        )
        for i, (x, f) in enumerate(zip(latent, feats))
    ]


def confidence_model() -> PredictorModel:
    """Scores ``sigmoid(10 * confidence - 5)``: accepts iff confidence >= 0.5."""
    return PredictorModel(
        layers=[
            LayerWeights(n_in=4, n_out=1, weight=[[1.0, 0.0, 0.0, 0.0]], bias=[0.0]),
            LayerWeights(n_in=1, n_out=1, weight=[[10.0]], bias=[-5.0]),
        ],
        feature_mean=[0.0] * 4,
        feature_scale=[1.0] * 4,
        threshold=0.5,
    )


class TestClassifierMetrics:
    def test_reference_counts(self):
        report = classifier_report(tn=92, fp=68, fn=112, tp=451)
        assert report.fpr == pytest.approx(0.4250, abs=1e-4)
        assert report.recall_accepted == pytest.approx(0.8011, abs=1e-4)
        assert report.specificity == pytest.approx(0.5750, abs=1e-4)
        assert report.balanced_accuracy == pytest.approx(0.6881, abs=1e-4)
        assert set(report.table_row()) == {"Acc", "AUC", "Rec1", "Spec", "FPR", "BalAcc"}

    def test_auc(self):
        assert roc_auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0
        assert roc_auc([0.5, 0.5], [1, 0]) == 0.5
        assert roc_auc([0.3, 0.7], [1, 1]) is None

    def test_select_threshold_maximizes_recall_under_cap(self):
        scores = [0.9, 0.8, 0.7, 0.6, 0.4]
        labels = [1, 1, 0, 1, 0]
        assert select_threshold(scores, labels, 0.5) == 0.6
        assert select_threshold(scores, labels, 0.0) == 0.8

    def test_select_threshold_accepts_nothing_when_cap_unreachable(self):
        assert select_threshold([0.9, 0.1], [0, 1], 0.0) > 0.9


class TestTraining:
    def test_separable_corpus(self):
        corpus = separable_corpus()
        model = train_predictor(corpus, FAST, seed=1)
        report = evaluate_predictor(model, corpus)
        assert report.balanced_accuracy >= 0.95
        assert report.auc >= 0.98
        assert 0.0 <= model.threshold <= 1.0
        assert model.train_meta["val_fpr"] <= FAST.fpr_target

    def test_same_seed_same_model(self):
        corpus = separable_corpus(600)
        a = train_predictor(corpus, FAST, seed=3)
        b = train_predictor(corpus, FAST, seed=3)
        assert a.model_dump() == b.model_dump()

    def test_single_class_corpus(self):
        corpus = [r for r in separable_corpus(200) if r.label == 1]
        with pytest.raises(TrainingError):
            train_predictor(corpus, FAST, seed=0)

    def test_module_call_scores_features(self):
        module = RejectionPredictorModule(FAST)
        model = module.train(separable_corpus(400), seed=0)
        features = np.array([r.features for r in separable_corpus(10, seed=5)])
        assert np.allclose(module(features=features), model.predict_proba(features))
        assert module.model is model

    def test_tune_picks_best_candidate(self):
        corpus = separable_corpus(600)
        best, results = tune_predictor(corpus, {"hidden_sizes": [[4], [16]]}, FAST, seed=0)
        assert len(results) == 2
        assert best.train_meta["val_balanced_accuracy"] == max(r["val_balanced_accuracy"] for r in results)


class TestExport:
    def test_numpy_inference_matches_torch(self):
        torch.manual_seed(0)
        net = RejectionClassifier(4, [8, 4])
        net.eval()
        x = np.random.default_rng(0).normal(size=(32, 4))
        with torch.no_grad():
            expected = net(torch.from_numpy(x.astype(np.float32))).numpy()
        model = export_classifier(net, np.zeros(4), np.ones(4))
        assert np.allclose(model.predict_proba(x), expected, atol=1e-5)
        assert layer_summary(model) == {"layers": 3, "parameters": 4 * 8 + 8 + 8 * 4 + 4 + 4 + 1}

    def test_save_load(self, tmp_path):
        model = confidence_model()
        path = save_predictor(model, tmp_path / "predictor.json")
        back = load_predictor(path)
        assert back == model
        x = np.array([[0.2, 1.0, 0.3, 0.5], [0.8, 1.0, 0.3, 0.5]])
        assert np.array_equal(back.predict_proba(x), model.predict_proba(x))

    def test_layers_serialize_with_short_keys(self, tmp_path):
        path = save_predictor(confidence_model(), tmp_path / "predictor.json")
        assert '"in": 4' in path.read_text()

    def test_load_rejects_other_documents(self, tmp_path):
        path = write_json(tmp_path / "other.json", {"format": "something-else"})
        with pytest.raises(ArtifactIOError):
            load_predictor(path)

    def test_oracle_like_model_has_no_false_positives(self):
        corpus = separable_corpus(400)
        # relabel by the model's own decision boundary
        relabeled = [replace(r, label=int(r.confidence >= 0.5)) for r in corpus]
        report = evaluate_predictor(confidence_model(), relabeled)
        assert report.fpr == 0.0
