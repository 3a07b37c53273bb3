"""Torch rejection classifier, trained on CPU and exported for numpy inference."""

import copy
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from torch.utils.data import DataLoader, TensorDataset

from models.errors import ArtifactIOError, TrainingError
from models.predictor import LayerWeights, PredictorModel, PredictorTrainConfig, corpus_arrays
from utils.helpers import read_json, write_json
from utils.rng import derive_seed, substream

from ...utils.classification import classifier_report, confusion_counts, roc_auc, select_threshold
from .base import BaseModelModule


class RejectionClassifier(nn.Module):
    """
    Feed-forward binary classifier over the four draft features.

    Args:
        input_size: Size of input features
        hidden_sizes: List of hidden layer sizes (e.g., [32, 16])
        dropout: Dropout rate (default: 0.0)
    """

    def __init__(self, input_size: int = 4, hidden_sizes: Sequence[int] = (32, 16), dropout: float = 0.0):
        super().__init__()

        self.hidden_sizes = list(hidden_sizes)
        self.layers = nn.ModuleList()
        self.dropout = nn.Dropout(dropout)

        prev_size = input_size
        for hidden_size in self.hidden_sizes:
            self.layers.append(nn.Linear(prev_size, hidden_size))
            prev_size = hidden_size

        self.output_layer = nn.Linear(prev_size, 1)

    def forward(self, x):
        for layer in self.layers:
            x = F.relu(layer(x))
            x = self.dropout(x)

        x = torch.sigmoid(self.output_layer(x))
        return x.squeeze(-1)


def stratified_split(labels: np.ndarray, val_fraction: float, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Train/validation indices with both classes represented in each part."""
    train, val = [], []
    for cls in (0.0, 1.0):
        idx = rng.permutation(np.flatnonzero(labels == cls))
        n_val = min(max(1, int(round(len(idx) * val_fraction))), len(idx) - 1)
        val.append(idx[:n_val])
        train.append(idx[n_val:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(val))


class RejectionPredictorModule(BaseModelModule):
    def __init__(self, config: Optional[PredictorTrainConfig] = None, device: str = "cpu"):
        super().__init__(model_name="rejection-predictor", device=device)
        self.config = config or PredictorTrainConfig()

    def _load_model_on_device(self, device: str, path: Optional[Path], **kwargs) -> PredictorModel:
        return load_predictor(path)

    def forward(self, model: PredictorModel, features=None, **kwargs) -> np.ndarray:
        return model.predict_proba(features)

    def train(self, corpus: Sequence, seed: int) -> PredictorModel:
        cfg = self.config
        X, y = corpus_arrays(corpus)
        if len(y) == 0 or y.min() == y.max():
            raise TrainingError("corpus must contain both accepted and rejected samples")
        if min(int(y.sum()), int(len(y) - y.sum())) < 2:
            raise TrainingError("each class needs at least two samples for a validation split")

        train_idx, val_idx = stratified_split(y, cfg.val_fraction, substream(seed, "predictor-split"))
        mean = X[train_idx].mean(axis=0)
        scale = X[train_idx].std(axis=0)
        scale[scale == 0.0] = 1.0
        Xs = ((X - mean) / scale).astype(np.float32)

        weights = np.ones_like(y, dtype=np.float32)
        if cfg.balance_classes:
            pos = y[train_idx].mean()
            weights = np.where(y == 1.0, 0.5 / pos, 0.5 / (1.0 - pos)).astype(np.float32)

        x_train = torch.from_numpy(Xs[train_idx])
        y_train = torch.from_numpy(y[train_idx].astype(np.float32))
        w_train = torch.from_numpy(weights[train_idx])
        x_val = torch.from_numpy(Xs[val_idx])
        y_val = torch.from_numpy(y[val_idx].astype(np.float32))

        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(derive_seed(seed, "predictor-init"))
            net = RejectionClassifier(X.shape[1], cfg.hidden_sizes, cfg.dropout).to(self.device)
            optimizer = torch.optim.SGD(net.parameters(), lr=cfg.learning_rate, momentum=cfg.momentum)
            loss_fn = nn.BCELoss(reduction="none")
            shuffle = torch.Generator().manual_seed(derive_seed(seed, "predictor-init", 1))
            loader = DataLoader(
                TensorDataset(x_train, y_train, w_train), batch_size=cfg.batch_size, shuffle=True, generator=shuffle
            )

            best_loss, best_state, best_epoch, stale = float("inf"), None, 0, 0
            for epoch in range(cfg.epochs):
                net.train()
                for xb, yb, wb in loader:
                    optimizer.zero_grad()
                    loss = (loss_fn(net(xb), yb) * wb).mean()
                    loss.backward()
                    optimizer.step()

                net.eval()
                with torch.no_grad():
                    val_loss = float(loss_fn(net(x_val), y_val).mean())
                if val_loss < best_loss - 1e-6:
                    best_loss, best_state, best_epoch, stale = val_loss, copy.deepcopy(net.state_dict()), epoch, 0
                else:
                    stale += 1
                    if stale >= cfg.patience:
                        break
            net.load_state_dict(best_state)

        model = export_classifier(net, mean, scale)
        val_scores = model.predict_proba(X[val_idx])
        threshold = select_threshold(val_scores, y[val_idx], cfg.fpr_target)
        val_report = classifier_report(
            *confusion_counts(val_scores >= threshold, y[val_idx]), auc=roc_auc(val_scores, y[val_idx]), threshold=threshold
        )
        model = model.with_threshold(threshold)
        model.train_meta.update(
            {
                "seed": seed,
                "samples": int(len(y)),
                "val_samples": int(len(val_idx)),
                "best_epoch": best_epoch,
                "val_loss": best_loss,
                "val_fpr": val_report.fpr,
                "val_recall_accepted": val_report.recall_accepted,
                "val_balanced_accuracy": val_report.balanced_accuracy,
                "config": cfg.model_dump(mode="json"),
            }
        )
        self.logger.info(
            "Trained rejection predictor",
            extra={"best_epoch": best_epoch, "val_loss": round(best_loss, 5), "threshold": threshold, "val_fpr": val_report.fpr},
        )
        self.load_model(model=model)
        return model


def export_classifier(net: RejectionClassifier, mean: np.ndarray, scale: np.ndarray) -> PredictorModel:
    linear = list(net.layers) + [net.output_layer]
    layers = []
    for layer in linear:
        w = layer.weight.detach().cpu().double().numpy()
        b = layer.bias.detach().cpu().double().numpy()
        layers.append(LayerWeights(n_in=w.shape[1], n_out=w.shape[0], weight=w.tolist(), bias=b.tolist()))
    return PredictorModel(
        layers=layers,
        feature_mean=[float(v) for v in mean],
        feature_scale=[float(v) for v in scale],
    )


def save_predictor(model: PredictorModel, path) -> Path:
    return write_json(path, model.model_dump(mode="json", by_alias=True))


def load_predictor(path) -> PredictorModel:
    if path is None:
        raise ArtifactIOError("no predictor path given", "")
    payload = read_json(path)
    if not isinstance(payload, dict) or payload.get("format") != "wisp-predictor":
        raise ArtifactIOError("not a predictor file", path)
    if payload.get("version") != 1:
        raise ArtifactIOError(f"unsupported predictor version {payload.get('version')}", path)
    return PredictorModel(**payload)


def layer_summary(model: PredictorModel) -> Dict[str, int]:
    return {"layers": len(model.layers), "parameters": sum(l.n_out * (l.n_in + 1) for l in model.layers)}
