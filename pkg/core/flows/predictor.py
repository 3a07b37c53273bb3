from pathlib import Path
from typing import Dict, List, Optional, Tuple

from prefect import flow

from core.steps.modules.controller import evaluate_predictor, train_predictor, tune_predictor
from core.steps.modules.models.predictor import layer_summary, load_predictor, save_predictor
from core.steps.modules.workload import gen_corpus, read_corpus, write_corpus
from models.predictor import ClassifierReport, PredictorModel
from settings.experiment import ExperimentConfig, dump_experiment_config
from utils import setup_logger
from utils.helpers import ensure_dir, write_json, write_meta, write_rows

from .simulate import corpus_profile

logger = setup_logger("wisp.predictor")

REPORT_COLUMNS = ("tn", "fp", "fn", "tp", "Acc", "AUC", "Rec1", "Spec", "FPR", "BalAcc", "threshold")


def _corpus(config: ExperimentConfig, corpus_path: Optional[str], out: Path):
    if corpus_path:
        return read_corpus(corpus_path)
    corpus = gen_corpus(corpus_profile(config), config.predictor.corpus_samples, config.workload, seed=config.seed)
    write_corpus(out / "corpus.csv", corpus, command="predictor")
    return corpus


def _write_report(out: Path, name: str, report: ClassifierReport) -> None:
    row = {"tn": report.tn, "fp": report.fp, "fn": report.fn, "tp": report.tp, **report.table_row(), "threshold": report.threshold}
    write_rows(out / f"{name}.csv", REPORT_COLUMNS, [[row[c] for c in REPORT_COLUMNS]], command="predictor")
    write_json(out / f"{name}.json", report.model_dump(mode="json"))


@flow(name="predictor-train", validate_parameters=False)
def predictor_train_flow(config: ExperimentConfig, corpus_path: Optional[str] = None) -> Tuple[PredictorModel, ClassifierReport]:
    out = ensure_dir(config.out_dir)
    dump_experiment_config(config, out)
    corpus = _corpus(config, corpus_path, Path(out))

    model = train_predictor(corpus, config.predictor.train, seed=config.seed)
    report = evaluate_predictor(model, corpus)
    save_predictor(model, Path(out) / "predictor.json")
    _write_report(Path(out), "report", report)
    write_meta(out, "predictor train", seed=config.seed, samples=len(corpus), **layer_summary(model))
    return model, report


@flow(name="predictor-eval", validate_parameters=False)
def predictor_eval_flow(config: ExperimentConfig, model_path: str, corpus_path: Optional[str] = None) -> ClassifierReport:
    out = ensure_dir(config.out_dir)
    model = load_predictor(model_path)
    corpus = _corpus(config, corpus_path, Path(out))
    report = evaluate_predictor(model, corpus)
    _write_report(Path(out), "eval_report", report)
    write_meta(out, "predictor eval", seed=config.seed, samples=len(corpus), model=str(model_path))
    logger.info("Evaluated predictor", extra=report.table_row())
    return report


@flow(name="predictor-tune", validate_parameters=False)
def predictor_tune_flow(config: ExperimentConfig, corpus_path: Optional[str] = None) -> Tuple[PredictorModel, List[Dict]]:
    out = ensure_dir(config.out_dir)
    dump_experiment_config(config, out)
    corpus = _corpus(config, corpus_path, Path(out))

    grid = config.predictor.tune_grid
    best, results = tune_predictor(corpus, grid, config.predictor.train, seed=config.seed)
    columns = sorted(grid) + ["val_balanced_accuracy", "val_fpr"]
    write_rows(Path(out) / "tune.csv", columns, ([r[c] for c in columns] for r in results), command="predictor tune")
    save_predictor(best, Path(out) / "predictor.json")
    write_meta(out, "predictor tune", seed=config.seed, candidates=len(results))
    return best, results
