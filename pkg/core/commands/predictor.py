import argparse

from core.flows import predictor_eval_flow, predictor_train_flow, predictor_tune_flow

from .common import add_common_args, format_table, load_config

TABLE_COLUMNS = ("Acc", "AUC", "Rec1", "Spec", "FPR", "BalAcc")


def register(subparsers) -> None:
    parser = subparsers.add_parser("predictor", help="Train, evaluate or tune the rejection predictor")
    actions = parser.add_subparsers(dest="action", required=True)

    train = add_common_args(actions.add_parser("train"))
    train.add_argument("--corpus", help="Corpus file; generated when omitted")
    train.set_defaults(handler=run_train)

    evaluate = add_common_args(actions.add_parser("eval"))
    evaluate.add_argument("--corpus", help="Corpus file; generated when omitted")
    evaluate.add_argument("--model", required=True, help="Predictor file")
    evaluate.set_defaults(handler=run_eval)

    tune = add_common_args(actions.add_parser("tune"))
    tune.add_argument("--corpus", help="Corpus file; generated when omitted")
    tune.set_defaults(handler=run_tune)


def run_train(args: argparse.Namespace) -> int:
    _, report = predictor_train_flow(load_config(args), corpus_path=args.corpus)
    print(format_table([report.table_row()], TABLE_COLUMNS))
    return 0


def run_eval(args: argparse.Namespace) -> int:
    report = predictor_eval_flow(load_config(args), model_path=args.model, corpus_path=args.corpus)
    print(format_table([report.table_row()], TABLE_COLUMNS))
    return 0


def run_tune(args: argparse.Namespace) -> int:
    _, results = predictor_tune_flow(load_config(args), corpus_path=args.corpus)
    columns = sorted(k for k in results[0] if k not in ("val_balanced_accuracy", "val_fpr"))
    print(format_table(results, [*columns, "val_balanced_accuracy", "val_fpr"]))
    return 0
