import argparse

from core.flows import fit_estimator_flow

from .common import add_common_args, format_table, load_config


def register(subparsers) -> None:
    parser = add_common_args(subparsers.add_parser("fit-estimator", help="Fit the batch latency model"))
    source = parser.add_mutually_exclusive_group()
    source.add_argument("--dataset", help="Profile dataset file")
    source.add_argument("--synthetic", action="store_true", help="Generate a synthetic profile dataset")
    source.add_argument("--preset", help="Write a named preset without fitting")
    parser.add_argument("--bootstrap", type=int, help="Bootstrap resamples")
    parser.add_argument("--noise", type=float, help="Synthetic profile noise, seconds")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    config = load_config(args)
    model, report = fit_estimator_flow(
        config,
        dataset_path=args.dataset,
        synthetic=args.synthetic,
        preset=args.preset,
        n_boot=args.bootstrap,
        noise_sd=args.noise,
    )
    rows = [{"coefficient": name, "value": value} for name, value in model.coefficients().items()]
    print(format_table(rows, ("coefficient", "value")))
    if report is not None:
        splits = [{"split": "train", **report.train.model_dump()}]
        if report.test is not None:
            splits.append({"split": "test", **report.test.model_dump()})
        print(format_table(splits, ("split", "n", "r2", "rmse_s", "mape_pct")))
    return 0
