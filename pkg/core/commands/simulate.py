import argparse

from core.flows import simulate_flow
from core.steps.modules.metrics import summary_table

from .common import add_common_args, format_table, load_config

SUMMARY_COLUMNS = ("class", "speed", "n", "violation_rate", "mean_speed", "compute_dominant", "queue_dominant")


def register(subparsers) -> None:
    parser = add_common_args(subparsers.add_parser("simulate", help="Run one fleet simulation"))
    parser.add_argument("--scheduler", choices=["wisp", "fcfs", "edf", "oracle"])
    parser.add_argument(
        "--predictor", choices=["off", "mlp", "oracle", "false_alarm", "always_accept", "always_reject"]
    )
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    shortcuts = []
    if args.scheduler:
        shortcuts.append(f"simulation.scheduler={args.scheduler}")
    if args.predictor:
        shortcuts.append(f"predictor.mode={args.predictor}")
    config = load_config(args, shortcuts)
    metrics = simulate_flow(config).metrics
    print(format_table(summary_table(metrics), SUMMARY_COLUMNS))
    print(f"goodput_tps {metrics.goodput_tps:.4f}  mean_wdt_s {metrics.mean_wdt_s:.6f}  iterations {metrics.iterations}")
    return 0
