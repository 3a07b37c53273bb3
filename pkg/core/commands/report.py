import argparse
from pathlib import Path

from core.steps.modules.metrics import summary_table
from models.errors import ArtifactIOError
from models.simulation import SimMetrics
from utils.helpers import read_json

from .common import format_table
from .simulate import SUMMARY_COLUMNS


def register(subparsers) -> None:
    parser = subparsers.add_parser("report", help="Print the per-class summary of a simulate output directory")
    parser.add_argument("run_dir", help="Output directory of a simulate run")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    payload = read_json(Path(args.run_dir) / "summary.json")
    try:
        metrics = SimMetrics(**payload)
    except (TypeError, ValueError) as e:
        raise ArtifactIOError(f"not a simulation summary: {e}", Path(args.run_dir) / "summary.json")
    print(format_table(summary_table(metrics), SUMMARY_COLUMNS))
    print(f"goodput_tps {metrics.goodput_tps:.4f}  mean_wdt_s {metrics.mean_wdt_s:.6f}  iterations {metrics.iterations}")
    return 0
