import argparse

from core.flows import capacity_flow
from core.flows.capacity import CAPACITY_COLUMNS

from .common import add_common_args, format_table, load_config, parse_sweep


def register(subparsers) -> None:
    parser = add_common_args(subparsers.add_parser("capacity", help="Sweep device counts and report capacity"))
    parser.add_argument("--class", dest="classes", action="append", help="SLO class name (repeatable)")
    parser.add_argument("--epsilon", type=float, help="Violation-rate threshold")
    parser.add_argument("--sweep", help="Device counts: 4,8,16 or start:stop[:step]")
    parser.add_argument("--bisect", action="store_true", help="Bisect between sweep points")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    shortcuts = []
    if args.epsilon is not None:
        shortcuts.append(f"capacity.epsilon={args.epsilon}")
    if args.sweep:
        shortcuts.append(f"capacity.sweep={parse_sweep(args.sweep)}")
    if args.bisect:
        shortcuts.append("capacity.bisect=true")
    config = load_config(args, shortcuts)
    rows = capacity_flow(config, classes=args.classes)
    print(format_table(rows, CAPACITY_COLUMNS))
    return 0
