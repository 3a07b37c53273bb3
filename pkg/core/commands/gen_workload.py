import argparse

from core.flows import gen_workload_flow

from .common import add_common_args, load_config


def register(subparsers) -> None:
    parser = add_common_args(subparsers.add_parser("gen-workload", help="Write a predictor corpus and a latency profile"))
    parser.add_argument("--no-corpus", dest="corpus", action="store_false")
    parser.add_argument("--no-profile", dest="profile", action="store_false")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    written = gen_workload_flow(load_config(args), corpus=args.corpus, profile=args.profile)
    for kind, path in written.items():
        print(f"{kind} {path}")
    return 0
