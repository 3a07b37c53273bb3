import argparse
from typing import Any, Dict, Iterable, List, Sequence

from models.errors import ConfigError
from settings.experiment import ExperimentConfig, load_experiment_config


def add_common_args(parser: argparse.ArgumentParser) -> argparse.ArgumentParser:
    parser.add_argument("--config", help="YAML experiment config")
    parser.add_argument("--seed", type=int, help="Global seed")
    parser.add_argument("--out", help="Output directory")
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY.PATH=VALUE", help="Override a config field"
    )
    return parser


def load_config(args: argparse.Namespace, shortcuts: Iterable[str] = ()) -> ExperimentConfig:
    """Config from file and flags; shortcut overrides lose to explicit ``--set``."""
    return load_experiment_config(
        path=args.config, overrides=[*shortcuts, *args.overrides], seed=args.seed, out=args.out
    )


def parse_sweep(text: str) -> List[int]:
    """``4,8,16`` or ``start:stop[:step]`` (inclusive)."""
    try:
        if ":" in text:
            parts = [int(p) for p in text.split(":")]
            start, stop = parts[0], parts[1]
            step = parts[2] if len(parts) > 2 else 1
            if step < 1:
                raise ValueError("step must be positive")
            return list(range(start, stop + 1, step))
        return [int(p) for p in text.split(",") if p.strip()]
    except (ValueError, IndexError) as e:
        raise ConfigError(f"bad sweep {text!r}: {e}", field="capacity.sweep")


def _fmt(value: Any) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def format_table(rows: Sequence[Dict[str, Any]], columns: Sequence[str]) -> str:
    cells = [[_fmt(r.get(c)) for c in columns] for r in rows]
    widths = [max([len(c)] + [len(row[i]) for row in cells]) for i, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths))]
    lines += ["  ".join(v.ljust(w) for v, w in zip(row, widths)) for row in cells]
    return "\n".join(lines)
