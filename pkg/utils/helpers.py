import csv
import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

from models.errors import ArtifactIOError
from settings import settings


def metadata_line(command: str) -> str:
    created_at = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return f"# wisp {command} created_at={created_at} version={settings.APP_VERSION}"


def ensure_dir(path) -> Path:
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ArtifactIOError(f"cannot create directory: {e}", path)
    return path


def _cell(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return str(value)


def write_rows(path, columns: Sequence[str], rows: Iterable[Sequence[Any]], command: Optional[str] = None) -> Path:
    """Write a delimited table. ``command`` prepends the metadata header line."""
    path = Path(path)
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            if command is not None:
                fh.write(metadata_line(command) + "\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([_cell(v) for v in row])
    except OSError as e:
        raise ArtifactIOError(f"cannot write table: {e}", path)
    return path


def read_rows(path) -> Tuple[List[str], List[Dict[str, str]]]:
    """Read a delimited table written by :func:`write_rows`, skipping ``#`` lines."""
    path = Path(path)
    try:
        with path.open("r", newline="", encoding="utf-8") as fh:
            lines = [line for line in fh if not line.startswith("#")]
    except OSError as e:
        raise ArtifactIOError(f"cannot read table: {e}", path)
    reader = csv.reader(lines)
    try:
        columns = next(reader)
    except StopIteration:
        raise ArtifactIOError("table is empty", path)
    rows = []
    for values in reader:
        if not values:
            continue
        if len(values) != len(columns):
            raise ArtifactIOError(f"row has {len(values)} fields, expected {len(columns)}", path)
        rows.append(dict(zip(columns, values)))
    return columns, rows


def write_json(path, payload: Any) -> Path:
    path = Path(path)
    try:
        path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    except (OSError, TypeError) as e:
        raise ArtifactIOError(f"cannot write JSON: {e}", path)
    return path


def read_json(path) -> Any:
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ArtifactIOError(f"cannot read JSON: {e}", path)
    except json.JSONDecodeError as e:
        raise ArtifactIOError(f"malformed JSON: {e}", path)


def write_meta(out_dir, command: str, **extra) -> Path:
    payload = {
        "command": command,
        "created_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "version": settings.APP_VERSION,
        **extra,
    }
    return write_json(Path(out_dir) / "meta.json", payload)
