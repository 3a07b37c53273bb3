import json
import logging
import os
import sys
import traceback

from settings import settings

ROOT_LOGGER = "wisp"

_SKIP_MODULES = {__name__, logging.__name__}
_configured = False


class _StderrHandler(logging.StreamHandler):
    """Writes to whatever ``sys.stderr`` is at emit time, so redirected streams are honoured."""

    def __init__(self):
        super().__init__(stream=None)

    @property
    def stream(self):
        return sys.stderr

    @stream.setter
    def stream(self, value):
        pass


def _configure_root():
    global _configured
    if _configured:
        return
    root = logging.getLogger(ROOT_LOGGER)
    handler = _StderrHandler()
    handler.setFormatter(logging.Formatter("%(message)s"))
    root.addHandler(handler)
    root.setLevel(settings.LOG_LEVEL.upper())
    root.propagate = False
    _configured = True


def _caller() -> str:
    frame = sys._getframe(1)
    while frame is not None and frame.f_globals.get("__name__") in _SKIP_MODULES:
        frame = frame.f_back
    if frame is None:
        return "unknown"
    return f"{os.path.basename(frame.f_code.co_filename)}:{frame.f_lineno}"


def _exception_fields(exc_info) -> dict:
    if exc_info is False:
        return {"file": _caller()}
    if exc_info is None or exc_info is True:
        exc_info = sys.exc_info()
    elif isinstance(exc_info, BaseException):
        exc_info = (type(exc_info), exc_info, exc_info.__traceback__)
    if not exc_info or exc_info[0] is None:
        return {"file": _caller()}

    exc_type, exc, tb = exc_info
    fields = {"stack": "".join(traceback.format_exception(exc_type, exc, tb))}
    frames = traceback.extract_tb(tb)
    fields["file"] = f"{os.path.basename(frames[-1].filename)}:{frames[-1].lineno}" if frames else _caller()
    return fields


class JSONAdapter(logging.LoggerAdapter):
    """Renders every record as one JSON object on stderr.

    ``{"<level>": {"message", "level", "logger", "file", ...context}, "level": "<level>"}``;
    error records are keyed ``error`` and carry the active exception's ``stack``.
    Context bound with :meth:`bind` or passed as ``extra`` is merged into the payload.
    """

    def __init__(self, logger, extra=None):
        super().__init__(logger, extra or {})

    def bind(self, **extra) -> "JSONAdapter":
        return JSONAdapter(self.logger, {**self.extra, **extra})

    def log(self, level, msg, *args, exc_info=None, extra=None, label=None, **kwargs):
        if not self.isEnabledFor(level):
            return
        name = label or logging.getLevelName(level).lower()
        fields = {
            "message": str(msg) % args if args else str(msg),
            "level": name,
            "logger": self.logger.name,
        }
        if level >= logging.ERROR:
            fields.update(_exception_fields(exc_info))
            key = "error"
        else:
            fields["file"] = _caller()
            key = name
        fields.update(self.extra)
        if extra:
            fields.update(extra)
        self.logger.log(level, json.dumps({key: fields, "level": name}, default=str), **kwargs)

    def exception(self, msg, *args, exc_info=True, **kwargs):
        self.log(logging.ERROR, msg, *args, exc_info=exc_info, label="exception", **kwargs)


def setup_logger(name: str) -> JSONAdapter:
    _configure_root()
    return JSONAdapter(logging.getLogger(name))
