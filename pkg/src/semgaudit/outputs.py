"""Stamped, atomic writers for CSV and JSON outputs."""

import hashlib
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd

FLOAT_FORMAT = None  # shortest round-trip repr: re-reading yields identical floats


def atomic_write_bytes(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(frame, path, stamp):
    """CSV with a leading ``# <stamp>`` comment line; floats round-trip exactly."""
    buf = io.StringIO()
    buf.write(f"# {stamp}\n")
    frame.to_csv(buf, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    atomic_write_bytes(path, buf.getvalue().encode())


def read_csv(path, **kw):
    kw.setdefault("float_precision", "round_trip")
    return pd.read_csv(path, comment="#", **kw)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def write_json(obj, path, stamp):
    payload = {"provenance": stamp, **_jsonable(obj)}
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    atomic_write_bytes(path, text.encode())


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def file_digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
