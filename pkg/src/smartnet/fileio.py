"""Model (JSON) and time-series (CSV) files, plus atomic output writes.

Model document::

    {"n_nodes": N, "order": p, "noise_cov": "identity" | [[...], ...],
     "coefficients": [{"i": 1, "j": 2, "r": 4, "value": 0.65}, ...]}

Indices are 1-based and ``{i, j, r}`` is ``a_{i,j}(r)`` (j drives i at lag r).
Series file: header ``t,x1,...,xN`` then one row per sample.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Union

import numpy as np

from .errors import DataFileError, ModelError
from .model import MarModel, TimeSeries

PathLike = Union[str, os.PathLike]


def atomic_write(path: PathLike, text: str) -> None:
    """Write ``text`` to a sibling temp file and rename it over ``path``."""
    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    try:
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=directory)
    except OSError as exc:
        raise DataFileError(f"cannot write {path}: {exc.strerror}") from None
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_text(path: PathLike) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataFileError(f"cannot read {path}: {exc.strerror}") from None
    except UnicodeDecodeError:
        raise DataFileError(f"{path} is not UTF-8 text") from None


def dumps_json(doc) -> str:
    """Deterministic JSON (sorted keys, full float precision, trailing newline)."""
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=True) + "\n"


def model_to_dict(model: MarModel) -> dict:
    n, p = model.n_nodes, model.order
    coefficients = [
        {"i": int(i) + 1, "j": int(j) + 1, "r": int(r) + 1, "value": float(model.coeffs[i, j, r])}
        for i, j, r in zip(*np.nonzero(model.coeffs))
    ]
    cov = model.noise_cov
    noise = "identity" if np.array_equal(cov, np.eye(n)) else cov.tolist()
    return {"n_nodes": n, "order": p, "noise_cov": noise, "coefficients": coefficients}


def _as_int(doc: dict, key: str) -> int:
    val = doc.get(key)
    if isinstance(val, bool) or not isinstance(val, int) or val < 1:
        raise ModelError(f"model field {key!r} must be a positive integer, got {val!r}")
    return val


def model_from_dict(doc: dict) -> MarModel:
    if not isinstance(doc, dict):
        raise ModelError("model document must be a JSON object")
    n, p = _as_int(doc, "n_nodes"), _as_int(doc, "order")
    coeffs = np.zeros((n, n, p))
    seen = set()
    for entry in doc.get("coefficients", []):
        try:
            i, j, r = (int(entry[k]) for k in ("i", "j", "r"))
            value = float(entry["value"])
        except (KeyError, TypeError, ValueError):
            raise ModelError(f"malformed coefficient entry {entry!r}") from None
        if not (1 <= i <= n and 1 <= j <= n and 1 <= r <= p):
            raise ModelError(f"coefficient (i={i}, j={j}, r={r}) out of range for N={n}, p={p}")
        if (i, j, r) in seen:
            raise ModelError(f"duplicate coefficient (i={i}, j={j}, r={r})")
        seen.add((i, j, r))
        coeffs[i - 1, j - 1, r - 1] = value
    noise = doc.get("noise_cov", "identity")
    if noise == "identity":
        cov = None
    else:
        try:
            cov = np.array(noise, dtype=float)
        except (TypeError, ValueError):
            raise ModelError("noise_cov must be \"identity\" or a square numeric matrix") from None
    return MarModel(coeffs, cov)


def load_model(path: PathLike) -> MarModel:
    try:
        doc = json.loads(_read_text(path))
    except json.JSONDecodeError as exc:
        raise DataFileError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    return model_from_dict(doc)


def save_model(model: MarModel, path: PathLike) -> None:
    atomic_write(path, dumps_json(model_to_dict(model)))


def series_to_csv(series: TimeSeries) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t"] + [f"x{k + 1}" for k in range(series.n_nodes)])
    for t, row in enumerate(series.values):
        # repr round-trips every float exactly
        w.writerow([t] + [repr(float(v)) for v in row])
    return buf.getvalue()


def series_from_csv(text: str, source: str = "<string>") -> TimeSeries:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise DataFileError(f"{source}: empty series file")
    header = [h.strip() for h in rows[0]]
    n = len(header) - 1
    if n < 1 or header != ["t"] + [f"x{k + 1}" for k in range(n)]:
        raise DataFileError(f"{source}: header must be t,x1,...,xN; got {','.join(header)}")
    body = [r for r in rows[1:] if r]
    if not body:
        raise DataFileError(f"{source}: no samples")
    values = np.empty((len(body), n))
    for line, r in enumerate(body, start=2):
        if len(r) != n + 1:
            raise DataFileError(f"{source}:{line}: expected {n + 1} fields, got {len(r)}")
        try:
            values[line - 2] = [float(v) for v in r[1:]]
        except ValueError:
            raise DataFileError(f"{source}:{line}: non-numeric value") from None
    if not np.all(np.isfinite(values)):
        raise DataFileError(f"{source}: non-finite values")
    return TimeSeries(values)


def load_series(path: PathLike) -> TimeSeries:
    return series_from_csv(_read_text(path), str(path))


def save_series(series: TimeSeries, path: PathLike) -> None:
    atomic_write(path, series_to_csv(series))
