"""Deterministic CSV/JSON serialization and atomic file writes."""
from dataclasses import dataclass, field
import csv
import io
import json
import math
import os
import tempfile

import numpy as np

__all__ = ["SweepReport", "fmt", "to_jsonable", "dumps", "write_atomic"]

SWEEP_COLUMNS = ["eps", "dt", "norm", "consistency_err", "asymptotic_err",
                 "slow_err", "fast_err", "interaction_err", "diagram_err",
                 "asymptotic_err_kernel", "in_eps_fit", "in_dt_fit", "triangle_ok"]


def fmt(x):
    """Shortest round-trip text for a number, so bytes depend only on the value."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return repr(x)
    return str(x)


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def dumps(obj):
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n"


def csv_text(rows, columns):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(r.get(c, "")) for c in columns])
    return buf.getvalue()


@dataclass
class SweepReport:
    """Rows in grid order plus a summary of fitted quantities."""
    rows: list
    summary: dict = field(default_factory=dict)
    columns: list = field(default_factory=lambda: list(SWEEP_COLUMNS))

    def to_csv(self):
        return csv_text(self.rows, self.columns)

    def to_json(self):
        return dumps(self.summary)


def write_atomic(path, text):
    """Write through a temporary file in the target directory, then rename."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
