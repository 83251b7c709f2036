"""
records.py
- CSV / JSON writers for metrics, sweep rows, sweep summaries and MI curves
- floats are written with repr-level precision (.17g) so reruns compare byte for byte
"""

from __future__ import annotations

import csv
import json
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np

PathLike = Union[str, Path]

METRICS_COLUMNS = ("epoch", "train_loss", "sigma_t", "sigma_v", "auc", "wall_ms", "seed")
SWEEP_COLUMNS = ("cell",) + METRICS_COLUMNS


def now_iso_local() -> str:
    return datetime.now().astimezone().isoformat(timespec="seconds")


def fmt(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def _write_rows(path: PathLike, columns: Sequence[str], rows: Iterable[Dict[str, Any]]) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([fmt(row.get(c)) for c in columns])


def write_metrics_csv(rows: Sequence[Dict[str, Any]], path: PathLike) -> None:
    _write_rows(path, METRICS_COLUMNS, rows)


def write_sweep_csv(rows: Sequence[Dict[str, Any]], path: PathLike) -> None:
    _write_rows(path, SWEEP_COLUMNS, rows)


def read_sweep_csv(path: PathLike) -> List[Dict[str, Any]]:
    """Inverse of write_sweep_csv; empty cells come back as None."""
    out = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        for raw in csv.DictReader(f):
            row: Dict[str, Any] = {"cell": raw["cell"]}
            for c in METRICS_COLUMNS:
                text = raw.get(c, "")
                if text == "":
                    row[c] = None
                elif c in ("epoch", "seed"):
                    row[c] = int(text)
                else:
                    row[c] = float(text)
            out.append(row)
    return out


def write_mi_csv(mi: np.ndarray, path: PathLike) -> int:
    """Rows i,j,distance,mi_nats for every pair i < j; returns the row count."""
    n = mi.shape[0]
    rows = [
        {"i": i, "j": j, "distance": j - i, "mi_nats": float(mi[i, j])}
        for i in range(n) for j in range(i + 1, n)
    ]
    _write_rows(path, ("i", "j", "distance", "mi_nats"), rows)
    return len(rows)


def write_mi_distance_csv(curve: Sequence[tuple], path: PathLike) -> None:
    _write_rows(path, ("distance", "mean_mi_nats"), [{"distance": d, "mean_mi_nats": m} for d, m in curve])


def dump_json(payload: Any, path: Optional[PathLike] = None, pretty: bool = True) -> str:
    if pretty:
        text = json.dumps(payload, ensure_ascii=False, indent=2)
    else:
        text = json.dumps(payload, ensure_ascii=False, separators=(",", ":"))
    if path is not None:
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        with open(p, "w", encoding="utf-8") as f:
            f.write(text + "\n")
    return text
