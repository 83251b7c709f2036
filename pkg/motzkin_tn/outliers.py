"""
outliers.py
- post-hoc removal of whole runs (cell, seed) from sweep rows before aggregation
- raw rows are never rewritten; the filter returns (kept_rows, stats)
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OutlierConfig:
    enabled: bool = True
    # seeds dropped from every cell
    drop_seeds: Tuple[int, ...] = ()
    # seeds dropped only from the named cells
    drop_by_cell: Dict[str, Tuple[int, ...]] = field(default_factory=dict)


def drop_runs(
    rows: Sequence[Dict[str, Any]],
    drop_seeds: Sequence[int] = (),
    cfg: Optional[OutlierConfig] = None,
) -> Tuple[List[Dict[str, Any]], Dict[str, Any]]:
    cfg = cfg or OutlierConfig(drop_seeds=tuple(int(s) for s in drop_seeds))

    if not cfg.enabled or (not cfg.drop_seeds and not cfg.drop_by_cell):
        return list(rows), {
            "enabled": cfg.enabled,
            "input_rows": len(rows),
            "output_rows": len(rows),
            "dropped": 0,
            "dropped_runs": [],
        }

    everywhere = set(cfg.drop_seeds)
    kept: List[Dict[str, Any]] = []
    dropped_runs = set()
    for row in rows:
        seed = int(row["seed"])
        cell = str(row["cell"])
        if seed in everywhere or seed in cfg.drop_by_cell.get(cell, ()):
            dropped_runs.add((cell, seed))
        else:
            kept.append(row)

    runs = sorted(dropped_runs)
    if runs:
        logger.warning("dropping %d run(s) as outliers: %s", len(runs), ", ".join(f"{c}/seed {s}" for c, s in runs))
    stats = {
        "enabled": True,
        "input_rows": len(rows),
        "output_rows": len(kept),
        "dropped": len(rows) - len(kept),
        "dropped_runs": [{"cell": c, "seed": s} for c, s in runs],
        "config": {
            "drop_seeds": sorted(everywhere),
            "drop_by_cell": {k: sorted(v) for k, v in sorted(cfg.drop_by_cell.items())},
        },
    }
    return kept, stats
