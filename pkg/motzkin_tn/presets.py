"""
presets.py
- named sweep grids for the standard experiments
- expand_grid: [base] overrides x cartesian product of [grid] value lists -> SweepCells
"""

from __future__ import annotations

import itertools
from typing import Dict, List, Sequence, Tuple

from motzkin_tn.config import TrainConfig, apply_overrides, resolve, validate
from motzkin_tn.train import SweepCell

Grid = Dict[str, List[str]]

MU_VALUES = ["1.0", "0.75", "0.5", "0.25", "0.1", "0.01"]
ALL_MODELS = ["dense", "factored", "skip", "mlp"]

PRESETS: Dict[str, Tuple[Dict[str, str], Grid]] = {
    # four-model classifier comparison
    "classifier": ({}, {"model_kind": ALL_MODELS}),
    "batch_size": ({"model_kind": "dense"}, {"batch_size": [str(2 ** k) for k in range(1, 11)]}),
    "alt_norms": (
        {"model_kind": "dense"},
        {"norm_mode": ["constant_one", "l2_params"], "batch_size": ["8", "32", "128", "512", "1024"]},
    ),
    "dense_chi": ({"model_kind": "dense"}, {"chi": [str(c) for c in range(4, 10)]}),
    "alpha": ({"model_kind": "dense"}, {"alpha": ["0", "0.25", "0.5", "0.75", "1.0"]}),
    "mu": ({}, {"model_kind": ALL_MODELS, "mu": MU_VALUES}),
    "init_variance": (
        {"model_kind": "dense"},
        {"sigma_inner": ["0.01", "0.1", "1.0"], "sigma_outer": ["0.01", "0.1", "1.0"]},
    ),
    "factored_chi": ({"model_kind": "factored"}, {"chi_h": ["3", "4", "5"], "chi_v": ["5", "6", "7", "8"]}),
    "mlp_arch": ({"model_kind": "mlp"}, {"d_e": ["8", "16", "32"], "d_h": ["128", "256", "512"]}),
}


def cell_key(combo: Sequence[Tuple[str, str]]) -> str:
    return ",".join(f"{k}={v}" for k, v in combo) or "base"


def expand_grid(base: Dict[str, str], grid: Grid, defaults: TrainConfig = TrainConfig()) -> List[SweepCell]:
    """One cell per combination, in row-major order of the grid keys."""
    base_cfg = apply_overrides(defaults, base)
    keys = list(grid)
    cells = []
    for values in itertools.product(*(grid[k] for k in keys)):
        combo = list(zip(keys, values))
        cfg = validate(resolve(apply_overrides(base_cfg, dict(combo))))
        cells.append(SweepCell(key=cell_key(combo), config=cfg))
    return cells


def preset_cells(name: str, overrides: Dict[str, str] = None) -> List[SweepCell]:
    if name not in PRESETS:
        raise ValueError(f"Unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}")
    base, grid = PRESETS[name]
    return expand_grid({**base, **(overrides or {})}, grid)
