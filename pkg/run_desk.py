"""
run_desk.py (module-level)
- run from the IDE without terminal arguments: edit the variables in main() and run
- desk-scale classifier comparison: dense / factored / skip / MLP over a few seeds
- writes raw per-epoch rows, a seed-averaged summary and the MI curve under out/
"""

from __future__ import annotations

import os
from datetime import datetime
from pathlib import Path

from motzkin_tn.config import TrainConfig, dump_config, resolve, validate
from motzkin_tn.motzkin import mi_by_distance, mutual_information
from motzkin_tn.outliers import drop_runs
from motzkin_tn.presets import expand_grid
from motzkin_tn.records import dump_json, now_iso_local, write_mi_distance_csv, write_sweep_csv
from motzkin_tn.train import summarize, sweep


def _ensure_out_dir(out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)


def main() -> None:
    # === experiment scale ===
    n = 10
    seeds = [0, 1, 2]
    epochs = 30
    models = ["dense", "factored", "skip", "mlp"]
    mu_values = ["1.0"]            # add "0.5", "0.01" for the mu-robustness shape
    drop_seeds: list = []          # post-hoc outlier runs, e.g. [8]
    jobs = int(os.environ.get("TN_JOBS", "1"))

    # === model sizes at desk scale ===
    base = {
        "n": str(n),
        "epochs": str(epochs),
        "chi": "6",
        "learning_rate": "0.05",
        "batch_size": "8",
        "train_fraction": "0.25",
    }

    timestamp = datetime.now().astimezone().strftime("%Y%m%dT%H%M%S")
    out_dir = Path(os.getcwd()) / "out" / f"desk_n{n}-{timestamp}"
    _ensure_out_dir(out_dir)

    cells = expand_grid(base, {"model_kind": models, "mu": mu_values})
    print("=== Cells ===")
    for cell in cells:
        print(cell.key)
    (out_dir / "base_config.ini").write_text(dump_config(validate(resolve(TrainConfig(n=n)))), encoding="utf-8")

    # 1) train every (cell, seed)
    result = sweep(cells, seeds, jobs=jobs, progress=True)
    write_sweep_csv(result.rows, out_dir / "rows.csv")
    print(f"\nWrote raw rows: {out_dir / 'rows.csv'} ({len(result.rows)} rows)")
    for failure in result.failures:
        print(f"[WARN] {failure['cell']} seed {failure['seed']}: {failure['error']}")

    # 2) outlier filter + summary
    finals, outlier_stats = drop_runs(result.finals, drop_seeds)
    summary = summarize(finals, result.failures)
    dump_json(
        {
            "generated_at": now_iso_local(),
            "n": n,
            "seeds": seeds,
            "cells": summary,
            "outliers": outlier_stats,
            "failures": result.failures,
        },
        out_dir / "summary.json",
    )
    print("\n=== Summary (final epoch, mean over seeds) ===")
    for key, cell in summary.items():
        mean = cell["mean"]
        print(f"{key}: auc={mean['auc']} sigma_v={mean['sigma_v']} runs={cell['runs']} failed={cell['failed']}")

    # 3) mutual-information curve of the target distribution
    write_mi_distance_csv(mi_by_distance(mutual_information(n)), out_dir / "mi_by_distance.csv")
    print(f"Wrote MI curve: {out_dir / 'mi_by_distance.csv'}")

    print("Done.")


if __name__ == "__main__":
    main()
