"""
cli.py
- command-line surface: data / train / eval / sweep / mi / factorize
- run(argv) is the process entry; it returns the exit code:
    0 success, 1 usage or config error, 2 runtime error (library ValueError and LinAlgError included)
- every failure prints exactly one stderr line: "error: <kind>: <reason>"
"""

from __future__ import annotations

import logging
import sys
from dataclasses import asdict
from pathlib import Path
from typing import List, Optional, Sequence

import click
import numpy as np

from motzkin_tn.checkpoint import load_checkpoint, model_kind, save_checkpoint
from motzkin_tn.config import (
    TrainConfig,
    apply_overrides,
    dump_config,
    load_config,
    load_grid,
    parse_assignments,
    resolve,
    validate,
)
from motzkin_tn.datafile import read_dataset, write_dataset
from motzkin_tn.errors import ConfigError, MotzkinTNError
from motzkin_tn.factored import contract_vertical, factorize_mps
from motzkin_tn.motzkin import mi_by_distance, mutual_information
from motzkin_tn.mps import DenseMPS
from motzkin_tn.outliers import drop_runs
from motzkin_tn.presets import PRESETS, expand_grid, preset_cells
from motzkin_tn.records import (
    dump_json,
    write_metrics_csv,
    write_mi_csv,
    write_mi_distance_csv,
    write_sweep_csv,
)
from motzkin_tn.tensor import derive_seed, make_rng
from motzkin_tn.train import (
    as_dense,
    evaluate,
    perplexity,
    record_dict,
    summarize,
    sweep as run_sweep,
    train as run_train,
    training_dataset,
)

logger = logging.getLogger(__name__)


def _int_list(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated integers, got {text!r}") from None


def _resolved_config(config_path: Optional[str], assignments: Sequence[str]) -> TrainConfig:
    cfg = load_config(config_path) if config_path else TrainConfig()
    cfg = apply_overrides(cfg, parse_assignments(list(assignments)))
    return validate(resolve(cfg))


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress at INFO level.")
def cli(verbose: bool) -> None:
    """Motzkin-chain tensor-network experiments."""
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )


@cli.command()
@click.option("--n", "n", type=int, required=True, help="Chain length.")
@click.option("--train-fraction", type=float, default=0.25, show_default=True)
@click.option("--mu", type=float, default=1.0, show_default=True, help="Fraction of valid chains.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def data(n: int, train_fraction: float, mu: float, seed: int, out: str) -> None:
    """Write a labeled training dataset plus its provenance sidecar."""
    cfg = validate(resolve(TrainConfig(n=n, train_fraction=train_fraction, mu=mu, seed=seed)))
    meta = write_dataset(training_dataset(cfg), out)
    click.echo(dump_json(meta))


@cli.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--set", "assignments", multiple=True, metavar="KEY=VALUE", help="Override a config key.")
@click.option("--out-dir", type=click.Path(file_okay=False), required=True)
@click.option("--progress/--no-progress", default=False)
def train(config_path: Optional[str], assignments: Sequence[str], out_dir: str, progress: bool) -> None:
    """Train one model; writes metrics.csv, model.ckpt and config.ini."""
    cfg = _resolved_config(config_path, assignments)
    result = run_train(cfg, progress=progress)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_metrics_csv([record_dict(r) for r in result.records], out / "metrics.csv")
    save_checkpoint(result.model, out / "model.ckpt", seed=cfg.seed, config=cfg,
                    record_timestamps=cfg.record_timestamps)
    (out / "config.ini").write_text(dump_config(cfg), encoding="utf-8")
    click.echo(dump_json(record_dict(result.records[-1])))


@cli.command(name="eval")
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--n", "n", type=int, default=None, help="Chain length (defaults to the model's).")
@click.option("--seed", type=int, default=0, show_default=True, help="Seed for sampled negatives.")
@click.option("--dataset", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Training dataset for Sigma_T.")
@click.option("--perplexity", "with_perplexity", is_flag=True, help="Also report perplexity (n <= 12).")
def eval_cmd(checkpoint: str, n: Optional[int], seed: int, dataset: Optional[str], with_perplexity: bool) -> None:
    """Evaluate a checkpoint: Sigma_T, Sigma_V, AUC as JSON."""
    model, manifest = load_checkpoint(checkpoint)
    model_n = int(manifest["dims"]["n"])
    if n is not None and n != model_n:
        raise click.UsageError(f"--n {n} does not match the checkpoint's n={model_n}")
    train_codes = None
    if dataset:
        train_codes = read_dataset(dataset, model_n).valid_codes
    result = evaluate(model, model_n, seed, train_codes)
    payload = {"model_kind": model_kind(model), "n": model_n, **asdict(result)}
    if with_perplexity:
        if as_dense(model) is None:
            raise click.UsageError("--perplexity needs a tensor-network checkpoint")
        payload["perplexity"] = perplexity(model, model_n)
    click.echo(dump_json(payload))


def _cell_filename(key: str) -> str:
    return key.replace(",", "__").replace("=", "-") + ".csv"


@cli.command()
@click.option("--grid", "grid_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--preset", type=click.Choice(sorted(PRESETS)), default=None)
@click.option("--seeds", default="0", show_default=True, help="Comma-separated seeds.")
@click.option("--set", "assignments", multiple=True, metavar="KEY=VALUE", help="Override a base config key.")
@click.option("--out-dir", type=click.Path(file_okay=False), required=True)
@click.option("--jobs", type=int, default=1, show_default=True, envvar="TN_JOBS")
@click.option("--drop-seeds", default="", help="Comma-separated seeds left out of the summary.")
@click.option("--progress/--no-progress", default=False)
def sweep(grid_path, preset, seeds, assignments, out_dir, jobs, drop_seeds, progress) -> None:
    """Run every (cell, seed) pair; writes raw rows, per-cell CSVs and summary.json."""
    if bool(grid_path) == bool(preset):
        raise click.UsageError("give exactly one of --grid or --preset")
    overrides = parse_assignments(list(assignments))
    if grid_path:
        base, grid = load_grid(grid_path)
        cells = expand_grid({**base, **overrides}, grid)
    else:
        cells = preset_cells(preset, overrides)
    seed_list = _int_list(seeds)
    if not seed_list:
        raise click.UsageError("--seeds is empty")

    result = run_sweep(cells, seed_list, jobs=jobs, progress=progress)
    out = Path(out_dir)
    write_sweep_csv(result.rows, out / "rows.csv")
    for cell in cells:
        write_sweep_csv([r for r in result.rows if r["cell"] == cell.key], out / "cells" / _cell_filename(cell.key))

    finals, outlier_stats = drop_runs(result.finals, _int_list(drop_seeds))
    summary = {
        "seeds": seed_list,
        "cells": summarize(finals, result.failures),
        "outliers": outlier_stats,
        "failures": result.failures,
    }
    dump_json(summary, out / "summary.json")
    if not result.finals:
        raise MotzkinTNError(f"all {len(result.failures)} sweep runs failed; see {out / 'summary.json'}")
    click.echo(f"{len(cells)} cells x {len(seed_list)} seeds, {len(result.failures)} failed -> {out}")


@cli.command()
@click.option("--n", "n", type=click.IntRange(min=0), required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--by-distance", "by_distance", type=click.Path(dir_okay=False), default=None,
              help="Also write mean MI per token distance.")
def mi(n: int, out: str, by_distance: Optional[str]) -> None:
    """Exact pairwise mutual information over uniform valid chains."""
    matrix = mutual_information(n)
    rows = write_mi_csv(matrix, out)
    if by_distance:
        write_mi_distance_csv(mi_by_distance(matrix), by_distance)
    click.echo(f"{rows} pairs -> {out}")


@cli.command()
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--chi-h", type=click.IntRange(min=1), required=True)
@click.option("--height", type=click.IntRange(min=1), required=True)
@click.option("--chi-v", type=click.IntRange(min=1), required=True)
@click.option("--skip", is_flag=True, help="Lift to the skip layout.")
@click.option("--sv-fill-lo", type=float, default=0.001, show_default=True)
@click.option("--sv-fill-hi", type=float, default=0.01, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True, help="Seed for appended singular directions.")
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Factored checkpoint.")
@click.option("--report", type=click.Path(dir_okay=False), default=None, help="Per-split JSON report.")
def factorize(checkpoint, chi_h, height, chi_v, skip, sv_fill_lo, sv_fill_hi, seed, out, report) -> None:
    """Factorize a dense checkpoint into stacked subcores by iterated SVD."""
    model, manifest = load_checkpoint(checkpoint)
    if not isinstance(model, DenseMPS):
        raise click.UsageError(f"factorize needs a dense checkpoint, got {manifest.get('model_kind')}")
    rng = make_rng(derive_seed(seed, "factorize"))
    fmps, reports = factorize_mps(model, chi_h, height, chi_v, skip, sv_fill_lo, sv_fill_hi, rng)

    cores = []
    for i, (dense_core, fcore, splits) in enumerate(zip(model.cores, fmps.cores, reports)):
        err = float(np.linalg.norm(contract_vertical(fcore) - dense_core))
        cores.append({"site": i, "round_trip_error": err, "splits": [asdict(s) for s in splits]})
    worst = max(c["round_trip_error"] for c in cores)
    save_checkpoint(fmps, out, seed=manifest.get("seed"), extra={"factorized_from": str(checkpoint)})
    if report:
        dump_json({"chi_h": chi_h, "height": height, "chi_v": chi_v, "skip": skip,
                   "max_round_trip_error": worst, "cores": cores}, report)
    click.echo(dump_json({"out": str(out), "max_round_trip_error": worst}))


def _fail(kind: str, reason: str) -> None:
    click.echo(f"error: {kind}: {' '.join(str(reason).split())}", err=True)


def run(argv: Optional[Sequence[str]] = None) -> int:
    try:
        cli.main(args=list(argv) if argv is not None else None, prog_name="motzkin-tn", standalone_mode=False)
    except click.UsageError as e:
        _fail("usage", e.format_message())
        return 1
    except ConfigError as e:
        _fail(e.kind, str(e))
        return 1
    except click.Abort:
        _fail("usage", "aborted")
        return 1
    except MotzkinTNError as e:
        _fail(e.kind, str(e))
        return 2
    except OSError as e:
        _fail("io", str(e))
        return 2
    except click.ClickException as e:
        _fail("runtime", e.format_message())
        return 2
    except np.linalg.LinAlgError as e:
        _fail("linalg", str(e))
        return 2
    except ValueError as e:
        _fail("value", str(e))
        return 2
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
