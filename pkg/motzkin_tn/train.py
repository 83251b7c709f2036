"""
train.py
- SGD training of dense / factored / skip MPS models and the MLP baseline on Motzkin datasets
- metrics: Sigma_T, Sigma_V, ROC AUC (rank statistic with the 1-AUC flip), perplexity
- sweeps over (config, seed) cells with joblib workers and per-cell error isolation
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed
from scipy.special import xlogy
from scipy.stats import rankdata
from tqdm import tqdm

from motzkin_tn.baseline import MlpModel, init_mlp, mlp_forward_batch, mlp_loss_and_grad
from motzkin_tn.config import TrainConfig, config_hash, default_config, resolve, validate
from motzkin_tn.errors import (
    GuardError,
    MotzkinTNError,
    NumericalDomainError,
    ShapeError,
    TrainingDivergedError,
)
from motzkin_tn.factored import FactoredMPS, init_factored, loss_and_grad_factored, to_dense
from motzkin_tn.motzkin import (
    EXHAUSTIVE_MAX_N,
    LabeledDataset,
    all_chains,
    build_dataset,
    invalid_chains,
    sample_invalid,
    valid_chain_array,
)
from motzkin_tn.mps import Batch, DenseMPS, init_dense, log_amplitudes, log_norm_sq, log_probs, loss_and_grad
from motzkin_tn.tensor import Tensor, derive_seed, make_rng

logger = logging.getLogger(__name__)

Model = Union[DenseMPS, FactoredMPS, MlpModel]

# negatives for AUC are the full invalid set up to this length
EXHAUSTIVE_NEGATIVES_MAX_N = 10
METRIC_FIELDS = ("train_loss", "sigma_t", "sigma_v", "auc")

__all__ = [
    "TrainConfig", "MetricsRecord", "EvalResult", "TrainResult", "SweepCell", "SweepResult",
    "sgd_step", "roc_auc", "evaluate", "perplexity", "train", "sweep", "summarize",
    "init_model", "model_params", "with_params", "model_loss_and_grad",
]


@dataclass(frozen=True)
class MetricsRecord:
    epoch: int
    train_loss: float
    sigma_t: Optional[float]
    sigma_v: Optional[float]
    auc: float
    wall_ms: Optional[float]
    seed: int


@dataclass(frozen=True)
class EvalResult:
    sigma_t: Optional[float]
    sigma_v: Optional[float]
    auc: float


@dataclass
class TrainResult:
    config: TrainConfig
    records: List[MetricsRecord]
    model: Model
    dataset: LabeledDataset


@dataclass(frozen=True)
class SweepCell:
    key: str
    config: TrainConfig


@dataclass
class SweepResult:
    rows: List[Dict[str, Any]] = field(default_factory=list)       # one row per recorded epoch
    finals: List[Dict[str, Any]] = field(default_factory=list)     # last record of every run
    failures: List[Dict[str, Any]] = field(default_factory=list)


# ---------------- model plumbing ----------------

def init_model(cfg: TrainConfig, rng) -> Model:
    cfg = resolve(cfg)
    if cfg.model_kind == "dense":
        return init_dense(cfg.n, cfg.v, cfg.chi, cfg.sigma_inner, cfg.sigma_outer, rng)
    if cfg.model_kind in ("factored", "skip"):
        return init_factored(
            cfg.n, cfg.v, cfg.chi_h, cfg.height, cfg.chi_v,
            skip=cfg.model_kind == "skip",
            sigma_inner=cfg.sigma_inner,
            sigma_outer=cfg.sigma_outer,
            sv_fill_lo=cfg.sv_fill_lo,
            sv_fill_hi=cfg.sv_fill_hi,
            rng=rng,
            init=cfg.init,
            engine=cfg.svd_engine,
        )
    if cfg.model_kind == "mlp":
        return init_mlp(cfg.n, cfg.v, cfg.d_e, cfg.d_h, rng)
    raise ValueError(f"Unknown model kind: {cfg.model_kind}")


def model_params(model: Model) -> List[Tensor]:
    if isinstance(model, DenseMPS):
        return list(model.cores)
    if isinstance(model, FactoredMPS):
        return [s for core in model.cores for s in core.subcores]
    return model.params()


def with_params(model: Model, params: Sequence[Tensor]) -> Model:
    if isinstance(model, DenseMPS):
        return DenseMPS(cores=tuple(params))
    if isinstance(model, FactoredMPS):
        it = iter(params)
        return model.with_subcores([[next(it) for _ in core.subcores] for core in model.cores])
    return model.with_params(params)


def model_loss_and_grad(model: Model, batch: Batch, alpha: float = 0.0, norm_mode: str = "exact") -> Tuple[float, List[Tensor]]:
    """Loss and flat gradients aligned with model_params(model)."""
    if isinstance(model, DenseMPS):
        return loss_and_grad(model, batch, alpha, norm_mode)
    if isinstance(model, FactoredMPS):
        loss, nested = loss_and_grad_factored(model, batch, alpha, norm_mode)
        return loss, [g for grads in nested for g in grads]
    return mlp_loss_and_grad(model, batch)


def as_dense(model: Model) -> Optional[DenseMPS]:
    if isinstance(model, DenseMPS):
        return model
    if isinstance(model, FactoredMPS):
        return to_dense(model)
    return None


def sgd_step(params: Sequence[Tensor], grads: Sequence[Tensor], lr: float) -> List[Tensor]:
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} parameter blocks but {len(grads)} gradient blocks")
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        p = np.asarray(p, dtype=np.float64)
        g = np.asarray(g, dtype=np.float64)
        if p.shape != g.shape:
            raise ShapeError(f"block {i}: parameter shape {p.shape} != gradient shape {g.shape}")
        out.append(p - lr * g)
    return out


# ---------------- metrics ----------------

def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Mann-Whitney AUC with average ranks for ties; values below 0.5 are reported as 1 - AUC."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ShapeError(f"scores {scores.shape} and labels {labels.shape} differ")
    if np.isnan(scores).any():
        raise NumericalDomainError("AUC scores contain NaN")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValueError(f"AUC needs both classes, got {n_pos} positives and {n_neg} negatives")
    ranks = rankdata(scores, method="average")
    u = float(np.sum(ranks[pos])) - n_pos * (n_pos + 1) / 2.0
    raw = u / (n_pos * n_neg)
    return 1.0 - raw if raw < 0.5 else raw


def _scores(model: Model, codes: np.ndarray) -> np.ndarray:
    dense = as_dense(model)
    if dense is None:
        return mlp_forward_batch(model, codes)
    return log_probs(dense, codes)


def eval_negatives(n: int, count: int, seed: int) -> np.ndarray:
    if n <= EXHAUSTIVE_NEGATIVES_MAX_N:
        return invalid_chains(n)
    return sample_invalid(n, count, make_rng(derive_seed(seed, "eval")))


def evaluate(model: Model, n: int, seed: int = 0, train_codes: Optional[np.ndarray] = None) -> EvalResult:
    """
    Sigma_V over every valid chain, Sigma_T over `train_codes` (label-1 training chains),
    AUC of valid chains against invalid ones. Sigma values are None for the MLP.
    """
    valid = valid_chain_array(n)
    negatives = eval_negatives(n, valid.shape[0], seed)
    pos_scores = _scores(model, valid)
    neg_scores = _scores(model, negatives)
    auc = roc_auc(
        np.concatenate([pos_scores, neg_scores]),
        np.concatenate([np.ones(valid.shape[0], dtype=np.int8), np.zeros(negatives.shape[0], dtype=np.int8)]),
    )
    dense = as_dense(model)
    if dense is None:
        return EvalResult(sigma_t=None, sigma_v=None, auc=auc)
    sigma_v = math.fsum(np.exp(pos_scores).tolist())
    sigma_t = None
    if train_codes is not None:
        sigma_t = math.fsum(np.exp(log_probs(dense, train_codes)).tolist()) if len(train_codes) else 0.0
    return EvalResult(sigma_t=sigma_t, sigma_v=sigma_v, auc=auc)


def perplexity(model: Union[DenseMPS, FactoredMPS], n: Optional[int] = None) -> float:
    """exp of the model entropy over all 3^n chains."""
    dense = as_dense(model)
    if dense is None:
        raise ValueError("perplexity is defined for tensor-network models only")
    n = dense.n if n is None else n
    if n != dense.n:
        raise ShapeError(f"model has {dense.n} sites, asked for n={n}")
    if n > EXHAUSTIVE_MAX_N:
        raise GuardError(f"perplexity guard exceeded: n={n} > {EXHAUSTIVE_MAX_N}")
    log_abs, _ = log_amplitudes(dense, all_chains(n))
    p = np.exp(2.0 * log_abs - log_norm_sq(dense))
    entropy = -math.fsum(xlogy(p, p).tolist())
    return math.exp(entropy)


# ---------------- training ----------------

def _batches(order: np.ndarray, batch_size: int):
    for start in range(0, order.shape[0], batch_size):
        yield order[start:start + batch_size]


def training_dataset(cfg: TrainConfig) -> LabeledDataset:
    """The dataset a run trains on; drawn from the "data" sub-seed, tagged with the run seed."""
    ds = build_dataset(cfg.n, cfg.train_fraction, cfg.mu, derive_seed(cfg.seed, "data"))
    return replace(ds, seed=cfg.seed)


def train(config: TrainConfig, progress: bool = False, dataset: Optional[LabeledDataset] = None) -> TrainResult:
    cfg = validate(resolve(config))
    seed = cfg.seed
    if dataset is None:
        dataset = training_dataset(cfg)
    elif dataset.codes.shape[1] != cfg.n:
        raise ShapeError(f"dataset chains have length {dataset.codes.shape[1]}, config says n={cfg.n}")
    model = init_model(cfg, make_rng(derive_seed(seed, "init")))
    shuffle_rng = make_rng(derive_seed(seed, "shuffle"))
    train_valid = dataset.valid_codes
    labels = dataset.labels.astype(np.float64)

    logger.info(
        "training %s n=%d on %d chains (%d valid), %d epochs, batch %d, lr %g, config %s",
        cfg.model_kind, cfg.n, len(dataset), train_valid.shape[0], cfg.epochs, cfg.batch_size,
        cfg.learning_rate, config_hash(cfg),
    )

    records: List[MetricsRecord] = []
    epochs = range(1, cfg.epochs + 1)
    bar = tqdm(epochs, desc=f"{cfg.model_kind} seed {seed}", disable=not progress, leave=False)
    for epoch in bar:
        started = time.perf_counter()
        order = shuffle_rng.permutation(len(dataset))
        weighted: List[float] = []
        for step, idx in enumerate(_batches(order, cfg.batch_size)):
            batch = Batch(codes=dataset.codes[idx], labels=labels[idx])
            try:
                loss, grads = model_loss_and_grad(model, batch, cfg.alpha, cfg.norm_mode)
            except NumericalDomainError as e:
                raise TrainingDivergedError(f"epoch {epoch} step {step}: {e}") from e
            if not math.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
                raise TrainingDivergedError(f"epoch {epoch} step {step}: non-finite loss {loss} or gradient")
            model = with_params(model, sgd_step(model_params(model), grads, cfg.learning_rate))
            weighted.append(loss * idx.shape[0])
        train_loss = math.fsum(weighted) / len(dataset)

        if epoch % cfg.eval_every == 0 or epoch == cfg.epochs:
            result = evaluate(model, cfg.n, seed, train_valid)
            wall_ms = (time.perf_counter() - started) * 1000.0 if cfg.record_timestamps else None
            record = MetricsRecord(epoch, train_loss, result.sigma_t, result.sigma_v, result.auc, wall_ms, seed)
            records.append(record)
            logger.info("epoch %d: loss %.6g sigma_v %s auc %.6f", epoch, train_loss, result.sigma_v, result.auc)
            bar.set_postfix(loss=f"{train_loss:.4g}", auc=f"{result.auc:.4f}")
    bar.close()
    return TrainResult(config=cfg, records=records, model=model, dataset=dataset)


# ---------------- sweeps ----------------

def _run_cell(cell: SweepCell, seed: int) -> Dict[str, Any]:
    cfg = replace(cell.config, seed=seed)
    try:
        result = train(cfg)
    except MotzkinTNError as e:
        return {"cell": cell.key, "seed": seed, "error": f"{e.kind}: {e}", "records": []}
    except np.linalg.LinAlgError as e:
        return {"cell": cell.key, "seed": seed, "error": f"linalg: {e}", "records": []}
    except ValueError as e:
        return {"cell": cell.key, "seed": seed, "error": f"value: {e}", "records": []}
    except ArithmeticError as e:
        return {"cell": cell.key, "seed": seed, "error": f"numerical: {e}", "records": []}
    return {"cell": cell.key, "seed": seed, "error": None, "records": result.records}


def sweep(cells: Sequence[SweepCell], seeds: Sequence[int], jobs: int = 1, progress: bool = False) -> SweepResult:
    if not cells:
        raise ValueError("sweep grid is empty")
    if not seeds:
        raise ValueError("sweep needs at least one seed")
    tasks = [(cell, seed) for cell in cells for seed in seeds]
    outcomes = Parallel(n_jobs=jobs)(
        delayed(_run_cell)(cell, seed) for cell, seed in tqdm(tasks, desc="sweep", disable=not progress)
    )

    result = SweepResult()
    for out in outcomes:
        if out["error"] is not None:
            logger.warning("cell %s seed %d failed: %s", out["cell"], out["seed"], out["error"])
            result.failures.append({"cell": out["cell"], "seed": out["seed"], "error": out["error"]})
            continue
        for rec in out["records"]:
            result.rows.append({"cell": out["cell"], **record_dict(rec)})
        if out["records"]:
            result.finals.append({"cell": out["cell"], **record_dict(out["records"][-1])})
    return result


def record_dict(rec: MetricsRecord) -> Dict[str, Any]:
    return {
        "epoch": rec.epoch,
        "train_loss": rec.train_loss,
        "sigma_t": rec.sigma_t,
        "sigma_v": rec.sigma_v,
        "auc": rec.auc,
        "wall_ms": rec.wall_ms,
        "seed": rec.seed,
    }


def mean_sd(values: Sequence[float]) -> Tuple[Optional[float], Optional[float]]:
    """Mean and sample standard deviation (ddof=1); sd is None for a single value."""
    vals = [float(v) for v in values if v is not None]
    if not vals:
        return None, None
    mean = math.fsum(vals) / len(vals)
    sd = float(np.std(vals, ddof=1)) if len(vals) > 1 else None
    return mean, sd


def summarize(finals: Sequence[Dict[str, Any]], failures: Sequence[Dict[str, Any]] = ()) -> Dict[str, Any]:
    """cell key -> {runs, failed, seeds, mean, sd} over the final record of each run."""
    cells: Dict[str, List[Dict[str, Any]]] = {}
    for row in finals:
        cells.setdefault(row["cell"], []).append(row)
    failed: Dict[str, int] = {}
    for row in failures:
        failed[row["cell"]] = failed.get(row["cell"], 0) + 1
        cells.setdefault(row["cell"], [])

    summary: Dict[str, Any] = {}
    for key, rows in cells.items():
        means, sds = {}, {}
        for metric in METRIC_FIELDS:
            means[metric], sds[metric] = mean_sd([r[metric] for r in rows])
        summary[key] = {
            "runs": len(rows),
            "failed": failed.get(key, 0),
            "seeds": sorted(int(r["seed"]) for r in rows),
            "mean": means,
            "sd": sds,
        }
    return summary


def main() -> None:
    cfg = replace(default_config("dense"), n=6, chi=4, epochs=5, train_fraction=0.5)
    result = train(cfg)
    print("=== train.main() ===")
    for rec in result.records:
        print(rec)


if __name__ == "__main__":
    main()
