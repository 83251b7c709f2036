"""
mps.py
- Dense-core MPS over fixed-length chains, Born-rule probabilities
- index order: physical index first, then bonds left to right;
  core 0 is (v, chi) used as a row vector, inner cores (v, chi, chi), last core (v, chi)
- amplitudes in the log domain with per-step rescaling
- <psi|psi> by the cap algorithm: cap creation, two-step loop, final contraction
- binary cross-entropy loss with analytic gradients from left/right environments
- brute-force oracles for small n
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from motzkin_tn.errors import GuardError, NumericalDomainError, ShapeError
from motzkin_tn.motzkin import Chain, all_chains
from motzkin_tn.tensor import OpCounter, Rng, Tensor, matmul, reshape, rng_normal, transpose

# log_prob is clamped here so ln(1 - e^lp) stays finite
LP_CLAMP = -1e-12
BRUTE_FORCE_MAX_N = 10
EVAL_CHUNK = 65536


class NormMode(str, Enum):
    EXACT = "exact"
    CONSTANT_ONE = "constant_one"
    L2_PARAMS = "l2_params"


@dataclass(frozen=True)
class DenseMPS:
    cores: Tuple[Tensor, ...]

    def __post_init__(self) -> None:
        _check_cores(self.cores)

    @property
    def n(self) -> int:
        return len(self.cores)

    @property
    def v(self) -> int:
        return int(self.cores[0].shape[0])

    @property
    def chi(self) -> int:
        return int(self.cores[0].shape[1])


@dataclass(frozen=True)
class LogAmplitude:
    log_abs: float
    sign: int

    @property
    def value(self) -> float:
        return 0.0 if self.sign == 0 else self.sign * math.exp(self.log_abs)


@dataclass(frozen=True)
class Batch:
    codes: np.ndarray    # (B, n) integer token codes
    labels: np.ndarray   # (B,) float 0/1

    def __len__(self) -> int:
        return int(self.labels.shape[0])


@dataclass(frozen=True)
class NormCaps:
    caps: Tuple[Tensor, ...]          # rescaled caps, caps[i] covers sites 0..i
    log_scales: Tuple[float, ...]     # caps[i] * exp(log_scales[i]) is the true cap
    log_norm_sq: float


def make_batch(items: Sequence[Tuple[Sequence[int], float]]) -> Batch:
    if not items:
        raise ValueError("empty batch")
    codes = np.array([list(chain) for chain, _ in items], dtype=np.int64)
    labels = np.array([float(y) for _, y in items])
    return Batch(codes=codes, labels=labels)


def _check_cores(cores: Sequence[Tensor]) -> None:
    n = len(cores)
    if n < 2:
        raise ShapeError(f"an MPS needs at least 2 cores, got {n}")
    v, chi = cores[0].shape if cores[0].ndim == 2 else (None, None)
    if v is None:
        raise ShapeError(f"core 0 must be (v, chi), got {cores[0].shape}")
    for i, core in enumerate(cores):
        want = (v, chi) if i in (0, n - 1) else (v, chi, chi)
        if core.shape != want:
            raise ShapeError(f"core {i} has shape {core.shape}, expected {want}")


def parameter_count(mps: DenseMPS) -> int:
    return int(sum(c.size for c in mps.cores))


def _check_codes(mps: DenseMPS, codes: np.ndarray) -> np.ndarray:
    codes = np.asarray(codes)
    if codes.ndim == 1:
        codes = codes[None, :]
    if codes.ndim != 2 or codes.shape[1] != mps.n:
        raise ShapeError(f"chains must have length {mps.n}, got code array of shape {codes.shape}")
    if codes.size and (codes.min() < 0 or codes.max() >= mps.v):
        raise ShapeError(f"token codes must lie in [0, {mps.v}), got range [{codes.min()}, {codes.max()}]")
    return codes.astype(np.int64, copy=False)


# ---------------- initialization ----------------

def init_dense(
    n: int,
    v: int,
    chi: int,
    sigma_inner: float = 0.01,
    sigma_outer: float = 0.01,
    rng: Optional[Rng] = None,
) -> DenseMPS:
    """
    Inner slices = I_chi + N(0, sigma_inner^2), outer slices = ones/sqrt(chi) + N(0, sigma_outer^2).
    With zero noise every chain has amplitude 1.
    """
    if n < 2 or chi < 1 or v < 1:
        raise ValueError(f"need n >= 2, v >= 1, chi >= 1; got n={n}, v={v}, chi={chi}")
    if rng is None and (sigma_inner > 0 or sigma_outer > 0):
        raise ValueError("a generator is required for noisy initialization")
    outer = np.full((v, chi), 1.0 / math.sqrt(chi))
    inner = np.broadcast_to(np.eye(chi), (v, chi, chi))

    def noise(shape, std):
        return rng_normal(rng, shape, 0.0, std) if std > 0 else 0.0

    cores: List[Tensor] = [outer + noise((v, chi), sigma_outer)]
    for _ in range(n - 2):
        cores.append(inner + noise((v, chi, chi), sigma_inner))
    cores.append(outer + noise((v, chi), sigma_outer))
    return DenseMPS(cores=tuple(np.array(c, dtype=np.float64) for c in cores))


# ---------------- amplitudes ----------------

def _rescale_rows(vec: Tensor, log: np.ndarray) -> Tuple[Tensor, np.ndarray]:
    scale = np.max(np.abs(vec), axis=1)
    scale = np.where(scale > 0, scale, 1.0)
    return vec / scale[:, None], log + np.log(scale)


def _left_envs(cores: Sequence[Tensor], codes: np.ndarray, keep: bool) -> Tuple[List[Tensor], List[np.ndarray]]:
    """envs[i] is the rescaled contraction of sites 0..i (i = 0..n-2)."""
    n = len(cores)
    vec, log = _rescale_rows(cores[0][codes[:, 0]], np.zeros(codes.shape[0]))
    envs, logs = [vec], [log]
    for i in range(1, n - 1):
        vec = np.einsum("bj,bjk->bk", vec, cores[i][codes[:, i]])
        vec, log = _rescale_rows(vec, log)
        if keep:
            envs.append(vec)
            logs.append(log)
        else:
            envs, logs = [vec], [log]
    return envs, logs


def _right_envs(cores: Sequence[Tensor], codes: np.ndarray) -> Tuple[Dict[int, Tensor], Dict[int, np.ndarray]]:
    """envs[i] is the rescaled contraction of sites i..n-1 (i = 1..n-1)."""
    n = len(cores)
    vec, log = _rescale_rows(cores[n - 1][codes[:, n - 1]], np.zeros(codes.shape[0]))
    envs, logs = {n - 1: vec}, {n - 1: log}
    for i in range(n - 2, 0, -1):
        vec = np.einsum("bjk,bk->bj", cores[i][codes[:, i]], vec)
        vec, log = _rescale_rows(vec, log)
        envs[i], logs[i] = vec, log
    return envs, logs


def _finish(cores: Sequence[Tensor], codes: np.ndarray, last_env: Tensor, last_log: np.ndarray):
    val = np.sum(last_env * cores[-1][codes[:, -1]], axis=1)
    sign = np.sign(val).astype(np.int64)
    with np.errstate(divide="ignore"):
        log_abs = last_log + np.log(np.abs(val))
    return log_abs, sign


def log_amplitudes(mps: DenseMPS, codes: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(log|<s|psi>|, sign) for every row of `codes`; sign 0 marks an exactly-zero amplitude."""
    codes = _check_codes(mps, codes)
    log_abs = np.empty(codes.shape[0])
    sign = np.empty(codes.shape[0], dtype=np.int64)
    for start in range(0, codes.shape[0], EVAL_CHUNK):
        chunk = codes[start:start + EVAL_CHUNK]
        envs, logs = _left_envs(mps.cores, chunk, keep=False)
        la, sg = _finish(mps.cores, chunk, envs[-1], logs[-1])
        log_abs[start:start + EVAL_CHUNK] = la
        sign[start:start + EVAL_CHUNK] = sg
    return log_abs, sign


def amplitude(mps: DenseMPS, chain: Sequence[int]) -> LogAmplitude:
    log_abs, sign = log_amplitudes(mps, np.asarray(chain)[None, :])
    return LogAmplitude(log_abs=float(log_abs[0]), sign=int(sign[0]))


# ---------------- norm ----------------

def _left_caps(cores: Sequence[Tensor], counter: Optional[OpCounter]) -> Tuple[List[Tensor], List[float]]:
    n = len(cores)
    v, chi = cores[0].shape
    # cap creation: contract both copies of core 0 over the physical index (v * chi^2)
    cap = matmul(transpose(cores[0], (1, 0)), cores[0], counter, "cap")
    caps, logs = [], []
    log = 0.0
    for i in range(1, n):
        scale = float(np.max(np.abs(cap)))
        if not math.isfinite(scale) or scale == 0.0:
            raise NumericalDomainError(f"norm cap {i - 1} is degenerate (max |entry| = {scale})")
        cap = cap / scale
        log += math.log(scale)
        caps.append(cap)
        logs.append(log)
        if i == n - 1:
            break
        # step 1: cap into the top core, a batched matmul over the physical index
        top = matmul(cap, cores[i], counter, "loop_top")                     # (v, chi, chi)
        # step 2: merge (v, chi) and multiply by the transposed bottom copy
        merged_top = reshape(top, (v * chi, chi))
        merged_bottom = reshape(cores[i], (v * chi, chi))
        cap = matmul(transpose(merged_bottom, (1, 0)), merged_top, counter, "loop_cap")
    return caps, logs


def _final_contraction(cores: Sequence[Tensor], cap: Tensor, counter: Optional[OpCounter]) -> float:
    last = cores[-1]
    # one index fewer than the loop: (v, chi) @ cap, then a flat inner product
    top = matmul(last, cap, counter, "final_cap")
    if counter is not None:
        counter.add("final_inner", last.size)
    return float(np.dot(reshape(top, (top.size,)), reshape(last, (last.size,))))


def norm_caps(mps: DenseMPS, counter: Optional[OpCounter] = None) -> NormCaps:
    caps, logs = _left_caps(mps.cores, counter)
    value = _final_contraction(mps.cores, caps[-1], counter)
    if not math.isfinite(value) or value <= 0.0:
        raise NumericalDomainError(f"<psi|psi> contraction is not positive: {value}")
    return NormCaps(caps=tuple(caps), log_scales=tuple(logs), log_norm_sq=logs[-1] + math.log(value))


def log_norm_sq(mps: DenseMPS, counter: Optional[OpCounter] = None) -> float:
    return norm_caps(mps, counter).log_norm_sq


def _reversed_cores(cores: Sequence[Tensor]) -> List[Tensor]:
    n = len(cores)
    out = [cores[n - 1]]
    out.extend(transpose(cores[i], (0, 2, 1)) for i in range(n - 2, 0, -1))
    out.append(cores[0])
    return out


def _log_norm_sq_grad(cores: Sequence[Tensor]) -> Tuple[float, List[Tensor]]:
    """ln<psi|psi> and its gradient: 2 x (norm-network environment of each core) / <psi|psi>."""
    n = len(cores)
    left = norm_caps(DenseMPS(cores=tuple(cores)))
    right_caps, right_logs = _left_caps(_reversed_cores(cores), None)
    lnz = left.log_norm_sq

    def right(i):  # cap over sites i..n-1
        return right_caps[n - 1 - i], right_logs[n - 1 - i]

    grads: List[Tensor] = []
    d, dl = right(1)
    grads.append(2.0 * (cores[0] @ d) * math.exp(dl - lnz))
    for i in range(1, n - 1):
        c, cl = left.caps[i - 1], left.log_scales[i - 1]
        d, dl = right(i + 1)
        grads.append(2.0 * np.matmul(np.matmul(c, cores[i]), d) * math.exp(cl + dl - lnz))
    c, cl = left.caps[n - 2], left.log_scales[n - 2]
    grads.append(2.0 * (cores[n - 1] @ c) * math.exp(cl - lnz))
    return lnz, grads


def _normalizer(cores: Sequence[Tensor], norm_mode: NormMode, need_grad: bool) -> Tuple[float, Optional[List[Tensor]]]:
    if norm_mode == NormMode.EXACT:
        if need_grad:
            return _log_norm_sq_grad(cores)
        return log_norm_sq(DenseMPS(cores=tuple(cores))), None
    if norm_mode == NormMode.CONSTANT_ONE:
        return 0.0, ([np.zeros_like(c) for c in cores] if need_grad else None)
    if norm_mode == NormMode.L2_PARAMS:
        total = float(sum(np.sum(c * c) for c in cores))
        if total <= 0.0:
            raise NumericalDomainError("l2 parameter norm is zero")
        return math.log(total), ([2.0 * c / total for c in cores] if need_grad else None)
    raise ValueError(f"Unknown norm mode: {norm_mode}")


# ---------------- probabilities ----------------

def log_probs(mps: DenseMPS, codes: np.ndarray, norm_mode: NormMode | str = NormMode.EXACT) -> np.ndarray:
    """2 ln|<s|psi>| - ln Z, clamped to <= LP_CLAMP; -inf for exactly-zero amplitudes."""
    lnz, _ = _normalizer(mps.cores, NormMode(norm_mode), need_grad=False)
    log_abs, _ = log_amplitudes(mps, codes)
    return np.minimum(2.0 * log_abs - lnz, LP_CLAMP)


def log_prob(mps: DenseMPS, chain: Sequence[int]) -> float:
    return float(log_probs(mps, np.asarray(chain)[None, :])[0])


def sigma_mass(mps: DenseMPS, chains: np.ndarray) -> float:
    """Total probability on `chains` (assumed distinct), summed with math.fsum in row order."""
    chains = np.asarray(chains)
    if chains.shape[0] == 0:
        return 0.0
    return math.fsum(np.exp(log_probs(mps, chains)).tolist())


# ---------------- loss and gradients ----------------

def _bce_terms(lp_raw: np.ndarray, labels: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Per-item loss and d(loss)/d(lp) of -[y lp + (1-y) ln(1 - e^lp)] with the lp clamp."""
    lp = np.minimum(lp_raw, LP_CLAMP)
    clamped = lp_raw > LP_CLAMP
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        log_comp = np.log(-np.expm1(lp))
        y_term = np.where(labels > 0, labels * lp, 0.0)
        n_term = np.where(labels < 1, (1.0 - labels) * log_comp, 0.0)
        loss = -(y_term + n_term)
        dlp = -labels + (1.0 - labels) / np.expm1(-lp)
    # the clamp is flat, so clamped items carry no gradient
    dlp = np.where(clamped, 0.0, dlp)
    return loss, dlp


def loss_and_grad(
    mps: DenseMPS,
    batch: Batch,
    alpha: float = 0.0,
    norm_mode: NormMode | str = NormMode.EXACT,
) -> Tuple[float, List[Tensor]]:
    """
    loss = -mean[y lp + (1-y) ln(1 - e^lp)] + alpha * ln<psi|psi>
    where the normalizer inside lp follows norm_mode and the alpha term always uses the exact norm.
    """
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    norm_mode = NormMode(norm_mode)
    cores = mps.cores
    n, v = mps.n, mps.v
    codes = _check_codes(mps, batch.codes)
    labels = np.asarray(batch.labels, dtype=np.float64)
    size = codes.shape[0]

    lnz, g_norm = _normalizer(cores, norm_mode, need_grad=True)
    left, left_logs = _left_envs(cores, codes, keep=True)
    right, right_logs = _right_envs(cores, codes)
    log_abs, sign = _finish(cores, codes, left[-1], left_logs[-1])

    per_item, dlp = _bce_terms(2.0 * log_abs - lnz, labels)
    loss = float(np.mean(per_item))
    if not math.isfinite(loss):
        bad = int(np.argmax(~np.isfinite(per_item)))
        raise NumericalDomainError(
            f"non-finite loss: item {bad} has label {labels[bad]:g} and log_prob {2.0 * log_abs[bad] - lnz:g}"
        )
    w = dlp / size

    # d lp / d core = 2 d ln|a| / d core - d ln Z / d core; d ln|a| / d x = (d a / d x) / a
    def coef(log_env: np.ndarray) -> np.ndarray:
        with np.errstate(over="ignore", invalid="ignore"):
            c = 2.0 * w * sign * np.exp(log_env - log_abs)
        return np.where(sign != 0, c, 0.0)

    onehot = np.eye(v)
    grads: List[Tensor] = []
    grads.append(np.einsum("bt,bk->tk", onehot[codes[:, 0]] * coef(right_logs[1])[:, None], right[1]))
    for i in range(1, n - 1):
        c = coef(left_logs[i - 1] + right_logs[i + 1])
        grads.append(np.einsum("bt,bj,bk->tjk", onehot[codes[:, i]] * c[:, None], left[i - 1], right[i + 1]))
    grads.append(np.einsum("bt,bj->tj", onehot[codes[:, n - 1]] * coef(left_logs[n - 2])[:, None], left[n - 2]))

    w_total = float(np.sum(w))
    grads = [g - w_total * gz for g, gz in zip(grads, g_norm)]

    if alpha > 0:
        lnz_exact, g_exact = _log_norm_sq_grad(cores)
        loss += alpha * lnz_exact
        grads = [g + alpha * ge for g, ge in zip(grads, g_exact)]
    return loss, grads


# ---------------- brute-force oracles ----------------

def _direct_amplitudes(mps: DenseMPS, codes: np.ndarray) -> np.ndarray:
    vec = mps.cores[0][codes[:, 0]]
    for i in range(1, mps.n - 1):
        vec = np.einsum("bj,bjk->bk", vec, mps.cores[i][codes[:, i]])
    return np.sum(vec * mps.cores[-1][codes[:, -1]], axis=1)


def _all_chains_guarded(mps: DenseMPS) -> np.ndarray:
    if mps.n > BRUTE_FORCE_MAX_N:
        raise GuardError(f"brute-force guard exceeded: n={mps.n} > {BRUTE_FORCE_MAX_N}")
    if mps.v != 3:
        raise GuardError(f"brute-force oracles enumerate spin-1 chains only, got v={mps.v}")
    return all_chains(mps.n)


def brute_force_norm_sq(mps: DenseMPS) -> float:
    amps = _direct_amplitudes(mps, _all_chains_guarded(mps))
    return math.fsum((amps * amps).tolist())


def brute_force_distribution(mps: DenseMPS) -> Dict[Chain, float]:
    chains = _all_chains_guarded(mps)
    amps = _direct_amplitudes(mps, chains)
    sq = amps * amps
    total = math.fsum(sq.tolist())
    return {tuple(int(c) for c in row): float(p) for row, p in zip(chains, sq / total)}


def main() -> None:
    from motzkin_tn.tensor import make_rng

    mps = init_dense(6, 3, 4, sigma_inner=0.2, sigma_outer=0.2, rng=make_rng(0))
    print("=== mps.main() ===")
    print("parameters:", parameter_count(mps))
    print("ln<psi|psi> caps:", log_norm_sq(mps), "brute force:", math.log(brute_force_norm_sq(mps)))
    codes = all_chains(6)
    print("sum of probabilities:", math.fsum(np.exp(log_probs(mps, codes)).tolist()))


if __name__ == "__main__":
    main()
