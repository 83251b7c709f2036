"""
factored.py
- Factored-core MPS: every site core is a vertical stack of h subcores
- subcore layout (p, down, left, right, up), absent legs kept as extent-1 axes:
    p = v on the bottom subcore (and on every subcore with skip), else 1
    down = 1 at the bottom, up = 1 at the top
    left = 1 on the left outer core, right = 1 on the right outer core
- contract_vertical: bottom-up pairwise contraction into the effective dense core
  (bond chi_h^h per side, bottom subcore's bond most significant)
- factorize_core: iterated SVD from a dense core, bottom subcore first
- skip layout: copy-tensor semantics, slice t of the effective core uses slice t of every subcore
- gradients: effective-core gradient contracted with the sibling subcores
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np

from motzkin_tn.errors import ShapeError
from motzkin_tn.mps import Batch, DenseMPS, NormMode, init_dense, loss_and_grad
from motzkin_tn.tensor import (
    OpCounter,
    Rng,
    Tensor,
    random_orthonormal_columns,
    reshape,
    rng_normal,
    rng_uniform,
    svd,
    transpose,
)

logger = logging.getLogger(__name__)

SV_FILL_LO = 0.001
SV_FILL_HI = 0.01


class PositionKind(str, Enum):
    OUTER_LEFT = "outer_left"
    INNER = "inner"
    OUTER_RIGHT = "outer_right"


def position_of(site: int, n: int) -> PositionKind:
    if site == 0:
        return PositionKind.OUTER_LEFT
    if site == n - 1:
        return PositionKind.OUTER_RIGHT
    return PositionKind.INNER


@dataclass(frozen=True)
class FactoredCore:
    position_kind: PositionKind
    skip: bool
    subcores: Tuple[Tensor, ...]   # bottom first

    def __post_init__(self) -> None:
        _check_core(self)

    @property
    def h(self) -> int:
        return len(self.subcores)

    @property
    def v(self) -> int:
        return int(self.subcores[0].shape[0])

    @property
    def chi_h(self) -> int:
        s = self.subcores[0]
        return int(s.shape[3] if self.position_kind == PositionKind.OUTER_LEFT else s.shape[2])

    @property
    def chi_v(self) -> Optional[int]:
        return int(self.subcores[0].shape[4]) if self.h > 1 else None


@dataclass(frozen=True)
class FactoredMPS:
    n: int
    v: int
    chi_h: int
    chi_v: int
    h: int
    skip: bool
    cores: Tuple[FactoredCore, ...] = field(repr=False)

    def __post_init__(self) -> None:
        if len(self.cores) != self.n:
            raise ShapeError(f"expected {self.n} factored cores, got {len(self.cores)}")
        for i, core in enumerate(self.cores):
            if core.position_kind != position_of(i, self.n):
                raise ShapeError(f"core {i} is {core.position_kind.value}, expected {position_of(i, self.n).value}")
            want = subcore_shapes(core.position_kind, self.v, self.chi_h, self.chi_v, self.h, self.skip)
            got = [tuple(s.shape) for s in core.subcores]
            if got != want:
                raise ShapeError(f"core {i} subcore shapes {got} do not match {want}")

    def with_subcores(self, subcores: Sequence[Sequence[Tensor]]) -> "FactoredMPS":
        cores = tuple(
            FactoredCore(position_kind=c.position_kind, skip=c.skip, subcores=tuple(np.asarray(s) for s in subs))
            for c, subs in zip(self.cores, subcores)
        )
        return replace(self, cores=cores)


@dataclass(frozen=True)
class SplitRecord:
    level: int
    rows: int
    cols: int
    rank: int
    kept: int
    appended: int
    spectrum: Tuple[float, ...]
    discarded: Tuple[float, ...]
    truncation_error: float


# ---------------- layout ----------------

def subcore_shapes(kind: PositionKind, v: int, chi_h: int, chi_v: int, h: int, skip: bool) -> List[Tuple[int, ...]]:
    left = 1 if kind == PositionKind.OUTER_LEFT else chi_h
    right = 1 if kind == PositionKind.OUTER_RIGHT else chi_h
    shapes = []
    for k in range(h):
        p = v if (k == 0 or skip) else 1
        down = 1 if k == 0 else chi_v
        up = 1 if k == h - 1 else chi_v
        shapes.append((p, down, left, right, up))
    return shapes


def _check_core(core: FactoredCore) -> None:
    subs = core.subcores
    if not subs:
        raise ShapeError("a factored core needs at least one subcore")
    for k, s in enumerate(subs):
        if s.ndim != 5:
            raise ShapeError(f"subcore {k} must be (p, down, left, right, up), got shape {s.shape}")
    v = subs[0].shape[0]
    left, right = subs[0].shape[2], subs[0].shape[3]
    if subs[0].shape[1] != 1:
        raise ShapeError(f"bottom subcore must have down extent 1, got {subs[0].shape}")
    if subs[-1].shape[4] != 1:
        raise ShapeError(f"top subcore must have up extent 1, got {subs[-1].shape}")
    if core.position_kind == PositionKind.OUTER_LEFT and left != 1:
        raise ShapeError(f"left outer core cannot have a left bond, got {subs[0].shape}")
    if core.position_kind == PositionKind.OUTER_RIGHT and right != 1:
        raise ShapeError(f"right outer core cannot have a right bond, got {subs[0].shape}")
    for k in range(1, len(subs)):
        s, below = subs[k], subs[k - 1]
        want_p = v if core.skip else 1
        if s.shape[0] != want_p:
            raise ShapeError(f"subcore {k} physical extent {s.shape[0]} != {want_p}")
        if s.shape[1] != below.shape[4]:
            raise ShapeError(f"vertical bond mismatch between subcores {k - 1} and {k}: {below.shape} / {s.shape}")
        if (s.shape[2], s.shape[3]) != (left, right):
            raise ShapeError(f"horizontal extents differ within the stack: {subs[0].shape} / {s.shape}")


def core_parameter_count(core: FactoredCore) -> int:
    return int(sum(s.size for s in core.subcores))


def parameter_count(fmps: FactoredMPS) -> int:
    return int(sum(core_parameter_count(c) for c in fmps.cores))


def _to_dense_form(core: FactoredCore, canonical: Tensor) -> Tensor:
    """(v, L, R) -> the dense-core convention: inner (v, L, R), left outer (v, R), right outer (v, L)."""
    if core.position_kind == PositionKind.OUTER_LEFT:
        return canonical[:, 0, :]
    if core.position_kind == PositionKind.OUTER_RIGHT:
        return canonical[:, :, 0]
    return canonical


def _to_canonical(kind: PositionKind, dense: Tensor) -> Tensor:
    if kind == PositionKind.INNER:
        if dense.ndim != 3:
            raise ShapeError(f"inner dense core must be (v, chi, chi), got {dense.shape}")
        return dense
    if dense.ndim != 2:
        raise ShapeError(f"outer dense core must be (v, chi), got {dense.shape}")
    return dense[:, None, :] if kind == PositionKind.OUTER_LEFT else dense[:, :, None]


# ---------------- vertical contraction ----------------

def contract_vertical(core: FactoredCore, counter: Optional[OpCounter] = None) -> Tensor:
    """Contract the stack bottom-up, merging horizontal bonds as they accumulate."""
    subs = core.subcores
    acc = subs[0][:, 0]                                   # (v, L, R, up)
    v = acc.shape[0]
    for k in range(1, len(subs)):
        s = subs[k]
        big_l, big_r, a = acc.shape[1], acc.shape[2], acc.shape[3]
        _, _, l, r, b = s.shape
        if counter is not None:
            counter.add(f"vertical_{k}", v * big_l * big_r * a * l * r * b)
        if s.shape[0] == 1:
            acc = np.einsum("tLRa,alrb->tLlRrb", acc, s[0])
        else:
            acc = np.einsum("tLRa,talrb->tLlRrb", acc, s)
        acc = reshape(acc, (v, big_l * l, big_r * r, b))
    return _to_dense_form(core, acc[..., 0])


def _fused_operands(core: FactoredCore, skip_index: Optional[int] = None) -> Tuple[list, List[int], List[int]]:
    """einsum sublist operands for every subcore except `skip_index`, plus the l and r labels."""
    h = len(core.subcores)
    t = 0
    downs = list(range(1, h + 1))
    ups = downs[1:] + [h + 1]
    lefts = list(range(h + 2, 2 * h + 2))
    rights = list(range(2 * h + 2, 3 * h + 2))
    operands: list = []
    for k, s in enumerate(core.subcores):
        if k == skip_index:
            continue
        legs = [downs[k], lefts[k], rights[k], ups[k]]
        if s.shape[0] == 1:
            operands += [s[0], legs]
        else:
            operands += [s, [t] + legs]
    return operands, lefts, rights


def contract_vertical_fused(core: FactoredCore) -> Tensor:
    """Single-einsum evaluation of the same effective core."""
    operands, lefts, rights = _fused_operands(core)
    out = np.einsum(*operands, [0] + lefts + rights, optimize=True)
    v = core.v
    big_l = math.prod(s.shape[2] for s in core.subcores)
    big_r = math.prod(s.shape[3] for s in core.subcores)
    return _to_dense_form(core, reshape(out, (v, big_l, big_r)))


def backprop_vertical(core: FactoredCore, grad_effective: Tensor) -> List[Tensor]:
    """Gradient of each subcore given d(loss)/d(effective core)."""
    h = len(core.subcores)
    subs = core.subcores
    g = _to_canonical(core.position_kind, np.asarray(grad_effective, dtype=np.float64))
    g = reshape(g, (core.v,) + tuple(s.shape[2] for s in subs) + tuple(s.shape[3] for s in subs))
    grads: List[Tensor] = []
    for k in range(h):
        operands, lefts, rights = _fused_operands(core, skip_index=k)
        downs = list(range(1, h + 1))
        ups = downs[1:] + [h + 1]
        # the bottom down leg and the top up leg appear on no other operand
        legs = [leg for leg in (downs[k], lefts[k], rights[k], ups[k]) if leg not in (1, h + 1)]
        if subs[k].shape[0] == 1:
            gk = np.einsum(g, [0] + lefts + rights, *operands, legs, optimize=True)[None]
        else:
            gk = np.einsum(g, [0] + lefts + rights, *operands, [0] + legs, optimize=True)
        grads.append(reshape(gk, subs[k].shape))
    return grads


def to_dense(fmps: FactoredMPS, counter: Optional[OpCounter] = None) -> DenseMPS:
    return DenseMPS(cores=tuple(contract_vertical(c, counter) for c in fmps.cores))


# ---------------- factorization ----------------

def truncate_rank(m: Tensor, k: int, engine: str = "jacobi") -> Tuple[Tensor, float]:
    """Best rank-k approximation and its Frobenius error sqrt(sum of discarded s^2)."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"truncate_rank expects a matrix, got shape {m.shape}")
    full = min(m.shape)
    if not (1 <= k <= full):
        raise ValueError(f"rank must be in [1, {full}], got {k}")
    res = svd(m, engine=engine)
    approx = (res.u[:, :k] * res.s[:k]) @ res.vt[:k]
    return approx, float(np.sqrt(np.sum(res.s[k:] ** 2)))


def _split(
    mat: Tensor,
    chi_v: int,
    level: int,
    sv_fill_lo: float,
    sv_fill_hi: float,
    rng: Optional[Rng],
    engine: str,
) -> Tuple[Tensor, Tensor, SplitRecord]:
    rows, cols = mat.shape
    res = svd(mat, engine=engine)
    rank = res.k
    u, s, vt = res.u, res.s, res.vt
    discarded = s[chi_v:] if chi_v < rank else np.zeros(0)
    appended = max(0, chi_v - rank)
    if chi_v < rank:
        u, s, vt = u[:, :chi_v], s[:chi_v], vt[:chi_v]
    elif appended:
        if rng is None:
            raise ValueError(f"chi_v={chi_v} exceeds split rank {rank}; a generator is required to append directions")
        extra_s = rng_uniform(rng, (appended,), sv_fill_lo, sv_fill_hi)
        extra_u = random_orthonormal_columns(rows, appended, rng, against=u)
        extra_v = random_orthonormal_columns(cols, appended, rng, against=vt.T)
        u = np.concatenate([u, extra_u], axis=1)
        s = np.concatenate([s, extra_s])
        vt = np.concatenate([vt, extra_v.T], axis=0)
    record = SplitRecord(
        level=level,
        rows=rows,
        cols=cols,
        rank=rank,
        kept=min(chi_v, rank),
        appended=appended,
        spectrum=tuple(float(x) for x in res.s),
        discarded=tuple(float(x) for x in discarded),
        truncation_error=float(np.sqrt(np.sum(discarded ** 2))),
    )
    # singular values go to the upper factor
    return u, s[:, None] * vt, record


def factorize_core_with_report(
    dense_core: Tensor,
    chi_h: int,
    h: int,
    chi_v: int,
    sv_fill_lo: float = SV_FILL_LO,
    sv_fill_hi: float = SV_FILL_HI,
    rng: Optional[Rng] = None,
    kind: PositionKind = PositionKind.INNER,
    engine: str = "jacobi",
) -> Tuple[List[Tensor], List[SplitRecord]]:
    kind = PositionKind(kind)
    if h < 1 or chi_h < 1 or chi_v < 1:
        raise ValueError(f"need h, chi_h, chi_v >= 1; got h={h}, chi_h={chi_h}, chi_v={chi_v}")
    canon = _to_canonical(kind, np.asarray(dense_core, dtype=np.float64))
    v, big_l, big_r = canon.shape
    lh = 1 if kind == PositionKind.OUTER_LEFT else chi_h
    rh = 1 if kind == PositionKind.OUTER_RIGHT else chi_h
    if big_l != lh ** h or big_r != rh ** h:
        raise ShapeError(
            f"{kind.value} dense core {tuple(dense_core.shape)} does not have bond chi_h^h = {chi_h ** h}"
        )

    # axes: (D, l_k..l_{h-1}, r_k..r_{h-1})
    rest = reshape(canon, (v,) + (lh,) * h + (rh,) * h)
    subcores: List[Tensor] = []
    records: List[SplitRecord] = []
    for k in range(h - 1):
        remaining = h - k
        d = rest.shape[0]
        perm = [0, 1, 1 + remaining] + list(range(2, 1 + remaining)) + list(range(2 + remaining, 1 + 2 * remaining))
        mat = reshape(transpose(rest, perm), (d * lh * rh, rest.size // (d * lh * rh)))
        lower, upper, record = _split(mat, chi_v, k, sv_fill_lo, sv_fill_hi, rng, engine)
        records.append(record)
        if k == 0:
            subcores.append(reshape(lower, (v, 1, lh, rh, chi_v)))
        else:
            subcores.append(reshape(lower, (1, d, lh, rh, chi_v)))
        rest = reshape(upper, (chi_v,) + (lh,) * (remaining - 1) + (rh,) * (remaining - 1))
    if h == 1:
        subcores.append(reshape(rest, (v, 1, lh, rh, 1)))
    else:
        subcores.append(reshape(rest, (1, chi_v, lh, rh, 1)))
    return subcores, records


def factorize_core(
    dense_core: Tensor,
    chi_h: int,
    h: int,
    chi_v: int,
    sv_fill_lo: float = SV_FILL_LO,
    sv_fill_hi: float = SV_FILL_HI,
    rng: Optional[Rng] = None,
    kind: PositionKind = PositionKind.INNER,
    engine: str = "jacobi",
) -> List[Tensor]:
    subcores, _ = factorize_core_with_report(dense_core, chi_h, h, chi_v, sv_fill_lo, sv_fill_hi, rng, kind, engine)
    return subcores


def lift_to_skip(subcores: Sequence[Tensor], v: int, sigma: float = 0.0, rng: Optional[Rng] = None) -> List[Tensor]:
    """Give upper subcores a physical index: equal slices across t, plus N(0, sigma^2) noise."""
    out = [np.array(subcores[0])]
    for s in subcores[1:]:
        if s.shape[0] != 1:
            raise ShapeError(f"subcore already has a physical index: {s.shape}")
        lifted = np.repeat(s, v, axis=0)
        if sigma > 0:
            if rng is None:
                raise ValueError("a generator is required for noisy lifting")
            lifted = lifted + rng_normal(rng, lifted.shape, 0.0, sigma)
        out.append(lifted)
    return out


# ---------------- initialization ----------------

def init_factored(
    n: int,
    v: int,
    chi_h: int,
    h: int,
    chi_v: int,
    skip: bool = False,
    sigma_inner: float = 0.01,
    sigma_outer: float = 0.01,
    sv_fill_lo: float = SV_FILL_LO,
    sv_fill_hi: float = SV_FILL_HI,
    rng: Optional[Rng] = None,
    init: str = "factorized",
    engine: str = "jacobi",
) -> FactoredMPS:
    """
    init="factorized": factorize a dense model initialized with bond chi_h^h;
    skip models lift that factorization so copy-tensor contraction gives the same cores.
    init="uniform": independent uniform [0, 1) subcores (negative control).
    """
    if init == "uniform":
        return init_uniform_factored(n, v, chi_h, h, chi_v, skip, rng)
    if init != "factorized":
        raise ValueError(f"Unknown factored init: {init}")

    dense = init_dense(n, v, chi_h ** h, sigma_inner, sigma_outer, rng)
    cores = []
    for i, core in enumerate(dense.cores):
        kind = position_of(i, n)
        subs = factorize_core(core, chi_h, h, chi_v, sv_fill_lo, sv_fill_hi, rng, kind, engine)
        if skip:
            sigma = sigma_inner if kind == PositionKind.INNER else sigma_outer
            subs = lift_to_skip(subs, v, sigma, rng)
        cores.append(FactoredCore(position_kind=kind, skip=skip, subcores=tuple(subs)))
    fmps = FactoredMPS(n=n, v=v, chi_h=chi_h, chi_v=chi_v, h=h, skip=skip, cores=tuple(cores))
    logger.debug("factored init n=%d h=%d chi_h=%d chi_v=%d skip=%s: %d parameters", n, h, chi_h, chi_v, skip, parameter_count(fmps))
    return fmps


def init_uniform_factored(n: int, v: int, chi_h: int, h: int, chi_v: int, skip: bool, rng: Rng) -> FactoredMPS:
    if rng is None:
        raise ValueError("a generator is required for uniform initialization")
    cores = []
    for i in range(n):
        kind = position_of(i, n)
        subs = tuple(rng_uniform(rng, shape, 0.0, 1.0) for shape in subcore_shapes(kind, v, chi_h, chi_v, h, skip))
        cores.append(FactoredCore(position_kind=kind, skip=skip, subcores=subs))
    return FactoredMPS(n=n, v=v, chi_h=chi_h, chi_v=chi_v, h=h, skip=skip, cores=tuple(cores))


def factorize_mps(
    mps: DenseMPS,
    chi_h: int,
    h: int,
    chi_v: int,
    skip: bool = False,
    sv_fill_lo: float = SV_FILL_LO,
    sv_fill_hi: float = SV_FILL_HI,
    rng: Optional[Rng] = None,
    engine: str = "jacobi",
) -> Tuple[FactoredMPS, List[List[SplitRecord]]]:
    """Factorize every core of a trained or initialized dense model; skip lifting adds no noise."""
    cores, reports = [], []
    for i, core in enumerate(mps.cores):
        kind = position_of(i, mps.n)
        subs, records = factorize_core_with_report(core, chi_h, h, chi_v, sv_fill_lo, sv_fill_hi, rng, kind, engine)
        if skip:
            subs = lift_to_skip(subs, mps.v)
        cores.append(FactoredCore(position_kind=kind, skip=skip, subcores=tuple(subs)))
        reports.append(records)
    fmps = FactoredMPS(n=mps.n, v=mps.v, chi_h=chi_h, chi_v=chi_v, h=h, skip=skip, cores=tuple(cores))
    return fmps, reports


# ---------------- training ----------------

def loss_and_grad_factored(
    fmps: FactoredMPS,
    batch: Batch,
    alpha: float = 0.0,
    norm_mode: NormMode | str = NormMode.EXACT,
) -> Tuple[float, List[List[Tensor]]]:
    """Loss of the effective dense model; grads nested as [core][subcore]."""
    loss, dense_grads = loss_and_grad(to_dense(fmps), batch, alpha, norm_mode)
    return loss, [backprop_vertical(core, g) for core, g in zip(fmps.cores, dense_grads)]


def main() -> None:
    from motzkin_tn.mps import log_norm_sq, parameter_count as dense_count
    from motzkin_tn.tensor import make_rng

    rng = make_rng(0)
    fmps = init_factored(16, 3, chi_h=3, h=2, chi_v=8, rng=rng)
    print("=== factored.main() ===")
    print("factored parameters:", parameter_count(fmps))
    print("effective dense parameters:", dense_count(to_dense(fmps)))
    print("ln<psi|psi>:", log_norm_sq(to_dense(fmps)))
    skip = init_factored(16, 3, chi_h=2, h=3, chi_v=4, skip=True, rng=rng)
    print("skip parameters:", parameter_count(skip))


if __name__ == "__main__":
    main()
