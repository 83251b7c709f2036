"""
tensor.py
- Minimal dense-tensor kernel on top of numpy: float64, row-major, pure functions
- reshape / transpose / matmul (plain and one-leading-batch-axis) with shape checks
- OpCounter: multiply-add bookkeeping for the contraction cost contracts
- SVD: one-sided Jacobi implemented here; LAPACK kept as a second engine
  (engine="auto" falls back to it, the same way module alignment falls back
  from igraph to networkx)
- Seeded PCG64 generators; sub-seeds derived from (seed, role) by sha1
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from hashlib import sha1
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from motzkin_tn.errors import ConvergenceError, NumericalDomainError, ShapeError

logger = logging.getLogger(__name__)

Tensor = np.ndarray
Rng = np.random.Generator

JACOBI_MAX_SWEEPS = 100
# a column pair counts as orthogonal once |<a_p, a_q>| <= tol * |a_p| * |a_q|
JACOBI_TOL = 1e-12


@dataclass(frozen=True)
class SvdResult:
    u: Tensor      # (m, k), orthonormal columns
    s: Tensor      # (k,), non-negative, non-increasing
    vt: Tensor     # (k, n), orthonormal rows

    @property
    def k(self) -> int:
        return int(self.s.shape[0])

    def reconstruct(self) -> Tensor:
        return (self.u * self.s) @ self.vt


@dataclass
class OpCounter:
    """Counts multiply-adds per label; `largest` is the costliest single contraction."""

    counts: Dict[str, int] = field(default_factory=dict)
    largest: int = 0

    def add(self, label: str, madds: int) -> None:
        madds = int(madds)
        self.counts[label] = self.counts.get(label, 0) + madds
        self.largest = max(self.largest, madds)

    @property
    def total(self) -> int:
        return sum(self.counts.values())


def as_tensor(x) -> Tensor:
    t = np.asarray(x, dtype=np.float64)
    if any(d < 1 for d in t.shape):
        raise ShapeError(f"tensor extents must be >= 1, got shape {t.shape}")
    return t


def reshape(t: Tensor, new_shape: Sequence[int]) -> Tensor:
    t = np.asarray(t, dtype=np.float64)
    new_shape = tuple(int(d) for d in new_shape)
    if math.prod(new_shape) != t.size:
        raise ShapeError(f"cannot reshape {t.shape} (size {t.size}) into {new_shape}")
    return np.reshape(t, new_shape, order="C")


def transpose(t: Tensor, perm: Sequence[int]) -> Tensor:
    t = np.asarray(t, dtype=np.float64)
    perm = tuple(int(p) for p in perm)
    if sorted(perm) != list(range(t.ndim)):
        raise ShapeError(f"invalid permutation {perm} for a rank-{t.ndim} tensor")
    return np.ascontiguousarray(np.transpose(t, perm))


def matmul(a: Tensor, b: Tensor, counter: Optional[OpCounter] = None, label: str = "matmul") -> Tensor:
    """
    (m,k)@(k,n), or the batched form with one leading batch axis on either or
    both operands: (B,m,k)@(B,k,n), (m,k)@(B,k,n), (B,m,k)@(k,n).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim not in (2, 3) or b.ndim not in (2, 3):
        raise ShapeError(f"matmul expects rank-2 or rank-3 operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} @ {b.shape}")
    batch = 1
    if a.ndim == 3 and b.ndim == 3:
        if a.shape[0] != b.shape[0]:
            raise ShapeError(f"matmul batch extents differ: {a.shape} @ {b.shape}")
        batch = a.shape[0]
    elif a.ndim == 3:
        batch = a.shape[0]
    elif b.ndim == 3:
        batch = b.shape[0]
    if counter is not None:
        counter.add(label, batch * a.shape[-2] * a.shape[-1] * b.shape[-1])
    return np.matmul(a, b)


# ---------------- SVD ----------------

def _fix_signs(u: Tensor, vt: Tensor) -> Tuple[Tensor, Tensor]:
    # largest-magnitude entry of every left singular vector is made non-negative
    rows = np.argmax(np.abs(u), axis=0)
    flip = u[rows, np.arange(u.shape[1])] < 0
    u = u.copy()
    vt = vt.copy()
    u[:, flip] *= -1.0
    vt[flip, :] *= -1.0
    return u, vt


def _fill_null_columns(u: Tensor, defined: np.ndarray) -> Tensor:
    """Replace undefined columns (zero singular value) by an orthonormal completion."""
    m, k = u.shape
    basis = [u[:, j] for j in range(k) if defined[j]]
    candidates = iter(np.eye(m))
    for j in range(k):
        if defined[j]:
            continue
        for e in candidates:
            r = e.copy()
            for _ in range(2):
                for q in basis:
                    r -= q * (q @ r)
            norm = np.linalg.norm(r)
            if norm > 0.5:
                u[:, j] = r / norm
                basis.append(u[:, j])
                break
    return u


def _jacobi_tall(a: Tensor) -> Tuple[Tensor, Tensor, Tensor]:
    m, n = a.shape
    work = a.copy()
    v = np.eye(n)
    for _ in range(JACOBI_MAX_SWEEPS):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                wp = work[:, p]
                wq = work[:, q]
                alpha = float(wp @ wp)
                beta = float(wq @ wq)
                gamma = float(wp @ wq)
                if gamma == 0.0 or abs(gamma) <= JACOBI_TOL * math.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                old_p = wp.copy()
                work[:, p] = c * old_p - s * wq
                work[:, q] = s * old_p + c * work[:, q]
                old_vp = v[:, p].copy()
                v[:, p] = c * old_vp - s * v[:, q]
                v[:, q] = s * old_vp + c * v[:, q]
        if not rotated:
            break
    else:
        raise ConvergenceError(
            f"one-sided Jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps for a {m}x{n} matrix"
        )

    sigma = np.linalg.norm(work, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    work = work[:, order]
    v = v[:, order]

    tiny = (sigma[0] if n else 0.0) * max(m, n) * np.finfo(np.float64).eps
    defined = sigma > tiny
    u = np.zeros((m, n))
    u[:, defined] = work[:, defined] / sigma[defined]
    if not defined.all():
        u = _fill_null_columns(u, defined)
    return u, sigma, v.T


def _jacobi_svd(a: Tensor) -> Tuple[Tensor, Tensor, Tensor]:
    m, n = a.shape
    if m < n:
        u, s, vt = _jacobi_tall(a.T.copy())
        return vt.T, s, u.T
    return _jacobi_tall(a)


def _lapack_svd(a: Tensor) -> Tuple[Tensor, Tensor, Tensor]:
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    return u, s, vt


def svd(m: Tensor, engine: str = "jacobi") -> SvdResult:
    """
    Thin real SVD, k = min(m, n).

    engine:
      - "jacobi": one-sided Jacobi, capped at JACOBI_MAX_SWEEPS sweeps
      - "lapack": numpy.linalg.svd
      - "auto":   jacobi, falling back to lapack on non-convergence
    """
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"svd expects a rank-2 tensor, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericalDomainError("svd input contains non-finite entries")

    if engine == "jacobi":
        u, s, vt = _jacobi_svd(a)
    elif engine == "lapack":
        u, s, vt = _lapack_svd(a)
    elif engine == "auto":
        try:
            u, s, vt = _jacobi_svd(a)
        except ConvergenceError as e:
            logger.warning("%s; falling back to LAPACK SVD.", e)
            u, s, vt = _lapack_svd(a)
    else:
        raise ValueError(f"Unknown svd engine: {engine}")

    u, vt = _fix_signs(u, vt)
    return SvdResult(u=u, s=np.maximum(s, 0.0), vt=vt)


# ---------------- randomness ----------------

def make_rng(seed: int) -> Rng:
    """PCG64 is the fixed generator; identical seeds give identical streams everywhere."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def derive_seed(seed: int, role: str) -> int:
    digest = sha1(f"{int(seed)}:{role}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def rng_normal(rng: Rng, shape: Sequence[int], mean: float = 0.0, std: float = 1.0) -> Tensor:
    if std < 0:
        raise ValueError(f"std must be >= 0, got {std}")
    draws = rng.standard_normal(tuple(shape))
    return mean + std * draws


def rng_uniform(rng: Rng, shape: Sequence[int], lo: float = 0.0, hi: float = 1.0) -> Tensor:
    if lo > hi:
        raise ValueError(f"uniform bounds out of order: lo={lo} > hi={hi}")
    if lo == hi:
        return np.full(tuple(shape), float(lo))
    return rng.uniform(lo, hi, tuple(shape))


def random_orthonormal_columns(m: int, k: int, rng: Rng, against: Optional[Tensor] = None) -> Tensor:
    """
    k random columns of length m, orthonormal to each other and to `against`
    while room remains; once the space is exhausted the rest are random unit vectors.
    """
    used = 0 if against is None else against.shape[1]
    room = max(0, m - used)
    draws = rng.standard_normal((m, k))
    out = np.empty((m, k))
    n_orth = min(k, room)
    if n_orth:
        block = draws[:, :n_orth]
        if against is not None and used:
            block = block - against @ (against.T @ block)
        q, r = np.linalg.qr(block)
        q = q * np.where(np.diag(r) < 0, -1.0, 1.0)
        out[:, :n_orth] = q
    rest = draws[:, n_orth:]
    if rest.shape[1]:
        out[:, n_orth:] = rest / np.linalg.norm(rest, axis=0)
    return out


def main() -> None:
    rng = make_rng(0)
    a = rng_normal(rng, (5, 3))
    res = svd(a)
    print("=== tensor.main() ===")
    print("singular values:", res.s)
    print("reconstruction error:", np.linalg.norm(res.reconstruct() - a))
    counter = OpCounter()
    matmul(rng_normal(rng, (3, 4, 4)), rng_normal(rng, (4, 4)), counter=counter)
    print("multiply-adds:", counter.total)


if __name__ == "__main__":
    main()
