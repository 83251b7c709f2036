"""
motzkin.py
- Spin-1 Motzkin chains: tokens u/f/d with codes 0/1/2 and steps +1/0/-1
- validity, Motzkin numbers, lexicographic enumeration (vectorized, sharded by prefix)
- uniform invalid sampling by rejection, mu-mixed labeled datasets
- exact pairwise mutual information over the uniform distribution on valid chains
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from functools import lru_cache
from typing import Iterator, List, Sequence, Tuple

import numpy as np
from scipy.special import xlogy

from motzkin_tn.errors import DatasetError, GuardError
from motzkin_tn.tensor import Rng, make_rng

V = 3
ENUMERATION_MAX_N = 20
MI_MAX_N = 16
EXHAUSTIVE_MAX_N = 12
# enumerate_valid streams shard by shard over prefixes of this length
SHARD_PREFIX_LEN = 4

Chain = Tuple[int, ...]


class Token(IntEnum):
    UP = 0
    FLAT = 1
    DOWN = 2

    @property
    def step(self) -> int:
        return 1 - int(self)

    @property
    def letter(self) -> str:
        return "ufd"[int(self)]


_LETTER_TO_CODE = {"u": 0, "f": 1, "d": 2}


@dataclass(frozen=True)
class LabeledDataset:
    codes: np.ndarray    # (T, n) uint8
    labels: np.ndarray   # (T,) uint8, 1 = valid
    n: int
    mu: float
    train_fraction: float
    seed: int

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def valid_codes(self) -> np.ndarray:
        return self.codes[self.labels == 1]

    def items(self) -> List[Tuple[Chain, int]]:
        return [(tuple(int(c) for c in row), int(y)) for row, y in zip(self.codes, self.labels)]


# ---------------- text codec ----------------

def encode_chain(text: str, n: int | None = None) -> Chain:
    codes = []
    for pos, ch in enumerate(text):
        code = _LETTER_TO_CODE.get(ch)
        if code is None:
            raise DatasetError(f"bad token {ch!r} at position {pos} in chain {text!r}")
        codes.append(code)
    if n is not None and len(codes) != n:
        raise DatasetError(f"chain {text!r} has length {len(codes)}, expected {n}")
    return tuple(codes)


def decode_chain(chain: Sequence[int]) -> str:
    try:
        return "".join("ufd"[int(c)] for c in chain)
    except IndexError:
        raise DatasetError(f"token code out of range in {list(chain)}") from None


# ---------------- validity / counting ----------------

def is_valid(chain: Sequence[int]) -> bool:
    height = 0
    for c in chain:
        height += 1 - int(c)
        if height < 0:
            return False
    return height == 0


def is_valid_batch(codes: np.ndarray) -> np.ndarray:
    codes = np.asarray(codes)
    if codes.ndim != 2:
        raise ValueError(f"expected a (count, n) code array, got shape {codes.shape}")
    if codes.shape[1] == 0:
        return np.ones(codes.shape[0], dtype=bool)
    heights = np.cumsum(1 - codes.astype(np.int16), axis=1)
    return (heights.min(axis=1) >= 0) & (heights[:, -1] == 0)


@lru_cache(maxsize=None)
def motzkin_number(n: int) -> int:
    """M_n = M_{n-1} + sum_{k=0}^{n-2} M_k M_{n-2-k}, M_0 = M_1 = 1."""
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    table = [1, 1]
    for m in range(2, n + 1):
        table.append(table[m - 1] + sum(table[k] * table[m - 2 - k] for k in range(m - 1)))
    return table[n]


# ---------------- enumeration ----------------

def _expand(prefixes: np.ndarray, heights: np.ndarray, steps_left: int) -> np.ndarray:
    """Grow prefixes token by token, pruning heights that cannot return to zero."""
    tokens = np.arange(V, dtype=np.uint8)
    while steps_left > 0:
        count = prefixes.shape[0]
        steps_left -= 1
        grown = np.repeat(prefixes, V, axis=0)
        nxt = np.tile(tokens, count)
        h = np.repeat(heights, V) + (1 - nxt.astype(np.int16))
        keep = (h >= 0) & (h <= steps_left)
        prefixes = np.concatenate([grown[keep], nxt[keep, None]], axis=1)
        heights = h[keep]
    return prefixes


def valid_chains(n: int, prefix: Sequence[int] = ()) -> np.ndarray:
    """All valid chains of length n starting with `prefix`, lexicographic by code, as uint8 rows."""
    if n > ENUMERATION_MAX_N:
        raise GuardError(f"enumeration guard exceeded: n={n} > {ENUMERATION_MAX_N}")
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    prefix = tuple(int(c) for c in prefix)
    if len(prefix) > n:
        raise ValueError(f"prefix of length {len(prefix)} is longer than n={n}")
    height = 0
    for c in prefix:
        height += 1 - c
        if height < 0:
            return np.zeros((0, n), dtype=np.uint8)
    if height > n - len(prefix):
        return np.zeros((0, n), dtype=np.uint8)
    start = np.array([prefix], dtype=np.uint8).reshape(1, len(prefix))
    return _expand(start, np.array([height], dtype=np.int16), n - len(prefix))


@lru_cache(maxsize=4)
def _valid_chains_cached(n: int) -> np.ndarray:
    arr = valid_chains(n)
    arr.setflags(write=False)
    return arr


def valid_chain_array(n: int) -> np.ndarray:
    """Cached read-only valid set; the validation set of every experiment."""
    return _valid_chains_cached(n)


def enumerate_valid(n: int) -> Iterator[Chain]:
    """Stream valid chains in lexicographic order, one prefix shard at a time."""
    if n > ENUMERATION_MAX_N:
        raise GuardError(f"enumeration guard exceeded: n={n} > {ENUMERATION_MAX_N}")
    k = min(SHARD_PREFIX_LEN, n)
    for shard_prefix in valid_prefixes(n, k):
        for row in valid_chains(n, shard_prefix):
            yield tuple(int(c) for c in row)


def valid_prefixes(n: int, k: int) -> List[Chain]:
    """Prefixes of length k that extend to at least one valid chain of length n, in lexicographic order."""
    start = np.zeros((1, 0), dtype=np.uint8)
    heights = np.zeros(1, dtype=np.int16)
    tokens = np.arange(V, dtype=np.uint8)
    for pos in range(k):
        count = start.shape[0]
        grown = np.repeat(start, V, axis=0)
        nxt = np.tile(tokens, count)
        h = np.repeat(heights, V) + (1 - nxt.astype(np.int16))
        keep = (h >= 0) & (h <= n - pos - 1)
        start = np.concatenate([grown[keep], nxt[keep, None]], axis=1)
        heights = h[keep]
    return [tuple(int(c) for c in row) for row in start]


def all_chains(n: int) -> np.ndarray:
    """Every one of the 3^n chains, lexicographic by code."""
    if n > EXHAUSTIVE_MAX_N:
        raise GuardError(f"exhaustive guard exceeded: n={n} > {EXHAUSTIVE_MAX_N}")
    idx = np.arange(V ** n, dtype=np.int64)
    powers = V ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return ((idx[:, None] // powers[None, :]) % V).astype(np.uint8)


def invalid_chains(n: int) -> np.ndarray:
    chains = all_chains(n)
    return chains[~is_valid_batch(chains)]


# ---------------- sampling / datasets ----------------

def sample_invalid(n: int, count: int, rng: Rng) -> np.ndarray:
    """
    Uniform draws from the invalid chains by rejection from uniform 3^n.
    Duplicates are allowed; the stream is fixed by the generator state.
    """
    available = V ** n - motzkin_number(n)
    if count < 0 or count > available:
        raise GuardError(f"cannot sample {count} invalid chains of length {n}: only {available} exist")
    out: List[np.ndarray] = []
    have = 0
    while have < count:
        need = count - have
        batch = rng.integers(0, V, size=(max(2 * need, 1024), n), dtype=np.uint8)
        kept = batch[~is_valid_batch(batch)][:need]
        out.append(kept)
        have += kept.shape[0]
    if not out:
        return np.zeros((0, n), dtype=np.uint8)
    return np.concatenate(out, axis=0)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def dataset_sizes(n: int, train_fraction: float, mu: float) -> Tuple[int, int]:
    """(T, valid count): T = floor(fraction * M_n), valid = round-half-up(mu * T)."""
    if not (0.0 < train_fraction <= 1.0):
        raise ValueError(f"train_fraction must be in (0, 1], got {train_fraction}")
    if not (0.0 <= mu <= 1.0):
        raise ValueError(f"mu must be in [0, 1], got {mu}")
    total = int(math.floor(train_fraction * motzkin_number(n) + 1e-9))
    if total < 1:
        raise DatasetError(f"train_fraction={train_fraction} leaves no training chains at n={n}")
    return total, _round_half_up(mu * total)


def build_dataset(n: int, train_fraction: float, mu: float, seed: int) -> LabeledDataset:
    total, n_valid = dataset_sizes(n, train_fraction, mu)
    valid = valid_chain_array(n)
    if n_valid > valid.shape[0]:
        raise DatasetError(f"need {n_valid} valid chains but only {valid.shape[0]} exist at n={n}")

    rng = make_rng(seed)
    picked = valid[rng.choice(valid.shape[0], size=n_valid, replace=False)]
    negatives = sample_invalid(n, total - n_valid, rng)
    codes = np.concatenate([picked, negatives], axis=0).astype(np.uint8)
    labels = np.concatenate([np.ones(n_valid, dtype=np.uint8), np.zeros(total - n_valid, dtype=np.uint8)])
    order = rng.permutation(total)
    return LabeledDataset(
        codes=codes[order],
        labels=labels[order],
        n=n,
        mu=float(mu),
        train_fraction=float(train_fraction),
        seed=int(seed),
    )


# ---------------- mutual information ----------------

def mutual_information(n: int) -> np.ndarray:
    """MI(i, j) in nats under the uniform distribution over valid chains (diagonal = token entropy)."""
    if n > MI_MAX_N:
        raise GuardError(f"mutual information guard exceeded: n={n} > {MI_MAX_N}")
    chains = valid_chain_array(n).astype(np.int64)
    total = chains.shape[0]
    mi = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            joint = np.bincount(chains[:, i] * V + chains[:, j], minlength=V * V).reshape(V, V) / total
            p_i = joint.sum(axis=1)
            p_j = joint.sum(axis=0)
            denom = np.outer(p_i, p_j)
            ratio = np.divide(joint, denom, out=np.ones_like(joint), where=denom > 0)
            mi[i, j] = mi[j, i] = float(xlogy(joint, ratio).sum())
    return mi


def mi_by_distance(mi: np.ndarray) -> List[Tuple[int, float]]:
    """Mean MI over all pairs at each token distance d = j - i >= 1."""
    n = mi.shape[0]
    return [(d, float(np.mean(np.diagonal(mi, offset=d)))) for d in range(1, n)]


def main() -> None:
    n = 8
    print("=== motzkin.main() ===")
    print(f"M_{n} = {motzkin_number(n)}, enumerated = {valid_chain_array(n).shape[0]}")
    ds = build_dataset(n, train_fraction=0.5, mu=0.5, seed=0)
    print(f"dataset: {len(ds)} items, {int(ds.labels.sum())} valid")
    for d, v in mi_by_distance(mutual_information(n)):
        print(f"  d={d}: {v:.4f} nats")


if __name__ == "__main__":
    main()
