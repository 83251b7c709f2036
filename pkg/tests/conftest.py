from __future__ import annotations

from typing import Callable, List, Sequence

import numpy as np
import pytest

from motzkin_tn.motzkin import all_chains, is_valid_batch
from motzkin_tn.mps import Batch

FD_STEP = 1e-5


def central_differences(loss: Callable[[List[np.ndarray]], float], params: Sequence[np.ndarray]) -> List[np.ndarray]:
    params = [np.array(p, dtype=np.float64) for p in params]
    out = []
    for b, block in enumerate(params):
        g = np.zeros_like(block)
        it = np.nditer(block, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = block[idx]
            block[idx] = orig + FD_STEP
            up = loss(params)
            block[idx] = orig - FD_STEP
            down = loss(params)
            block[idx] = orig
            g[idx] = (up - down) / (2 * FD_STEP)
        out.append(g)
    return out


def assert_grads_close(analytic: Sequence[np.ndarray], numeric: Sequence[np.ndarray]) -> None:
    assert len(analytic) == len(numeric)
    for i, (a, f) in enumerate(zip(analytic, numeric)):
        assert a.shape == f.shape, f"block {i}"
        tol = np.maximum(1e-4 * np.abs(f), 1e-8)
        bad = np.abs(a - f) > tol
        assert not bad.any(), f"block {i}: max diff {np.max(np.abs(a - f))}"


def mixed_batch(n: int, size: int, seed: int = 0) -> Batch:
    """Half valid, half invalid chains with their true labels."""
    chains = all_chains(n)
    labels = is_valid_batch(chains)
    rng = np.random.default_rng(seed)
    pos = rng.choice(np.flatnonzero(labels), size=size // 2, replace=False)
    neg = rng.choice(np.flatnonzero(~labels), size=size - size // 2, replace=False)
    idx = np.concatenate([pos, neg])
    return Batch(codes=chains[idx].astype(np.int64), labels=labels[idx].astype(np.float64))


@pytest.fixture
def fd():
    return central_differences


@pytest.fixture
def grads_close():
    return assert_grads_close


@pytest.fixture
def batch_of():
    return mixed_batch
