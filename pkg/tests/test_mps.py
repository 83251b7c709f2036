import math

import numpy as np
import pytest

from motzkin_tn.errors import GuardError, NumericalDomainError, ShapeError
from motzkin_tn.motzkin import all_chains, valid_chain_array
from motzkin_tn.mps import (
    Batch,
    DenseMPS,
    NormMode,
    amplitude,
    brute_force_distribution,
    brute_force_norm_sq,
    init_dense,
    log_norm_sq,
    log_prob,
    log_probs,
    loss_and_grad,
    make_batch,
    norm_caps,
    parameter_count,
    sigma_mass,
)
from motzkin_tn.tensor import OpCounter, make_rng


def random_mps(n, chi, seed, sigma=0.5):
    return init_dense(n, 3, chi, sigma_inner=sigma, sigma_outer=sigma, rng=make_rng(seed))


def scaled(mps, site, factor):
    cores = list(mps.cores)
    cores[site] = cores[site] * factor
    return DenseMPS(cores=tuple(cores))


@pytest.mark.parametrize("n", [2, 4, 6])
def test_zero_noise_init_is_uniform(n):
    mps = init_dense(n, 3, 4, sigma_inner=0.0, sigma_outer=0.0)
    lp = log_probs(mps, all_chains(n))
    assert np.allclose(lp, -n * math.log(3), atol=1e-10)
    amp = amplitude(mps, [0] * n)
    assert abs(amp.log_abs) < 1e-12 and amp.sign == 1


def test_parameter_counts():
    mps = init_dense(16, 3, 8, 0.0, 0.0)
    assert mps.cores[0].size == 24
    assert mps.cores[1].size == 192
    assert parameter_count(mps) == 2736


def test_core_shape_validation():
    with pytest.raises(ShapeError):
        DenseMPS(cores=(np.ones((3, 2)), np.ones((3, 2, 3)), np.ones((3, 2))))
    with pytest.raises(ShapeError):
        DenseMPS(cores=(np.ones((3, 2)),))
    mps = init_dense(4, 3, 2, 0.0, 0.0)
    with pytest.raises(ShapeError):
        log_probs(mps, np.zeros((2, 5), dtype=int))
    with pytest.raises(ShapeError):
        log_probs(mps, np.full((1, 4), 3))


def test_amplitude_matches_direct_product():
    mps = random_mps(5, 3, seed=1)
    chain = [0, 1, 2, 1, 0]
    vec = mps.cores[0][chain[0]]
    for i in range(1, 4):
        vec = vec @ mps.cores[i][chain[i]]
    direct = float(vec @ mps.cores[4][chain[4]])
    amp = amplitude(mps, chain)
    assert amp.sign == (1 if direct > 0 else -1)
    assert abs(amp.value - direct) <= 1e-10 * abs(direct)


@pytest.mark.parametrize("seed", range(20))
def test_norm_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 9))
    chi = int(rng.integers(1, 7))
    mps = random_mps(n, chi, seed)
    exact = brute_force_norm_sq(mps)
    assert abs(math.exp(log_norm_sq(mps)) - exact) <= 1e-9 * exact
    for cap in norm_caps(mps).caps:
        assert np.allclose(cap, cap.T, atol=1e-10)


@pytest.mark.parametrize("chi", [2, 4, 8])
def test_norm_cost_counts(chi):
    n, v = 6, 3
    counter = OpCounter()
    log_norm_sq(init_dense(n, v, chi, 0.0, 0.0), counter)
    assert counter.total == 2 * v * chi ** 2 + (n - 2) * 2 * v * chi ** 3 + v * chi
    assert counter.largest == v * chi ** 3


@pytest.mark.parametrize("n", [4, 6, 8])
def test_born_normalization(n):
    mps = random_mps(n, 3, seed=n)
    total = math.fsum(np.exp(log_probs(mps, all_chains(n))).tolist())
    assert abs(total - 1.0) <= 1e-9


def test_log_prob_handles_negative_amplitudes():
    mps = random_mps(4, 2, seed=2)
    dist = brute_force_distribution(mps)
    for chain in [(0, 1, 1, 2), (2, 2, 0, 0), (1, 1, 1, 1)]:
        assert abs(math.exp(log_prob(mps, chain)) - dist[chain]) <= 1e-10


def test_sigma_mass_uniform_model():
    mps = init_dense(4, 3, 4, 0.0, 0.0)
    assert abs(sigma_mass(mps, valid_chain_array(4)) - 1.0 / 9.0) < 1e-12
    assert sigma_mass(mps, np.zeros((0, 4), dtype=np.uint8)) == 0.0


def test_brute_force_guard():
    with pytest.raises(GuardError):
        brute_force_norm_sq(init_dense(11, 3, 2, 0.0, 0.0))


def test_make_batch():
    batch = make_batch([((0, 2), 1), ((2, 0), 0)])
    assert batch.codes.shape == (2, 2)
    assert list(batch.labels) == [1.0, 0.0]
    assert len(batch) == 2


@pytest.mark.parametrize("norm_mode", list(NormMode))
@pytest.mark.parametrize("alpha", [0.0, 0.5])
def test_gradients_match_finite_differences(norm_mode, alpha, fd, grads_close, batch_of):
    mps = random_mps(5, 3, seed=11, sigma=0.3)
    if norm_mode == NormMode.CONSTANT_ONE:
        # keeps every |amplitude| < 1 so log_prob stays below zero
        mps = scaled(mps, 0, 0.05)
    batch = batch_of(5, 8, seed=4)
    loss, grads = loss_and_grad(mps, batch, alpha=alpha, norm_mode=norm_mode)
    assert math.isfinite(loss)

    def f(params):
        return loss_and_grad(DenseMPS(cores=tuple(params)), batch, alpha=alpha, norm_mode=norm_mode)[0]

    grads_close(grads, fd(f, mps.cores))


def test_loss_is_scale_invariant_with_exact_norm(batch_of):
    mps = random_mps(6, 3, seed=5)
    batch = batch_of(6, 10, seed=1)
    base, _ = loss_and_grad(mps, batch)
    for site in (0, 2, 5):
        other, _ = loss_and_grad(scaled(mps, site, 3.7), batch)
        assert abs(other - base) <= 1e-9


def test_alpha_term_adds_exact_log_norm(batch_of):
    mps = random_mps(4, 2, seed=9)
    batch = batch_of(4, 6)
    plain, _ = loss_and_grad(mps, batch, alpha=0.0)
    with_alpha, _ = loss_and_grad(mps, batch, alpha=0.75)
    assert abs(with_alpha - plain - 0.75 * log_norm_sq(mps)) < 1e-12


def test_zero_amplitude_on_positive_label_is_reported():
    mps = init_dense(4, 3, 2, 0.0, 0.0)
    cores = list(mps.cores)
    cores[0] = cores[0].copy()
    cores[0][0] = 0.0
    mps = DenseMPS(cores=tuple(cores))
    batch = Batch(codes=np.array([[0, 1, 1, 2]]), labels=np.array([1.0]))
    with pytest.raises(NumericalDomainError):
        loss_and_grad(mps, batch)


def test_negative_alpha_rejected(batch_of):
    with pytest.raises(ValueError):
        loss_and_grad(random_mps(4, 2, 0), batch_of(4, 4), alpha=-1.0)
