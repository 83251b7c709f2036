import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from motzkin_tn.errors import DatasetError, GuardError
from motzkin_tn.motzkin import (
    Token,
    all_chains,
    build_dataset,
    dataset_sizes,
    decode_chain,
    encode_chain,
    enumerate_valid,
    invalid_chains,
    is_valid,
    is_valid_batch,
    mi_by_distance,
    motzkin_number,
    mutual_information,
    sample_invalid,
    valid_chains,
    valid_prefixes,
)
from motzkin_tn.tensor import make_rng


def test_motzkin_numbers():
    assert [motzkin_number(n) for n in range(9)] == [1, 1, 2, 4, 9, 21, 51, 127, 323]
    assert motzkin_number(16) == 853467
    assert 3 ** 16 == 43046721


@pytest.mark.parametrize("n", range(0, 13))
def test_enumeration_count_matches_recurrence(n):
    chains = valid_chains(n)
    assert chains.shape == (motzkin_number(n), n)
    assert is_valid_batch(chains).all()


def test_enumeration_is_lexicographic_and_unique():
    chains = [tuple(r) for r in valid_chains(7)]
    assert chains == sorted(chains)
    assert len(set(chains)) == len(chains)


def test_streamed_enumeration_matches_array():
    streamed = list(enumerate_valid(9))
    assert streamed == [tuple(int(c) for c in row) for row in valid_chains(9)]


def test_prefix_shards_cover_valid_set():
    n = 8
    total = sum(valid_chains(n, p).shape[0] for p in valid_prefixes(n, 3))
    assert total == motzkin_number(n)
    assert valid_chains(4, (2,)).shape == (0, 4)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 2), min_size=0, max_size=12))
def test_scalar_and_batch_validity_agree(chain):
    if not chain:
        assert is_valid(chain)
        return
    assert is_valid(chain) == bool(is_valid_batch(np.array([chain]))[0])


def test_tokens_and_codec():
    assert Token.UP.step == 1 and Token.FLAT.step == 0 and Token.DOWN.step == -1
    assert [t.letter for t in Token] == ["u", "f", "d"]
    assert encode_chain("ufd") == (0, 1, 2)
    assert decode_chain((0, 1, 2)) == "ufd"
    assert is_valid(encode_chain("uudd")) and not is_valid(encode_chain("du"))
    with pytest.raises(DatasetError):
        encode_chain("uxd")
    with pytest.raises(DatasetError):
        encode_chain("ud", n=4)


def test_exhaustive_sets_partition():
    n = 6
    assert all_chains(n).shape == (3 ** n, n)
    assert invalid_chains(n).shape[0] == 3 ** n - motzkin_number(n)


def test_guards():
    with pytest.raises(GuardError):
        valid_chains(21)
    with pytest.raises(GuardError):
        all_chains(13)
    with pytest.raises(GuardError):
        mutual_information(17)


def test_sample_invalid():
    draws = sample_invalid(8, 500, make_rng(0))
    assert draws.shape == (500, 8)
    assert not is_valid_batch(draws).any()
    assert np.array_equal(draws, sample_invalid(8, 500, make_rng(0)))
    with pytest.raises(GuardError):
        sample_invalid(2, 8, make_rng(0))


def test_dataset_sizes():
    assert dataset_sizes(16, 0.25, 1.0) == (213366, 213366)
    assert dataset_sizes(16, 0.25, 0.01) == (213366, 2134)
    assert dataset_sizes(4, 1.0, 1.0) == (9, 9)
    with pytest.raises(ValueError):
        dataset_sizes(4, 0.0, 1.0)


def test_build_dataset_labels_and_determinism():
    ds = build_dataset(6, 0.5, 0.5, seed=3)
    assert len(ds) == 25
    assert int(ds.labels.sum()) == 13
    assert np.array_equal(ds.labels.astype(bool), is_valid_batch(ds.codes))
    again = build_dataset(6, 0.5, 0.5, seed=3)
    assert np.array_equal(ds.codes, again.codes) and np.array_equal(ds.labels, again.labels)
    valid_rows = {tuple(r) for r in ds.valid_codes}
    assert len(valid_rows) == 13


def test_full_dataset_at_n4():
    ds = build_dataset(4, 1.0, 1.0, seed=0)
    assert len(ds) == 9
    assert ds.labels.all()


def test_mutual_information_n2_is_ln2():
    mi = mutual_information(2)
    assert abs(mi[0, 1] - math.log(2)) < 1e-12
    assert mi[0, 1] == mi[1, 0]


def test_mutual_information_is_symmetric_and_nonnegative():
    mi = mutual_information(8)
    assert np.allclose(mi, mi.T)
    assert np.all(mi >= -1e-12)
    curve = mi_by_distance(mi)
    assert [d for d, _ in curve] == list(range(1, 8))


@pytest.mark.slow
def test_long_range_peak_at_n16():
    mi = mutual_information(16)
    assert mi[0, 15] > mi[0, 8]
