import numpy as np
import pytest

from shiftcal._seeding import derive_rng, derive_seed


def test_same_parts_same_seed():
    assert derive_seed(7, "tag", 3) == derive_seed(7, "tag", 3)


def test_different_parts_different_seed():
    seeds = {
        derive_seed(7, "tag", 3),
        derive_seed(7, "tag", 4),
        derive_seed(8, "tag", 3),
        derive_seed(7, "other", 3),
        derive_seed(7, "tag", 3.0),  # float vs int must not collide
    }
    assert len(seeds) == 5


def test_array_and_tuple_parts():
    a = derive_seed(0, np.array([1.0, 2.0]))
    b = derive_seed(0, (1.0, 2.0))
    assert a == b


def test_rng_streams_independent():
    x = derive_rng(0, "a").standard_normal(4)
    y = derive_rng(0, "b").standard_normal(4)
    assert not np.allclose(x, y)
    assert np.array_equal(x, derive_rng(0, "a").standard_normal(4))


def test_rejects_unknown_types():
    with pytest.raises(TypeError):
        derive_seed(object())
