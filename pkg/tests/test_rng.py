from __future__ import annotations

import numpy as np
import pytest

from mfcrate.rng import make_rng


def test_streams_are_reproducible_and_distinct():
    a = make_rng(7, 3).standard_normal(5)
    np.testing.assert_array_equal(a, make_rng(7, 3).standard_normal(5))
    assert not np.array_equal(a, make_rng(7, 4).standard_normal(5))
    assert not np.array_equal(a, make_rng(8, 3).standard_normal(5))


def test_full_u64_range():
    make_rng((1 << 64) - 1, (1 << 64) - 1).random()
    for seed, stream in ((-1, 0), (1 << 64, 0), (0, -1), (0, 1 << 64)):
        with pytest.raises(ValueError):
            make_rng(seed, stream)


def test_key_layout():
    # seed in the low 64 bits of the Philox key, stream in the high 64 bits
    state = make_rng(5, 9).bit_generator.state["state"]
    np.testing.assert_array_equal(state["key"], np.array([5, 9], dtype=np.uint64))
