import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from distillseg import errors
from distillseg.rle import decode_rle, encode_rle


def test_known_vectors():
    assert encode_rle(np.zeros((2, 3), dtype=bool)) == "3,2;6"
    assert encode_rle(np.ones((2, 2), dtype=bool)) == "2,2;0,4"
    mask = np.array([[False, True, True], [False, False, True]])
    assert encode_rle(mask) == "3,2;1,2,2,1"
    assert np.array_equal(decode_rle("3,2;1,2,2,1"), mask)


@given(st.integers(1, 40), st.integers(1, 40), st.integers(0, 2 ** 32 - 1))
@settings(max_examples=80, deadline=None)
def test_round_trip(h, w, seed):
    mask = np.random.default_rng(seed).random((h, w)) < 0.4
    assert np.array_equal(decode_rle(encode_rle(mask)), mask)


def test_decode_rejects_bad_sum():
    with pytest.raises(errors.InvalidRle):
        decode_rle("4,4;3,4")


def test_decode_rejects_negative_and_garbage():
    with pytest.raises(errors.InvalidRle):
        decode_rle("4,4;-1,17")
    with pytest.raises(errors.InvalidRle):
        decode_rle("4,4;a,b")
    with pytest.raises(errors.InvalidRle):
        decode_rle("garbage")
