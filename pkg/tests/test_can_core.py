from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from canentropy.can_core import (
    ID_BIT_MATRIX,
    MAX_ID,
    CanFrame,
    arbitration_winner,
    bits_to_id,
    check_id,
    frame_bit_length,
    id_bits,
)

ids = st.integers(0, MAX_ID)


@pytest.mark.parametrize(
    "can_id, bits",
    [
        (0x000, (0,) * 11),
        (0x7FF, (1,) * 11),
        (0x2A5, (0, 1, 0, 1, 0, 1, 0, 0, 1, 0, 1)),
    ],
)
def test_id_bits_examples(can_id, bits):
    assert id_bits(can_id) == bits


def test_bit_one_is_msb():
    assert id_bits(0x400)[0] == 1
    assert sum(id_bits(0x400)) == 1


def test_round_trip_all_ids():
    for i in range(MAX_ID + 1):
        assert bits_to_id(id_bits(i)) == i
        assert tuple(ID_BIT_MATRIX[i]) == id_bits(i)


@pytest.mark.parametrize("bad", [-1, 0x800, 0xFFF])
def test_out_of_range_ids(bad):
    with pytest.raises(ValueError):
        check_id(bad)
    with pytest.raises(ValueError):
        id_bits(bad)


def test_frame_validation():
    with pytest.raises(ValueError):
        CanFrame(0, 0x100, 9)
    with pytest.raises(ValueError):
        CanFrame(0, 0x100, 2, b"\x00")
    with pytest.raises(ValueError):
        CanFrame(-1, 0x100, 0)


@pytest.mark.parametrize("contenders, winner", [({0x100, 0x200}, 0x100), ({0x3A0}, 0x3A0), ({0x000, 0x001, 0x7FF}, 0x000)])
def test_arbitration_examples(contenders, winner):
    assert arbitration_winner(contenders) == winner


def test_arbitration_empty():
    with pytest.raises(ValueError):
        arbitration_winner([])


@given(st.lists(ids, min_size=1, max_size=40))
def test_arbitration_is_numeric_min(contenders):
    assert arbitration_winner(contenders) == min(contenders)


@given(st.lists(ids, min_size=1, max_size=20), st.randoms())
def test_arbitration_ignores_order_and_duplicates(contenders, rnd):
    shuffled = contenders * 2
    rnd.shuffle(shuffled)
    assert arbitration_winner(shuffled) == arbitration_winner(contenders)


@pytest.mark.parametrize("dlc, bits", [(0, 47), (8, 111), (4, 79)])
def test_frame_bit_length(dlc, bits):
    assert frame_bit_length(dlc) == bits
    assert frame_bit_length(CanFrame(0, 1, dlc, bytes(dlc))) == bits
