"""CAN frame representation and identifier-level helpers.

Only the standard 11-bit identifier format is handled. Bit positions are
numbered 1..11 MSB-first, i.e. in the order they are arbitrated on the wire.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

ID_BITS = 11
MAX_ID = (1 << ID_BITS) - 1
ALL_IDS = range(MAX_ID + 1)

# SOF(1) + ID(11) + RTR(1) + IDE(1) + r0(1) + DLC(4) + CRC(15) + CRC delim(1)
# + ACK(2) + EOF(7) + IFS(3); stuff bits are not counted.
FRAME_OVERHEAD_BITS = 47


def check_id(can_id: int) -> int:
    if not isinstance(can_id, (int, np.integer)) or isinstance(can_id, bool):
        raise TypeError(f"CAN id must be an integer, got {type(can_id).__name__}")
    if not 0 <= can_id <= MAX_ID:
        raise ValueError(f"CAN id 0x{can_id:X} outside 11-bit range (extended ID unsupported)")
    return int(can_id)


@dataclass(frozen=True, slots=True)
class CanFrame:
    """A single data frame. ``source`` is simulation metadata, never on the wire."""

    timestamp: int
    id: int
    dlc: int
    payload: bytes = b""
    source: str = ""

    def __post_init__(self):
        check_id(self.id)
        if self.timestamp < 0:
            raise ValueError(f"negative timestamp {self.timestamp}")
        if not 0 <= self.dlc <= 8:
            raise ValueError(f"dlc {self.dlc} outside 0..8")
        if len(self.payload) != self.dlc:
            raise ValueError(f"payload length {len(self.payload)} != dlc {self.dlc}")


def id_bits(can_id: int) -> tuple[int, ...]:
    """Return the identifier as 11 bits, most significant first."""
    can_id = check_id(can_id)
    return tuple((can_id >> (ID_BITS - 1 - k)) & 1 for k in range(ID_BITS))


def bits_to_id(bits: Sequence[int]) -> int:
    if len(bits) != ID_BITS:
        raise ValueError(f"expected {ID_BITS} bits, got {len(bits)}")
    value = 0
    for b in bits:
        if b not in (0, 1):
            raise ValueError(f"bit value {b!r} is not 0/1")
        value = (value << 1) | b
    return value


# Row i holds id_bits(i); used for vectorised counting and candidate filtering.
ID_BIT_MATRIX = ((np.arange(MAX_ID + 1)[:, None] >> np.arange(ID_BITS - 1, -1, -1)) & 1).astype(np.int64)


def arbitration_winner(contenders: Iterable[int]) -> int:
    """Resolve a bitwise arbitration round.

    Each contender drives its identifier MSB-first; a dominant 0 overrides a
    recessive 1 and any node reading back a different bit than it sent drops
    out. The survivor is therefore the numerically smallest identifier.
    """
    alive = {check_id(c) for c in contenders}
    if not alive:
        raise ValueError("arbitration needs at least one contender")
    for k in range(ID_BITS - 1, -1, -1):
        dominant = [c for c in alive if not (c >> k) & 1]
        if dominant:
            alive = set(dominant)
    (winner,) = alive
    return winner


def frame_bit_length(frame: CanFrame | int) -> int:
    """Bits on the wire for a frame (or a bare dlc), bit stuffing excluded."""
    dlc = frame if isinstance(frame, int) else frame.dlc
    if not 0 <= dlc <= 8:
        raise ValueError(f"dlc {dlc} outside 0..8")
    return FRAME_OVERHEAD_BITS + 8 * dlc
