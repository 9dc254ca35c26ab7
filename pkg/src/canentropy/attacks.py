"""Malicious transmission streams for the four injection scenarios."""
from __future__ import annotations

import csv
import enum
import heapq
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .can_core import CanFrame, check_id
from .traffic import TxRequest, parse_id

ATTACKER = "attacker"
DEFAULT_FREQUENCIES = (100.0, 50.0, 20.0, 10.0)
# Flooding picks from the high-priority block below every benign ID.
FLOOD_ID_RANGE = (0x000, 0x07F)
ATTACK_DLC = 8


class AttackKind(str, enum.Enum):
    FLOODING = "Flooding"
    SINGLE_ID = "SingleId"
    MULTI_ID = "MultiId"
    WEAK_FIXED = "WeakFixed"


@dataclass(frozen=True)
class AttackScenario:
    kind: AttackKind
    ids: tuple[int, ...] = ()
    frequency: float = 100.0  # Hz, aggregate over all ids
    start: float = 0.0  # seconds
    duration: float = 1.0  # seconds
    rng_seed: int = 0
    source: str = ATTACKER

    def __post_init__(self):
        object.__setattr__(self, "kind", AttackKind(self.kind))
        object.__setattr__(self, "ids", tuple(check_id(int(i)) for i in self.ids))
        if self.frequency <= 0:
            raise ValueError("frequency must be positive")
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if self.start < 0:
            raise ValueError("start must be non-negative")
        k = self.kind
        if k is AttackKind.SINGLE_ID and len(self.ids) != 1:
            raise ValueError(f"SingleId needs exactly one id, got {len(self.ids)}")
        if k is AttackKind.MULTI_ID and not 2 <= len(self.ids) <= 4:
            raise ValueError(f"MultiId needs 2 to 4 ids, got {len(self.ids)}")
        if k is AttackKind.WEAK_FIXED and not self.ids:
            raise ValueError("WeakFixed needs the compromised ECU's assigned ids")

    @property
    def request_count(self) -> int:
        return int(round(self.frequency * self.duration))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "ids": [f"0x{i:03X}" for i in self.ids],
            "frequency": self.frequency,
            "start": self.start,
            "duration": self.duration,
            "rng_seed": self.rng_seed,
            "source": self.source,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AttackScenario":
        return cls(
            kind=AttackKind(d["kind"]),
            ids=tuple(parse_id(i) for i in d.get("ids", ())),
            frequency=float(d.get("frequency", 100.0)),
            start=float(d.get("start", 0.0)),
            duration=float(d.get("duration", 1.0)),
            rng_seed=int(d.get("rng_seed", 0)),
            source=d.get("source", ATTACKER),
        )


def generate_attack(scenario: AttackScenario) -> list[TxRequest]:
    """Requests at ``frequency`` Hz over ``[start, start + duration)``.

    Attack frames are one-shot: a frame that loses arbitration is replaced
    by the next scheduled one rather than retried, so the attacker makes
    exactly ``frequency * duration`` tries.
    """
    rng = np.random.default_rng(scenario.rng_seed)
    n = scenario.request_count
    period = 1_000_000 / scenario.frequency
    t0 = scenario.start * 1_000_000
    times = [int(round(t0 + k * period)) for k in range(n)]

    kind = scenario.kind
    if kind is AttackKind.FLOODING:
        lo, hi = FLOOD_ID_RANGE
        ids = rng.integers(lo, hi + 1, size=n).tolist()
    else:
        pattern = scenario.ids
        ids = [pattern[k % len(pattern)] for k in range(n)]
    payload = rng.integers(0, 256, size=(n, ATTACK_DLC), dtype=np.uint8)

    return [
        TxRequest(t, CanFrame(t, int(i), ATTACK_DLC, payload[k].tobytes(), scenario.source), scenario.source, True)
        for k, (t, i) in enumerate(zip(times, ids))
    ]


def merge_streams(benign: Sequence[TxRequest], malicious: Sequence[TxRequest]) -> list[TxRequest]:
    """Stable merge by timestamp; benign requests go first on equal times."""
    return list(heapq.merge(benign, malicious, key=lambda r: r.timestamp))


def write_truth(frames: Iterable[CanFrame], path) -> int:
    """Sidecar of injected frames actually on the bus: ``timestamp_us,id_hex``."""
    n = 0
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp_us", "id_hex"])
        for f in frames:
            w.writerow([f.timestamp, f"{f.id:03X}"])
            n += 1
    return n


def read_truth(path) -> list[tuple[int, int]]:
    with open(Path(path), newline="") as fh:
        rows = list(csv.reader(fh))
    return [(int(t), int(i, 16)) for t, i in rows[1:]]
