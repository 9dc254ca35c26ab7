"""Discrete-event model of one shared CAN bus."""
from __future__ import annotations

import heapq
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .can_core import frame_bit_length
from .traffic import TxRequest

log = logging.getLogger(__name__)

# Losers re-contend this many bit times after the previous frame ends.
INTERMISSION_BITS = 6

TRANSMITTED = "transmitted"
ARBITRATION_LOST = "arbitration_lost"


@dataclass(frozen=True, slots=True)
class BusEvent:
    kind: str
    timestamp: int
    frame: object  # CanFrame
    source: str


@dataclass(frozen=True, slots=True)
class ArbitrationRound:
    timestamp: int
    winner_id: int
    pending_ids: tuple[int, ...]


@dataclass
class SimulationResult:
    bus_log: list
    events: list[BusEvent]
    per_source_attempts: dict[str, int]
    per_source_wins: dict[str, int]
    per_source_dropped: dict[str, int] = field(default_factory=dict)
    leftover: int = 0  # requests still pending when the run stopped
    warnings: list[str] = field(default_factory=list)
    rounds: list[ArbitrationRound] | None = None

    def stats_dict(self) -> dict:
        sources = sorted(self.per_source_attempts)
        return {
            s: {
                "attempts": self.per_source_attempts[s],
                "wins": self.per_source_wins.get(s, 0),
                "dropped": self.per_source_dropped.get(s, 0),
            }
            for s in sources
        }

    def write_stats(self, path) -> None:
        Path(path).write_text(json.dumps(self.stats_dict(), indent=2, sort_keys=True) + "\n")


def frame_time_us(dlc: int, baud_rate: int) -> int:
    bits = frame_bit_length(dlc)
    return -(-bits * 1_000_000 // baud_rate)


def run_bus(
    offered: Sequence[TxRequest],
    baud_rate: int,
    until: int | None = None,
    trace: bool = False,
) -> SimulationResult:
    """Replay ``offered`` requests on a single bus.

    Whenever the bus goes idle, every controller holding a due frame puts
    its highest-priority one into arbitration. The smallest identifier
    wins and occupies the bus for the frame time plus the intermission;
    everybody else tries again at the next idle point, except one-shot
    frames which are dropped after their first lost round. An identical
    identifier from two sources is resolved by request time, then source
    label (a real bus would raise a bit error).

    ``until`` (µs) stops arbitration from starting at or after that time.
    """
    if baud_rate <= 0:
        raise ValueError("baud_rate must be positive")
    gap = -(-INTERMISSION_BITS * 1_000_000 // baud_rate)
    frame_times = {dlc: frame_time_us(dlc, baud_rate) for dlc in range(9)}

    pending: dict[str, list] = {}
    attempts: dict[str, int] = {}
    wins: dict[str, int] = {}
    dropped: dict[str, int] = {}
    bus_log = []
    events: list[BusEvent] = []
    warnings: list[str] = []
    rounds: list[ArbitrationRound] | None = [] if trace else None

    n = len(offered)
    i = 0
    seq = 0
    now = 0
    last_ts = -1
    while True:
        while i < n and offered[i].timestamp <= now:
            req = offered[i]
            if req.timestamp < last_ts:
                raise ValueError("offered requests must be time-ordered")
            last_ts = req.timestamp
            heapq.heappush(pending.setdefault(req.source, []), (req.frame.id, req.timestamp, seq, req))
            attempts.setdefault(req.source, 0)
            seq += 1
            i += 1
        if not pending:
            if i >= n:
                break
            now = max(now, offered[i].timestamp)
            continue
        if until is not None and now >= until:
            break

        heads = sorted((q[0][0], q[0][1], src) for src, q in pending.items())
        win_id, _, win_src = heads[0]
        if len(heads) > 1 and heads[1][0] == win_id:
            msg = f"t={now}: id 0x{win_id:03X} offered by {win_src} and {heads[1][2]}"
            warnings.append(msg)
            log.debug("identical id in arbitration, %s", msg)
        if rounds is not None:
            rounds.append(ArbitrationRound(now, win_id, tuple(e[0] for q in pending.values() for e in q)))

        for _, _, src in heads:
            attempts[src] += 1
        _, _, _, req = heapq.heappop(pending[win_src])
        frame = req.frame
        sent = type(frame)(now, frame.id, frame.dlc, frame.payload, frame.source)
        bus_log.append(sent)
        events.append(BusEvent(TRANSMITTED, now, sent, win_src))
        wins[win_src] = wins.get(win_src, 0) + 1
        if not pending[win_src]:
            del pending[win_src]

        for _, _, src in heads[1:]:
            q = pending[src]
            events.append(BusEvent(ARBITRATION_LOST, now, q[0][3].frame, src))
            if q[0][3].one_shot:
                heapq.heappop(q)
                dropped[src] = dropped.get(src, 0) + 1
                if not q:
                    del pending[src]

        now += frame_times[frame.dlc] + gap

    leftover = sum(len(q) for q in pending.values()) + (n - i)
    return SimulationResult(
        bus_log=bus_log,
        events=events,
        per_source_attempts=attempts,
        per_source_wins={s: wins.get(s, 0) for s in attempts},
        per_source_dropped={s: dropped.get(s, 0) for s in attempts},
        leftover=leftover,
        warnings=warnings,
        rounds=rounds,
    )


def injection_rate(result: SimulationResult, attacker_source: str) -> float:
    """Arbitration rounds won by ``attacker_source`` over rounds it entered."""
    if attacker_source not in result.per_source_attempts:
        raise KeyError(f"source {attacker_source!r} not present in simulation")
    tries = result.per_source_attempts[attacker_source]
    if tries == 0:
        raise ValueError(f"no attempts by {attacker_source!r}")
    return result.per_source_wins[attacker_source] / tries
