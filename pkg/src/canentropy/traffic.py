"""Benign periodic traffic generation and the CSV log format."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .can_core import MAX_ID, CanFrame, check_id

log = logging.getLogger(__name__)

PAYLOAD_MODES = ("constant", "counter", "random")
DEFAULT_BAUD_RATES = (125_000, 500_000)
DEFAULT_PERIODS_MS = (10, 20, 50, 100, 500, 1000)
# Share of IDs per period in the default vehicle; most IDs are slow
# status messages, a handful are fast control loops.
DEFAULT_PERIOD_SHARES = (0.005, 0.005, 0.013, 0.045, 0.215, 0.717)
DEFAULT_ID_COUNT = 223


class LogFormatError(ValueError):
    pass


@dataclass(frozen=True)
class AssignedId:
    can_id: int
    period: int  # microseconds
    dlc: int = 8
    payload_mode: str = "counter"
    offset: int = 0  # microseconds, phase of the first emission

    def __post_init__(self):
        check_id(self.can_id)
        if self.period <= 0:
            raise ValueError(f"period must be positive, got {self.period}")
        if not 0 <= self.dlc <= 8:
            raise ValueError(f"dlc {self.dlc} outside 0..8")
        if self.payload_mode not in PAYLOAD_MODES:
            raise ValueError(f"unknown payload_mode {self.payload_mode!r}")
        if self.offset < 0:
            raise ValueError("offset must be non-negative")


@dataclass(frozen=True)
class EcuProfile:
    name: str
    assigned_ids: tuple[AssignedId, ...]

    def __post_init__(self):
        object.__setattr__(self, "assigned_ids", tuple(self.assigned_ids))
        ids = [a.can_id for a in self.assigned_ids]
        if len(set(ids)) != len(ids):
            raise ValueError(f"ECU {self.name!r} lists an id more than once")


@dataclass(frozen=True)
class TrafficScenario:
    ecus: tuple[EcuProfile, ...]
    duration: float = 60.0  # seconds
    baud_rate: int = 125_000
    jitter_fraction: float = 0.01
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "ecus", tuple(self.ecus))
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if self.baud_rate <= 0:
            raise ValueError("baud_rate must be positive")
        if self.baud_rate not in DEFAULT_BAUD_RATES:
            log.info("non-standard baud rate %d", self.baud_rate)
        if not 0 <= self.jitter_fraction < 0.5:
            raise ValueError("jitter_fraction must be in [0, 0.5)")
        names = [e.name for e in self.ecus]
        if len(set(names)) != len(names):
            raise ValueError("ECU names must be unique")
        n_ids = len(self.id_set())
        if self.ecus and not 1 <= n_ids <= MAX_ID + 1:
            raise ValueError(f"scenario uses {n_ids} ids")

    def id_set(self) -> set[int]:
        return {a.can_id for e in self.ecus for a in e.assigned_ids}

    def ecu(self, name: str) -> EcuProfile:
        for e in self.ecus:
            if e.name == name:
                return e
        raise KeyError(name)


@dataclass(frozen=True, slots=True)
class TxRequest:
    """A frame handed to a controller for transmission at ``timestamp``.

    ``one_shot`` frames are abandoned after losing one arbitration round
    instead of being retried.
    """

    timestamp: int
    frame: CanFrame
    source: str
    one_shot: bool = False


def default_scenario(
    n_ids: int = DEFAULT_ID_COUNT,
    n_ecus: int = 20,
    duration: float = 60.0,
    baud_rate: int = 125_000,
    jitter_fraction: float = 0.01,
    vehicle_seed: int = 2016,
    rng_seed: int = 0,
) -> TrafficScenario:
    """A synthetic vehicle: ``n_ids`` ids in [0x080, 0x7FF] spread over ECUs.

    Every ECU runs one task tick, so all its messages share a phase and
    leave the controller in bursts, as seen on real buses.
    """
    rng = np.random.default_rng(vehicle_seed)
    ids = rng.choice(np.arange(0x080, MAX_ID + 1), size=n_ids, replace=False)
    shares = np.asarray(DEFAULT_PERIOD_SHARES)
    counts = np.floor(shares * n_ids).astype(int)
    counts[np.argsort(-(shares * n_ids - counts))[: n_ids - counts.sum()]] += 1
    periods = np.repeat(np.asarray(DEFAULT_PERIODS_MS) * 1000, counts)
    rng.shuffle(periods)
    owner = np.concatenate([np.arange(n_ecus), rng.integers(0, n_ecus, n_ids - n_ecus)])
    rng.shuffle(owner)
    ticks = rng.integers(0, 1_000_000, n_ecus)
    modes = rng.choice(PAYLOAD_MODES, size=n_ids, p=(0.2, 0.5, 0.3))
    ecus = []
    for e in range(n_ecus):
        members = sorted(np.flatnonzero(owner == e), key=lambda i: ids[i])
        assigned = tuple(
            AssignedId(
                can_id=int(ids[i]),
                period=int(periods[i]),
                dlc=8,
                payload_mode=str(modes[i]),
                offset=int(ticks[e] % periods[i]),
            )
            for i in members
        )
        ecus.append(EcuProfile(name=f"ECU{e:02d}", assigned_ids=assigned))
    return TrafficScenario(
        ecus=tuple(ecus),
        duration=duration,
        baud_rate=baud_rate,
        jitter_fraction=jitter_fraction,
        rng_seed=rng_seed,
    )


def _payloads(aid: AssignedId, n: int, rng: np.random.Generator) -> list[bytes]:
    if aid.dlc == 0:
        return [b""] * n
    if aid.payload_mode == "constant":
        value = bytes((aid.can_id + k) & 0xFF for k in range(aid.dlc))
        return [value] * n
    if aid.payload_mode == "counter":
        tail = bytes(aid.dlc - 1)
        return [bytes([k & 0xFF]) + tail for k in range(n)]
    raw = rng.integers(0, 256, size=(n, aid.dlc), dtype=np.uint8)
    return [row.tobytes() for row in raw]


def generate_offered_traffic(scenario: TrafficScenario) -> list[TxRequest]:
    """Periodic transmission requests of every ECU, sorted by request time.

    Emission k of an id is due at ``offset + k * period`` and is displaced by
    uniform jitter of at most ``jitter_fraction * period``; jitter does not
    accumulate from one emission to the next.
    """
    if not scenario.ecus:
        raise ValueError("empty scenario")
    rng = np.random.default_rng(scenario.rng_seed)
    horizon = int(round(scenario.duration * 1_000_000))
    out: list[tuple[int, str, int, int, TxRequest]] = []
    for ecu in scenario.ecus:
        for aid in ecu.assigned_ids:
            n = max(0, math.ceil((horizon - aid.offset) / aid.period))
            nominal = aid.offset + aid.period * np.arange(n, dtype=np.int64)
            bound = scenario.jitter_fraction * aid.period
            if bound > 0:
                jitter = np.rint(rng.uniform(-bound, bound, n)).astype(np.int64)
                times = np.maximum(nominal + jitter, 0)
            else:
                times = nominal
            payloads = _payloads(aid, n, rng)
            for k in range(n):
                t = int(times[k])
                frame = CanFrame(t, aid.can_id, aid.dlc, payloads[k], ecu.name)
                out.append((t, ecu.name, aid.can_id, k, TxRequest(t, frame, ecu.name)))
    out.sort(key=lambda r: r[:4])
    return [r[4] for r in out]


# --- log files -------------------------------------------------------------

def format_log_line(frame: CanFrame) -> str:
    return f"{frame.timestamp},{frame.id:03X},{frame.dlc},{frame.payload.hex().upper()}"


def parse_log_line(line: str, lineno: int = 0) -> CanFrame:
    parts = line.strip().split(",")
    if len(parts) != 4:
        raise LogFormatError(f"line {lineno}: expected 4 fields, got {len(parts)}")
    ts, ident, dlc, payload = parts
    try:
        timestamp = int(ts)
        can_id = int(ident, 16)
        n = int(dlc)
    except ValueError as exc:
        raise LogFormatError(f"line {lineno}: {exc}") from None
    if timestamp < 0 or not ts.isdigit():
        raise LogFormatError(f"line {lineno}: bad timestamp {ts!r}")
    if can_id > MAX_ID:
        raise LogFormatError(f"line {lineno}: extended ID unsupported (0x{can_id:X})")
    if len(ident) != 3:
        raise LogFormatError(f"line {lineno}: id must be 3 hex digits, got {ident!r}")
    if not 0 <= n <= 8:
        raise LogFormatError(f"line {lineno}: dlc {n} outside 0..8")
    if len(payload) != 2 * n:
        raise LogFormatError(f"line {lineno}: payload has {len(payload) // 2} bytes, dlc says {n}")
    try:
        data = bytes.fromhex(payload)
    except ValueError:
        raise LogFormatError(f"line {lineno}: payload is not hex: {payload!r}") from None
    return CanFrame(timestamp, can_id, n, data)


def write_log(frames: Iterable[CanFrame], path) -> None:
    path = Path(path)
    lines = []
    last = -1
    for f in frames:
        if f.timestamp < last:
            raise ValueError(f"frames not time-ordered at t={f.timestamp}")
        last = f.timestamp
        lines.append(format_log_line(f) + "\n")
    try:
        with open(path, "w", newline="") as fh:
            fh.writelines(lines)
    except OSError as exc:
        raise OSError(f"cannot write log {path}: {exc.strerror}") from exc


def read_log(path) -> list[CanFrame]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read log {path}: {exc.strerror}") from exc
    frames: list[CanFrame] = []
    last = -1
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        frame = parse_log_line(line, lineno)
        if frame.timestamp < last:
            raise LogFormatError(f"line {lineno}: timestamp {frame.timestamp} goes backwards")
        last = frame.timestamp
        frames.append(frame)
    return frames


def strip_source(frames: Sequence[CanFrame]) -> list[CanFrame]:
    """Frames as a bus sniffer would see them: no origin information."""
    return [CanFrame(f.timestamp, f.id, f.dlc, f.payload) for f in frames]


# --- scenario (de)serialisation ---------------------------------------------

def scenario_to_dict(scenario: TrafficScenario) -> dict:
    return {
        "ecus": [
            {
                "name": e.name,
                "assigned_ids": [
                    {
                        "id": f"0x{a.can_id:03X}",
                        "period": a.period,
                        "dlc": a.dlc,
                        "payload_mode": a.payload_mode,
                        "offset": a.offset,
                    }
                    for a in e.assigned_ids
                ],
            }
            for e in scenario.ecus
        ],
        "duration": scenario.duration,
        "baud_rate": scenario.baud_rate,
        "jitter_fraction": scenario.jitter_fraction,
        "rng_seed": scenario.rng_seed,
    }


def parse_id(value) -> int:
    if isinstance(value, str):
        return check_id(int(value, 16))
    return check_id(value)


def scenario_from_dict(doc: dict) -> TrafficScenario:
    ecus = [
        EcuProfile(
            name=e["name"],
            assigned_ids=tuple(
                AssignedId(
                    can_id=parse_id(a["id"]),
                    period=int(a["period"]),
                    dlc=int(a.get("dlc", 8)),
                    payload_mode=a.get("payload_mode", "counter"),
                    offset=int(a.get("offset", 0)),
                )
                for a in e["assigned_ids"]
            ),
        )
        for e in doc["ecus"]
    ]
    return TrafficScenario(
        ecus=tuple(ecus),
        duration=float(doc.get("duration", 60.0)),
        baud_rate=int(doc.get("baud_rate", 125_000)),
        jitter_fraction=float(doc.get("jitter_fraction", 0.01)),
        rng_seed=int(doc.get("rng_seed", 0)),
    )
