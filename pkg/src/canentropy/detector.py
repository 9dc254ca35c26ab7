"""Golden-template construction and per-window entropy checks."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .can_core import ID_BITS
from .entropy import BitStats, WindowPolicy

log = logging.getLogger(__name__)

DEFAULT_KAPPA = 5.0
# Smallest usable threshold in entropy bits; keeps bits whose baseline
# never moved from alarming on every window.
DEFAULT_FLOOR = 0.005
# Same role for the probability-direction threshold used by inference.
DEFAULT_DIRECTION_FLOOR = 0.01


@dataclass(frozen=True)
class GoldenTemplate:
    mean_H: tuple[float, ...]
    mean_p: tuple[float, ...]
    range: tuple[float, ...]
    range_p: tuple[float, ...]
    kappa: float
    threshold: tuple[float, ...]
    floor: float
    measurement_count: int
    policy: WindowPolicy | None = None
    direction_floor: float = DEFAULT_DIRECTION_FLOOR

    @property
    def direction_threshold(self) -> np.ndarray:
        return np.maximum(self.kappa * np.asarray(self.range_p), self.direction_floor)

    def to_dict(self) -> dict:
        return {
            "mean_H": list(self.mean_H),
            "mean_p": list(self.mean_p),
            "range": list(self.range),
            "range_p": list(self.range_p),
            "kappa": self.kappa,
            "threshold": list(self.threshold),
            "floor": self.floor,
            "direction_floor": self.direction_floor,
            "measurement_count": self.measurement_count,
            "policy": self.policy.to_dict() if self.policy else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GoldenTemplate":
        return cls(
            mean_H=tuple(d["mean_H"]),
            mean_p=tuple(d["mean_p"]),
            range=tuple(d["range"]),
            range_p=tuple(d["range_p"]),
            kappa=float(d["kappa"]),
            threshold=tuple(d["threshold"]),
            floor=float(d["floor"]),
            measurement_count=int(d["measurement_count"]),
            policy=WindowPolicy.from_dict(d["policy"]) if d.get("policy") else None,
            direction_floor=float(d.get("direction_floor", DEFAULT_DIRECTION_FLOOR)),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "GoldenTemplate":
        return cls.from_dict(json.loads(Path(path).read_text()))


def template_from_arrays(
    H,
    p,
    kappa: float = DEFAULT_KAPPA,
    floor: float = DEFAULT_FLOOR,
    policy: WindowPolicy | None = None,
    direction_floor: float = DEFAULT_DIRECTION_FLOOR,
) -> GoldenTemplate:
    """Template from an (m, 11) matrix of entropies and the matching probabilities."""
    H = np.atleast_2d(np.asarray(H, dtype=float))
    p = np.atleast_2d(np.asarray(p, dtype=float))
    if H.shape[0] < 2:
        raise ValueError("cannot estimate range from fewer than 2 measurements")
    if H.shape != p.shape:
        raise ValueError("entropy and probability matrices differ in shape")
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    if not 3 <= kappa <= 10:
        log.warning("kappa=%g outside the usual [3, 10] band", kappa)
    rng_H = H.max(axis=0) - H.min(axis=0)
    rng_p = p.max(axis=0) - p.min(axis=0)
    flat = [i + 1 for i in range(H.shape[1]) if rng_H[i] == 0]
    if flat:
        log.warning("zero baseline entropy range on bit(s) %s, using floor %g", flat, floor)
    threshold = np.maximum(kappa * rng_H, floor)
    return GoldenTemplate(
        mean_H=tuple(float(x) for x in H.mean(axis=0)),
        mean_p=tuple(float(x) for x in p.mean(axis=0)),
        range=tuple(float(x) for x in rng_H),
        range_p=tuple(float(x) for x in rng_p),
        kappa=float(kappa),
        threshold=tuple(float(x) for x in threshold),
        floor=float(floor),
        measurement_count=int(H.shape[0]),
        policy=policy,
        direction_floor=direction_floor,
    )


def build_template(
    measurements: Sequence[BitStats],
    kappa: float = DEFAULT_KAPPA,
    floor: float = DEFAULT_FLOOR,
    policy: WindowPolicy | None = None,
) -> GoldenTemplate:
    if len(measurements) < 2:
        raise ValueError("cannot estimate range from fewer than 2 measurements")
    if policy is None:
        policies = {m.policy for m in measurements}
        if len(policies) > 1:
            raise ValueError("measurements were taken with different window policies")
        policy = policies.pop()
    H = np.array([m.H for m in measurements])
    p = np.array([m.p for m in measurements])
    return template_from_arrays(H, p, kappa, floor, policy)


@dataclass(frozen=True)
class DetectionVerdict:
    window_id: int
    alert: bool
    flagged_bits: tuple[int, ...]  # 1-based, MSB first
    deviation: tuple[float, ...]
    p_deviation: tuple[float, ...]
    message_count: int = 0


def detect(window: BitStats, template: GoldenTemplate) -> DetectionVerdict:
    if window.policy is not None and template.policy is not None and window.policy != template.policy:
        raise ValueError(f"window policy {window.policy} does not match template policy {template.policy}")
    dev = window.H - np.asarray(template.mean_H)
    pdev = window.p - np.asarray(template.mean_p)
    over = np.abs(dev) > np.asarray(template.threshold)
    flagged = tuple(int(i) + 1 for i in np.flatnonzero(over))
    return DetectionVerdict(
        window_id=window.window_id,
        alert=bool(flagged),
        flagged_bits=flagged,
        deviation=tuple(float(x) for x in dev),
        p_deviation=tuple(float(x) for x in pdev),
        message_count=window.message_count,
    )


def detection_rate(verdicts: Sequence[DetectionVerdict], injected: Sequence[int]) -> float:
    """Share of injected messages that fell into an alerted window."""
    if len(verdicts) != len(injected):
        raise ValueError("verdicts and injected counts are not aligned")
    total = sum(injected)
    if total == 0:
        raise ValueError("no injections to score")
    caught = sum(n for v, n in zip(verdicts, injected) if v.alert)
    return caught / total


def write_verdicts_csv(verdicts: Sequence[DetectionVerdict], path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["window_id", "message_count", "alert", "flagged_bits"]
            + [f"dH{i}" for i in range(1, ID_BITS + 1)]
            + [f"dp{i}" for i in range(1, ID_BITS + 1)]
        )
        for v in verdicts:
            w.writerow(
                [v.window_id, v.message_count, int(v.alert), " ".join(map(str, v.flagged_bits))]
                + [f"{x:.6g}" for x in v.deviation]
                + [f"{x:.6g}" for x in v.p_deviation]
            )
