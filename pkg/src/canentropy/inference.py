"""Guessing which identifiers were injected from per-bit probability shifts.

A window's '1'-probability on bit i moves toward the injected ID's bit i, so
the sign of ``p_window - p_template`` tells the likely bit value. Single-ID
inference filters the ID pool by those signs and ranks survivors in
ascending order (small IDs win arbitration and are the likelier attackers).
Several IDs at once are fitted as a non-negative mixture instead.
"""
from __future__ import annotations

import enum
import itertools
import json
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .can_core import ALL_IDS, ID_BIT_MATRIX, ID_BITS, check_id
from .detector import DetectionVerdict, GoldenTemplate

DEFAULT_RANK = 10


class Label(enum.Enum):
    ZERO = "0"
    ONE = "1"
    UNKNOWN = "?"


@dataclass(frozen=True)
class BitConstraint:
    labels: tuple[Label, ...]

    def __post_init__(self):
        if len(self.labels) != ID_BITS:
            raise ValueError(f"need {ID_BITS} labels")

    @classmethod
    def parse(cls, text: str) -> "BitConstraint":
        """From a string such as ``"0000 1??????"`` (spaces ignored)."""
        return cls(tuple(Label(c) for c in text.replace(" ", "")))

    def __str__(self):
        return "".join(l.value for l in self.labels)

    def mask(self, ids: np.ndarray) -> np.ndarray:
        bits = ID_BIT_MATRIX[ids]
        ok = np.ones(len(ids), dtype=bool)
        for k, lab in enumerate(self.labels):
            if lab is Label.ZERO:
                ok &= bits[:, k] == 0
            elif lab is Label.ONE:
                ok &= bits[:, k] == 1
        return ok

    def admits(self, can_id: int) -> bool:
        return bool(self.mask(np.array([check_id(can_id)]))[0])


@dataclass(frozen=True)
class InferenceResult:
    candidates: tuple[int, ...]
    hit: bool | None = None
    residual: float = 0.0
    # Multi-ID fits: ranked top-n list for every selection step.
    slots: tuple[tuple[int, ...], ...] = ()
    volumes: tuple[float, ...] = ()

    def scored(self, truth: Iterable[int]) -> "InferenceResult":
        truth = set(truth)
        pool = set(self.candidates) | {c for s in self.slots for c in s}
        return replace(self, hit=bool(truth) and truth <= pool)

    def to_dict(self) -> dict:
        d = {
            "candidates": [f"0x{c:03X}" for c in self.candidates],
            "hit": self.hit,
            "residual": self.residual,
        }
        if self.slots:
            d["slots"] = [[f"0x{c:03X}" for c in s] for s in self.slots]
            d["volumes"] = list(self.volumes)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _pool_array(id_pool) -> np.ndarray:
    if id_pool is None:
        return np.arange(len(ALL_IDS))
    arr = np.unique(np.fromiter((check_id(int(i)) for i in id_pool), dtype=np.int64))
    if arr.size == 0:
        raise ValueError("id pool is empty")
    return arr


def derive_constraints(
    verdict: DetectionVerdict,
    template: GoldenTemplate,
    delta: Sequence[float] | None = None,
) -> BitConstraint:
    if not verdict.alert:
        raise ValueError(f"window {verdict.window_id} raised no alert; nothing to infer")
    delta = template.direction_threshold if delta is None else np.asarray(delta, dtype=float)
    labels = []
    for d, lim in zip(verdict.p_deviation, delta):
        if d < -lim:
            labels.append(Label.ZERO)
        elif d > lim:
            labels.append(Label.ONE)
        else:
            labels.append(Label.UNKNOWN)
    return BitConstraint(tuple(labels))


def rank_candidates(
    constraint: BitConstraint,
    id_pool: Iterable[int] | None = None,
    n: int = DEFAULT_RANK,
    truth: Iterable[int] | None = None,
) -> InferenceResult:
    """The ``n`` smallest pool IDs agreeing with every labelled bit."""
    if n < 1:
        raise ValueError("rank must be at least 1")
    pool = _pool_array(id_pool)
    keep = pool[constraint.mask(pool)][:n]
    res = InferenceResult(tuple(int(c) for c in keep))
    return res.scored(truth) if truth is not None else res


def _nnls_small(A: np.ndarray, d: np.ndarray) -> tuple[float, np.ndarray]:
    """Exact NNLS for one small system by trying every support.

    The optimum restricted to its positive support is the plain
    least-squares fit on that support, so the best feasible support fit
    is the global optimum.
    """
    m, k = A.shape
    best_r, best_x = float(np.linalg.norm(d)), np.zeros(k)
    for size in range(1, k + 1):
        for cols in itertools.combinations(range(k), size):
            x, *_ = np.linalg.lstsq(A[:, cols], d, rcond=None)
            if np.all(x >= -1e-12):
                x = np.clip(x, 0, None)
                r = float(np.linalg.norm(A[:, cols] @ x - d))
                if r < best_r - 1e-12:
                    best_r = r
                    best_x = np.zeros(k)
                    best_x[list(cols)] = x
    return best_r, best_x


def _nnls_with_candidates(fixed: np.ndarray, cand: np.ndarray, d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """NNLS of ``d`` on ``[fixed | c]`` for every candidate column ``c``.

    ``fixed`` is (m, s), ``cand`` is (P, m). Supports that leave the
    candidate out are shared by the whole batch and solved once; only
    supports containing it are solved batched. Returns residual norms (P,)
    and coefficients (P, s + 1), the candidate's last.
    """
    P = cand.shape[0]
    s = fixed.shape[1]
    r0, x0 = _nnls_small(fixed, d) if s else (float(np.linalg.norm(d)), np.zeros(0))
    best_r = np.full(P, r0)
    best_x = np.tile(np.append(x0, 0.0), (P, 1))
    for size in range(0, s + 1):
        for cols in itertools.combinations(range(s), size):
            A = np.concatenate([np.broadcast_to(fixed[:, cols], (P, fixed.shape[0], size)), cand[:, :, None]], axis=2)
            gram = np.einsum("pij,pik->pjk", A, A)
            gram += 1e-9 * np.eye(size + 1)
            rhs = np.einsum("pij,i->pj", A, d)
            x = np.linalg.solve(gram, rhs[..., None])[..., 0]
            feasible = np.all(x >= -1e-9, axis=1)
            x = np.clip(x, 0, None)
            r = np.linalg.norm(np.einsum("pij,pj->pi", A, x) - d, axis=1)
            better = feasible & (r < best_r - 1e-12)
            if better.any():
                full = np.zeros((P, s + 1))
                full[:, list(cols) + [s]] = x
                best_r = np.where(better, r, best_r)
                best_x = np.where(better[:, None], full, best_x)
    return best_r, best_x


def infer_multi(
    verdict: DetectionVerdict,
    template: GoldenTemplate,
    id_pool: Iterable[int] | None = None,
    k: int = 2,
    n: int = DEFAULT_RANK,
    truth: Iterable[int] | None = None,
) -> InferenceResult:
    """Greedy mixture fit for ``k`` simultaneously injected IDs.

    With T messages in the window the shift obeys
    ``T * (p_window - p_template) = sum_j N_j * (bits_j - p_template)``
    for injected volumes ``N_j >= 0``. IDs are added one at a time, each
    time picking the pool ID whose addition gives the smallest NNLS
    residual (ties go to the smaller ID). The ``n`` best IDs of every step
    are kept in ``slots``; a hit needs every true ID to show up there.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if k > n:
        raise ValueError(f"k={k} exceeds rank n={n}")
    if k == 1:
        return rank_candidates(derive_constraints(verdict, template), id_pool, n, truth)
    if not verdict.alert:
        raise ValueError(f"window {verdict.window_id} raised no alert; nothing to infer")

    pool = _pool_array(id_pool)
    base = np.asarray(template.mean_p)
    total = max(verdict.message_count, 1)
    d = total * np.asarray(verdict.p_deviation)
    cols = (ID_BIT_MATRIX[pool] - base).astype(float)  # (P, 11)

    chosen: list[int] = []  # indices into pool
    slots = []
    residual = float(np.linalg.norm(d))
    volumes = np.zeros(0)
    for _ in range(k):
        free = np.setdiff1d(np.arange(len(pool)), chosen, assume_unique=True)
        r, x = _nnls_with_candidates(cols[chosen].T, cols[free], d)
        order = np.lexsort((pool[free], np.round(r, 9)))
        slots.append(tuple(int(pool[free[j]]) for j in order[:n]))
        best = order[0]
        chosen.append(int(free[best]))
        residual = float(r[best])
        volumes = x[best]

    picked = sorted(zip((int(pool[c]) for c in chosen), volumes))
    res = InferenceResult(
        candidates=tuple(c for c, _ in picked),
        residual=residual / total,
        slots=tuple(slots),
        volumes=tuple(float(v) for _, v in picked),
    )
    return res.scored(truth) if truth is not None else res


def hit_rate(trials: Sequence[InferenceResult]) -> float:
    if not trials:
        raise ValueError("no trials to score")
    if any(t.hit is None for t in trials):
        raise ValueError("unscored inference result (hit unknown)")
    return sum(1 for t in trials if t.hit) / len(trials)
