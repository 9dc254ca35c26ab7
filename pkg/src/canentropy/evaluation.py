"""End-to-end experiments: template, per-scenario detection/inference, ID sweep."""
from __future__ import annotations

import hashlib
import json
import logging
import zlib
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .attacks import ATTACKER, FLOOD_ID_RANGE, AttackKind, AttackScenario, generate_attack, merge_streams
from .bus_sim import SimulationResult, injection_rate, run_bus
from .detector import DEFAULT_FLOOR, DEFAULT_KAPPA, GoldenTemplate, build_template, detect
from .entropy import BitStats, WindowPolicy, windowed_stats
from .inference import (
    DEFAULT_RANK,
    BitConstraint,
    InferenceResult,
    derive_constraints,
    infer_multi,
    rank_candidates,
)
from .traffic import TrafficScenario, generate_offered_traffic, scenario_to_dict, strip_source

log = logging.getLogger(__name__)

# Fifteen IDs spread roughly logarithmically over the identifier space.
SWEEP_IDS = (0x000,) + tuple(int(round(x)) for x in np.geomspace(16, 0x7FF, 14))
SERIES_ID = 0x400


def trial_seed(master: int, label: str, trial: int) -> int:
    ss = np.random.SeedSequence([master, zlib.crc32(label.encode()), trial])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)


@dataclass(frozen=True)
class EvalConfig:
    kappa: float = DEFAULT_KAPPA
    floor: float = DEFAULT_FLOOR
    policy: WindowPolicy = WindowPolicy()
    rank_n: int = DEFAULT_RANK
    template_measurements: int = 35
    trials: int = 50
    frequency: float = 100.0
    baseline_duration: float = 3.0
    trial_duration: float = 4.0
    attack_start: float = 1.0
    attack_duration: float = 2.0
    sweep_ids: tuple[int, ...] = SWEEP_IDS
    multi_sizes: tuple[int, ...] = (2, 3, 4)
    weak_id_count: int = 3
    series_id: int = SERIES_ID
    series_frequencies: tuple[float, ...] = (100.0, 50.0, 20.0, 10.0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["policy"] = self.policy.to_dict()
        return d


# --- template ----------------------------------------------------------------

def baseline_measurements(
    baseline: TrafficScenario, count: int, seed: int, cfg: EvalConfig = EvalConfig()
) -> list[BitStats]:
    """One steady-state window from each of ``count`` independently seeded clean runs."""
    if cfg.policy.mode == "time" and cfg.baseline_duration < 2 * cfg.policy.length:
        raise ValueError("baseline runs must cover at least two windows")
    end = int(round(cfg.baseline_duration * 1_000_000))
    out = []
    for j in range(count):
        sc = replace(baseline, duration=cfg.baseline_duration, rng_seed=trial_seed(seed, "baseline", j))
        res = run_bus(generate_offered_traffic(sc), sc.baud_rate)
        windows = windowed_stats(strip_source(res.bus_log), cfg.policy, end=end)
        if len(windows) < 2:
            raise ValueError("clean run produced fewer than two windows")
        out.append(windows[len(windows) // 2])
    return out


def build_baseline_template(
    baseline: TrafficScenario, seed: int, cfg: EvalConfig = EvalConfig(), measurements: int | None = None
) -> GoldenTemplate:
    m = cfg.template_measurements if measurements is None else measurements
    return build_template(baseline_measurements(baseline, m, seed, cfg), cfg.kappa, cfg.floor, cfg.policy)


# --- single trial ------------------------------------------------------------

def verify_nm_identity(result: SimulationResult, f: float, T0: float, source: str = ATTACKER) -> bool:
    """Check wins == Ir * f * T0 to within one message."""
    if f * T0 <= 0:
        raise ValueError("empty attack window")
    wins = result.per_source_wins.get(source, 0)
    ir = injection_rate(result, source)
    return abs(wins - ir * f * T0) <= 1


@dataclass
class TrialOutcome:
    attack: AttackScenario
    attempts: int
    wins: int
    injected: int
    detected: int
    nm_ok: bool
    windows: int
    clean_windows: int
    false_alerts: int
    inferences: list[InferenceResult] = field(default_factory=list)
    constraints: list[BitConstraint] = field(default_factory=list)


def run_trial(
    baseline: TrafficScenario,
    attack: AttackScenario,
    template: GoldenTemplate,
    benign_seed: int,
    cfg: EvalConfig = EvalConfig(),
    id_pool: Sequence[int] | None = None,
    infer: bool = True,
) -> TrialOutcome:
    sc = replace(baseline, duration=cfg.trial_duration, rng_seed=benign_seed)
    result = run_bus(merge_streams(generate_offered_traffic(sc), generate_attack(attack)), sc.baud_rate)
    end = int(round(cfg.trial_duration * 1_000_000))
    windows = windowed_stats(strip_source(result.bus_log), cfg.policy, end=end)

    injected_ts = np.array([f.timestamp for f in result.bus_log if f.source == attack.source], dtype=np.int64)
    if cfg.policy.mode == "time":
        inj = [int(np.count_nonzero((injected_ts >= w.start) & (injected_ts < w.end))) for w in windows]
    else:
        flags = np.array([f.source == attack.source for f in result.bus_log])
        inj = [int(flags[w.start : w.end].sum()) for w in windows]

    out = TrialOutcome(
        attack=attack,
        attempts=result.per_source_attempts.get(attack.source, 0),
        wins=result.per_source_wins.get(attack.source, 0),
        injected=len(injected_ts),
        detected=0,
        nm_ok=verify_nm_identity(result, attack.frequency, attack.duration, attack.source),
        windows=len(windows),
        clean_windows=0,
        false_alerts=0,
    )
    truth = set(attack.ids)
    for w, n in zip(windows, inj):
        v = detect(w, template)
        if n == 0:
            out.clean_windows += 1
            out.false_alerts += v.alert
            continue
        if not v.alert:
            continue
        out.detected += n
        if not infer or attack.kind is AttackKind.FLOODING:
            continue
        k = len(truth)
        if k == 1:
            c = derive_constraints(v, template)
            out.constraints.append(c)
            out.inferences.append(rank_candidates(c, id_pool, cfg.rank_n, truth))
        else:
            out.inferences.append(infer_multi(v, template, id_pool, k, cfg.rank_n, truth))
    return out


# --- scenario rows -------------------------------------------------------------

@dataclass(frozen=True)
class TableRow:
    """One line of the results table.

    ``ids`` fixes the injected IDs; when empty they are drawn per trial
    (random high-priority IDs for MultiId, the lowest assigned IDs of a
    random ECU for WeakFixed, the sweep list for SingleId).
    """

    name: str
    kind: AttackKind
    frequency: float = 100.0
    ids: tuple[int, ...] = ()
    id_count: int = 1


def default_rows(cfg: EvalConfig = EvalConfig()) -> list[TableRow]:
    f = cfg.frequency
    rows = [TableRow("Flood", AttackKind.FLOODING, f), TableRow("Single Injection", AttackKind.SINGLE_ID, f)]
    rows += [TableRow(f"Multiple_Injection_{k}", AttackKind.MULTI_ID, f, id_count=k) for k in cfg.multi_sizes]
    rows.append(TableRow("Weak Injection", AttackKind.WEAK_FIXED, f, id_count=cfg.weak_id_count))
    return rows


def rows_from_attacks(attacks: Sequence[AttackScenario]) -> list[TableRow]:
    return [
        TableRow(f"{a.kind.value}@{a.frequency:g}Hz#{j}", a.kind, a.frequency, a.ids, max(len(a.ids), 1))
        for j, a in enumerate(attacks)
    ]


def _weak_ids(baseline: TrafficScenario, count: int, rng: np.random.Generator) -> tuple[int, ...]:
    ecus = [e for e in baseline.ecus if len(e.assigned_ids) >= count]
    if not ecus:
        raise ValueError(f"no ECU has {count} assigned ids")
    ecu = ecus[int(rng.integers(len(ecus)))]
    return tuple(sorted(a.can_id for a in ecu.assigned_ids)[:count])


def _scenario_for(row: TableRow, baseline: TrafficScenario, cfg: EvalConfig, seed: int, ids=None) -> AttackScenario:
    rng = np.random.default_rng(seed)
    if ids is None:
        ids = row.ids
    if not ids:
        if row.kind is AttackKind.MULTI_ID:
            lo, hi = FLOOD_ID_RANGE
            ids = tuple(int(i) for i in rng.choice(np.arange(lo, hi + 1), size=row.id_count, replace=False))
        elif row.kind is AttackKind.WEAK_FIXED:
            ids = _weak_ids(baseline, row.id_count, rng)
    return AttackScenario(
        kind=row.kind,
        ids=tuple(ids),
        frequency=row.frequency,
        start=cfg.attack_start,
        duration=cfg.attack_duration,
        rng_seed=int(rng.integers(2**62)),
    )


@dataclass
class RowStats:
    injected: int = 0
    detected: int = 0
    attempts: int = 0
    wins: int = 0
    hits: int = 0
    inferences: int = 0
    trials: int = 0
    nm_violations: int = 0
    clean_windows: int = 0
    false_alerts: int = 0
    soundness_violations: int = 0
    ordering_violations: int = 0

    def add(self, o: TrialOutcome) -> None:
        self.injected += o.injected
        self.detected += o.detected
        self.attempts += o.attempts
        self.wins += o.wins
        self.trials += 1
        self.nm_violations += not o.nm_ok
        self.clean_windows += o.clean_windows
        self.false_alerts += o.false_alerts
        for r in o.inferences:
            self.inferences += 1
            self.hits += bool(r.hit)
            if list(r.candidates) != sorted(set(r.candidates)):
                self.ordering_violations += 1
        for c, r in zip(o.constraints, o.inferences):
            self.soundness_violations += sum(not c.admits(x) for x in r.candidates)

    @property
    def detection_rate(self) -> float | None:
        return self.detected / self.injected if self.injected else None

    @property
    def injection_rate(self) -> float | None:
        return self.wins / self.attempts if self.attempts else None

    @property
    def hit_rate(self) -> float | None:
        return self.hits / self.inferences if self.inferences else None


def _row_summary(row: TableRow, st: RowStats) -> dict:
    d = {
        "kind": row.kind.value,
        "frequency": row.frequency,
        "trials": st.trials,
        "detection_rate": st.detection_rate,
        "injection_rate": st.injection_rate,
        "injected": st.injected,
        "detected": st.detected,
        "nm_violations": st.nm_violations,
        "clean_windows": st.clean_windows,
        "false_alerts": st.false_alerts,
    }
    if row.kind is not AttackKind.FLOODING:
        d["inferring_accuracy"] = st.hit_rate
        d["inferences"] = st.inferences
        d["soundness_violations"] = st.soundness_violations
        d["ordering_violations"] = st.ordering_violations
    return d


def _pool_for(row: TableRow, baseline: TrafficScenario, ids: Sequence[int]):
    if row.kind is AttackKind.WEAK_FIXED:
        return sorted(baseline.id_set() | set(ids))
    return None


def run_row(
    row: TableRow,
    baseline: TrafficScenario,
    template: GoldenTemplate,
    trials: int,
    seed: int,
    cfg: EvalConfig = EvalConfig(),
    ids: Sequence[int] | None = None,
) -> RowStats:
    st = RowStats()
    for t in range(trials):
        benign_seed = trial_seed(seed, row.name, t)
        attack = _scenario_for(row, baseline, cfg, trial_seed(seed, row.name + "/attack", t), ids)
        pool = _pool_for(row, baseline, attack.ids)
        st.add(run_trial(baseline, attack, template, benign_seed, cfg, pool))
    return st


# --- report --------------------------------------------------------------------

@dataclass
class EvaluationReport:
    per_scenario: dict[str, dict]
    sweep: list[dict]
    frequency_series: dict[str, float | None]
    config_fingerprint: str
    template: dict
    seed: int
    checks: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "config_fingerprint": self.config_fingerprint,
            "per_scenario": self.per_scenario,
            "sweep": self.sweep,
            "frequency_series": self.frequency_series,
            "checks": self.checks,
            "template": self.template,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def render_table(self) -> str:
        def pct(x):
            return "--" if x is None else f"{100 * x:.1f}%"

        lines = [f"{'Attack scenario':<24}{'Detection rate':>16}{'Inferring accuracy':>20}{'Injection rate':>16}"]
        for name, row in self.per_scenario.items():
            lines.append(
                f"{name:<24}{pct(row['detection_rate']):>16}"
                f"{pct(row.get('inferring_accuracy')):>20}{pct(row['injection_rate']):>16}"
            )
        if self.frequency_series:
            lines.append("")
            lines.append("Single injection detection rate by frequency:")
            for f, dr in self.frequency_series.items():
                lines.append(f"  {f:>6} Hz  {pct(dr)}")
        return "\n".join(lines) + "\n"

    def sweep_csv(self) -> str:
        out = ["id_hex,injection_rate,detection_rate"]
        for r in self.sweep:
            out.append(f"{r['id_hex']},{r['injection_rate']:.6f},{_fmt(r['detection_rate'])}")
        return "\n".join(out) + "\n"

    def write(self, path) -> list[Path]:
        """Write ``<path>`` (JSON), ``<stem>.txt`` table and ``<stem>.sweep.csv``."""
        path = Path(path)
        txt = path.with_suffix(".txt")
        sweep = path.with_suffix(".sweep.csv")
        path.write_text(self.to_json())
        txt.write_text(self.render_table())
        sweep.write_text(self.sweep_csv())
        return [path, txt, sweep]


def _fmt(x) -> str:
    return "" if x is None else f"{x:.6f}"


def fingerprint(*parts) -> str:
    blob = json.dumps(parts, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def _sweep_rows(row: TableRow, baseline, template, trials, seed, cfg, ids) -> tuple[RowStats, list[dict]]:
    total = RowStats()
    rows = []
    for cid in ids:
        st = run_row(row, baseline, template, trials, seed, cfg, ids=(cid,))
        rows.append(
            {
                "id": cid,
                "id_hex": f"0x{cid:03X}",
                "injection_rate": st.injection_rate,
                "detection_rate": st.detection_rate,
                "inferring_accuracy": st.hit_rate,
            }
        )
        _accumulate(total, st)
    return total, rows


def _accumulate(into: RowStats, st: RowStats) -> None:
    for name in vars(into):
        setattr(into, name, getattr(into, name) + getattr(st, name))


def run_fig3_sweep(
    baseline: TrafficScenario,
    ids: Sequence[int] = SWEEP_IDS,
    frequency: float = 100.0,
    seed: int = 0,
    template: GoldenTemplate | None = None,
    trials: int = 10,
    cfg: EvalConfig = EvalConfig(),
) -> list[dict]:
    """Injection and detection rate of a single-ID attack for each of ``ids``.

    Every ID sees the same benign traffic seeds, so differences between
    rows come from the identifier alone.
    """
    if list(ids) != sorted(ids):
        raise ValueError("sweep ids must be sorted ascending")
    if template is None:
        template = build_baseline_template(baseline, seed, cfg)
    row = TableRow("Single Injection", AttackKind.SINGLE_ID, frequency)
    return _sweep_rows(row, baseline, template, trials, seed, cfg, ids)[1]


def run_table1(
    baseline: TrafficScenario,
    rows: Sequence[TableRow] | None = None,
    template_measurements: int = 35,
    trials_per_scenario: int = 50,
    seed: int = 0,
    cfg: EvalConfig = EvalConfig(),
    template: GoldenTemplate | None = None,
) -> EvaluationReport:
    if trials_per_scenario < 10:
        log.warning("only %d trials per scenario; rates will be noisy", trials_per_scenario)
    cfg = replace(cfg, template_measurements=template_measurements, trials=trials_per_scenario)
    rows = default_rows(cfg) if rows is None else list(rows)
    if template is None:
        template = build_baseline_template(baseline, seed, cfg)

    per_scenario: dict[str, dict] = {}
    sweep: list[dict] = []
    every = RowStats()  # sanity counters over all trials, series included
    for row in rows:
        if row.kind is AttackKind.SINGLE_ID and not row.ids:
            st, sweep = _sweep_rows(row, baseline, template, trials_per_scenario, seed, cfg, cfg.sweep_ids)
            summary = _row_summary(row, st)
            summary["per_id"] = sweep
            # Headline is the plain mean over swept IDs, each ID weighted equally.
            summary["detection_rate_pooled"] = summary["detection_rate"]
            summary["detection_rate"] = float(
                np.mean([r["detection_rate"] for r in sweep if r["detection_rate"] is not None])
            )
        else:
            st = run_row(row, baseline, template, trials_per_scenario, seed, cfg)
            summary = _row_summary(row, st)
        _accumulate(every, st)
        per_scenario[row.name] = summary
        log.info("%s: Dr=%s hit=%s", row.name, summary["detection_rate"], summary.get("inferring_accuracy"))

    series: dict[str, float | None] = {}
    for f in cfg.series_frequencies:
        row = TableRow("series", AttackKind.SINGLE_ID, f, ids=(cfg.series_id,))
        st = run_row(row, baseline, template, trials_per_scenario, seed, cfg)
        _accumulate(every, st)
        series[f"{f:g}"] = st.detection_rate

    fp = fingerprint(scenario_to_dict(baseline), cfg.to_dict(), [asdict(r) for r in rows], seed)
    return EvaluationReport(
        per_scenario=per_scenario,
        sweep=sweep,
        frequency_series=series,
        config_fingerprint=fp,
        template=template.to_dict(),
        seed=seed,
        checks={
            "attack_trials": every.trials,
            "inferences": every.inferences,
            "nm_violations": every.nm_violations,
            "soundness_violations": every.soundness_violations,
            "ordering_violations": every.ordering_violations,
            "clean_windows": every.clean_windows,
            "false_alerts": every.false_alerts,
        },
    )
