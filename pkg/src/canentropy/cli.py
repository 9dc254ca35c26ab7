"""``canentropy`` command line: simulate | baseline | detect | evaluate."""
from __future__ import annotations

import argparse
import json
import logging
import secrets
import sys
from dataclasses import replace
from pathlib import Path

from .attacks import generate_attack, merge_streams, write_truth
from .bus_sim import run_bus
from .config import ScenarioFile, load_scenario, scenario_file_dict
from .detector import DEFAULT_FLOOR, DEFAULT_KAPPA, GoldenTemplate, detect, write_verdicts_csv
from .entropy import WindowPolicy, windowed_stats
from .evaluation import EvalConfig, build_baseline_template, default_rows, rows_from_attacks, run_table1, trial_seed
from .inference import DEFAULT_RANK, derive_constraints, infer_multi, rank_candidates
from .traffic import default_scenario, generate_offered_traffic, read_log, strip_source, write_log

log = logging.getLogger("canentropy")


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _fail("UsageError", message, code=2)


def _fail(kind: str, message: str, code: int = 1):
    sys.stderr.write(json.dumps({"error": kind, "message": " ".join(str(message).split())}) + "\n")
    sys.exit(code)


def _header(command: str, seed, effective: dict) -> None:
    sys.stderr.write(f"# canentropy {command} seed={seed}\n")
    sys.stderr.write("# config " + json.dumps(effective, sort_keys=True, default=str) + "\n")


def _seed(args) -> int:
    return secrets.randbelow(2**32) if args.seed is None else args.seed


def _scenario(args) -> ScenarioFile:
    if args.scenario is None:
        return ScenarioFile(default_scenario())
    return load_scenario(args.scenario)


def _policy(args, fallback: WindowPolicy | None = None) -> WindowPolicy:
    given = (args.window_mode, args.window_length, args.window_stride)
    if fallback is not None and given == (None, None, None):
        return fallback
    mode = args.window_mode or "time"
    length = args.window_length if args.window_length is not None else 1.0
    stride = args.window_stride if args.window_stride is not None else length
    return WindowPolicy(mode, length, stride)


def _out_sibling(path: Path, suffix: str) -> Path:
    return path.with_name(path.name + suffix)


# --- commands ------------------------------------------------------------------

def cmd_simulate(args) -> int:
    seed = _seed(args)
    sf = _scenario(args)
    traffic = replace(sf.traffic, rng_seed=seed)
    if args.duration is not None:
        traffic = replace(traffic, duration=args.duration)
    attacks = [replace(a, rng_seed=trial_seed(seed, "attack", j)) for j, a in enumerate(sf.attacks)]
    _header("simulate", seed, {"scenario": str(args.scenario or "<default vehicle>"), "out": str(args.out),
                               "duration": traffic.duration, "baud_rate": traffic.baud_rate,
                               "attacks": [a.to_dict() for a in attacks]})

    offered = generate_offered_traffic(traffic)
    for a in attacks:
        offered = merge_streams(offered, generate_attack(a))
    result = run_bus(offered, traffic.baud_rate)

    out = Path(args.out)
    write_log(strip_source(result.bus_log), out)
    summary = {"log": str(out), "frames": len(result.bus_log), "sources": result.stats_dict()}
    if attacks:
        labels = {a.source for a in attacks}
        truth = _out_sibling(out, ".truth.csv")
        summary["truth"] = str(truth)
        summary["injected"] = write_truth((f for f in result.bus_log if f.source in labels), truth)
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_baseline(args) -> int:
    seed = _seed(args)
    sf = _scenario(args)
    if sf.attacks:
        raise CliError("baseline must be attack-free")
    cfg = EvalConfig(kappa=args.kappa, floor=args.floor, policy=_policy(args), baseline_duration=args.run_length)
    _header("baseline", seed, {"scenario": str(args.scenario or "<default vehicle>"), "out": str(args.out),
                               "measurements": args.measurements, **cfg.to_dict()})
    template = build_baseline_template(sf.traffic, seed, cfg, args.measurements)
    template.save(args.out)
    print(json.dumps({"template": str(args.out), "measurements": template.measurement_count,
                      "threshold": list(template.threshold)}))
    return 0


def cmd_detect(args) -> int:
    template = GoldenTemplate.load(args.template)
    policy = _policy(args, template.policy or WindowPolicy())
    _header("detect", "none (no randomness)", {"log": str(args.log), "template": str(args.template),
                                               "rank": args.rank, "ids": args.ids, "policy": policy.to_dict(),
                                               "out": str(args.out)})
    frames = read_log(args.log)
    if not frames:
        raise CliError(f"{args.log}: log is empty")
    windows = windowed_stats(frames, policy)
    verdicts = [detect(w, template) for w in windows]

    records = []
    for w, v in zip(windows, verdicts):
        rec = {"window_id": v.window_id, "start": w.start, "messages": v.message_count,
               "alert": v.alert, "flagged_bits": list(v.flagged_bits)}
        if v.alert:
            c = derive_constraints(v, template)
            res = rank_candidates(c, None, args.rank) if args.ids == 1 else infer_multi(v, template, None, args.ids, args.rank)
            rec["constraint"] = str(c)
            rec["inference"] = res.to_dict()
        records.append(rec)

    if args.out is None:
        for rec in records:
            print(json.dumps(rec))
    else:
        out = Path(args.out)
        write_verdicts_csv(verdicts, out)
        inf = out.with_suffix(".inference.json")
        inf.write_text(json.dumps([r for r in records if r["alert"]], indent=2) + "\n")
        print(json.dumps({"verdicts": str(out), "inference": str(inf), "windows": len(verdicts),
                          "alerts": sum(v.alert for v in verdicts)}))
    return 0


def cmd_evaluate(args) -> int:
    seed = _seed(args)
    sf = _scenario(args)
    cfg = EvalConfig(kappa=args.kappa, floor=args.floor, policy=_policy(args), rank_n=args.rank)
    rows = default_rows(cfg) + rows_from_attacks(sf.attacks)
    _header("evaluate", seed, {"scenario": str(args.scenario or "<default vehicle>"), "out": str(args.out),
                               "trials": args.trials, "measurements": args.measurements, **cfg.to_dict()})
    report = run_table1(sf.traffic, rows, args.measurements, args.trials, seed, cfg)
    paths = report.write(args.out)
    sys.stdout.write(report.render_table())
    print(json.dumps({"written": [str(p) for p in paths]}))
    return 0


def cmd_scenario(args) -> int:
    """Dump the built-in vehicle as an editable scenario file."""
    sf = ScenarioFile(default_scenario(duration=args.duration))
    Path(args.out).write_text(json.dumps(scenario_file_dict(sf), indent=2) + "\n")
    print(json.dumps({"scenario": str(args.out), "ids": len(sf.traffic.id_set())}))
    return 0


# --- parser ----------------------------------------------------------------------

def _common(p: argparse.ArgumentParser, seed=True, scenario=True, window=True) -> None:
    if scenario:
        p.add_argument("--scenario", type=Path, help="scenario JSON (default: built-in 223-ID vehicle)")
    if seed:
        p.add_argument("--seed", type=int, help="master seed; drawn at random and printed when omitted")
    if window:
        p.add_argument("--window-mode", choices=("time", "count"))
        p.add_argument("--window-length", type=float, help="seconds (time) or messages (count)")
        p.add_argument("--window-stride", type=float)
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="canentropy", description="Entropy-based CAN intrusion detection experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="simulate a bus and write the sniffed log")
    _common(p, window=False)
    p.add_argument("--out", "--log", dest="out", type=Path, required=True, help="log file to write")
    p.add_argument("--duration", type=float, help="override the scenario duration (s)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("baseline", help="build a golden template from clean runs")
    _common(p)
    p.add_argument("--out", type=Path, required=True, help="template JSON to write")
    p.add_argument("--measurements", type=int, default=35)
    p.add_argument("--kappa", type=float, default=DEFAULT_KAPPA)
    p.add_argument("--floor", type=float, default=DEFAULT_FLOOR)
    p.add_argument("--run-length", type=float, default=3.0, help="seconds per clean run")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("detect", help="scan a log against a template and rank suspects")
    _common(p, seed=False, scenario=False)
    p.add_argument("--log", type=Path, required=True)
    p.add_argument("--template", type=Path, required=True)
    p.add_argument("--rank", type=int, default=DEFAULT_RANK)
    p.add_argument("--ids", type=int, default=1, help="number of injected IDs to fit")
    p.add_argument("--out", type=Path, help="verdict CSV (inference goes next to it)")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("evaluate", help="run the scenario table and ID sweep")
    _common(p)
    p.add_argument("--out", type=Path, required=True, help="report JSON; .txt and .sweep.csv go alongside")
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--measurements", type=int, default=35)
    p.add_argument("--kappa", type=float, default=DEFAULT_KAPPA)
    p.add_argument("--floor", type=float, default=DEFAULT_FLOOR)
    p.add_argument("--rank", type=int, default=DEFAULT_RANK)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("scenario", help="write the built-in vehicle as scenario JSON")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--duration", type=float, default=60.0)
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.set_defaults(func=cmd_scenario)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (CliError, ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        _fail(type(exc).__name__, msg)


if __name__ == "__main__":
    sys.exit(main())
