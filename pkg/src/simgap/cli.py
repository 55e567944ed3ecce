"""Command-line entry point: ``simgap <subcommand> [options]``.

Subcommands
    run        full experiment: simulate, judge, compare, write report files
    simulate   generate and store run logs for every population
    estimate   (re)run the judge on stored logs, writing the estimate channel
    metrics    per-run RMSE / entropy-difference scores of stored logs
    vepd       compare two directories of stored logs
    replay     recorded GPS + re-simulated IMU, compared with the recording
    report     rebuild report.json and CSV tables from stored logs

Exit status is 0 on success, 1 if any run failed, 2 on invalid input.
"""

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .dataset import RunLogError, load_run, save_run
from .estimator import run_estimator
from .experiment import (
    ConfigError,
    ExperimentConfig,
    build_report,
    compare_populations,
    iter_logs,
    log_score,
    run_experiment,
    run_replay,
    scores_from_logs,
    simulate_populations,
    write_report,
)
from .metrics import vepd

logger = logging.getLogger("simgap")


def _config(args):
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["master_seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        changes["workers"] = args.workers
    if getattr(args, "out", None) is not None:
        changes["output_dir"] = args.out
    return dataclasses.replace(cfg, **changes) if changes else cfg


def _emit(obj, out):
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_run(args):
    cfg = _config(args)
    report = run_experiment(cfg, cfg.output_dir)
    for label, v in report["variants"].items():
        if "error" in v:
            print(f"{label:16s} ERROR {v['error']}")
        else:
            print(f"{label:16s} W1={v['w1']:.4f} W2={v['w2']:.4f} VEPD={v['vepd']:.4f}")
    print(f"report written to {Path(cfg.output_dir) / 'report.json'}")
    return 1 if report["failed_runs"] else 0


def cmd_simulate(args):
    cfg = dataclasses.replace(_config(args), save_runs=True)
    _, failures = simulate_populations(cfg, cfg.output_dir)
    for f in failures:
        print(f"FAILED {f['population']}/{f['scenario']}/{f['k']}: {f['error']}", file=sys.stderr)
    print(f"run logs written under {Path(cfg.output_dir) / 'runs'}")
    return 1 if failures else 0


def cmd_estimate(args):
    cfg = _config(args)
    n = 0
    for path in iter_logs(args.runs):
        log = load_run(path)
        log.estimate = run_estimator(log.gps, log.imu, cfg.ekf, log.origin)
        save_run(log, path)
        n += 1
    print(f"estimated {n} run(s)")
    return 0


def cmd_metrics(args):
    cfg = _config(args)
    rows = []
    for path in iter_logs(args.runs):
        log = load_run(path)
        s = log_score(log, cfg.warmup, cfg.ekf)
        rows.append([str(path), log.meta.get("population", ""), log.meta.get("scenario", {}).get("name", ""),
                     log.meta.get("k", ""), repr(s.rmse), repr(s.entropy_diff)])
    fh = open(args.output, "w", newline="", encoding="utf-8") if args.output else sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow(["path", "population", "scenario", "k", "rmse", "entropy_diff"])
        w.writerows(rows)
    finally:
        if fh is not sys.stdout:
            fh.close()
    return 0


def cmd_vepd(args):
    cfg = _config(args)
    ref = scores_from_logs(args.reference, cfg.warmup, cfg.ekf)
    sim = scores_from_logs(args.sim, cfg.warmup, cfg.ekf)
    names = sorted(set(ref) & set(sim))
    if not names:
        raise ValueError("reference and sim logs share no scenario")
    _emit(compare_populations(ref, sim, names).to_dict(), args.output)
    return 0


def cmd_replay(args):
    cfg = _config(args)
    imu = cfg.sensor_configs()["imu"]
    recorded, replayed = run_replay(args.reference, imu, cfg.ekf, cfg.master_seed, cfg.warmup)
    report = vepd(recorded, replayed).to_dict()
    report["recorded"] = [[s.rmse, s.entropy_diff] for s in recorded.scores]
    report["replayed"] = [[s.rmse, s.entropy_diff] for s in replayed.scores]
    _emit(report, args.output)
    return 0


def cmd_report(args):
    cfg = _config(args)
    runs = Path(args.runs)
    populations = {d.name: scores_from_logs(d, cfg.warmup, cfg.ekf) for d in sorted(runs.iterdir()) if d.is_dir()}
    ref = cfg.reference.label if cfg.reference is not None else "reference"
    if ref not in populations:
        raise ValueError(f"no reference population {ref!r} under {runs}")
    report = build_report(cfg, ref, populations, [])
    write_report(report, cfg.output_dir)
    print(f"report written to {Path(cfg.output_dir) / 'report.json'}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="simgap", description="GPS/IMU sensor-model sim2real gap toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help="output directory"):
        sp.add_argument("--config", help="experiment config (JSON)")
        sp.add_argument("--seed", type=int, help="override master_seed")
        sp.add_argument("--workers", type=int, help="parallel worker processes")
        sp.add_argument("--out", help=out_help)

    sp = sub.add_parser("run", help="full experiment")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("simulate", help="generate run logs")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("estimate", help="run the judge on stored logs")
    common(sp)
    sp.add_argument("--runs", required=True, help="directory of run logs (searched recursively)")
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("metrics", help="per-run scores of stored logs")
    common(sp)
    sp.add_argument("--runs", required=True)
    sp.add_argument("-o", "--output", help="CSV file (default stdout)")
    sp.set_defaults(func=cmd_metrics)

    sp = sub.add_parser("vepd", help="compare two log directories")
    common(sp)
    sp.add_argument("--reference", required=True)
    sp.add_argument("--sim", required=True)
    sp.add_argument("-o", "--output", help="JSON file (default stdout)")
    sp.set_defaults(func=cmd_vepd)

    sp = sub.add_parser("replay", help="recorded GPS + simulated IMU vs recording")
    common(sp)
    sp.add_argument("--reference", required=True)
    sp.add_argument("-o", "--output", help="JSON file (default stdout)")
    sp.set_defaults(func=cmd_replay)

    sp = sub.add_parser("report", help="rebuild report files from stored logs")
    common(sp)
    sp.add_argument("--runs", required=True, help="directory holding one sub-directory per population")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, RunLogError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
