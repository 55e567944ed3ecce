"""Experiment orchestration: populations of simulated runs, judged and compared.

A population is one sensor variant run ``K`` times on each scenario. One
population is designated the reference (standing in for real-world data)
and every other population is scored against it with VEPD, pooled over all
scenarios and per scenario.

Per-run seeds are ``blake2b("{master}/{seed_label}/{scenario}/{k}")``
truncated to 64 bits, so adding a population never changes another's
streams.
"""

import csv
import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .dataset import RunLog, load_run, replay_mix, save_run
from .estimator import EkfConfig, run_estimator
from .metrics import RunPopulation, VepdReport, score_run, vepd
from .sensors import GpsGaussConfig, GpsRwConfig, HdopConfig, ImuConfig, SensorVariant, make_variant
from .timeseries import DEFAULT_WARMUP
from .vehicle import DEFAULT_SIM_RATE, Scenario, ScenarioKind, SpeedProfile, generate_trajectory

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1
_SENSOR_SECTIONS = {"imu": ImuConfig, "gauss": GpsGaussConfig, "rw": GpsRwConfig, "hdop": HdopConfig}


class ConfigError(ValueError):
    """Invalid experiment configuration; the message starts with the field path."""


def run_seed(master_seed, label, scenario, k):
    digest = hashlib.blake2b(f"{master_seed}/{label}/{scenario}/{k}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


@dataclass(frozen=True)
class PopulationSpec:
    label: str
    variant: SensorVariant
    overrides: dict = field(default_factory=dict)
    speed_profile: SpeedProfile = None
    seed_label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "variant", SensorVariant(self.variant))
        if not self.seed_label:
            object.__setattr__(self, "seed_label", self.label)

    def to_dict(self):
        d = {"label": self.label, "variant": self.variant.value, "overrides": self.overrides, "seed_label": self.seed_label}
        if self.speed_profile is not None:
            sp = self.speed_profile
            d["speed_profile"] = {"kind": sp.kind, "t_ramp": sp.t_ramp, "amplitude": sp.amplitude, "period": sp.period}
        return d


def default_scenarios():
    return [
        Scenario(kind=ScenarioKind.LINE, duration=20.0, target_speed=1.5, name="line"),
        Scenario(kind=ScenarioKind.CIRCLE, duration=20.0, target_speed=1.5, radius=5.0, name="circle"),
        Scenario(kind=ScenarioKind.HALF_SINE, duration=20.0, target_speed=1.5, amplitude=3.0, wavelength=28.0, name="sine"),
    ]


def default_variants():
    return [PopulationSpec(v.value, v) for v in SensorVariant]


@dataclass(frozen=True)
class ExperimentConfig:
    scenarios: list = field(default_factory=default_scenarios)
    variants: list = field(default_factory=default_variants)
    reference: PopulationSpec = field(default_factory=lambda: PopulationSpec("pseudo-real", SensorVariant.CH_RW_AIRSIM))
    reference_logs: str = None
    K: int = 10
    master_seed: int = 0
    ekf: EkfConfig = field(default_factory=EkfConfig)
    sensors: dict = field(default_factory=dict)
    warmup: float = DEFAULT_WARMUP
    entropy_remove_mean: bool = False
    sim_rate: float = DEFAULT_SIM_RATE
    gt_log_rate: float = 100.0
    hist_bins: int = 10
    save_runs: bool = True
    output_dir: str = "simgap_out"
    workers: int = 1

    def __post_init__(self):
        if self.K < 1:
            raise ConfigError(f"K: must be >= 1, got {self.K}")
        if not self.scenarios:
            raise ConfigError("scenarios: at least one scenario is required")
        if not self.variants:
            raise ConfigError("variants: at least one variant is required")
        names = [s.name for s in self.scenarios]
        if len(set(names)) != len(names):
            raise ConfigError(f"scenarios: names must be unique, got {names}")
        labels = [v.label for v in self.variants]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"variants: labels must be unique, got {labels}")
        if self.reference is not None and self.reference.label in labels:
            raise ConfigError(f"reference.label: {self.reference.label!r} collides with a variant label")
        ratio = self.sim_rate / self.gt_log_rate
        if abs(ratio - round(ratio)) > 1e-9 or ratio < 1:
            raise ConfigError("gt_log_rate: must divide sim_rate evenly")
        if self.workers < 1:
            raise ConfigError(f"workers: must be >= 1, got {self.workers}")

    def sensor_configs(self, overrides=None):
        """Base sensor configs with a population's overrides merged on top."""
        out = {}
        for key, cls in _SENSOR_SECTIONS.items():
            merged = dict(self.sensors.get(key, {}))
            merged.update((overrides or {}).get(key, {}))
            out[key] = cls.from_dict(merged)
        return out

    def to_dict(self):
        """Everything that determines results (output location and worker count excluded)."""
        return {
            "scenarios": [s.to_dict() for s in self.scenarios],
            "variants": [v.to_dict() for v in self.variants],
            "reference": None if self.reference is None else self.reference.to_dict(),
            "reference_logs": self.reference_logs,
            "K": self.K,
            "master_seed": self.master_seed,
            "ekf": self.ekf.to_dict(),
            "sensors": self.sensors,
            "warmup": self.warmup,
            "entropy_remove_mean": self.entropy_remove_mean,
            "sim_rate": self.sim_rate,
            "gt_log_rate": self.gt_log_rate,
            "hist_bins": self.hist_bins,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kw = {}
        try:
            known = {f for f in cls.__dataclass_fields__}
            unknown = set(d) - known
            if unknown:
                raise ConfigError(f"<root>: unknown field(s) {sorted(unknown)}")
            if "scenarios" in d:
                kw["scenarios"] = [_at(f"scenarios[{i}]", Scenario.from_dict, s) for i, s in enumerate(d.pop("scenarios"))]
            if "variants" in d:
                kw["variants"] = [_at(f"variants[{i}]", _population, v) for i, v in enumerate(d.pop("variants"))]
            if "reference" in d:
                ref = d.pop("reference")
                kw["reference"] = None if ref is None else _at("reference", _population, ref)
            if "ekf" in d:
                kw["ekf"] = _at("ekf", EkfConfig.from_dict, d.pop("ekf"))
            if "sensors" in d:
                sensors = d.pop("sensors")
                for key, sec in sensors.items():
                    if key not in _SENSOR_SECTIONS:
                        raise ConfigError(f"sensors.{key}: unknown sensor section")
                    _at(f"sensors.{key}", _SENSOR_SECTIONS[key].from_dict, sec)
                kw["sensors"] = sensors
            kw.update(d)
            cfg = cls(**kw)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"<root>: {exc}") from exc
        for i, v in enumerate(cfg.variants):
            _at(f"variants[{i}].overrides", cfg.sensor_configs, v.overrides)
        if cfg.reference is not None:
            _at("reference.overrides", cfg.sensor_configs, cfg.reference.overrides)
        return cfg

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _at(path, fn, arg):
    try:
        return fn(arg)
    except ConfigError as exc:
        raise ConfigError(f"{path}.{exc}") from exc
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _population(d):
    d = dict(d)
    if "speed_profile" in d and d["speed_profile"] is not None:
        d["speed_profile"] = SpeedProfile(**d["speed_profile"])
    overrides = d.get("overrides", {})
    bad = set(overrides) - set(_SENSOR_SECTIONS)
    if bad:
        raise ValueError(f"unknown override section(s) {sorted(bad)}")
    return PopulationSpec(**d)


# ---------------------------------------------------------------- single runs


@dataclass(frozen=True)
class RunTask:
    population: PopulationSpec
    scenario: Scenario
    k: int
    seed: int
    sensors: dict
    ekf: EkfConfig
    warmup: float
    sim_rate: float
    gt_log_rate: float
    remove_mean: bool = False
    log_path: str = None


@lru_cache(maxsize=32)
def _trajectory(scenario, sim_rate):
    return generate_trajectory(scenario, sim_rate)


def simulate_run(task):
    """Trajectory -> sensor streams -> judge -> RunScore (and optionally a log on disk)."""
    scn = task.scenario
    if task.population.speed_profile is not None:
        scn = scn.with_profile(task.population.speed_profile)
    traj = _trajectory(scn, task.sim_rate)
    s = task.sensors
    rig = make_variant(task.population.variant, s["imu"], s["gauss"], s["rw"], s["hdop"], task.seed)
    gps, imu = rig.simulate(traj)
    est = run_estimator(gps, imu, task.ekf, traj.origin)
    gt = traj.decimate(round(task.sim_rate / task.gt_log_rate))
    score = score_run(est, gt.velocity_series(), task.warmup, task.remove_mean)
    if task.log_path:
        meta = {
            "population": task.population.label,
            "variant": task.population.variant.value,
            "scenario": scn.to_dict(),
            "k": task.k,
            "seed": task.seed,
            "rates": {"imu": rig.imu_rate_hz, "gps": rig.gps_rate_hz, "gt": task.gt_log_rate, "estimate": task.ekf.output_rate},
            "origin": scn.to_dict()["origin"],
            "surface": "sim-flat",
        }
        save_run(RunLog(meta, imu, gps, gt, est), task.log_path)
    return score


def _safe_run(task):
    try:
        return simulate_run(task), None
    except Exception as exc:  # recorded per run; the report lists the failure
        return None, f"{type(exc).__name__}: {exc}"


def _tasks(cfg, spec, out_dir):
    sensors = cfg.sensor_configs(spec.overrides)
    for scn in cfg.scenarios:
        for k in range(cfg.K):
            path = None
            if out_dir is not None:
                path = str(Path(out_dir) / "runs" / spec.label / scn.name / f"run_{k:03d}.jsonl")
            yield RunTask(
                spec, scn, k, run_seed(cfg.master_seed, spec.seed_label, scn.name, k), sensors,
                cfg.ekf, cfg.warmup, cfg.sim_rate, cfg.gt_log_rate, cfg.entropy_remove_mean, path,
            )


def _execute(tasks, workers):
    if workers <= 1:
        return [_safe_run(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_safe_run, tasks, chunksize=4))


# ---------------------------------------------------------------- reference from logs


def log_score(log, warmup=DEFAULT_WARMUP, ekf=None):
    """Score a stored run, running the judge first if the log has no estimate."""
    if log.ground_truth is None:
        raise ValueError("run log has no ground-truth channel")
    est = log.estimate
    if est is None:
        est = run_estimator(log.gps, log.imu, ekf or EkfConfig(), log.origin)
    return score_run(est, log.ground_truth.velocity_series(), warmup)


def iter_logs(root):
    """All ``*.jsonl`` run logs below ``root`` in sorted path order."""
    return sorted(Path(root).rglob("*.jsonl"))


def scores_from_logs(root, warmup=DEFAULT_WARMUP, ekf=None):
    """``{scenario_name: [RunScore, ...]}`` ordered by (scenario, k)."""
    grouped = {}
    for path in iter_logs(root):
        log = load_run(path)
        name = log.meta.get("scenario", {}).get("name", "unknown")
        grouped.setdefault(name, []).append((log.meta.get("k", 0), str(path), log_score(log, warmup, ekf)))
    return {name: [s for _, _, s in sorted(v, key=lambda r: r[:2])] for name, v in sorted(grouped.items())}


# ---------------------------------------------------------------- report assembly


def compare_populations(reference, population, scenario_names):
    """Pooled and per-scenario VEPD between two ``{scenario: [RunScore]}`` maps."""
    per = {}
    for name in scenario_names:
        per[name] = vepd(RunPopulation(tuple(reference[name])), RunPopulation(tuple(population[name])))
    pooled_ref = RunPopulation(tuple(s for n in scenario_names for s in reference[n]))
    pooled_pop = RunPopulation(tuple(s for n in scenario_names for s in population[n]))
    r = vepd(pooled_ref, pooled_pop)
    return VepdReport(r.w1, r.w2, r.vepd, r.k, per)


def rank(values):
    """1-based ranks, lowest value first; ties keep input order."""
    order = sorted(range(len(values)), key=lambda i: (values[i], i))
    ranks = [0] * len(values)
    for pos, i in enumerate(order, start=1):
        ranks[i] = pos
    return ranks


def _histograms(populations, bins):
    out = {}
    for metric in ("rmse", "entropy_diff"):
        allv = np.concatenate([[getattr(s, metric) for ss in pop.values() for s in ss] for pop in populations.values()])
        edges = np.histogram_bin_edges(allv, bins=bins)
        counts = {}
        for label, pop in populations.items():
            vals = [getattr(s, metric) for ss in pop.values() for s in ss]
            counts[label] = np.histogram(vals, bins=edges)[0].tolist()
        out[metric] = {"edges": edges.tolist(), "counts": counts}
    return out


def build_report(cfg, reference_label, populations, failures):
    """Assemble the report dict from per-population ``{scenario: [RunScore]}`` maps."""
    names = [s.name for s in cfg.scenarios]
    reference = populations[reference_label]
    variants = {}
    for spec in cfg.variants:
        pop = populations.get(spec.label)
        try:
            variants[spec.label] = compare_populations(reference, pop, names).to_dict()
        except (ValueError, KeyError, TypeError) as exc:
            variants[spec.label] = {"error": str(exc)}

    for name in names:
        ok = [lbl for lbl, v in variants.items() if "error" not in v]
        ranks = rank([variants[lbl]["per_scenario"][name]["vepd"] for lbl in ok])
        for lbl, r in zip(ok, ranks):
            variants[lbl]["per_scenario"][name]["rank"] = r

    runs = []
    for label, pop in populations.items():
        for name in names:
            for k, s in enumerate(pop.get(name, [])):
                runs.append({"population": label, "scenario": name, "k": k, "rmse": s.rmse, "entropy_diff": s.entropy_diff})

    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "config": cfg.to_dict(),
        "reference": reference_label,
        "scenarios": names,
        "variants": variants,
        "runs": runs,
        "failed_runs": failures,
        "histograms": _histograms(populations, cfg.hist_bins),
    }


def write_report(report, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")

    names = report["scenarios"]
    with open(out / "table_vepd.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["variant", "w1", "w2", "vepd"] + [c for n in names for c in (f"{n}_vepd", f"{n}_rank")])
        for label, v in report["variants"].items():
            if "error" in v:
                w.writerow([label, "", "", ""] + ["", ""] * len(names))
                continue
            per = v["per_scenario"]
            w.writerow([label, repr(v["w1"]), repr(v["w2"]), repr(v["vepd"])]
                       + [c for n in names for c in (repr(per[n]["vepd"]), per[n]["rank"])])

    for metric, fname in (("rmse", "hist_rmse.csv"), ("entropy_diff", "hist_entropy.csv")):
        h = report["histograms"][metric]
        labels = list(h["counts"])
        with open(out / fname, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_left", "bin_right"] + labels)
            for i in range(len(h["edges"]) - 1):
                w.writerow([repr(h["edges"][i]), repr(h["edges"][i + 1])] + [h["counts"][lbl][i] for lbl in labels])


def simulate_populations(cfg, out_dir=None):
    """Run every population; returns ``(populations, failures)``.

    ``populations`` maps label -> ``{scenario: [RunScore]}`` with failed runs
    left out.
    """
    specs = ([cfg.reference] if cfg.reference is not None and cfg.reference_logs is None else []) + list(cfg.variants)
    tasks = [t for spec in specs for t in _tasks(cfg, spec, out_dir if cfg.save_runs else None)]
    results = _execute(tasks, cfg.workers)

    populations = {spec.label: {s.name: [] for s in cfg.scenarios} for spec in specs}
    failures = []
    for task, (score, err) in zip(tasks, results):
        if err is not None:
            logger.warning("run %s/%s/%d failed: %s", task.population.label, task.scenario.name, task.k, err)
            failures.append({"population": task.population.label, "scenario": task.scenario.name, "k": task.k, "error": err})
            continue
        populations[task.population.label][task.scenario.name].append(score)
    return populations, failures


def run_experiment(cfg, out_dir=None):
    """Full protocol: simulate, judge, score, compare, write artifacts. Returns the report dict."""
    out_dir = Path(out_dir or cfg.output_dir)
    populations, failures = simulate_populations(cfg, out_dir)
    if cfg.reference_logs is not None:
        label = "reference"
        populations = {label: scores_from_logs(cfg.reference_logs, cfg.warmup, cfg.ekf), **populations}
        missing = [s.name for s in cfg.scenarios if s.name not in populations[label]]
        if missing:
            raise ConfigError(f"reference_logs: no runs for scenario(s) {missing}")
    else:
        label = cfg.reference.label
    report = build_report(cfg, label, populations, failures)
    write_report(report, out_dir)
    return report


def run_replay(reference_root, imu_cfg=None, ekf=None, master_seed=0, warmup=DEFAULT_WARMUP):
    """Pair each stored run with a replay that keeps its GPS but re-simulates the IMU.

    Returns ``(recorded, replayed)`` populations in matching order.
    """
    ekf = ekf or EkfConfig()
    recorded, replayed = [], []
    for path in iter_logs(reference_root):
        log = load_run(path)
        recorded.append(log_score(log, warmup, ekf))
        seed = run_seed(master_seed, "replay", str(path.relative_to(reference_root)), log.meta.get("k", 0))
        gps, imu = replay_mix(log, imu_cfg, seed)
        est = run_estimator(gps, imu, ekf, log.origin)
        replayed.append(score_run(est, log.ground_truth.velocity_series(), warmup))
    if not recorded:
        raise ValueError(f"no run logs found under {reference_root}")
    return RunPopulation(tuple(recorded), "recorded"), RunPopulation(tuple(replayed), "sim-imu+recorded-gps")
