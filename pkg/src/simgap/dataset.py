"""Run-log persistence (JSON Lines, schema v1) and GPS-replay IMU re-synthesis.

File layout: the first line is a header record, every following line is one
sample tagged with its channel::

    {"record": "header", "schema_version": 1, "meta": {...}}
    {"ch": "gt",  "t": 0.0, "x": .., "y": .., "yaw": .., "vx": .., "vy": .., "ax": .., "ay": .., "r": ..}
    {"ch": "imu", "t": 0.0, "w": [wx, wy, wz], "a": [ax, ay, az]}
    {"ch": "gps", "t": 0.0, "lat": .., "lon": .., "alt": .., "cov": [9 values, row-major]}
    {"ch": "est", "t": 0.0, "v": [ve, vn]}

Floats are written with ``repr`` precision, so a save/load round trip is
bit-exact.
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import uniform_filter1d

from .geodesy import GeoPoint
from .sensors import _STREAM_IMU, GRAVITY, GpsSample, ImuConfig, ImuSample, ImuState, _grid, imu_step, model_rng
from .timeseries import TimeSeries
from .vehicle import GroundTruthTrajectory

SCHEMA_VERSION = 1
SMOOTHING_WINDOW = 5

_GT_KEYS = ("x", "y", "yaw", "vx", "vy", "ax", "ay", "r")


class RunLogError(ValueError):
    """Malformed or incompatible run-log file."""


@dataclass(eq=False)
class RunLog:
    meta: dict
    imu: list = field(default_factory=list)
    gps: list = field(default_factory=list)
    ground_truth: GroundTruthTrajectory = None
    estimate: TimeSeries = None

    def __post_init__(self):
        if self.gps and "origin" not in self.meta:
            raise RunLogError("meta.origin is required when a GPS channel is present")
        for name in ("imu", "gps"):
            samples = getattr(self, name)
            for i in range(1, len(samples)):
                if samples[i].t < samples[i - 1].t:
                    raise RunLogError(f"{name} channel not time-sorted at index {i}")

    @property
    def origin(self):
        o = self.meta.get("origin")
        return None if o is None else GeoPoint(**o)

    def __eq__(self, other):
        if not isinstance(other, RunLog):
            return NotImplemented
        return (
            self.meta == other.meta
            and self.imu == other.imu
            and self.gps == other.gps
            and _gt_equal(self.ground_truth, other.ground_truth)
            and self.estimate == other.estimate
        )


def _gt_equal(a, b):
    if a is None or b is None:
        return a is b
    return np.array_equal(a.t, b.t) and np.array_equal(a.as_array(), b.as_array()) and a.origin == b.origin


def _records(log):
    yield {"record": "header", "schema_version": SCHEMA_VERSION, "meta": log.meta}
    gt = log.ground_truth
    if gt is not None:
        for t, row in zip(gt.t, gt.as_array()):
            x, y, yaw, vx, vy, ax, ay, r = (float(v) for v in row)
            yield {"ch": "gt", "t": float(t), "x": x, "y": y, "yaw": yaw, "vx": vx, "vy": vy, "ax": ax, "ay": ay, "r": r}
    for s in log.imu:
        yield {"ch": "imu", "t": s.t, "w": [float(v) for v in s.angular_velocity], "a": [float(v) for v in s.linear_acceleration]}
    for s in log.gps:
        p = s.position
        yield {"ch": "gps", "t": s.t, "lat": p.lat, "lon": p.lon, "alt": p.alt, "cov": [float(v) for v in s.covariance.ravel()]}
    est = log.estimate
    if est is not None:
        for t, v in zip(est.timestamps, est.values):
            yield {"ch": "est", "t": float(t), "v": [float(c) for c in v]}


def save_run(log, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in _records(log):
            fh.write(json.dumps(rec, allow_nan=False, separators=(",", ":")))
            fh.write("\n")
    return path


def load_run(path):
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        lines = fh.readlines()
    if not lines:
        raise RunLogError(f"{path}: empty file")

    header = _parse(lines[0], 1)
    if header.get("record") != "header":
        raise RunLogError(f"{path}: line 1 must be the header record")
    found = header.get("schema_version")
    if found != SCHEMA_VERSION:
        raise RunLogError(f"{path}: schema_version mismatch (expected {SCHEMA_VERSION}, found {found})")
    meta = header.get("meta")
    if not isinstance(meta, dict):
        raise RunLogError(f"{path}: header has no meta object")

    gt_rows, gt_t, imu, gps, est_t, est_v = [], [], [], [], [], []
    last = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        rec = _parse(line, lineno)
        try:
            ch = rec["ch"]
            t = float(rec["t"])
            if not math.isfinite(t):
                raise ValueError("non-finite timestamp")
            prev = last.get(ch)
            # gt/est back TimeSeries and must be strictly increasing
            strict = ch in ("gt", "est")
            if prev is not None and (t < prev or (strict and t == prev)):
                raise RunLogError(f"{path}: timestamp regression at line {lineno}")
            last[ch] = t
            if ch == "gt":
                gt_t.append(t)
                gt_rows.append([float(rec[k]) for k in _GT_KEYS])
            elif ch == "imu":
                imu.append(ImuSample(t, _vec(rec["w"], 3), _vec(rec["a"], 3)))
            elif ch == "gps":
                cov = _vec(rec["cov"], 9).reshape(3, 3)
                gps.append(GpsSample(t, GeoPoint(float(rec["lat"]), float(rec["lon"]), float(rec["alt"])), cov))
            elif ch == "est":
                est_t.append(t)
                est_v.append(_vec(rec["v"], None))
            else:
                raise ValueError(f"unknown channel {ch!r}")
        except RunLogError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise RunLogError(f"{path}: malformed record at line {lineno}: {exc}") from exc

    gt = None
    if gt_t:
        a = np.array(gt_rows)
        origin = GeoPoint(**meta["origin"]) if "origin" in meta else GeoPoint(0.0, 0.0, 0.0)
        gt = GroundTruthTrajectory(np.array(gt_t), a[:, 0:2], a[:, 2], a[:, 3:5], a[:, 5:7], a[:, 7], origin)
    est = TimeSeries(np.array(est_t), np.array(est_v), "m/s") if est_t else None
    return RunLog(meta, imu, gps, gt, est)


def _parse(line, lineno):
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise RunLogError(f"malformed JSON at line {lineno}: {exc.msg}") from exc
    if not isinstance(rec, dict):
        raise RunLogError(f"malformed record at line {lineno}: expected an object")
    return rec


def _vec(v, n):
    arr = np.array([float(x) for x in v])
    if n is not None and arr.shape != (n,):
        raise ValueError(f"expected {n} values, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite value")
    return arr


def ground_truth_kinematics(gt, window=SMOOTHING_WINDOW):
    """Recover yaw rate and body-frame acceleration from a logged trajectory.

    Central differences (one-sided at the ends) of unwrapped yaw and world
    velocity, each smoothed by a centred ``window``-sample moving average.
    Returns ``(yaw_rate, accel_body)`` with shapes ``(N,)`` and ``(N, 2)``.
    """
    if len(gt) < 3:
        raise ValueError("ground truth needs at least 3 samples to differentiate")
    yaw = np.unwrap(gt.yaw)
    yaw_rate = uniform_filter1d(np.gradient(yaw, gt.t), window, mode="nearest")
    acc_world = uniform_filter1d(np.gradient(gt.velocity, gt.t, axis=0), window, axis=0, mode="nearest")
    c, s = np.cos(yaw), np.sin(yaw)
    accel_body = np.column_stack([c * acc_world[:, 0] + s * acc_world[:, 1], -s * acc_world[:, 0] + c * acc_world[:, 1]])
    return yaw_rate, accel_body


def replay_mix(real, imu_cfg=None, seed=0):
    """Recorded GPS verbatim plus an IMU stream re-synthesised from the logged kinematics.

    Returns ``(gps, imu)``. The IMU runs at ``imu_cfg.rate_hz`` over the
    ground-truth span, with its own generator derived from ``seed``.
    """
    if real.ground_truth is None:
        raise ValueError("replay needs a ground-truth channel")
    if not real.gps:
        raise ValueError("replay needs a GPS channel")
    imu_cfg = imu_cfg or ImuConfig()
    gt = real.ground_truth
    yaw_rate, accel_body = ground_truth_kinematics(gt)

    times = _grid(gt.t[0], gt.t[-1], imu_cfg.rate_hz)
    r = np.interp(times, gt.t, yaw_rate)
    ax = np.interp(times, gt.t, accel_body[:, 0])
    ay = np.interp(times, gt.t, accel_body[:, 1])

    state = ImuState.initial(model_rng(seed, _STREAM_IMU))
    imu = [
        imu_step(state, imu_cfg, np.array([0.0, 0.0, r[i]]), np.array([ax[i], ay[i], GRAVITY]), t)
        for i, t in enumerate(times)
    ]
    return list(real.gps), imu
