"""Planar 8-state EKF that turns GPS + IMU streams into velocity estimates.

State vector (index: meaning)::

    0 x      ENU east, m          4 vy_b   body lateral velocity, m/s
    1 y      ENU north, m         5 r      yaw rate, rad/s
    2 yaw    rad, (-pi, pi]       6 ax_b   body forward accel, m/s^2
    3 vx_b   body fwd vel, m/s    7 ay_b   body lateral accel, m/s^2

GPS fixes update (x, y); IMU samples update (r, ax_b, ay_b). Prediction is a
constant-acceleration model in the rotating body frame, and the estimate is
published on a fixed ``output_rate`` grid.
"""

import math
from dataclasses import dataclass, fields

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_positive
from .geodesy import lla_to_enu
from .timeseries import TimeSeries

N_STATES = 8
X, Y, YAW, VX, VY, R, AX, AY = range(N_STATES)

# continuous-time process noise densities, per state
DEFAULT_PROCESS_NOISE = (1e-4, 1e-4, 1e-4, 1e-3, 1e-3, 0.05, 1.0, 1.0)
DEFAULT_INITIAL_COVARIANCE = (1.0, 1.0, math.pi**2, 4.0, 4.0, 0.25, 1.0, 1.0)


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    w = math.remainder(a, 2.0 * math.pi)
    return math.pi if w == -math.pi else w


@dataclass(frozen=True, eq=False)
class EkfConfig:
    output_rate: float = 35.0
    process_noise: np.ndarray = DEFAULT_PROCESS_NOISE
    initial_covariance: np.ndarray = DEFAULT_INITIAL_COVARIANCE
    gps_covariance_floor: float = 1e-6
    imu_accel_covariance: float = 0.02**2
    imu_gyro_covariance: float = 0.005**2

    def __post_init__(self):
        check_positive(self.output_rate, "output_rate")
        check_positive(self.gps_covariance_floor, "gps_covariance_floor")
        check_positive(self.imu_accel_covariance, "imu_accel_covariance", strict=False)
        check_positive(self.imu_gyro_covariance, "imu_gyro_covariance", strict=False)
        for name in ("process_noise", "initial_covariance"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (N_STATES,) or not np.all(np.isfinite(v)) or np.any(v < 0):
                raise ValueError(f"{name} must be {N_STATES} non-negative finite values")
            object.__setattr__(self, name, v)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown EkfConfig field(s): {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        return {f.name: (v.tolist() if isinstance(v := getattr(self, f.name), np.ndarray) else v) for f in fields(self)}


@dataclass(frozen=True, eq=False)
class EstimatorState:
    mean: np.ndarray
    covariance: np.ndarray
    t: float

    def __post_init__(self):
        m = np.asarray(self.mean, dtype=float)
        p = np.asarray(self.covariance, dtype=float)
        if m.shape != (N_STATES,) or p.shape != (N_STATES, N_STATES):
            raise ValueError("state must be an 8-vector with an 8x8 covariance")
        if not (np.all(np.isfinite(m)) and np.all(np.isfinite(p)) and math.isfinite(self.t)):
            raise ValueError("non-finite estimator state")
        m = m.copy()
        m[YAW] = wrap_angle(m[YAW])
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "covariance", 0.5 * (p + p.T))

    @property
    def world_velocity(self):
        c, s = math.cos(self.mean[YAW]), math.sin(self.mean[YAW])
        vx, vy = self.mean[VX], self.mean[VY]
        return np.array([c * vx - s * vy, s * vx + c * vy])


def transition(mean, dt):
    """Propagate the mean ``dt`` seconds and return it with the model Jacobian."""
    x, y, yaw, vx, vy, r, ax, ay = mean
    c, s = math.cos(yaw), math.sin(yaw)
    h = 0.5 * dt * dt

    out = mean.copy()
    out[X] = x + (vx * c - vy * s) * dt + (ax * c - ay * s) * h
    out[Y] = y + (vx * s + vy * c) * dt + (ax * s + ay * c) * h
    out[YAW] = yaw + r * dt
    # body-frame velocity in a rotating frame picks up the -omega x v term
    out[VX] = vx + (ax + r * vy) * dt
    out[VY] = vy + (ay - r * vx) * dt

    F = np.eye(N_STATES)
    F[X, YAW] = -(vx * s + vy * c) * dt - (ax * s + ay * c) * h
    F[X, VX], F[X, VY] = c * dt, -s * dt
    F[X, AX], F[X, AY] = c * h, -s * h
    F[Y, YAW] = (vx * c - vy * s) * dt + (ax * c - ay * s) * h
    F[Y, VX], F[Y, VY] = s * dt, c * dt
    F[Y, AX], F[Y, AY] = s * h, c * h
    F[YAW, R] = dt
    F[VX, VY], F[VX, R], F[VX, AX] = r * dt, vy * dt, dt
    F[VY, VX], F[VY, R], F[VY, AY] = -r * dt, -vx * dt, dt
    return out, F


def ekf_predict(state, cfg, dt):
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    mean, F = transition(state.mean, dt)
    P = F @ state.covariance @ F.T + np.diag(cfg.process_noise) * dt
    return EstimatorState(mean, P, state.t + dt)


def _joseph_update(state, H, z, Rm, innovation=None):
    P = state.covariance
    nu = z - H @ state.mean if innovation is None else innovation
    S = H @ P @ H.T + Rm
    K = np.linalg.solve(S, H @ P).T
    I_KH = np.eye(N_STATES) - K @ H
    P_new = I_KH @ P @ I_KH.T + K @ Rm @ K.T
    return EstimatorState(state.mean + K @ nu, P_new, state.t)


_H_GPS = np.zeros((2, N_STATES))
_H_GPS[0, X] = _H_GPS[1, Y] = 1.0
_H_IMU = np.zeros((3, N_STATES))
_H_IMU[0, R] = _H_IMU[1, AX] = _H_IMU[2, AY] = 1.0


def gps_measurement_covariance(sample, cfg):
    """Horizontal 2x2 block of the sample covariance with its diagonal floored."""
    Rm = np.array(sample.covariance[:2, :2], dtype=float)
    idx = np.diag_indices(2)
    Rm[idx] = np.maximum(Rm[idx], cfg.gps_covariance_floor)
    if np.linalg.eigvalsh(Rm).min() <= 0:
        raise ValueError("GPS measurement covariance is not positive definite after flooring")
    return Rm


def ekf_update_gps(state, cfg, z, origin):
    if z.t < state.t:
        raise ValueError(f"GPS sample at t={z.t} precedes state time {state.t}")
    enu = lla_to_enu(z.position, origin)
    Rm = gps_measurement_covariance(z, cfg)
    return _joseph_update(state, _H_GPS, np.array([enu.east, enu.north]), Rm)


def ekf_update_imu(state, cfg, z):
    if z.t < state.t:
        raise ValueError(f"IMU sample at t={z.t} precedes state time {state.t}")
    meas = np.array([z.angular_velocity[2], z.linear_acceleration[0], z.linear_acceleration[1]])
    Rm = np.diag([cfg.imu_gyro_covariance, cfg.imu_accel_covariance, cfg.imu_accel_covariance])
    return _joseph_update(state, _H_IMU, meas, Rm)


def initial_state(gps, cfg, origin):
    """Position from the first fix, yaw from the bearing to the second, zero velocity."""
    if not gps:
        raise ValueError("need at least one GPS fix to initialise the estimator")
    p0 = lla_to_enu(gps[0].position, origin)
    yaw = 0.0
    if len(gps) > 1:
        p1 = lla_to_enu(gps[1].position, origin)
        de, dn = p1.east - p0.east, p1.north - p0.north
        if de or dn:
            yaw = math.atan2(dn, de)
    mean = np.zeros(N_STATES)
    mean[X], mean[Y], mean[YAW] = p0.east, p0.north, yaw
    return EstimatorState(mean, np.diag(cfg.initial_covariance), gps[0].t)


def _check_sorted(samples, name):
    for i in range(1, len(samples)):
        if samples[i].t < samples[i - 1].t:
            raise ValueError(f"timestamp regression in {name} stream at index {i}")


def run_estimator(gps, imu, cfg, origin):
    """Fuse time-sorted GPS and IMU streams; return 2-D world velocity at ``cfg.output_rate``.

    Output grid points are multiples of ``1 / output_rate``; at equal
    timestamps measurements are fused before the estimate is published.
    """
    gps, imu = list(gps), list(imu)
    if not gps and not imu:
        raise ValueError("empty sensor streams")
    if not gps:
        raise ValueError("need at least one GPS fix before output begins")
    _check_sorted(gps, "GPS")
    _check_sorted(imu, "IMU")

    state = initial_state(gps, cfg, origin)
    t_start = state.t
    t_end = max(gps[-1].t, imu[-1].t if imu else -math.inf)

    # (time, priority, seq, kind, payload); priority orders GPS < IMU < output at a tie
    events = [(s.t, 0, i, "gps", s) for i, s in enumerate(gps)]
    events += [(s.t, 1, i, "imu", s) for i, s in enumerate(imu) if s.t >= t_start]
    rate = cfg.output_rate
    k0 = math.ceil(t_start * rate - 1e-9)
    k1 = math.floor(t_end * rate + 1e-9)
    grid = [k / rate for k in range(k0, k1 + 1)]
    events += [(t, 2, i, "out", None) for i, t in enumerate(grid) if t_start <= t <= t_end]
    events.sort(key=lambda e: e[:3])

    times, vels = [], []
    for t, _, _, kind, payload in events:
        if t > state.t:
            state = ekf_predict(state, cfg, t - state.t)
        if kind == "gps":
            state = ekf_update_gps(state, cfg, payload, origin)
        elif kind == "imu":
            state = ekf_update_imu(state, cfg, payload)
        else:
            times.append(t)
            vels.append(state.world_velocity)
    if len(times) == 0:
        raise ValueError("streams too short to produce any output sample")
    return TimeSeries(np.array(times), np.array(vels), "m/s")


class VelocityJudge(BaseEstimator):
    """scikit-learn style wrapper around :func:`run_estimator`.

    Hyperparameters mirror :class:`EkfConfig`, so ``get_params``/``set_params``
    and ``sklearn.base.clone`` work as usual. There is nothing to learn;
    ``fit`` only validates the configuration.
    """

    def __init__(
        self,
        output_rate=35.0,
        process_noise=DEFAULT_PROCESS_NOISE,
        initial_covariance=DEFAULT_INITIAL_COVARIANCE,
        gps_covariance_floor=1e-6,
        imu_accel_covariance=0.02**2,
        imu_gyro_covariance=0.005**2,
    ):
        self.output_rate = output_rate
        self.process_noise = process_noise
        self.initial_covariance = initial_covariance
        self.gps_covariance_floor = gps_covariance_floor
        self.imu_accel_covariance = imu_accel_covariance
        self.imu_gyro_covariance = imu_gyro_covariance

    @classmethod
    def from_config(cls, cfg):
        return cls(**cfg.to_dict())

    def config(self):
        return EkfConfig(**self.get_params())

    def fit(self, X=None, y=None):
        self.config_ = self.config()
        return self

    def predict(self, gps, imu, origin):
        """Velocity estimate (2-D world frame, m/s) for one run."""
        cfg = getattr(self, "config_", None) or self.config()
        return run_estimator(gps, imu, cfg, origin)
