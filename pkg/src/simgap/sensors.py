"""IMU and GPS noise models and the five composed sensor-rig variants.

Models are stepped at a fixed period ``dt = 1 / rate_hz``. Each model owns
its own ``numpy.random.Generator``, derived from the run seed with a fixed
spawn key, so adding or removing one model never shifts another's stream.

Variant composition:

=================  ====================  ======================
variant            lat/lon noise         reported covariance
=================  ====================  ======================
ChGauss            additive Gaussian     zero matrix
ChRW               damped random walk    zero matrix
AirSim             none                  HDOP low-pass
ChGaussAirSim      additive Gaussian     HDOP low-pass
ChRWAirSim         damped random walk    HDOP low-pass
=================  ====================  ======================
"""

import enum
import math
from dataclasses import dataclass, field, fields

import numpy as np

from ._validation import check_finite_array, check_per_axis, check_positive, check_vector3
from .geodesy import EnuPoint, enu_to_lla

GRAVITY = 9.80665

# spawn keys for per-model generators; never renumber
_STREAM_IMU = 0
_STREAM_GPS_GAUSS = 1
_STREAM_GPS_RW = 2


def model_rng(seed, stream):
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream),)))


class _Config:
    """Mixin giving configs a tolerant dict round trip."""

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown {cls.__name__} field(s): {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.tolist() if isinstance(v, np.ndarray) else v
        return out


@dataclass(frozen=True, eq=False)
class ImuConfig(_Config):
    """Gaussian-drift IMU parameters; the same law drives gyro and accelerometer."""

    gyro_sigma: np.ndarray = 0.005
    accel_sigma: np.ndarray = 0.02
    bias_b0: np.ndarray = 1e-4
    bias_tb: float = 0.1
    mu_a: np.ndarray = 0.0
    mu_b: np.ndarray = 0.0
    rate_hz: float = 100.0

    def __post_init__(self):
        for name in ("gyro_sigma", "accel_sigma", "bias_b0"):
            object.__setattr__(self, name, check_per_axis(getattr(self, name), name, nonnegative=True))
        for name in ("mu_a", "mu_b"):
            object.__setattr__(self, name, check_per_axis(getattr(self, name), name))
        check_positive(self.bias_tb, "bias_tb")
        check_positive(self.rate_hz, "rate_hz")

    @property
    def dt(self):
        return 1.0 / self.rate_hz

    @property
    def bias_step_sigma(self):
        """Per-axis standard deviation of one bias increment: b0 * sqrt(dt / tb)."""
        return self.bias_b0 * math.sqrt(self.dt / self.bias_tb)


@dataclass(frozen=True, eq=False)
class GpsGaussConfig(_Config):
    sigma: np.ndarray = (0.05, 0.05, 0.1)
    rate_hz: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "sigma", check_per_axis(self.sigma, "sigma", nonnegative=True))
        check_positive(self.rate_hz, "rate_hz")


@dataclass(frozen=True, eq=False)
class GpsRwConfig(_Config):
    """Random-walk GPS error driven by a Gaussian acceleration.

    The acceleration mean is ``-p/p_max`` (pulls the error back to zero) plus a
    velocity damping term ``-2 * damping_ratio * sqrt(1/p_max) * v``.
    ``literal_sign=True`` flips the position term to ``+p/p_max``; with
    ``damping_ratio=0`` the update is the bare kinematic recursion, which is
    not stable at GPS rates.
    """

    sigma_a: np.ndarray = (1.0, 1.0, 1.0)
    p_max: float = 0.06
    rate_hz: float = 10.0
    damping_ratio: float = 1.0
    literal_sign: bool = False

    def __post_init__(self):
        object.__setattr__(self, "sigma_a", check_per_axis(self.sigma_a, "sigma_a", nonnegative=True))
        check_positive(self.p_max, "p_max")
        check_positive(self.rate_hz, "rate_hz")
        check_positive(self.damping_ratio, "damping_ratio", strict=False)


@dataclass(frozen=True)
class HdopConfig(_Config):
    h0: float = 100.0
    h_inf: float = 0.8
    tau: float = 2.0
    scale: float = 0.02

    def __post_init__(self):
        check_positive(self.h_inf, "h_inf")
        check_positive(self.tau, "tau")
        check_positive(self.scale, "scale", strict=False)
        if self.h0 < self.h_inf:
            raise ValueError(f"h0 ({self.h0}) must be >= h_inf ({self.h_inf})")


@dataclass
class ImuState:
    gyro_bias: np.ndarray
    accel_bias: np.ndarray
    rng: np.random.Generator

    @classmethod
    def initial(cls, rng, batch_shape=()):
        """Zero biases. ``batch_shape`` lets one state carry independent trials."""
        shape = tuple(batch_shape) + (3,)
        return cls(np.zeros(shape), np.zeros(shape), rng)


@dataclass(frozen=True, eq=False)
class ImuSample:
    t: float
    angular_velocity: np.ndarray
    linear_acceleration: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, ImuSample):
            return NotImplemented
        return (
            self.t == other.t
            and np.array_equal(self.angular_velocity, other.angular_velocity)
            and np.array_equal(self.linear_acceleration, other.linear_acceleration)
        )


@dataclass(frozen=True, eq=False)
class GpsSample:
    t: float
    position: object  # GeoPoint
    covariance: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))

    def __post_init__(self):
        cov = check_finite_array(self.covariance, "covariance", ndim=2)
        if cov.shape != (3, 3):
            raise ValueError(f"covariance must be 3x3, got {cov.shape}")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12) or np.any(np.diag(cov) < 0):
            raise ValueError("covariance must be symmetric with a non-negative diagonal")
        object.__setattr__(self, "covariance", cov)

    def __eq__(self, other):
        if not isinstance(other, GpsSample):
            return NotImplemented
        return self.t == other.t and self.position == other.position and np.array_equal(self.covariance, other.covariance)


@dataclass
class GpsRwState:
    error_position: np.ndarray
    error_velocity: np.ndarray
    rng: np.random.Generator

    @classmethod
    def initial(cls, rng):
        return cls(np.zeros(3), np.zeros(3), rng)


class SensorVariant(str, enum.Enum):
    CH_GAUSS = "ChGauss"
    CH_RW = "ChRW"
    AIRSIM = "AirSim"
    CH_GAUSS_AIRSIM = "ChGaussAirSim"
    CH_RW_AIRSIM = "ChRWAirSim"

    @property
    def position_noise(self):
        return {
            SensorVariant.CH_GAUSS: "gauss",
            SensorVariant.CH_RW: "rw",
            SensorVariant.AIRSIM: None,
            SensorVariant.CH_GAUSS_AIRSIM: "gauss",
            SensorVariant.CH_RW_AIRSIM: "rw",
        }[self]

    @property
    def uses_hdop(self):
        return self in (SensorVariant.AIRSIM, SensorVariant.CH_GAUSS_AIRSIM, SensorVariant.CH_RW_AIRSIM)


def _drift_channel(rng, truth, bias, sigma, mu, b_step, mu_b):
    bias += rng.normal(mu_b, b_step, size=bias.shape)
    return truth + rng.normal(mu, sigma, size=bias.shape) + bias


def imu_step(state, cfg, gt_omega, gt_accel, t):
    """Advance both bias random walks one period and emit a noisy sample.

    ``out = truth + eta_a + b_t`` with ``b_t = b_{t-1} + eta_b``,
    ``eta_a ~ N(mu_a, sigma)`` and ``eta_b ~ N(mu_b, b0 * sqrt(dt / tb))``.
    """
    omega = check_vector3(gt_omega, "gt_omega")
    accel = check_vector3(gt_accel, "gt_accel")
    b_step = cfg.bias_step_sigma
    w = _drift_channel(state.rng, omega, state.gyro_bias, cfg.gyro_sigma, cfg.mu_a, b_step, cfg.mu_b)
    a = _drift_channel(state.rng, accel, state.accel_bias, cfg.accel_sigma, cfg.mu_a, b_step, cfg.mu_b)
    return ImuSample(float(t), w, a)


def _as_enu_array(p):
    if isinstance(p, EnuPoint):
        return np.array([p.east, p.north, p.up])
    return check_vector3(p, "gt_pos")


def _to_geo(enu, origin):
    return enu_to_lla(EnuPoint(float(enu[0]), float(enu[1]), float(enu[2])), origin)


def gps_gauss_step(cfg, gt_pos, origin, t, rng):
    """Ground truth plus N(0, diag(sigma^2)) in ENU metres; zero covariance."""
    noisy = _as_enu_array(gt_pos) + rng.normal(0.0, cfg.sigma, size=3)
    return GpsSample(float(t), _to_geo(noisy, origin), np.zeros((3, 3)))


def gps_rw_step(state, cfg, gt_pos, origin, t):
    """One step of the random-walk error model; output = truth + accumulated error."""
    dt = 1.0 / cfg.rate_hz
    p, v = state.error_position, state.error_velocity
    sign = 1.0 if cfg.literal_sign else -1.0
    mean = sign * p / cfg.p_max - 2.0 * cfg.damping_ratio * math.sqrt(1.0 / cfg.p_max) * v
    a = state.rng.normal(mean, cfg.sigma_a, size=3)
    state.error_position = p + v * dt + 0.5 * a * dt * dt
    state.error_velocity = v + a * dt
    out = _as_enu_array(gt_pos) + state.error_position
    return GpsSample(float(t), _to_geo(out, origin), np.zeros((3, 3)))


def hdop_step(h, cfg, dt):
    """Low-pass HDOP decay: ``alpha * h + (1 - alpha) * h_inf``, ``alpha = exp(-dt / tau)``."""
    check_positive(dt, "dt")
    alpha = math.exp(-dt / cfg.tau)
    return alpha * h + (1.0 - alpha) * cfg.h_inf


def hdop_closed_form(n, cfg, dt):
    """HDOP after ``n`` steps from ``h0``."""
    alpha = math.exp(-dt / cfg.tau)
    return cfg.h_inf + alpha**n * (cfg.h0 - cfg.h_inf)


def hdop_covariance(h, cfg):
    """Diagonal ENU covariance with every variance equal to ``(scale * h)^2``."""
    if not h > 0:
        raise ValueError(f"HDOP must be > 0, got {h}")
    return np.eye(3) * (cfg.scale * h) ** 2


class SensorRig:
    """IMU + GPS models composed for one sensor variant.

    A rig is a single-owner state machine: create one per run.
    """

    def __init__(self, variant, imu=None, gauss=None, rw=None, hdop=None, seed=0):
        self.variant = SensorVariant(variant)
        self.imu_cfg = imu or ImuConfig()
        self.gauss_cfg = gauss or GpsGaussConfig()
        self.rw_cfg = rw or GpsRwConfig()
        self.hdop_cfg = hdop or HdopConfig()
        self.seed = int(seed)

        self.imu_state = ImuState.initial(model_rng(seed, _STREAM_IMU))
        self._gauss_rng = model_rng(seed, _STREAM_GPS_GAUSS)
        self.rw_state = GpsRwState.initial(model_rng(seed, _STREAM_GPS_RW))
        self.hdop = None

    @property
    def gps_rate_hz(self):
        if self.variant.position_noise == "rw":
            return self.rw_cfg.rate_hz
        return self.gauss_cfg.rate_hz

    @property
    def imu_rate_hz(self):
        return self.imu_cfg.rate_hz

    def imu_sample(self, omega, accel, t):
        return imu_step(self.imu_state, self.imu_cfg, omega, accel, t)

    def gps_sample(self, gt_pos, origin, t):
        kind = self.variant.position_noise
        if kind == "gauss":
            s = gps_gauss_step(self.gauss_cfg, gt_pos, origin, t, self._gauss_rng)
        elif kind == "rw":
            s = gps_rw_step(self.rw_state, self.rw_cfg, gt_pos, origin, t)
        else:
            s = GpsSample(float(t), _to_geo(_as_enu_array(gt_pos), origin), np.zeros((3, 3)))
        if not self.variant.uses_hdop:
            return s
        if self.hdop is None:
            self.hdop = self.hdop_cfg.h0
        else:
            self.hdop = hdop_step(self.hdop, self.hdop_cfg, 1.0 / self.gps_rate_hz)
        return GpsSample(s.t, s.position, hdop_covariance(self.hdop, self.hdop_cfg))

    def simulate(self, trajectory):
        """Sample GPS and IMU streams from a ground-truth trajectory.

        Sample times are ``k / rate`` over the trajectory span.
        """
        t0, t1 = trajectory.t[0], trajectory.t[-1]
        gps_t = _grid(t0, t1, self.gps_rate_hz)
        imu_t = _grid(t0, t1, self.imu_rate_hz)

        gps = []
        for t, row in zip(gps_t, trajectory.sample(gps_t)):
            gps.append(self.gps_sample(np.array([row[0], row[1], 0.0]), trajectory.origin, t))
        imu = []
        for t, row in zip(imu_t, trajectory.sample(imu_t)):
            omega = np.array([0.0, 0.0, row[7]])
            accel = np.array([row[5], row[6], GRAVITY])
            imu.append(self.imu_sample(omega, accel, t))
        return gps, imu


def _grid(t0, t1, rate):
    k0 = math.ceil(t0 * rate - 1e-9)
    k1 = math.floor(t1 * rate + 1e-9)
    t = np.arange(k0, k1 + 1) / rate
    return t[(t >= t0) & (t <= t1)]


def make_variant(variant, imu=None, gauss=None, rw=None, hdop=None, seed=0):
    return SensorRig(variant, imu, gauss, rw, hdop, seed)
