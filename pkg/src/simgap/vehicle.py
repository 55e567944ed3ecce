"""Kinematic ground-truth trajectories for the line, circle and half-sine tests.

Every path is described as a function of arc length ``s``: position,
heading and signed curvature. A speed profile gives ``s(t)``, ``v(t)`` and
``dv/dt`` in closed form, so velocity, body-frame acceleration and yaw rate
are exact derivatives of the sampled position.
"""

import enum
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.integrate import solve_ivp

from ._validation import check_positive
from .geodesy import GeoPoint
from .timeseries import TimeSeries

DEFAULT_SIM_RATE = 500.0
DEFAULT_ORIGIN = GeoPoint(43.0731, -89.4012, 260.0)


class ScenarioKind(str, enum.Enum):
    LINE = "line"
    CIRCLE = "circle"
    HALF_SINE = "half_sine"


@dataclass(frozen=True)
class SpeedProfile:
    """Longitudinal speed law.

    ``constant``: v(t) = v0.
    ``ramp``: linear rise from rest to v0 over ``t_ramp`` seconds, then constant.
    ``perturbed``: v0 + amplitude * sin(2 pi t / period); emulates terrain-induced
    speed variation.
    """

    kind: str = "constant"
    t_ramp: float = 2.0
    amplitude: float = 0.0
    period: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "ramp", "perturbed"):
            raise ValueError(f"unknown speed profile {self.kind!r}")
        if self.kind == "ramp":
            check_positive(self.t_ramp, "speed_profile.t_ramp")
        if self.kind == "perturbed":
            check_positive(self.period, "speed_profile.period")
            check_positive(self.amplitude, "speed_profile.amplitude", strict=False)

    def evaluate(self, t, v0):
        """Return arc length, speed and longitudinal acceleration at times ``t``."""
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return v0 * t, np.full_like(t, v0), np.zeros_like(t)
        if self.kind == "ramp":
            tr = self.t_ramp
            a = v0 / tr
            rising = t < tr
            s = np.where(rising, 0.5 * a * t**2, 0.5 * a * tr**2 + v0 * (t - tr))
            v = np.where(rising, a * t, v0)
            dv = np.where(rising, a, 0.0)
            return s, v, dv
        w = 2.0 * np.pi / self.period
        amp = self.amplitude
        s = v0 * t + amp / w * (1.0 - np.cos(w * t))
        v = v0 + amp * np.sin(w * t)
        dv = amp * w * np.cos(w * t)
        return s, v, dv


@dataclass(frozen=True)
class Scenario:
    kind: ScenarioKind = ScenarioKind.LINE
    duration: float = 20.0
    target_speed: float = 1.5
    heading: float = 0.0
    radius: float = 5.0
    amplitude: float = 3.0
    wavelength: float = 25.0
    speed_profile: SpeedProfile = field(default_factory=SpeedProfile)
    origin: GeoPoint = DEFAULT_ORIGIN
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "kind", ScenarioKind(self.kind))
        check_positive(self.duration, "duration")
        check_positive(self.target_speed, "target_speed")
        check_positive(self.radius, "radius")
        check_positive(self.wavelength, "wavelength")
        if not np.isfinite(self.amplitude):
            raise ValueError("amplitude must be finite")
        sp = self.speed_profile
        if sp.kind == "perturbed" and sp.amplitude >= self.target_speed:
            raise ValueError("perturbation amplitude must stay below target_speed so the vehicle keeps moving")
        if not self.name:
            object.__setattr__(self, "name", self.kind.value)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "speed_profile" in d and not isinstance(d["speed_profile"], SpeedProfile):
            d["speed_profile"] = SpeedProfile(**d["speed_profile"])
        if "origin" in d and not isinstance(d["origin"], GeoPoint):
            d["origin"] = GeoPoint(**d["origin"])
        return cls(**d)

    def to_dict(self):
        sp = self.speed_profile
        return {
            "kind": self.kind.value,
            "name": self.name,
            "duration": self.duration,
            "target_speed": self.target_speed,
            "heading": self.heading,
            "radius": self.radius,
            "amplitude": self.amplitude,
            "wavelength": self.wavelength,
            "speed_profile": {"kind": sp.kind, "t_ramp": sp.t_ramp, "amplitude": sp.amplitude, "period": sp.period},
            "origin": {"lat": self.origin.lat, "lon": self.origin.lon, "alt": self.origin.alt},
        }

    def with_profile(self, profile):
        return replace(self, speed_profile=profile)


@dataclass(frozen=True, eq=False)
class GroundTruthTrajectory:
    """Planar vehicle state sampled on a uniform clock.

    position: (N, 2) ENU metres; yaw: (N,) rad, unwrapped; velocity: (N, 2)
    world frame m/s; accel_body: (N, 2) body-frame m/s^2 (what an
    accelerometer sees, gravity excluded); yaw_rate: (N,) rad/s.
    """

    t: np.ndarray
    position: np.ndarray
    yaw: np.ndarray
    velocity: np.ndarray
    accel_body: np.ndarray
    yaw_rate: np.ndarray
    origin: GeoPoint = DEFAULT_ORIGIN

    def __len__(self):
        return self.t.shape[0]

    def speed(self):
        return TimeSeries(self.t, np.hypot(self.velocity[:, 0], self.velocity[:, 1]), "m/s")

    def velocity_series(self):
        return TimeSeries(self.t, self.velocity, "m/s")

    def as_array(self):
        """Stacked ``(N, 8)`` columns: x, y, yaw, vx, vy, ax_b, ay_b, yaw_rate."""
        return np.column_stack([self.position, self.yaw, self.velocity, self.accel_body, self.yaw_rate])

    def sample(self, times):
        """Linearly interpolate every channel at ``times`` (must lie within the run)."""
        times = np.asarray(times, dtype=float)
        if times.size and (times[0] < self.t[0] or times[-1] > self.t[-1]):
            raise ValueError("sample times outside trajectory span")
        cols = self.as_array()
        out = np.empty((times.size, cols.shape[1]))
        for j in range(cols.shape[1]):
            out[:, j] = np.interp(times, self.t, cols[:, j])
        return out

    def decimate(self, step):
        sl = slice(None, None, int(step))
        return GroundTruthTrajectory(
            self.t[sl], self.position[sl], self.yaw[sl], self.velocity[sl],
            self.accel_body[sl], self.yaw_rate[sl], self.origin,
        )


@lru_cache(maxsize=16)
def _half_sine_table(amplitude, wavelength, s_max):
    """x(s) for y = A sin(pi x / L) by integrating dx/ds = 1/sqrt(1 + y'(x)^2)."""
    k = np.pi / wavelength

    def rhs(_s, x):
        slope = amplitude * k * np.cos(k * x[0])
        return [1.0 / np.sqrt(1.0 + slope * slope)]

    return solve_ivp(rhs, (0.0, s_max), [0.0], method="DOP853", rtol=1e-12, atol=1e-13, dense_output=True).sol


def _path(scn, s):
    """Position (N, 2), heading (N,) and signed curvature (N,) at arc length ``s``."""
    if scn.kind is ScenarioKind.LINE:
        h = scn.heading
        pos = np.column_stack([s * np.cos(h), s * np.sin(h)])
        return pos, np.full_like(s, h), np.zeros_like(s)

    if scn.kind is ScenarioKind.CIRCLE:
        # counter-clockwise loop starting at the origin with the given heading
        r, h = scn.radius, scn.heading
        phi = s / r
        local = np.column_stack([r * np.sin(phi), r * (1.0 - np.cos(phi))])
        c, sn = np.cos(h), np.sin(h)
        pos = np.column_stack([c * local[:, 0] - sn * local[:, 1], sn * local[:, 0] + c * local[:, 1]])
        return pos, h + phi, np.full_like(s, 1.0 / r)

    a, L, h = scn.amplitude, scn.wavelength, scn.heading
    k = np.pi / L
    sol = _half_sine_table(float(a), float(L), float(s[-1]) + 1.0)
    x = sol(s)[0]
    y = a * np.sin(k * x)
    dy = a * k * np.cos(k * x)
    d2y = -a * k * k * np.sin(k * x)
    curvature = d2y / (1.0 + dy * dy) ** 1.5
    c, sn = np.cos(h), np.sin(h)
    pos = np.column_stack([c * x - sn * y, sn * x + c * y])
    return pos, h + np.arctan(dy), curvature


def generate_trajectory(scenario, sim_rate=DEFAULT_SIM_RATE):
    """Sample the scenario's ground truth at ``sim_rate`` Hz. Pure and deterministic."""
    check_positive(sim_rate, "sim_rate")
    n = int(round(scenario.duration * sim_rate))
    t = np.arange(n + 1) / sim_rate
    s, v, dv = scenario.speed_profile.evaluate(t, scenario.target_speed)
    pos, heading, curvature = _path(scenario, s)
    velocity = v[:, None] * np.column_stack([np.cos(heading), np.sin(heading)])
    yaw_rate = v * curvature
    accel_body = np.column_stack([dv, v * v * curvature])
    return GroundTruthTrajectory(t, pos, heading, velocity, accel_body, yaw_rate, scenario.origin)
