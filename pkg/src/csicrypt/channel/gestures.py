"""Hand-gesture trajectories and the dynamic reflection paths they induce."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np

from ..errors import InvalidArgumentError
from .model import SPEED_OF_LIGHT, PathComponent, PathKind


class GestureKind(enum.Enum):
    PushPull = "PP"
    Clap = "CL"
    Slide = "SL"
    Tap = "TA"
    PinchSpread = "PS"
    Circle = "DC"
    Square = "DS"
    Zigzag = "DZ"

    @property
    def index(self) -> int:
        return list(GestureKind).index(self)

    @classmethod
    def from_name(cls, name: str) -> "GestureKind":
        for g in cls:
            if name in (g.name, g.value) or name.lower() == g.name.lower():
                return g
        raise InvalidArgumentError(f"unknown gesture {name!r}")


GESTURES: Tuple[GestureKind, ...] = tuple(GestureKind)

# Sampling step of the stored trajectory; packet times are interpolated.
TRAJECTORY_STEP_S = 2.5e-4


@dataclass(frozen=True)
class TrajectoryDelay:
    """Round-trip excess delay of one reflector, callable on packet times.

    The delay is ``2 * (|p(t)| - r_min) / c`` where ``r_min`` is the closest
    approach, so values are non-negative; the remaining ``2 * r_min / c`` is
    carried by the path's static delay.
    """

    times: np.ndarray
    positions: np.ndarray  # (T, 2) metres, origin at the array centre
    r_min: float

    def distance(self, t) -> np.ndarray:
        r = np.hypot(self.positions[:, 0], self.positions[:, 1])
        return np.interp(np.asarray(t, dtype=float), self.times, r)

    def __call__(self, t) -> np.ndarray:
        return 2.0 * (self.distance(t) - self.r_min) / SPEED_OF_LIGHT

    def radial_velocity(self) -> np.ndarray:
        """Finite-difference radial speed on the stored grid (m/s)."""
        r = np.hypot(self.positions[:, 0], self.positions[:, 1])
        return np.gradient(r, self.times)


@dataclass(frozen=True)
class ConstantVelocityDelay:
    """Reflector receding at constant radial speed ``v`` (m/s)."""

    velocity_mps: float

    def __call__(self, t) -> np.ndarray:
        return 2.0 * self.velocity_mps * np.asarray(t, dtype=float) / SPEED_OF_LIGHT


def _smoothstep(s: np.ndarray) -> np.ndarray:
    # zero velocity at both stroke ends
    return s * s * (3.0 - 2.0 * s)


Segment = Callable[[np.ndarray], np.ndarray]


def _line(a, b) -> Segment:
    a, b = np.asarray(a, float), np.asarray(b, float)
    return lambda s: a[None, :] + s[:, None] * (b - a)[None, :]


def _arc(center, radius, phi0, phi1) -> Segment:
    c = np.asarray(center, float)

    def seg(s):
        phi = phi0 + s * (phi1 - phi0)
        return c[None, :] + radius * np.stack([np.cos(phi), np.sin(phi)], axis=1)
    return seg


def _polyline(points) -> List[Tuple[Segment, float]]:
    segs = []
    for a, b in zip(points[:-1], points[1:]):
        length = float(np.hypot(b[0] - a[0], b[1] - a[1]))
        segs.append((_line(a, b), length))
    return segs


def _strokes(kind: GestureKind) -> Tuple[List[List[Tuple[Segment, float]]], float]:
    """Per-reflector stroke lists in gesture-frame units, and active fraction.

    Gesture frame: x points away from the array (rotated off the radial line),
    y is lateral. Units are the gesture scale.
    """
    if kind is GestureKind.PushPull:
        return [_polyline([(0, 0), (-1.4, 0), (0, 0)])], 0.75
    if kind is GestureKind.Clap:
        left = _polyline([(0, 0.9), (0, 0.08), (0, 0.9), (0, 0.08), (0, 0.9)])
        right = _polyline([(0, -0.9), (0, -0.08), (0, -0.9), (0, -0.08), (0, -0.9)])
        return [left, right], 0.8
    if kind is GestureKind.Slide:
        return [_polyline([(0, -1), (0, 1)])], 0.6
    if kind is GestureKind.Tap:
        return [_polyline([(0, 0), (-0.6, 0), (0, 0), (-0.6, 0), (0, 0)])], 0.45
    if kind is GestureKind.PinchSpread:
        a = _polyline([(0.6, 0), (0.03, 0), (0.6, 0)])
        b = _polyline([(-0.6, 0), (-0.03, 0), (-0.6, 0)])
        return [a, b], 0.55
    if kind is GestureKind.Circle:
        return [[(_arc((0, 0), 0.6, -0.7 * np.pi, 1.3 * np.pi), 2 * np.pi * 0.6)]], 0.8
    if kind is GestureKind.Square:
        return [_polyline([(0, 0), (0, 0.8), (0.8, 0.8), (0.8, 0), (0, 0)])], 0.8
    if kind is GestureKind.Zigzag:
        return [_polyline([(0.5, -1), (0.5, 1), (-0.5, -1), (-0.5, 1)])], 0.8
    raise InvalidArgumentError(f"unhandled gesture {kind}")


@dataclass(frozen=True)
class GestureGeometry:
    """Placement and size of the gesture relative to the Tx array.

    Attributes:
        bearing_deg: Angle of the resting hand off the array broadside.
        frame_tilt_deg: Rotation of the gesture plane relative to the radial line.
        scale_m: Size of one gesture unit in metres.
        reflectivity: Total magnitude of the dynamic reflection(s).
    """

    bearing_deg: float = 25.0
    frame_tilt_deg: float = 35.0
    scale_m: float = 0.25
    reflectivity: float = 0.05


def gesture_trajectories(gesture: GestureKind, duration_s: float, range_m: float,
                         rng_seed: int, geometry: GestureGeometry = GestureGeometry()
                         ) -> List[TrajectoryDelay]:
    """Sample the reflector trajectories of one gesture instance.

    Per-instance variation (size, tilt, bearing, timing) is drawn from
    ``rng_seed`` so repeated calls agree exactly.
    """
    if not duration_s > 0 or not range_m > 0:
        raise InvalidArgumentError("duration_s and range_m must be positive")
    rng = np.random.default_rng(rng_seed)
    scale = geometry.scale_m * rng.uniform(0.85, 1.15)
    tilt = np.deg2rad(geometry.frame_tilt_deg + rng.uniform(-8.0, 8.0))
    bearing = np.deg2rad(geometry.bearing_deg + rng.uniform(-3.0, 3.0))
    pace = rng.uniform(0.9, 1.1)

    strokes, active_frac = _strokes(gesture)
    active = min(active_frac * pace, 0.9) * duration_s
    start = rng.uniform(0.3, 0.7) * (duration_s - active)

    rest = range_m * np.array([np.cos(bearing), np.sin(bearing)])
    x_axis = np.array([np.cos(bearing + tilt), np.sin(bearing + tilt)])
    y_axis = np.array([-x_axis[1], x_axis[0]])

    n_t = int(np.ceil(duration_s / TRAJECTORY_STEP_S)) + 1
    times = np.linspace(0.0, duration_s, n_t)
    out = []
    for segs in strokes:
        weights = np.array([max(length, 1e-6) ** 0.7 for _, length in segs])
        bounds = start + active * np.concatenate([[0.0], np.cumsum(weights) / weights.sum()])
        local = np.empty((n_t, 2))
        first = segs[0][0](np.zeros(1))[0]
        last = segs[-1][0](np.ones(1))[0]
        local[times <= bounds[0]] = first
        local[times >= bounds[-1]] = last
        for k, (seg, _) in enumerate(segs):
            sel = (times > bounds[k]) & (times < bounds[k + 1])
            if np.any(sel):
                s = (times[sel] - bounds[k]) / (bounds[k + 1] - bounds[k])
                local[sel] = seg(_smoothstep(s))
        pos = rest[None, :] + scale * (local[:, :1] * x_axis[None, :]
                                       + local[:, 1:] * y_axis[None, :])
        r = np.hypot(pos[:, 0], pos[:, 1])
        pos.flags.writeable = False
        times_ro = times.copy()
        times_ro.flags.writeable = False
        out.append(TrajectoryDelay(times_ro, pos, float(r.min())))
    return out


def synthesize_gesture_paths(gesture: GestureKind, duration_s: float, range_m: float,
                             rng_seed: int,
                             geometry: GestureGeometry = GestureGeometry()
                             ) -> Tuple[PathComponent, ...]:
    """Dynamic reflection paths for one gesture instance (monostatic view).

    Each reflector contributes one path whose total delay is
    ``2 * distance(t) / c``; multi-reflector gestures split the reflectivity
    evenly in power.
    """
    trajs = gesture_trajectories(gesture, duration_s, range_m, rng_seed, geometry)
    amp = geometry.reflectivity / np.sqrt(len(trajs))
    return tuple(
        PathComponent(complex(amp), 2.0 * tr.r_min / SPEED_OF_LIGHT, PathKind.DYNAMIC, tr)
        for tr in trajs)


def count_sign_changes(values: np.ndarray, rel_threshold: float = 0.15) -> int:
    """Sign flips of a signal, ignoring samples below a fraction of its peak."""
    values = np.asarray(values, float)
    peak = np.max(np.abs(values)) if values.size else 0.0
    if peak == 0:
        return 0
    signs = np.sign(values[np.abs(values) > rel_threshold * peak])
    return int(np.count_nonzero(np.diff(signs) != 0))
