"""Multipath CSI synthesis for a Q-antenna transmitter and one receive antenna."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import InvalidArgumentError
from ..timing import TemporalSchedule

SPEED_OF_LIGHT = 299_792_458.0


class PathKind(enum.Enum):
    STATIC = "static"
    DYNAMIC = "dynamic"


@dataclass(frozen=True)
class PathComponent:
    """One propagation path.

    Attributes:
        attenuation: Complex path gain with magnitude at most 1.
        static_delay: Fixed part of the propagation delay in seconds.
        kind: Static or dynamic.
        dynamic_delay_fn: Maps packet times (s) to the extra delay (s) caused by
            motion. Must be None for static paths.
    """

    attenuation: complex
    static_delay: float
    kind: PathKind = PathKind.STATIC
    dynamic_delay_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if abs(self.attenuation) > 1.0 + 1e-12:
            raise InvalidArgumentError("|attenuation| must be <= 1")
        if not (np.isfinite(self.static_delay) and self.static_delay >= 0):
            raise InvalidArgumentError("static_delay must be finite and >= 0")
        if self.kind is PathKind.STATIC and self.dynamic_delay_fn is not None:
            raise InvalidArgumentError("static paths carry no dynamic delay")
        if self.kind is PathKind.DYNAMIC and self.dynamic_delay_fn is None:
            raise InvalidArgumentError("dynamic paths need a dynamic_delay_fn")

    def dynamic_delay(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.dynamic_delay_fn is None:
            return np.zeros_like(t)
        return np.asarray(self.dynamic_delay_fn(t), dtype=float)

    @property
    def is_dynamic(self) -> bool:
        return self.kind is PathKind.DYNAMIC


@dataclass(frozen=True)
class Scenario:
    """Propagation environment seen from one receive antenna."""

    carrier_freq_hz: float
    num_tx_antennas: int
    paths_per_antenna: tuple
    noise_std: float
    num_subcarriers: int = 1
    subcarrier_spacing_hz: float = 312.5e3

    def __post_init__(self):
        if self.num_tx_antennas < 1:
            raise InvalidArgumentError("need at least one Tx antenna")
        if self.noise_std < 0:
            raise InvalidArgumentError("noise_std must be >= 0")
        if self.num_subcarriers < 1:
            raise InvalidArgumentError("num_subcarriers must be >= 1")
        paths = tuple(tuple(p) for p in self.paths_per_antenna)
        if len(paths) != self.num_tx_antennas:
            raise InvalidArgumentError("one path set per Tx antenna is required")
        for q, ps in enumerate(paths):
            if not any(not p.is_dynamic for p in ps):
                raise InvalidArgumentError(f"antenna {q} has no static path")
        object.__setattr__(self, "paths_per_antenna", paths)

    def with_noise(self, noise_std: float) -> "Scenario":
        return Scenario(self.carrier_freq_hz, self.num_tx_antennas, self.paths_per_antenna,
                        noise_std, self.num_subcarriers, self.subcarrier_spacing_hz)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class CsiTensor:
    """Per-antenna, per-packet channel gains and their decomposition.

    Arrays have shape (Q, M), or (Q, M, N) with N subcarriers.
    ``clean == static_part + dynamic_part`` holds exactly.
    """

    clean: np.ndarray
    static_part: np.ndarray
    dynamic_part: np.ndarray
    noisy: np.ndarray
    schedule: TemporalSchedule
    noise_std: float = 0.0

    def __post_init__(self):
        shapes = {self.clean.shape, self.static_part.shape, self.dynamic_part.shape,
                  self.noisy.shape}
        if len(shapes) != 1:
            raise InvalidArgumentError("CSI arrays must share one shape")
        if self.clean.shape[1] != len(self.schedule):
            raise InvalidArgumentError("schedule length must equal packet count")
        for name in ("clean", "static_part", "dynamic_part", "noisy"):
            object.__setattr__(self, name, _frozen(np.asarray(getattr(self, name),
                                                               dtype=complex)))

    @property
    def num_antennas(self) -> int:
        return self.clean.shape[0]

    @property
    def num_packets(self) -> int:
        return self.clean.shape[1]

    def scaled(self, gain: complex) -> "CsiTensor":
        """All components multiplied by one complex gain (noise included)."""
        return CsiTensor(self.clean * gain, self.static_part * gain, self.dynamic_part * gain,
                         self.noisy * gain, self.schedule, self.noise_std * abs(gain))


def _path_sum(paths: Sequence[PathComponent], t: np.ndarray, freqs: np.ndarray):
    """Sum of path phasors, shape (M, N)."""
    out = np.zeros((t.size, freqs.size), dtype=complex)
    for p in paths:
        delay = p.static_delay + p.dynamic_delay(t)
        out += p.attenuation * np.exp(-2j * np.pi * np.outer(delay, freqs))
    return out


def _noise(shape, sigma: float, rng_seed: int) -> np.ndarray:
    rng = np.random.default_rng(rng_seed)
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return (sigma / np.sqrt(2.0)) * (re + 1j * im)


def generate_csi(scenario: Scenario, num_packets: int, schedule: TemporalSchedule,
                 rng_seed: int) -> CsiTensor:
    """Evaluate the multipath model at the scheduled packet times.

    Args:
        scenario: Environment with per-antenna path sets.
        num_packets: M, must match ``len(schedule)``.
        schedule: Packet timestamps.
        rng_seed: Seed for the receiver noise.

    Returns:
        CsiTensor of shape (Q, M) for one subcarrier, else (Q, M, N).
    """
    if num_packets < 1 or num_packets != len(schedule):
        raise InvalidArgumentError(
            f"num_packets={num_packets} does not match schedule length {len(schedule)}")
    t = schedule.timestamps
    n_sc = scenario.num_subcarriers
    freqs = scenario.carrier_freq_hz + scenario.subcarrier_spacing_hz * np.arange(n_sc)
    q_count = scenario.num_tx_antennas
    static = np.zeros((q_count, num_packets, n_sc), dtype=complex)
    dynamic = np.zeros_like(static)
    for q, paths in enumerate(scenario.paths_per_antenna):
        static[q] = _path_sum([p for p in paths if not p.is_dynamic], t, freqs)
        dynamic[q] = _path_sum([p for p in paths if p.is_dynamic], t, freqs)
    if n_sc == 1:
        static, dynamic = static[..., 0], dynamic[..., 0]
    clean = static + dynamic
    return add_noise(CsiTensor(clean, static, dynamic, clean, schedule), scenario.noise_std,
                     rng_seed)


def add_noise(csi: CsiTensor, sigma: float, rng_seed: int) -> CsiTensor:
    """Replace the noisy component with ``clean + w``, ``E|w|^2 = sigma^2``."""
    if sigma < 0:
        raise InvalidArgumentError("sigma must be >= 0")
    if sigma == 0:
        noisy = csi.clean.copy()
    else:
        noisy = csi.clean + _noise(csi.clean.shape, sigma, rng_seed)
    return CsiTensor(csi.clean, csi.static_part, csi.dynamic_part, noisy, csi.schedule,
                     float(sigma))
