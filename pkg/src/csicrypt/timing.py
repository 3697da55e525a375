"""Packet timing schedules, regular and randomized."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

MAX_GAMMA = 0.9


@dataclass(frozen=True)
class TemporalSchedule:
    """Packet timestamps ``(m + beta_m) * dt``.

    Attributes:
        base_interval_s: Nominal packet interval dt in seconds.
        betas: Per-packet randomization ratios, all within [-gamma, gamma].
        gamma: Randomization bound.
        timestamps: Strictly increasing packet times in seconds.
        repaired: True when a sort pass was needed to keep times monotone.
    """

    base_interval_s: float
    betas: np.ndarray
    gamma: float
    timestamps: np.ndarray
    repaired: bool = False

    def __post_init__(self):
        if not self.base_interval_s > 0:
            raise InvalidArgumentError("base_interval_s must be positive")
        if not 0.0 <= self.gamma <= MAX_GAMMA:
            raise InvalidArgumentError(f"gamma must lie in [0, {MAX_GAMMA}]")
        betas = np.array(self.betas, dtype=float)
        ts = np.array(self.timestamps, dtype=float)
        if betas.shape != ts.shape or betas.ndim != 1:
            raise InvalidArgumentError("betas and timestamps must be 1-D and equal length")
        betas.flags.writeable = False
        ts.flags.writeable = False
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "timestamps", ts)

    def __len__(self) -> int:
        return self.timestamps.shape[0]

    @property
    def num_packets(self) -> int:
        return len(self)

    @property
    def is_regular(self) -> bool:
        return bool(np.all(self.betas == 0.0))

    def as_regular(self) -> "TemporalSchedule":
        """The schedule an observer unaware of the jitter would assume."""
        return regular_schedule(len(self), self.base_interval_s)


def regular_schedule(num_packets: int, base_interval_s: float) -> TemporalSchedule:
    """Evenly spaced schedule ``t_m = m * dt``."""
    if num_packets < 1:
        raise InvalidArgumentError("num_packets must be >= 1")
    idx = np.arange(num_packets, dtype=float)
    return TemporalSchedule(base_interval_s, np.zeros(num_packets), 0.0,
                            idx * base_interval_s)


def randomize_schedule(num_packets: int, base_interval_s: float, gamma: float,
                       rng_seed: int) -> TemporalSchedule:
    """Draw jittered packet times with ``beta_m ~ U[-gamma, gamma]``.

    For gamma >= 0.5 neighbouring packets may swap order; the times are then
    sorted and the betas recomputed from the sorted times. Sorting keeps every
    beta inside [-gamma, gamma] because the m-th order statistic of
    ``k + beta_k`` is bounded by ``m +/- gamma``.

    Args:
        num_packets: Number of packets M.
        base_interval_s: Nominal interval dt in seconds.
        gamma: Jitter bound in [0, 0.9].
        rng_seed: Seed for the jitter draw.

    Returns:
        A TemporalSchedule with ``repaired`` set when sorting changed anything.
    """
    if not 0.0 <= gamma <= MAX_GAMMA:
        raise InvalidArgumentError(f"gamma must lie in [0, {MAX_GAMMA}], got {gamma}")
    if not base_interval_s > 0:
        raise InvalidArgumentError("base_interval_s must be positive")
    if num_packets < 1:
        raise InvalidArgumentError("num_packets must be >= 1")
    if gamma == 0.0:
        return regular_schedule(num_packets, base_interval_s)
    rng = np.random.default_rng(rng_seed)
    betas = rng.uniform(-gamma, gamma, size=num_packets)
    idx = np.arange(num_packets, dtype=float)
    units = idx + betas
    repaired = False
    if np.any(np.diff(units) <= 0):
        units = np.sort(units)
        # ties have probability zero, but keep the invariant strict anyway
        for i in range(1, num_packets):
            if units[i] <= units[i - 1]:
                units[i] = np.nextafter(units[i - 1], np.inf)
        betas = np.clip(units - idx, -gamma, gamma)
        units = idx + betas
        repaired = True
    return TemporalSchedule(base_interval_s, betas, float(gamma),
                            units * base_interval_s, repaired)
