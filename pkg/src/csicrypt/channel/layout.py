"""Room layout turning positions into per-antenna path sets."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence, Tuple

import numpy as np

from ..errors import InvalidArgumentError
from .model import SPEED_OF_LIGHT, PathComponent, Scenario


@dataclass(frozen=True)
class Layout:
    """A 2-D room with a linear Tx array on the y axis, centred at the origin.

    Static paths per antenna are the direct path plus one bounce off each side
    wall (image method). Amplitudes follow ``(ref_m / length) ** (n / 2)``.

    Attributes:
        rx_distance_m: Receiver distance from the array centre.
        rx_bearing_deg: Receiver bearing off broadside.
        los_factor: Direct-path scaling; below 1 models an obstructed path.
        wall_y_m: Side walls sit at +/- this y coordinate.
        wall_reflection: Amplitude reflection coefficient of the walls.
        path_loss_exponent: Power-law exponent n.
        noise_std: Receiver noise standard deviation.
    """

    carrier_freq_hz: float = 2.4e9
    num_tx: int = 8
    rx_distance_m: float = 3.5
    rx_bearing_deg: float = -30.0
    los_factor: float = 1.0
    wall_y_m: float = 3.0
    wall_reflection: float = 0.5
    path_loss_exponent: float = 2.0
    ref_distance_m: float = 1.0
    noise_std: float = 0.0

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq_hz

    def tx_positions(self) -> np.ndarray:
        spacing = self.wavelength / 2.0
        ys = (np.arange(self.num_tx) - (self.num_tx - 1) / 2.0) * spacing
        return np.stack([np.zeros(self.num_tx), ys], axis=1)

    def rx_position(self) -> np.ndarray:
        b = np.deg2rad(self.rx_bearing_deg)
        return self.rx_distance_m * np.array([np.cos(b), np.sin(b)])

    def amplitude(self, length_m: float) -> float:
        ref = min(self.ref_distance_m, length_m)
        return (ref / length_m) ** (self.path_loss_exponent / 2.0)

    def static_paths(self, q: int) -> Tuple[PathComponent, ...]:
        tx = self.tx_positions()[q]
        rx = self.rx_position()
        paths = []
        d = float(np.linalg.norm(rx - tx))
        paths.append(PathComponent(complex(self.los_factor * self.amplitude(d)),
                                   d / SPEED_OF_LIGHT))
        for wall in (self.wall_y_m, -self.wall_y_m):
            image = np.array([rx[0], 2 * wall - rx[1]])
            d = float(np.linalg.norm(image - tx))
            paths.append(PathComponent(complex(self.wall_reflection * self.amplitude(d)),
                                       d / SPEED_OF_LIGHT))
        return tuple(paths)

    def place_dynamic(self, q: int, path: PathComponent) -> PathComponent:
        """Re-reference a monostatic gesture path to antenna q and the receiver.

        The trajectory is shared; antenna q gets the bistatic delay offset of the
        resting reflector, and the gain follows the two-leg path length.
        """
        fn = path.dynamic_delay_fn
        rest = fn.positions[0] if hasattr(fn, "positions") else np.zeros(2)
        tx = self.tx_positions()[q]
        rx = self.rx_position()
        leg_tx = float(np.linalg.norm(rest - tx))
        leg_rx = float(np.linalg.norm(rx - rest))
        r_rest = float(np.linalg.norm(rest))
        offset = max((leg_tx + leg_rx - 2.0 * r_rest) / SPEED_OF_LIGHT, 0.0)
        gain = self.amplitude(leg_rx)
        return replace(path, attenuation=path.attenuation * gain,
                       static_delay=path.static_delay + offset)

    def scenario(self, dynamic_paths: Sequence[PathComponent] = ()) -> Scenario:
        per_antenna = []
        for q in range(self.num_tx):
            dyn = tuple(self.place_dynamic(q, p) for p in dynamic_paths)
            per_antenna.append(self.static_paths(q) + dyn)
        return Scenario(self.carrier_freq_hz, self.num_tx, tuple(per_antenna), self.noise_std)

    def at_distance(self, distance_m: float) -> "Layout":
        if distance_m <= 0:
            raise InvalidArgumentError("distance must be positive")
        return replace(self, rx_distance_m=float(distance_m))
