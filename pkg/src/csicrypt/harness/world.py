"""Synthetic reference world: gesture samples, encryption family and links."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..channel import (GESTURES, GestureGeometry, Layout, generate_csi,
                       synthesize_gesture_paths)
from ..channel.model import CsiTensor
from ..crypto import EncryptionMatrix, KeyPhi, hash_key, mix, passthrough_psi, sample_psi
from ..errors import InvalidArgumentError, SingularBlockError
from ..metrics import bob_sdnr, eve_sdnr, sensing_snr
from ..timing import TemporalSchedule, randomize_schedule, regular_schedule


def derive_seed(*parts: int) -> int:
    """Stable 63-bit seed from integer parts."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(2, np.uint64)[0]
               >> np.uint64(1))


@dataclass(frozen=True)
class ReferenceWorld:
    """Everything needed to regenerate the synthetic gesture corpus.

    Bob sits at ``(rx_distance_m, rx_bearing_deg)`` from the array, Eve at
    ``(eve_distance_m, eve_bearing_deg)``. Training samples draw Bob's distance
    uniformly from ``train_distance_range_m`` (a single point by default);
    test samples use ``rx_distance_m``.

    Attributes:
        noise_std: Receiver noise standard deviation (channel gains are O(0.1)).
        psi_family: Number of encryption matrices the keyed sub-model serves.
        test_every: Instance k is held out when ``k % test_every == 0``.
    """

    num_antennas: int = 8
    num_packets: int = 1500
    base_interval_s: float = 1e-3
    samples_per_class: int = 200
    noise_std: float = 0.003
    rx_distance_m: float = 3.5
    rx_bearing_deg: float = -30.0
    eve_distance_m: float = 4.0
    eve_bearing_deg: float = 20.0
    los_factor: float = 1.0
    train_distance_range_m: Tuple[float, float] = (3.5, 3.5)
    gesture_range_m: float = 0.5
    reflectivity: float = 0.05
    psi_family: int = 4
    psi_seed: int = 1000
    gamma: float = 0.0
    test_every: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.samples_per_class < 1 or self.psi_family < 1:
            raise InvalidArgumentError("samples_per_class and psi_family must be >= 1")
        lo, hi = self.train_distance_range_m
        if not 0 < lo <= hi:
            raise InvalidArgumentError("train_distance_range_m must be increasing and positive")

    @property
    def duration_s(self) -> float:
        return self.num_packets * self.base_interval_s

    @property
    def geometry(self) -> GestureGeometry:
        return GestureGeometry(reflectivity=self.reflectivity)

    def layout(self, distance_m: Optional[float] = None, bearing_deg: Optional[float] = None
               ) -> Layout:
        return Layout(num_tx=self.num_antennas,
                      rx_distance_m=self.rx_distance_m if distance_m is None else distance_m,
                      rx_bearing_deg=self.rx_bearing_deg if bearing_deg is None else bearing_deg,
                      los_factor=self.los_factor, noise_std=self.noise_std)

    def eve_layout(self) -> Layout:
        return self.layout(self.eve_distance_m, self.eve_bearing_deg)

    def psis(self) -> List[EncryptionMatrix]:
        return [sample_psi(self.num_antennas, self.num_packets, self.psi_seed + i)
                for i in range(self.psi_family)]

    def schedule(self, seed: int) -> TemporalSchedule:
        if self.gamma == 0:
            return regular_schedule(self.num_packets, self.base_interval_s)
        return randomize_schedule(self.num_packets, self.base_interval_s, self.gamma, seed)

    def with_updates(self, **kw) -> "ReferenceWorld":
        if "train_distance_range_m" in kw:
            kw["train_distance_range_m"] = tuple(float(v) for v in kw["train_distance_range_m"])
        return replace(self, **kw)


@dataclass
class SampleSet:
    """Per-sample series and metrics for one slice of the corpus.

    Attributes:
        plain: Bob's unencrypted noisy antenna-0 series (clean-CSI baseline).
        encrypted: Bob's received encrypted series.
        eve_encrypted: Eve's received encrypted series (None if not generated).
        target: Noise-free dynamic component of Bob's antenna-0 channel.
        sensing_snr, sdnr_eve, sdnr_bob: Linear per-sample metrics (NaN if skipped).
    """

    labels: np.ndarray
    instances: np.ndarray
    psi_index: np.ndarray
    distances: np.ndarray
    schedules: List[TemporalSchedule]
    plain: np.ndarray
    encrypted: np.ndarray
    target: np.ndarray
    eve_encrypted: Optional[np.ndarray]
    sensing_snr: np.ndarray
    sdnr_eve: np.ndarray
    sdnr_bob: np.ndarray
    keys: List[KeyPhi] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, idx: Sequence[int]) -> "SampleSet":
        idx = np.asarray(idx, dtype=np.int64)
        pick = lambda a: None if a is None else a[idx]
        return SampleSet(self.labels[idx], self.instances[idx], self.psi_index[idx],
                         self.distances[idx], [self.schedules[i] for i in idx],
                         self.plain[idx], self.encrypted[idx], self.target[idx],
                         pick(self.eve_encrypted), self.sensing_snr[idx], self.sdnr_eve[idx],
                         self.sdnr_bob[idx], [self.keys[i] for i in idx])


def sample_plan(world: ReferenceWorld, split: str) -> List[Tuple[int, int]]:
    """(label, instance) pairs for ``split`` in {"train", "test", "all"}."""
    out = []
    for k in range(world.samples_per_class):
        held = k % world.test_every == 0
        if split == "all" or (split == "test") == held:
            out += [(c, k) for c in range(len(GESTURES))]
    return out


def psi_for(world: ReferenceWorld, label: int, instance: int) -> int:
    # rotate through the family independently of the label and the split
    return (instance // world.test_every + label) % world.psi_family


def gesture_channels(world: ReferenceWorld, label: int, instance: int,
                     distance_m: Optional[float] = None,
                     schedule: Optional[TemporalSchedule] = None,
                     rx: Optional[Tuple[float, float]] = None, tag: int = 0
                     ) -> Tuple[CsiTensor, TemporalSchedule]:
    """Channel of one gesture instance at Bob's (or an explicit) receiver position.

    ``tag`` separates the noise streams of different receivers of one instance.
    """
    base = derive_seed(world.seed, label, instance)
    if schedule is None:
        schedule = world.schedule(derive_seed(base, 1))
    paths = synthesize_gesture_paths(GESTURES[label], world.duration_s, world.gesture_range_m,
                                     derive_seed(base, 2), world.geometry)
    layout = world.layout(*rx) if rx is not None else world.layout(distance_m)
    noise_seed = derive_seed(base, 3, tag)
    return generate_csi(layout.scenario(paths), world.num_packets, schedule, noise_seed), schedule


def eve_positions(world: ReferenceWorld, count: int, spread_m: float,
                  distance_m: Optional[float] = None) -> List[Tuple[float, float]]:
    """Polar receiver positions of ``count`` Eve antennas around her location.

    Antennas sit on a line perpendicular to Eve's bearing, ``spread_m`` apart
    (half a wavelength models a physical array, larger values model virtual
    antennas collected by moving the receiver).
    """
    if count < 1:
        raise InvalidArgumentError("antenna count must be >= 1")
    d = world.eve_distance_m if distance_m is None else distance_m
    b = np.deg2rad(world.eve_bearing_deg)
    centre = d * np.array([np.cos(b), np.sin(b)])
    normal = np.array([-np.sin(b), np.cos(b)])
    out = []
    for a in range(count):
        pos = centre + (a - (count - 1) / 2.0) * spread_m * normal
        out.append((float(np.hypot(*pos)), float(np.rad2deg(np.arctan2(pos[1], pos[0])))))
    return out


def eve_observations(world: ReferenceWorld, label: int, instance: int,
                     positions: Sequence[Tuple[float, float]], coeffs: np.ndarray,
                     schedule: TemporalSchedule) -> np.ndarray:
    """Encrypted series of one gesture instance at each Eve position, shape (A, M)."""
    out = np.empty((len(positions), world.num_packets), dtype=complex)
    for a, rx in enumerate(positions):
        csi, _ = gesture_channels(world, label, instance, schedule=schedule, rx=rx, tag=1 + a)
        out[a] = mix(csi.noisy, coeffs)
    return out


def build_samples(world: ReferenceWorld, split: str = "test",
                  distance_m: Optional[float] = None, with_eve: bool = True,
                  with_metrics: bool = True, encrypt: bool = True,
                  plan: Optional[List[Tuple[int, int]]] = None,
                  psis: Optional[Sequence[EncryptionMatrix]] = None,
                  eve_distance_m: Optional[float] = None) -> SampleSet:
    """Generate the corpus slice; deterministic in ``world``.

    Training samples draw their distance from the training range unless
    ``distance_m`` is given; test samples default to ``world.rx_distance_m``.
    With ``encrypt=False`` a pass-through matrix (antenna 0 only) replaces the
    family, so the received series equals the plain one. ``psis`` overrides
    the family drawn from ``world``.
    """
    plan = sample_plan(world, split) if plan is None else plan
    if not encrypt:
        psis = [passthrough_psi(world.num_antennas, world.num_packets)]
    elif psis is None:
        psis = world.psis()
    psis = list(psis)
    keys = [hash_key(p) for p in psis]
    eve_rx = (world.eve_distance_m if eve_distance_m is None else eve_distance_m,
              world.eve_bearing_deg)
    lo, hi = world.train_distance_range_m
    n, m = len(plan), world.num_packets
    labels = np.empty(n, dtype=np.int64)
    inst = np.empty(n, dtype=np.int64)
    pidx = np.empty(n, dtype=np.int64)
    dist = np.empty(n)
    plain = np.empty((n, m), dtype=complex)
    enc = np.empty((n, m), dtype=complex)
    target = np.empty((n, m), dtype=complex)
    eve = np.empty((n, m), dtype=complex) if with_eve else None
    eta = np.full(n, np.nan)
    sd_eve = np.full(n, np.nan)
    sd_bob = np.full(n, np.nan)
    scheds, sample_keys = [], []
    for i, (c, k) in enumerate(plan):
        p = psi_for(world, c, k) % len(psis)
        held = k % world.test_every == 0
        if distance_m is not None:
            d = distance_m
        elif held or lo == hi:
            d = world.rx_distance_m if held else lo
        else:
            d = float(np.random.default_rng(derive_seed(world.seed, c, k, 4)).uniform(lo, hi))
        csi, sched = gesture_channels(world, c, k, d)
        coeffs = psis[p].coeffs
        labels[i], inst[i], pidx[i], dist[i] = c, k, p, d
        plain[i] = csi.noisy[0]
        enc[i] = mix(csi.noisy, coeffs)
        target[i] = csi.dynamic_part[0]
        scheds.append(sched)
        sample_keys.append(keys[p])
        ecsi = None
        if with_eve:
            ecsi, _ = gesture_channels(world, c, k, schedule=sched, rx=eve_rx, tag=1)
            eve[i] = mix(ecsi.noisy, coeffs)
        if with_metrics:
            eta[i] = sensing_snr(csi)
            sd_eve[i] = eve_sdnr(csi if ecsi is None else ecsi, psis[p]).value_linear
            if encrypt:
                try:
                    sd_bob[i] = bob_sdnr(csi, psis[p]).value_linear
                except SingularBlockError:
                    pass  # not decryptable, e.g. a pass-through family
    return SampleSet(labels, inst, pidx, dist, scheds, plain, enc, target, eve, eta, sd_eve,
                     sd_bob, sample_keys)
