"""Packet link simulation: encrypted LTS, channel estimation, QAM payload, BER."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np

from .channel.model import CsiTensor, Scenario, generate_csi
from .crypto import EncryptionMatrix, decrypt_block_ls, mix
from .errors import EqualizationError, InvalidArgumentError
from .metrics import TaskScore, score_bits
from .timing import regular_schedule

BER_HEADER = ["role", "mod", "psi_id", "seed", "ber", "snr_db"]

# Cross 32-QAM: (I, Q, label). Labels found by annealing the sum of Hamming
# distances over nearest-neighbour pairs (58 over 52 pairs).
_CROSS32 = [
    (-5, -3, 30), (-5, -1, 14), (-5, 1, 15), (-5, 3, 31), (-3, -5, 19), (-3, -3, 18),
    (-3, -1, 6), (-3, 1, 7), (-3, 3, 23), (-3, 5, 22), (-1, -5, 3), (-1, -3, 2),
    (-1, -1, 4), (-1, 1, 5), (-1, 3, 21), (-1, 5, 20), (1, -5, 11), (1, -3, 10),
    (1, -1, 12), (1, 1, 13), (1, 3, 29), (1, 5, 28), (3, -5, 27), (3, -3, 26),
    (3, -1, 8), (3, 1, 9), (3, 3, 25), (3, 5, 24), (5, -3, 16), (5, -1, 0),
    (5, 1, 1), (5, 3, 17),
]


class Role(enum.Enum):
    BobKeyed = "BobKeyed"
    BobKeyless = "BobKeyless"
    Eve = "Eve"


def _gray(n: int) -> int:
    return n ^ (n >> 1)


class Modulation(enum.Enum):
    BPSK = 1
    QAM32 = 5
    QAM64 = 6

    @property
    def bits_per_symbol(self) -> int:
        return self.value

    @property
    def constellation(self) -> np.ndarray:
        """Points ordered by label: ``constellation[k]`` carries bit pattern k."""
        return _constellation(self)[0]

    @property
    def min_distance(self) -> float:
        pts = self.constellation
        d = np.abs(pts[:, None] - pts[None, :])
        return float(np.min(d[d > 0]))


@lru_cache(maxsize=None)
def _constellation(mod: Modulation) -> Tuple[np.ndarray, np.ndarray]:
    if mod is Modulation.BPSK:
        pts = np.array([-1.0 + 0j, 1.0 + 0j])
        levels = np.array([-1.0, 1.0])
    elif mod is Modulation.QAM64:
        levels = np.arange(-7, 8, 2, dtype=float)
        pts = np.empty(64, dtype=complex)
        for i in range(8):
            for q in range(8):
                pts[(_gray(i) << 3) | _gray(q)] = levels[i] + 1j * levels[q]
    else:
        pts = np.empty(32, dtype=complex)
        for i, q, lab in _CROSS32:
            pts[lab] = i + 1j * q
        levels = None
    scale = np.sqrt(np.mean(np.abs(pts) ** 2))
    pts = pts / scale
    pts.flags.writeable = False
    return pts, (None if levels is None else levels / scale)


def bits_to_ints(bits: np.ndarray, k: int) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64).reshape(-1, k)
    weights = 1 << np.arange(k - 1, -1, -1)
    return bits @ weights


def ints_to_bits(vals: np.ndarray, k: int) -> np.ndarray:
    vals = np.asarray(vals, dtype=np.int64)
    shifts = np.arange(k - 1, -1, -1)
    return ((vals[:, None] >> shifts[None, :]) & 1).astype(np.uint8).ravel()


def modulate(bits: np.ndarray, mod: Modulation) -> np.ndarray:
    k = mod.bits_per_symbol
    bits = np.asarray(bits)
    if bits.size % k:
        raise InvalidArgumentError(f"bit count {bits.size} not a multiple of {k}")
    return mod.constellation[bits_to_ints(bits, k)]


def _nearest_labels(x: np.ndarray, mod: Modulation, chunk: int = 65536) -> np.ndarray:
    pts = mod.constellation
    out = np.empty(x.size, dtype=np.int64)
    for lo in range(0, x.size, chunk):
        seg = x[lo:lo + chunk]
        dist = np.abs(seg[:, None] - pts[None, :]) ** 2
        out[lo:lo + chunk] = np.argmin(dist, axis=1)
    return out


def demodulate(symbols: np.ndarray, mod: Modulation) -> np.ndarray:
    """Minimum-distance demapping to labelled bits."""
    x = np.asarray(symbols, dtype=complex).ravel()
    if mod is Modulation.BPSK:
        return (x.real > 0).astype(np.uint8)
    return ints_to_bits(_nearest_labels(x, mod), mod.bits_per_symbol)


@dataclass(frozen=True)
class PacketSignal:
    """One packet: known training value and the payload symbols."""

    payload_symbols: np.ndarray
    packet_index: int
    lts_symbol: complex = 1.0 + 0j

    def __post_init__(self):
        if np.asarray(self.payload_symbols).size == 0:
            raise InvalidArgumentError("payload must be non-empty")


@dataclass(frozen=True)
class ReceivedPacket:
    y_lts: complex
    y_payload: np.ndarray
    packet_index: int


def transmit_packet(pkt: PacketSignal, csi: CsiTensor, psi: EncryptionMatrix, sigma: float,
                    rng_seed, beamformer: Optional[np.ndarray] = None) -> ReceivedPacket:
    """Send the encrypted LTS and the plainly beamformed payload of one packet.

    The channel is ``csi.clean``; receiver noise of std ``sigma`` is drawn from
    ``rng_seed`` (LTS first, then payload).
    """
    m = pkt.packet_index
    if not 0 <= m < csi.num_packets:
        raise InvalidArgumentError(f"packet index {m} out of range")
    if sigma < 0:
        raise InvalidArgumentError("sigma must be >= 0")
    q_count = csi.num_antennas
    w = np.ones(q_count, dtype=complex) if beamformer is None else np.asarray(beamformer, complex)
    h = csi.clean[:, m:m + 1]
    x = np.asarray(pkt.payload_symbols, dtype=complex)
    rng = np.random.default_rng(rng_seed)
    noise = (sigma / np.sqrt(2.0)) * (rng.standard_normal(1 + x.size)
                                      + 1j * rng.standard_normal(1 + x.size))
    lts_channel = mix(h, psi.coeffs[:, m:m + 1])[0]
    pay_channel = mix(h, w[:, None])[0]
    y_lts = lts_channel * pkt.lts_symbol
    y_pay = pay_channel * x
    if sigma > 0:
        y_lts = y_lts + noise[0]
        y_pay = y_pay + noise[1:]
    return ReceivedPacket(complex(y_lts), y_pay, m)


def estimate_csi_from_lts(y_lts, s) -> complex:
    """Least-squares channel estimate ``y / s``."""
    if np.any(np.asarray(s) == 0):
        raise InvalidArgumentError("training symbol must be non-zero")
    return np.asarray(y_lts) / np.asarray(s)


def equalize_and_demod(y_payload: np.ndarray, channel_estimate: complex,
                       mod: Modulation) -> np.ndarray:
    """Zero-forcing equalization followed by minimum-distance demapping."""
    if channel_estimate == 0:
        raise EqualizationError("zero channel estimate")
    return demodulate(np.asarray(y_payload) / channel_estimate, mod)


@dataclass(frozen=True)
class BerReport:
    score: TaskScore
    snr_db: float
    role: Role
    modulation: Modulation
    seed: int = 0
    psi_id: str = ""

    @property
    def ber(self) -> float:
        return self.score.ber

    def row(self) -> list:
        return [self.role.value, self.modulation.name, self.psi_id, self.seed,
                repr(float(self.ber)), repr(float(self.snr_db))]


def _unencrypted(psi: EncryptionMatrix, w: np.ndarray) -> bool:
    return bool(np.all(psi.coeffs == w[:, None]))


def packet_seed(seed: int, m: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), int(m)])


def run_link(scenario: Scenario, psi: EncryptionMatrix, role: Role, mod: Modulation,
             num_packets: int, payload_len: int, sigma: float, seed: int,
             block_len: Optional[int] = None, base_interval_s: float = 1e-3,
             psi_id: str = "", csi: Optional[CsiTensor] = None) -> BerReport:
    """Simulate ``num_packets`` packets and measure payload BER for one role.

    BobKeyed recovers the per-antenna channels by block least squares and
    projects them on the payload beamformer; BobKeyless and Eve equalize with
    the raw LTS estimate. When Psi equals the payload beamformer (no encryption)
    BobKeyed also uses the raw estimate.

    Args:
        scenario: Propagation environment of this receiver.
        psi: Encryption matrix applied to the LTS.
        role: Receiver role.
        mod: Payload modulation.
        num_packets: M; must match psi.
        payload_len: Symbols per packet.
        sigma: Receiver noise std.
        seed: Seed for channel, bits and noise.
        block_len: Decryption block length (default 4*Q).
        csi: Optional precomputed channel (its clean part is used).
    """
    if psi.num_packets != num_packets:
        raise InvalidArgumentError("psi length must equal num_packets")
    if csi is None:
        sched = regular_schedule(num_packets, base_interval_s)
        csi = generate_csi(scenario.with_noise(0.0), num_packets, sched, seed)
    q_count = csi.num_antennas
    w = np.ones(q_count, dtype=complex)
    k = mod.bits_per_symbol
    bit_rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xB175]))
    tx_bits = bit_rng.integers(0, 2, size=(num_packets, payload_len * k), dtype=np.uint8)
    rx = []
    for m in range(num_packets):
        pkt = PacketSignal(modulate(tx_bits[m], mod), m)
        rx.append(transmit_packet(pkt, csi, psi, sigma, packet_seed(seed, m), w))
    y_lts = np.array([r.y_lts for r in rx])
    raw = estimate_csi_from_lts(y_lts, 1.0)
    if role is Role.BobKeyed and not _unencrypted(psi, w):
        rec = decrypt_block_ls(raw, psi, block_len).values
        est = mix(rec, np.broadcast_to(w[:, None], rec.shape))
    else:
        est = raw
    rx_bits = np.empty_like(tx_bits)
    for m in range(num_packets):
        rx_bits[m] = equalize_and_demod(rx[m].y_payload, est[m], mod)
    pay = mix(csi.clean, np.broadcast_to(w[:, None], csi.clean.shape))
    snr_db = float(10 * np.log10(np.mean(np.abs(pay) ** 2) / sigma ** 2)) if sigma > 0 else np.inf
    return BerReport(score_bits(tx_bits, rx_bits), snr_db, role, mod, int(seed), psi_id)


def sigma_for_payload_snr(csi: CsiTensor, snr_db: float) -> float:
    """Noise std giving the requested mean payload SNR on an all-ones beamformer."""
    pay = np.sum(csi.clean, axis=0)
    return float(np.sqrt(np.mean(np.abs(pay) ** 2) / 10 ** (snr_db / 10)))
