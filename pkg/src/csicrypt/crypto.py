"""Encryption matrix generation, application, hashing and keyed recovery."""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from .channel.model import CsiTensor
from .errors import InvalidArgumentError, SingularBlockError, UnderdeterminedError
from .timing import TemporalSchedule, randomize_schedule, regular_schedule

KEY_BITS = 2048
DIGEST_ALG = "sha512-ctr4"
PSI_MAGIC = b"MCPSI1"
MAX_CONDITION = 1e12


def project_power(coeffs: np.ndarray, budget: float) -> np.ndarray:
    """Scale coefficients onto the power ball ``sum |d|^2 <= budget``.

    The check uses the same float arithmetic as ``total_power`` so the
    constraint holds exactly, not merely to rounding.
    """
    coeffs = np.asarray(coeffs, dtype=complex)
    total = total_power(coeffs)
    if total <= budget:
        return coeffs
    out = coeffs * np.sqrt(budget / total)
    shrink = 1.0
    while total_power(out) > budget:
        shrink *= 1.0 - 4 * np.finfo(float).eps
        out = coeffs * (np.sqrt(budget / total) * shrink)
    return out


def total_power(coeffs: np.ndarray) -> float:
    return float(np.sum(coeffs.real ** 2 + coeffs.imag ** 2))


@dataclass(frozen=True)
class EncryptionMatrix:
    """Per-antenna, per-packet beamformer coefficients.

    Attributes:
        coeffs: Complex array (Q, M); entry [q, m] scales antenna q in packet m.
        power_budget: Upper bound on the total coefficient energy, default Q*M.
    """

    coeffs: np.ndarray
    power_budget: Optional[float] = None

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        if c.ndim != 2 or c.shape[0] < 1 or c.shape[1] < 1:
            raise InvalidArgumentError("coeffs must be a non-empty (Q, M) array")
        if not np.all(np.isfinite(c)):
            raise InvalidArgumentError("coeffs must be finite")
        budget = float(c.size) if self.power_budget is None else float(self.power_budget)
        if total_power(c) > budget:
            raise InvalidArgumentError("coefficient energy exceeds the power budget")
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "power_budget", budget)

    @property
    def num_antennas(self) -> int:
        return self.coeffs.shape[0]

    @property
    def num_packets(self) -> int:
        return self.coeffs.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.coeffs.shape

    def serialize(self) -> bytes:
        """Row-major [q][m] (re, im) pairs as little-endian binary64."""
        pairs = np.empty(self.coeffs.shape + (2,), dtype="<f8")
        pairs[..., 0] = self.coeffs.real
        pairs[..., 1] = self.coeffs.imag
        return pairs.tobytes(order="C")

    def to_bytes(self) -> bytes:
        q, m = self.shape
        return PSI_MAGIC + struct.pack("<II", q, m) + self.serialize()

    @classmethod
    def from_bytes(cls, blob: bytes, power_budget: Optional[float] = None) -> "EncryptionMatrix":
        if blob[:6] != PSI_MAGIC:
            raise InvalidArgumentError("not an encryption matrix file")
        q, m = struct.unpack("<II", blob[6:14])
        data = np.frombuffer(blob[14:], dtype="<f8")
        if data.size != 2 * q * m:
            raise InvalidArgumentError("truncated encryption matrix file")
        data = data.reshape(q, m, 2)
        return cls(data[..., 0] + 1j * data[..., 1], power_budget)

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: Union[str, Path]) -> "EncryptionMatrix":
        return cls.from_bytes(Path(path).read_bytes())


def passthrough_psi(num_antennas: int, num_packets: int) -> EncryptionMatrix:
    """No encryption: antenna 0 passes through, the rest are silent."""
    c = np.zeros((num_antennas, num_packets), dtype=complex)
    c[0] = 1.0
    return EncryptionMatrix(c)


def uniform_psi(num_antennas: int, num_packets: int) -> EncryptionMatrix:
    """All-ones coefficients, i.e. the plain unencrypted beamformer."""
    return EncryptionMatrix(np.ones((num_antennas, num_packets), dtype=complex))


def sample_psi(num_antennas: int, num_packets: int, rng_seed: int,
               magnitude_range: Tuple[float, float] = (1.0, 1.0),
               power_budget: Optional[float] = None) -> EncryptionMatrix:
    """Random coefficients with uniform phase and uniform magnitude.

    Args:
        num_antennas: Q.
        num_packets: M.
        rng_seed: Seed for the draw.
        magnitude_range: (low, high) with 0 < low <= high.
        power_budget: Defaults to Q*M.

    Returns:
        An EncryptionMatrix rescaled, if needed, onto the power budget.
    """
    lo, hi = (float(v) for v in magnitude_range)
    if not (0 < lo <= hi and np.isfinite(hi)):
        raise InvalidArgumentError(f"bad magnitude range {magnitude_range}")
    if num_antennas < 1 or num_packets < 1:
        raise InvalidArgumentError("Q and M must be >= 1")
    rng = np.random.default_rng(rng_seed)
    phase = rng.uniform(0.0, 2 * np.pi, size=(num_antennas, num_packets))
    mag = rng.uniform(lo, hi, size=phase.shape) if hi > lo else np.full(phase.shape, lo)
    budget = float(num_antennas * num_packets) if power_budget is None else float(power_budget)
    coeffs = project_power(mag * np.exp(1j * phase), budget)
    return EncryptionMatrix(coeffs, budget)


def mix(channels: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """In-air spatial mix ``sum_q channels[q] * coeffs[q]``.

    Accumulates antenna by antenna so any packet slice gives bit-identical
    values to the full-array call. A trailing subcarrier axis is broadcast.
    """
    channels = np.asarray(channels)
    coeffs = np.asarray(coeffs)
    if channels.ndim == coeffs.ndim + 1:
        coeffs = coeffs[..., None]
    acc = channels[0] * coeffs[0]
    for q in range(1, channels.shape[0]):
        acc = acc + channels[q] * coeffs[q]
    return acc


@dataclass(frozen=True)
class EncryptedCsiSeries:
    """CSI observed by one receive antenna under encryption."""

    values: np.ndarray
    schedule: TemporalSchedule

    def __post_init__(self):
        v = np.array(self.values, dtype=complex)
        if v.shape[0] != len(self.schedule):
            raise InvalidArgumentError("series length must equal schedule length")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.shape[0]


def encrypt(csi: CsiTensor, psi: EncryptionMatrix) -> EncryptedCsiSeries:
    """Mix the noisy per-antenna CSI with the encryption coefficients."""
    if csi.clean.shape[:2] != psi.shape:
        raise InvalidArgumentError(
            f"CSI shape {csi.clean.shape[:2]} does not match Psi shape {psi.shape}")
    return EncryptedCsiSeries(mix(csi.noisy, psi.coeffs), csi.schedule)


@dataclass(frozen=True)
class KeyPhi:
    """2048-bit key derived from an encryption matrix."""

    bits: np.ndarray  # uint8 array of 0/1, length 2048
    source_digest_alg: str = DIGEST_ALG

    def __post_init__(self):
        b = np.array(self.bits, dtype=np.uint8)
        if b.shape != (KEY_BITS,) or np.any(b > 1):
            raise InvalidArgumentError("key must hold exactly 2048 bits")
        b.flags.writeable = False
        object.__setattr__(self, "bits", b)

    @property
    def num_bits(self) -> int:
        return self.bits.size

    def to_bytes(self) -> bytes:
        return np.packbits(self.bits).tobytes()

    def hex(self) -> str:
        return self.to_bytes().hex()

    @classmethod
    def from_hex(cls, text: str) -> "KeyPhi":
        raw = bytes.fromhex(text)
        if len(raw) * 8 != KEY_BITS:
            raise InvalidArgumentError("key hex must encode 2048 bits")
        return cls(np.unpackbits(np.frombuffer(raw, dtype=np.uint8)))

    def __eq__(self, other) -> bool:
        return isinstance(other, KeyPhi) and self.to_bytes() == other.to_bytes()

    def __hash__(self) -> int:
        return hash(self.to_bytes())


def hash_key(psi: EncryptionMatrix) -> KeyPhi:
    """SHA-512 over the canonical serialization, counter-extended to 2048 bits.

    The counter is appended as a 4-byte little-endian unsigned integer.
    """
    ser = psi.serialize()
    blob = b"".join(hashlib.sha512(ser + struct.pack("<I", i)).digest() for i in range(4))
    return KeyPhi(np.unpackbits(np.frombuffer(blob, dtype=np.uint8)))


@dataclass(frozen=True)
class RecoveredCsi:
    """Per-antenna channels recovered by block least squares.

    Attributes:
        values: (Q, M) complex; each block's solution repeated over its packets.
        block_starts: First packet index of each block.
        block_lengths: Packets per block.
        condition_numbers: 2-norm condition number of each block design matrix.
        flagged_tail: Packets of a trailing block shorter than Q that could not
            be solved on their own; they reuse the previous block's solution.
    """

    values: np.ndarray
    block_starts: np.ndarray
    block_lengths: np.ndarray
    condition_numbers: np.ndarray
    flagged_tail: int = 0


def block_partition(num_packets: int, block_len: int, num_antennas: int
                    ) -> Tuple[List[Tuple[int, int]], int]:
    """Split packets into solvable blocks; returns (blocks, flagged_tail)."""
    if block_len < num_antennas:
        raise UnderdeterminedError(f"block_len={block_len} < Q={num_antennas}")
    if num_packets < num_antennas:
        raise UnderdeterminedError(f"M={num_packets} < Q={num_antennas}")
    blocks = []
    start = 0
    while start < num_packets:
        stop = min(start + block_len, num_packets)
        blocks.append((start, stop))
        start = stop
    tail = 0
    last_start, last_stop = blocks[-1]
    if last_stop - last_start < num_antennas:
        tail = last_stop - last_start
        blocks.pop()
    return blocks, tail


def decrypt_block_ls(enc: Union[EncryptedCsiSeries, np.ndarray], psi: EncryptionMatrix,
                     block_len: Optional[int] = None) -> RecoveredCsi:
    """Recover per-antenna CSI assuming it is constant within each block.

    Args:
        enc: Encrypted series (or a raw complex array of length M).
        psi: The encryption matrix that produced it.
        block_len: Coherence block L, default 4*Q.

    Returns:
        RecoveredCsi with per-block condition numbers.

    Raises:
        UnderdeterminedError: ``block_len < Q``.
        SingularBlockError: A block's condition number exceeds 1e12.
    """
    values = enc.values if isinstance(enc, EncryptedCsiSeries) else np.asarray(enc, complex)
    q_count, m_count = psi.shape
    if values.shape[0] != m_count:
        raise InvalidArgumentError("series length does not match Psi")
    block_len = 4 * q_count if block_len is None else int(block_len)
    blocks, tail = block_partition(m_count, block_len, q_count)
    out = np.empty((q_count,) + values.shape, dtype=complex)
    conds = np.empty(len(blocks))
    for b, (lo, hi) in enumerate(blocks):
        design = psi.coeffs[:, lo:hi].T  # (L, Q)
        sv = np.linalg.svd(design, compute_uv=False)
        cond = np.inf if sv[-1] == 0 else sv[0] / sv[-1]
        conds[b] = cond
        if not cond <= MAX_CONDITION:
            raise SingularBlockError(b, float(cond))
        sol = np.linalg.lstsq(design, values[lo:hi], rcond=None)[0]
        out[:, lo:hi] = sol[:, None] if sol.ndim == 1 else sol[:, None, :]
    if tail:
        lo = blocks[-1][1]
        out[:, lo:] = out[:, lo - 1:lo]
    starts = np.array([b[0] for b in blocks])
    lengths = np.array([b[1] - b[0] for b in blocks])
    return RecoveredCsi(out, starts, lengths, conds, tail)


def design_pinv_norm2(psi: EncryptionMatrix, block_len: Optional[int] = None) -> np.ndarray:
    """Squared Frobenius norm of each block design matrix's pseudo-inverse."""
    q_count, m_count = psi.shape
    block_len = 4 * q_count if block_len is None else int(block_len)
    blocks, _ = block_partition(m_count, block_len, q_count)
    out = []
    for lo, hi in blocks:
        sv = np.linalg.svd(psi.coeffs[:, lo:hi].T, compute_uv=False)
        out.append(float(np.sum(1.0 / sv ** 2)))
    return np.array(out)


__all__ = [
    "KEY_BITS", "PSI_MAGIC", "EncryptionMatrix", "EncryptedCsiSeries", "KeyPhi", "RecoveredCsi",
    "TemporalSchedule", "block_partition", "decrypt_block_ls", "design_pinv_norm2", "encrypt",
    "hash_key", "mix", "passthrough_psi", "project_power", "randomize_schedule",
    "regular_schedule", "sample_psi", "total_power", "uniform_psi",
]
