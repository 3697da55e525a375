"""Signal-quality and task-quality metrics."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Union

import numpy as np

from .channel.model import CsiTensor
from .crypto import EncryptedCsiSeries, EncryptionMatrix, decrypt_block_ls, mix
from .errors import InvalidArgumentError, UndefinedSimilarityError

SATURATED_DB = 300.0
SATURATED_LINEAR = 10.0 ** (SATURATED_DB / 10.0)


def to_db(value_linear: float) -> float:
    """10*log10 with the saturation sentinel at both ends."""
    if value_linear >= SATURATED_LINEAR or np.isinf(value_linear):
        return SATURATED_DB
    if value_linear <= 0:
        return -SATURATED_DB
    return float(10.0 * np.log10(value_linear))


def _safe_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    """Element-wise num/den; x/0 saturates, 0/0 is 0."""
    num = np.asarray(num, float)
    den = np.asarray(den, float)
    out = np.zeros(np.broadcast(num, den).shape)
    num_b = np.broadcast_to(num, out.shape)
    den_b = np.broadcast_to(den, out.shape)
    ok = den_b > 0
    out[ok] = num_b[ok] / den_b[ok]
    out[~ok & (num_b > 0)] = SATURATED_LINEAR
    return np.minimum(out, SATURATED_LINEAR)


def _abs2(x: np.ndarray) -> np.ndarray:
    return x.real ** 2 + x.imag ** 2


@dataclass(frozen=True)
class SdnrReport:
    """Signal-to-distortion-plus-noise ratio with its energy breakdown.

    ``value_linear`` is the mean of per-(antenna, packet) ratios; the breakdown
    holds the mean energy of each term over the same grid.
    """

    value_linear: float
    value_db: float
    num_packets: int
    per_term_breakdown: Dict[str, float] = field(default_factory=dict)


def sensing_snr(csi: CsiTensor, sigma: Optional[float] = None) -> float:
    """Dynamic energy over static-plus-noise energy.

    Ratios are averaged over packets per antenna, then over antennas.
    """
    sigma = csi.noise_std if sigma is None else sigma
    ratio = _safe_ratio(_abs2(csi.dynamic_part), _abs2(csi.static_part) + sigma ** 2)
    return float(np.mean(np.mean(ratio, axis=1)))


def sdnr(series: Union[EncryptedCsiSeries, np.ndarray], reference: CsiTensor,
         dynamic: np.ndarray, sigma: Optional[float] = None) -> SdnrReport:
    """SDNR of an observed series against the per-antenna clean reference.

    Args:
        series: The observation, either a single series of length M (Eve's mix)
            or per-antenna recovered channels of shape (Q, M).
        reference: Clean per-antenna CSI with its static/dynamic split.
        dynamic: Dynamic component of the observation, same shape as ``series``.
        sigma: Noise std; defaults to the reference's.

    Returns:
        SdnrReport averaged with weight 1/(Q*M).
    """
    x = series.values if isinstance(series, EncryptedCsiSeries) else np.asarray(series, complex)
    dyn = np.asarray(dynamic, complex)
    q_count, m_count = reference.clean.shape[:2]
    if x.shape != dyn.shape:
        raise InvalidArgumentError("series and its dynamic part differ in shape")
    if x.shape[-1] != m_count or (x.ndim == 2 and x.shape[0] != q_count) or x.ndim > 2:
        raise InvalidArgumentError(f"series shape {x.shape} does not match reference "
                                   f"{reference.clean.shape}")
    sigma = reference.noise_std if sigma is None else sigma
    x2 = np.broadcast_to(x, reference.clean.shape)
    d2 = np.broadcast_to(dyn, reference.clean.shape)
    num = _abs2(d2)
    distortion = _abs2(x2 - reference.clean)
    static = _abs2(reference.static_part)
    noise = np.full(num.shape, sigma ** 2)
    value = float(np.mean(_safe_ratio(num, distortion + static + noise)))
    breakdown = {
        "dynamic_energy": float(np.mean(num)),
        "distortion_energy": float(np.mean(distortion)),
        "static_energy": float(np.mean(static)),
        "noise_energy": float(sigma ** 2),
    }
    return SdnrReport(value, to_db(value), m_count, breakdown)


def eve_sdnr(csi: CsiTensor, psi: EncryptionMatrix) -> SdnrReport:
    """SDNR of the unrecovered encrypted mix seen by an unkeyed receiver."""
    series = mix(csi.noisy, psi.coeffs)
    dyn = mix(csi.dynamic_part, psi.coeffs)
    return sdnr(series, csi, dyn)


def bob_sdnr(csi: CsiTensor, psi: EncryptionMatrix, block_len: Optional[int] = None
             ) -> SdnrReport:
    """SDNR of the block-LS recovered per-antenna channels of a keyed receiver."""
    rec = decrypt_block_ls(mix(csi.noisy, psi.coeffs), psi, block_len).values
    rec_dyn = decrypt_block_ls(mix(csi.dynamic_part, psi.coeffs), psi, block_len).values
    return sdnr(rec, csi, rec_dyn)


@dataclass(frozen=True)
class CommSnr:
    linear: float
    db: float


def comm_snr(enc: Union[EncryptedCsiSeries, np.ndarray], sigma: float) -> CommSnr:
    """Per-packet average ``|h|^2 / sigma^2``."""
    if not sigma > 0:
        raise InvalidArgumentError("sigma must be positive")
    x = enc.values if isinstance(enc, EncryptedCsiSeries) else np.asarray(enc, complex)
    lin = float(np.sum(_abs2(x)) / (x.shape[0] * sigma ** 2))
    return CommSnr(lin, to_db(lin))


def envelope_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity of the magnitude envelopes of two complex series."""
    a = np.abs(np.asarray(a))
    b = np.abs(np.asarray(b))
    if a.shape != b.shape or a.size == 0:
        raise InvalidArgumentError("series must have equal, non-zero length")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise UndefinedSimilarityError("envelope of a zero series")
    return float(np.dot(a, b) / (na * nb))


@dataclass(frozen=True)
class TaskScore:
    """Accuracy or bit-error figures with their raw counts."""

    accuracy: float = float("nan")
    ber: float = float("nan")
    counts: Dict[str, int] = field(default_factory=dict)


def score_task(predictions, labels) -> TaskScore:
    p = np.asarray(predictions)
    y = np.asarray(labels)
    if p.shape != y.shape:
        raise InvalidArgumentError("predictions and labels differ in length")
    correct = int(np.count_nonzero(p == y))
    total = int(p.size)
    acc = correct / total if total else float("nan")
    return TaskScore(accuracy=acc, counts={"correct": correct, "total": total})


def score_bits(tx_bits, rx_bits) -> TaskScore:
    t = np.asarray(tx_bits)
    r = np.asarray(rx_bits)
    if t.shape != r.shape:
        raise InvalidArgumentError("bit streams differ in length")
    errors = int(np.count_nonzero(t != r))
    total = int(t.size)
    return TaskScore(ber=errors / total if total else float("nan"),
                     counts={"error_bits": errors, "total_bits": total})
