"""Doppler spectrogram features from (possibly irregularly timed) CSI series."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.signal.windows import hann

from ..errors import InvalidArgumentError
from ..timing import TemporalSchedule


@dataclass(frozen=True)
class FeatureConfig:
    """Short-time Fourier analysis settings.

    Attributes:
        window: Samples per frame.
        hop: Frame advance in samples.
        nfft: Transform length (zero-padded).
        max_freq_hz: Keep bins with ``|f| <= max_freq_hz``.
        floor_ratio: Relative floor added before the log, as a fraction of the
            mean power of the map.
    """

    window: int = 256
    hop: int = 50
    nfft: int = 512
    max_freq_hz: float = 40.0
    floor_ratio: float = 1e-3
    abs_floor: float = 1e-30
    std_eps: float = 1e-6

    def num_frames(self, num_samples: int) -> int:
        return 1 + (num_samples - self.window) // self.hop

    def bin_freqs(self, base_interval_s: float) -> np.ndarray:
        fs = 1.0 / base_interval_s
        kmax = int(np.floor(self.max_freq_hz * self.nfft / fs))
        return np.arange(-kmax, kmax + 1) * fs / self.nfft

    def map_shape(self, num_samples: int, base_interval_s: float) -> Tuple[int, int]:
        return self.num_frames(num_samples), self.bin_freqs(base_interval_s).size


@dataclass(frozen=True)
class FeatureMap:
    """Magnitude spectrogram (time x frequency) plus the resampled series."""

    spectrogram: np.ndarray
    amp_series: np.ndarray
    phase_series: np.ndarray
    freqs: np.ndarray
    frame_times: np.ndarray


@dataclass(frozen=True)
class Resampler:
    """Linear interpolation from scheduled times onto ``k * dt``.

    ``out[k] = (1 - frac[k]) * x[idx[k]] + frac[k] * x[idx[k] + 1]``; ends are held.
    """

    idx: np.ndarray
    frac: np.ndarray

    @classmethod
    def from_schedule(cls, schedule: TemporalSchedule) -> "Resampler":
        ts = schedule.timestamps
        m = ts.size
        grid = np.arange(m) * schedule.base_interval_s
        if m == 1:
            return cls(np.zeros(1, dtype=np.int64), np.zeros(1))
        idx = np.clip(np.searchsorted(ts, grid, side="right") - 1, 0, m - 2)
        frac = np.clip((grid - ts[idx]) / (ts[idx + 1] - ts[idx]), 0.0, 1.0)
        return cls(idx.astype(np.int64), frac)

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if x.shape[-1] == 1:
            return x.copy()
        return (1.0 - self.frac) * x[..., self.idx] + self.frac * x[..., self.idx + 1]

    def adjoint(self, g: np.ndarray) -> np.ndarray:
        """Transpose of ``apply`` along the last axis."""
        g = np.asarray(g)
        m = self.idx.size
        if m == 1:
            return g.copy()
        flat = g.reshape(-1, m)
        out = np.zeros(flat.shape, dtype=g.dtype)
        rows = np.arange(flat.shape[0])[:, None]
        np.add.at(out, (rows, self.idx[None, :]), (1.0 - self.frac) * flat)
        np.add.at(out, (rows, self.idx[None, :] + 1), self.frac * flat)
        return out.reshape(g.shape)


def stft_basis(cfg: FeatureConfig, base_interval_s: float) -> np.ndarray:
    """Windowed DFT matrix (window, bins) restricted to the kept frequencies."""
    freqs = cfg.bin_freqs(base_interval_s)
    n = np.arange(cfg.window)
    win = hann(cfg.window, sym=False)
    return win[:, None] * np.exp(-2j * np.pi * np.outer(n * base_interval_s, freqs))


def frame_index(cfg: FeatureConfig, num_samples: int) -> np.ndarray:
    t = cfg.num_frames(num_samples)
    return np.arange(t)[:, None] * cfg.hop + np.arange(cfg.window)[None, :]


def extract_features(csi_series: np.ndarray, schedule: TemporalSchedule,
                     cfg: FeatureConfig = FeatureConfig()) -> FeatureMap:
    """Resample onto the regular grid, remove the mean, take the STFT magnitude.

    Args:
        csi_series: Complex series of length M.
        schedule: Timestamps the series was sampled at (pass the regular
            schedule to mimic an observer unaware of timing jitter).
        cfg: STFT settings.
    """
    x = np.asarray(csi_series, dtype=complex)
    if x.ndim != 1 or x.size != len(schedule):
        raise InvalidArgumentError("series must be 1-D and match the schedule")
    if x.size < cfg.window:
        raise InvalidArgumentError(f"series shorter ({x.size}) than window ({cfg.window})")
    u = Resampler.from_schedule(schedule).apply(x)
    u0 = u - u.mean()
    frames = u0[frame_index(cfg, u.size)]
    spec = np.abs(frames @ stft_basis(cfg, schedule.base_interval_s))
    dt = schedule.base_interval_s
    centres = (np.arange(spec.shape[0]) * cfg.hop + cfg.window / 2.0) * dt
    return FeatureMap(spec, np.abs(u), np.unwrap(np.angle(u)),
                      cfg.bin_freqs(dt), centres)


class LogStandardize:
    """Map power to ``standardize(log(p + a * mean(p) + b))`` per sample.

    A zero input maps to an all-zero output.
    """

    def __init__(self, cfg: FeatureConfig):
        self.a, self.b, self.eps = cfg.floor_ratio, cfg.abs_floor, cfg.std_eps

    def forward(self, p: np.ndarray) -> np.ndarray:
        bsz = p.shape[0]
        flat = p.reshape(bsz, -1)
        floor = self.a * flat.mean(axis=1, keepdims=True) + self.b
        q = flat + floor
        l = np.log(q)
        mu = l.mean(axis=1, keepdims=True)
        # the mean of equal values can miss them by an ulp; keep flat maps at zero
        flat_map = np.all(l == l[:, :1], axis=1, keepdims=True)
        c = np.where(flat_map, 0.0, l - mu)
        sd = np.sqrt(np.mean(c * c, axis=1, keepdims=True))
        self._cache = (p.shape, q, c, sd)
        return (c / (sd + self.eps)).reshape(p.shape)

    def backward(self, g: np.ndarray) -> np.ndarray:
        shape, q, c, sd = self._cache
        bsz = shape[0]
        g = g.reshape(bsz, -1)
        n = g.shape[1]
        den = sd + self.eps
        gl = (g - g.mean(axis=1, keepdims=True)) / den
        safe_sd = np.where(sd > 0, sd, 1.0)
        corr = np.where(sd > 0, np.sum(g * c, axis=1, keepdims=True) / (n * safe_sd * den ** 2), 0.0)
        gl = gl - c * corr
        gq = gl / q
        gp = gq + self.a * gq.sum(axis=1, keepdims=True) / n
        return gp.reshape(shape)


class FeaturePipeline:
    """Differentiable batch map from complex series to standardized log-power maps.

    Used to push gradients from the classifier back to surrogate CSI.
    """

    def __init__(self, cfg: FeatureConfig, num_samples: int, base_interval_s: float):
        self.cfg = cfg
        self.m = num_samples
        self.basis = stft_basis(cfg, base_interval_s)
        self.fidx = frame_index(cfg, num_samples)
        self.norm = LogStandardize(cfg)

    @property
    def map_shape(self) -> Tuple[int, int]:
        return self.fidx.shape[0], self.basis.shape[1]

    def forward(self, z: np.ndarray, resamplers: Optional[Sequence[Resampler]] = None
                ) -> np.ndarray:
        """``z`` is (B, M) complex; returns (B, T, K) real."""
        if resamplers is not None:
            u = np.stack([r.apply(zi) for r, zi in zip(resamplers, z)])
        else:
            u = z
        u0 = u - u.mean(axis=1, keepdims=True)
        frames = u0[:, self.fidx]  # (B, T, W)
        X = frames @ self.basis
        p = X.real ** 2 + X.imag ** 2
        self._cache = (X, resamplers)
        return self.norm.forward(p)

    def backward(self, g: np.ndarray) -> np.ndarray:
        X, resamplers = self._cache
        gp = self.norm.backward(g)
        gX = 2.0 * X * gp
        gframes = gX @ np.conj(self.basis).T  # (B, T, W)
        gu0 = np.zeros((g.shape[0], self.m), dtype=complex)
        t_count, w = self.fidx.shape
        for t in range(t_count):
            gu0[:, self.fidx[t, 0]:self.fidx[t, 0] + w] += gframes[:, t]
        gu = gu0 - gu0.mean(axis=1, keepdims=True)
        if resamplers is not None:
            gu = np.stack([r.adjoint(gi) for r, gi in zip(resamplers, gu)])
        return gu


def standardized_input(fm_spectrogram: np.ndarray, cfg: FeatureConfig) -> np.ndarray:
    """Classifier input for one or more magnitude spectrograms."""
    spec = np.asarray(fm_spectrogram, dtype=float)
    single = spec.ndim == 2
    if single:
        spec = spec[None]
    out = LogStandardize(cfg).forward(spec ** 2)
    return out[0] if single else out


def dominant_frequency_track(fm: FeatureMap, rel_energy: float = 0.2) -> np.ndarray:
    """Peak Doppler frequency per frame; NaN where the frame is near-silent."""
    spec = fm.spectrogram
    track = fm.freqs[np.argmax(spec, axis=1)].astype(float)
    energy = spec.max(axis=1)
    track[energy < rel_energy * energy.max()] = np.nan
    return track


def ridge_to_background(fm: FeatureMap) -> float:
    """Mean per-frame peak power over mean off-peak power (linear)."""
    p = fm.spectrogram ** 2
    peak = p.max(axis=1)
    rest = (p.sum(axis=1) - peak) / max(p.shape[1] - 1, 1)
    return float(np.mean(peak) / max(np.mean(rest), 1e-300))
