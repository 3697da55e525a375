"""Unkeyed eavesdropping strategies.

Every function here sees only :class:`EncryptedCsiSeries` observations; no
encryption matrix or key ever reaches the attacker's code path.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..crypto import EncryptedCsiSeries
from ..errors import InvalidArgumentError
from ..metrics import TaskScore, score_task
from ..sensing.classifier import ClassifierR, infer_batch
from ..sensing.features import FeatureConfig, extract_features

MAX_VIRTUAL_ANTENNAS = 80


class AttackKind(enum.Enum):
    NaiveNoKey = "naive"
    MultiAntennaNoKey = "multi_antenna"
    VirtualAntennas = "virtual_antennas"


@dataclass(frozen=True)
class AttackStrategy:
    """An eavesdropping strategy and the number of receive antennas it uses.

    ``MultiAntennaNoKey`` models a physical half-wavelength array at Eve;
    ``VirtualAntennas`` models a receiver moved across a wider aperture.
    """

    kind: AttackKind
    count: int = 1

    def __post_init__(self):
        if self.count < 1:
            raise InvalidArgumentError("antenna count must be >= 1")
        if self.kind is AttackKind.NaiveNoKey and self.count != 1:
            raise InvalidArgumentError("NaiveNoKey observes a single antenna")
        if self.kind is AttackKind.VirtualAntennas and self.count > MAX_VIRTUAL_ANTENNAS:
            raise InvalidArgumentError(f"at most {MAX_VIRTUAL_ANTENNAS} virtual antennas")

    @classmethod
    def naive(cls) -> "AttackStrategy":
        return cls(AttackKind.NaiveNoKey, 1)

    @classmethod
    def multi_antenna(cls, count: int) -> "AttackStrategy":
        return cls(AttackKind.MultiAntennaNoKey, count)

    @classmethod
    def virtual(cls, count: int) -> "AttackStrategy":
        return cls(AttackKind.VirtualAntennas, count)

    @classmethod
    def parse(cls, text: str) -> "AttackStrategy":
        """Parse ``naive``, ``multi_antenna:4`` or ``virtual_antennas:80``."""
        name, _, count = str(text).partition(":")
        try:
            kind = AttackKind(name.strip())
        except ValueError:
            raise InvalidArgumentError(f"unknown attack strategy {text!r}") from None
        return cls(kind, int(count) if count else 1)

    def with_count(self, count: int) -> "AttackStrategy":
        if self.kind is AttackKind.NaiveNoKey:
            return self
        return AttackStrategy(self.kind, int(count))

    @property
    def label(self) -> str:
        return self.kind.value if self.kind is AttackKind.NaiveNoKey else \
            f"{self.kind.value}:{self.count}"

    @property
    def spacing_wavelengths(self) -> float:
        # virtual antennas span a wider aperture than a physical array
        return 0.5 if self.kind is not AttackKind.VirtualAntennas else 2.0


def combine_unkeyed(observations: Sequence[EncryptedCsiSeries]) -> EncryptedCsiSeries:
    """Joint recovery without a key: dominant temporal component across antennas.

    The stacked observations are reduced by SVD to their strongest rank-one
    component, phase-referenced to the first antenna. A single observation is
    returned unchanged.
    """
    if len(observations) == 0:
        raise InvalidArgumentError("need at least one observation")
    first = observations[0]
    if len(observations) == 1:
        return first
    if any(len(o) != len(first) for o in observations):
        raise InvalidArgumentError("observations differ in length")
    y = np.stack([o.values for o in observations])
    u, s, vh = np.linalg.svd(y, full_matrices=False)
    lead = u[0, 0]
    phase = np.conj(lead) / abs(lead) if abs(lead) > 0 else 1.0
    # scale so the result has antenna 0's magnitude on the dominant component
    series = np.conj(phase) * abs(lead) * s[0] * vh[0]
    return EncryptedCsiSeries(series, first.schedule)


def eve_spectrograms(series: Sequence[EncryptedCsiSeries],
                     cfg: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """Features on the assumed-regular grid; Eve never learns the true timing."""
    return np.array([extract_features(s.values, s.schedule.as_regular(), cfg).spectrogram
                     for s in series])


def run_attack(strategy: AttackStrategy,
               trials: Sequence[Sequence[EncryptedCsiSeries]],
               classifier: ClassifierR, labels,
               features: Optional[FeatureConfig] = None) -> TaskScore:
    """Classify each trial's (combined) observations with the clean classifier.

    Args:
        strategy: Attack to mount; the number of observations per trial must
            equal ``strategy.count``.
        trials: Per trial, the encrypted series seen at each Eve antenna.
        classifier: Classifier trained on clean features.
        labels: True class per trial.
    """
    labels = np.asarray(labels)
    if len(trials) != labels.size:
        raise InvalidArgumentError("one label per trial required")
    for obs in trials:
        if len(obs) != strategy.count:
            raise InvalidArgumentError(
                f"{strategy.label} expects {strategy.count} observations, got {len(obs)}")
    combined = [combine_unkeyed(obs) for obs in trials]
    cfg = classifier.cfg.features if features is None else features
    pred = infer_batch(classifier, eve_spectrograms(combined, cfg)) if combined else \
        np.empty(0, dtype=np.int64)
    return score_task(pred, labels)
