"""Spectrogram gesture classifier used as the frozen recognizer."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np

from ..errors import InvalidArgumentError
from .features import FeatureConfig, FeatureMap, standardized_input
from .nn import (Adam, AvgPool2D, Conv2D, Dense, Flatten, ParamGroup, ReLU, Sequential,
                 cross_entropy, load_checkpoint, save_checkpoint, softmax)

NUM_CLASSES = 8


@dataclass(frozen=True)
class ClassifierConfig:
    """Architecture and training settings.

    Layers carry no bias terms, so an all-zero input yields uniform probabilities.
    """

    channels: Tuple[int, int] = (8, 16)
    hidden: int = 64
    num_classes: int = NUM_CLASSES
    epochs: int = 30
    batch_size: int = 64
    lr: float = 1e-3
    seed: int = 0
    features: FeatureConfig = field(default_factory=FeatureConfig)


class ClassifierR:
    """Two conv stages and two dense stages over a (T, K) standardized map."""

    def __init__(self, input_shape: Tuple[int, int], cfg: ClassifierConfig = ClassifierConfig()):
        self.cfg = cfg
        self.input_shape = tuple(input_shape)
        rng = np.random.default_rng(cfg.seed)
        c1, c2 = cfg.channels
        t, k = self.input_shape
        flat = c2 * (t // 2 // 2) * (k // 2 // 2)
        self.net = Sequential([
            Conv2D(1, c1, 3, rng, bias=False), ReLU(), AvgPool2D(),
            Conv2D(c1, c2, 3, rng, bias=False), ReLU(), AvgPool2D(),
            Flatten(),
            Dense(flat, cfg.hidden, rng, bias=False), ReLU(),
            Dense(cfg.hidden, cfg.num_classes, rng, bias=False),
        ])
        self.frozen = False
        self.trained = False
        self.history: List[float] = []

    # -- parameters
    def named_parameters(self) -> List[Tuple[str, str, np.ndarray]]:
        out = []
        for i, layer in enumerate(self.net.layers):
            for k in sorted(layer.params):
                out.append((f"net.{i}.{k}", layer.kind, layer.params[k]))
        return out

    def param_group(self) -> ParamGroup:
        return ParamGroup([(f"net.{i}.{k}", layer, k) for i, layer in enumerate(self.net.layers)
                           for k in sorted(layer.params)])

    def param_digest(self) -> str:
        h = hashlib.sha256()
        for name, _, a in self.named_parameters():
            h.update(name.encode())
            h.update(np.ascontiguousarray(a, dtype="<f8").tobytes())
        return h.hexdigest()

    def freeze(self) -> "ClassifierR":
        for _, _, a in self.named_parameters():
            a.flags.writeable = False
        self.frozen = True
        return self

    # -- passes
    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 2:
            x = x[None]
        if x.shape[1:] != self.input_shape:
            raise InvalidArgumentError(f"input map {x.shape[1:]} != {self.input_shape}")
        return x[:, None]

    def logits(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        return self.net.forward(self._check(x), train)

    def backward_input(self, g_logits: np.ndarray) -> np.ndarray:
        """Gradient w.r.t. the standardized input map (parameters untouched)."""
        return self.net.backward(g_logits)[:, 0]

    def predict_proba(self, x: np.ndarray, batch: int = 512) -> np.ndarray:
        x = self._check(x)[:, 0]
        out = [softmax(self.net.forward(x[i:i + batch, None])) for i in range(0, len(x), batch)]
        return np.concatenate(out) if out else np.zeros((0, self.cfg.num_classes))

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba(x), axis=1)

    def loss_and_grads(self, x: np.ndarray, y: np.ndarray) -> float:
        """Cross-entropy on a batch; parameter gradients land in ``layer.grads``."""
        self.net.zero_grad()
        loss, g = cross_entropy(self.logits(x, train=True), np.asarray(y))
        self.net.backward(g)
        return loss

    # -- io
    def save(self, path: Union[str, Path]) -> None:
        meta = {"model": "ClassifierR", "input_shape": list(self.input_shape),
                "channels": list(self.cfg.channels), "hidden": self.cfg.hidden,
                "num_classes": self.cfg.num_classes, "frozen": self.frozen}
        save_checkpoint(path, meta, self.named_parameters())

    @classmethod
    def load(cls, path: Union[str, Path], features: FeatureConfig = FeatureConfig()
             ) -> "ClassifierR":
        meta, params = load_checkpoint(path)
        cfg = ClassifierConfig(channels=tuple(meta["channels"]), hidden=meta["hidden"],
                               num_classes=meta["num_classes"], features=features)
        model = cls(tuple(meta["input_shape"]), cfg)
        for name, _, a in model.named_parameters():
            a[...] = params[name]
        model.trained = True
        if meta.get("frozen"):
            model.freeze()
        return model


def _as_inputs(features, cfg: FeatureConfig) -> np.ndarray:
    if len(features) and isinstance(features[0], FeatureMap):
        spec = np.stack([f.spectrogram for f in features])
    else:
        spec = np.asarray(features, dtype=float)
    return standardized_input(spec, cfg)


def train_classifier(features: Union[Sequence[FeatureMap], np.ndarray], labels: Sequence[int],
                     cfg: ClassifierConfig = ClassifierConfig()) -> ClassifierR:
    """Fit R with Adam on magnitude spectrograms, then freeze it.

    Args:
        features: FeatureMaps or an array of magnitude spectrograms (N, T, K).
        labels: Integer class labels.
        cfg: Settings; ``epochs=0`` returns the untrained (but frozen) network.
    """
    y = np.asarray(labels, dtype=np.int64)
    if np.unique(y).size < 2:
        raise InvalidArgumentError("training data must contain at least two classes")
    x = _as_inputs(features, cfg.features)
    model = ClassifierR(x.shape[1:], cfg)
    opt = Adam(cfg.lr)
    group = model.param_group()
    rng = np.random.default_rng(cfg.seed + 1)
    for _ in range(cfg.epochs):
        order = rng.permutation(len(y))
        losses = []
        for lo in range(0, len(y), cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            losses.append(model.loss_and_grads(x[idx], y[idx]))
            opt.step(group)
        model.history.append(float(np.mean(losses)))
    model.trained = cfg.epochs > 0
    return model.freeze()


def infer(classifier: ClassifierR, fm: Union[FeatureMap, np.ndarray]) -> Tuple[np.ndarray, int]:
    """Class probabilities and the argmax label for one feature map."""
    spec = fm.spectrogram if isinstance(fm, FeatureMap) else np.asarray(fm, float)
    if spec.shape != classifier.input_shape:
        raise InvalidArgumentError(f"feature map {spec.shape} != {classifier.input_shape}")
    p = classifier.predict_proba(standardized_input(spec, classifier.cfg.features))[0]
    return p, int(np.argmax(p))


def infer_batch(classifier: ClassifierR, spectrograms: np.ndarray) -> np.ndarray:
    return classifier.predict(standardized_input(np.asarray(spectrograms, float),
                                                 classifier.cfg.features))
