"""Keyed gated sub-model turning encrypted CSI plus a key into surrogate CSI.

Structure: a gating network reads a coarse power profile of the input and the
key embedding and opens a subset of V expert encoders. Each expert removes a
learned low-rank subspace (where the static channel lives after mixing),
rescales per packet, and runs a small 1-D conv stack. The gated sum of expert
outputs plus a transposed-conv decoder correction is the surrogate series.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from ..crypto import EncryptedCsiSeries, KeyPhi
from ..errors import ContractViolationError, InvalidArgumentError, UninitializedModelError
from ..timing import TemporalSchedule
from .classifier import ClassifierR
from .features import FeaturePipeline, Resampler
from .keys import key_embed
from .nn import (Conv1D, ConvTranspose1D, Dense, Dropout, Layer, ParamGroup, ReLU, RMSprop,
                 Sequential, cross_entropy, load_checkpoint, save_checkpoint)


@dataclass(frozen=True)
class SubmodelConfig:
    """Architecture of F.

    Attributes:
        num_experts: V, the number of gated encoders.
        embed_dim: Length of the key embedding fed to the gate.
        gate_segments: Segments in the pooled log-power profile fed to the gate.
        gate_width: Width of the gate's residual block.
        gate_dense: Widths of the dense layers after the residual block (the
            last layer, of width V, is added automatically).
        encoder_channels: Output channels of the four encoder conv layers.
        decoder_channels: Output channels of the five decoder layers; the last
            must be 2 (real and imaginary parts).
        subspace_rank: Rank of the subspace each expert projects out.
        dropout: Dropout rate on the gated encoder features.
    """

    num_experts: int = 8
    embed_dim: int = 128
    gate_segments: int = 16
    gate_width: int = 64
    gate_dense: Tuple[int, ...] = (32, 32, 32)
    encoder_channels: Tuple[int, ...] = (4, 8, 8, 16)
    decoder_channels: Tuple[int, ...] = (8, 4, 4, 2, 2)
    kernel: int = 3
    subspace_rank: int = 8
    dropout: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.num_experts < 1:
            raise InvalidArgumentError("num_experts must be >= 1")
        if len(self.encoder_channels) != 4 or len(self.decoder_channels) != 5:
            raise InvalidArgumentError("expected 4 encoder and 5 decoder layers")
        if self.decoder_channels[-1] != 2:
            raise InvalidArgumentError("decoder must end with 2 channels")


class Demix(Layer):
    """``z = u * (x - C C^H x)`` per sample, all complex.

    ``C`` (M x K, orthonormal columns) is a running estimate of the dominant
    subspace of the inputs routed to this expert, refreshed by block power
    iteration during training rather than by gradient descent. After mixing,
    the static channel of each encryption matrix lives in such a subspace.
    ``u`` (per packet) is trained by gradient and starts at zero so a fresh
    expert outputs nothing. Complex arrays are stored as stacked real and
    imaginary parts.
    """

    kind = "demix"

    def __init__(self, length: int, rank: int, rng: np.random.Generator):
        super().__init__()
        self.length, self.rank = length, rank
        self.params["u"] = np.zeros((2, length))
        q, _ = np.linalg.qr(rng.standard_normal((length, rank))
                            + 1j * rng.standard_normal((length, rank)))
        self.buffers = {"basis": np.stack([q.real, q.imag])}
        self.zero_grad()

    @property
    def basis(self) -> np.ndarray:
        return self.buffers["basis"][0] + 1j * self.buffers["basis"][1]

    def update_subspace(self, x: np.ndarray, weights: np.ndarray, momentum: float) -> None:
        """One power-iteration step on a running weighted covariance of ``x`` (B, M)."""
        w = np.asarray(weights, float)
        if w.sum() <= 0:
            return
        c = self.basis
        cov_c = x.T @ ((w[:, None] * np.conj(x)) @ c) / w.sum()  # (M, K)
        scale = np.linalg.norm(cov_c)
        if scale == 0:
            return
        q, _ = np.linalg.qr(momentum * c * scale / np.sqrt(self.rank) + (1.0 - momentum) * cov_c)
        self.buffers["basis"] = np.stack([q.real, q.imag])

    def forward(self, x, train=False):
        c = self.basis
        u = self.params["u"][0] + 1j * self.params["u"][1]
        r = x - (c @ (c.conj().T @ x.T)).T
        self._cache = (c, u, r)
        return u * r

    def residual_energy(self) -> np.ndarray:
        """Per-sample energy left after the projection, from the last forward."""
        r = self._cache[2]
        return np.sum(r.real ** 2 + r.imag ** 2, axis=1)

    def backward(self, g):
        c, u, r = self._cache
        gu = np.sum(np.conj(r) * g, axis=0)
        self.grads["u"] += np.stack([gu.real, gu.imag])
        gr = np.conj(u) * g
        return gr - (c @ (c.conj().T @ gr.T)).T

    def config(self):
        return {"length": self.length, "rank": self.rank}


def _to_channels(z: np.ndarray) -> np.ndarray:
    return np.stack([z.real, z.imag], axis=1)


def _from_channels(x: np.ndarray) -> np.ndarray:
    return x[:, 0] + 1j * x[:, 1]


def gate_profile(x: np.ndarray, segments: int) -> np.ndarray:
    """Pooled log-power over equal segments of rms-normalized series (B, M)."""
    m = x.shape[1]
    edges = np.linspace(0, m, segments + 1).astype(int)
    p = np.abs(x) ** 2
    pooled = np.stack([p[:, a:b].mean(axis=1) if b > a else np.zeros(len(x))
                       for a, b in zip(edges[:-1], edges[1:])], axis=1)
    return np.log(pooled + 1e-12)


def _rms(series: np.ndarray) -> np.ndarray:
    r = np.sqrt(np.mean(np.abs(series) ** 2, axis=1))
    return np.where(r > 0, r, 1.0)


@dataclass
class ForwardState:
    gates: np.ndarray
    probs: np.ndarray
    expert_out: List[np.ndarray]
    expert_feat: List[np.ndarray]
    output: np.ndarray


class SubmodelF:
    """Gated mixture of demixing encoders with a shared decoder."""

    def __init__(self, num_packets: int, cfg: SubmodelConfig = SubmodelConfig()):
        self.cfg = cfg
        self.num_packets = num_packets
        rng = np.random.default_rng(cfg.seed)
        gin = cfg.gate_segments + cfg.embed_dim
        w = cfg.gate_width
        self.res_main = Sequential([Dense(gin, w, rng), ReLU(), Dense(w, w, rng)])
        self.res_skip = Dense(gin, w, rng, bias=False)
        self.res_act = ReLU()
        dense: List[Layer] = []
        widths = (w,) + tuple(cfg.gate_dense)
        for a, b in zip(widths[:-1], widths[1:]):
            dense += [Dense(a, b, rng), ReLU()]
        dense.append(Dense(widths[-1], cfg.num_experts, rng))
        self.gate_head = Sequential(dense)
        self.demix: List[Demix] = []
        self.encoders: List[Sequential] = []
        k = cfg.kernel
        for _ in range(cfg.num_experts):
            self.demix.append(Demix(num_packets, cfg.subspace_rank, rng))
            layers: List[Layer] = []
            chans = (2,) + tuple(cfg.encoder_channels)
            for a, b in zip(chans[:-1], chans[1:]):
                layers += [Conv1D(a, b, k, rng), ReLU()]
            self.encoders.append(Sequential(layers))
        dec: List[Layer] = []
        chans = (cfg.encoder_channels[-1],) + tuple(cfg.decoder_channels)
        n = len(chans) - 1
        for i, (a, b) in enumerate(zip(chans[:-1], chans[1:])):
            last = i == n - 1
            dec.append(ConvTranspose1D(a, b, k, rng, bias=not last, zero_init=last))
            if not last:
                dec.append(ReLU())
        self.decoder = Sequential(dec)
        self.dropout = Dropout(cfg.dropout, seed=cfg.seed + 7)
        self.trained = False

    # ------------------------------------------------------------ parameters
    def _named_layers(self) -> List[Tuple[str, Layer]]:
        out: List[Tuple[str, Layer]] = []
        for i, l in enumerate(self.res_main.layers):
            out.append((f"gate.res.{i}", l))
        out.append(("gate.skip", self.res_skip))
        for i, l in enumerate(self.gate_head.layers):
            out.append((f"gate.head.{i}", l))
        for e, (dm, enc) in enumerate(zip(self.demix, self.encoders)):
            out.append((f"expert.{e}.demix", dm))
            for i, l in enumerate(enc.layers):
                out.append((f"expert.{e}.conv.{i}", l))
        for i, l in enumerate(self.decoder.layers):
            out.append((f"decoder.{i}", l))
        return out

    def named_parameters(self) -> List[Tuple[str, str, np.ndarray]]:
        """Trainable parameters plus running buffers, in checkpoint order."""
        out = []
        for n, l in self._named_layers():
            out += [(f"{n}.{k}", l.kind, l.params[k]) for k in sorted(l.params)]
            bufs = getattr(l, "buffers", {})
            out += [(f"{n}.{k}", l.kind, bufs[k]) for k in sorted(bufs)]
        return out

    def param_entries(self, include_gate: bool = True) -> List[Tuple[str, Layer, str]]:
        return [(f"{n}.{k}", l, k) for n, l in self._named_layers()
                if include_gate or not n.startswith("gate.") for k in sorted(l.params)]

    def zero_grad(self):
        for _, l in self._named_layers():
            l.zero_grad()

    def set_demix_lr_scale(self, scale: float):
        for dm in self.demix:
            dm.lr_scale = scale

    def update_subspaces(self, x: np.ndarray, gates: np.ndarray, momentum: float):
        for e, dm in enumerate(self.demix):
            dm.update_subspace(x, gates[:, e], momentum)

    # ------------------------------------------------------------ passes
    def gate_logits(self, x: np.ndarray, embeds: np.ndarray) -> np.ndarray:
        feats = np.concatenate([gate_profile(x, self.cfg.gate_segments), 2 * embeds - 1], axis=1)
        h = self.res_act.forward(self.res_main.forward(feats) + self.res_skip.forward(feats))
        return self.gate_head.forward(h)

    def gates_from_logits(self, logits: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        probs = 1.0 / (1.0 + np.exp(-logits))
        gates = (probs > 0.5).astype(float)
        closed = gates.sum(axis=1) == 0
        gates[closed, np.argmax(logits[closed], axis=1)] = 1.0
        return gates, probs

    def forward(self, x: np.ndarray, gates: np.ndarray, train: bool = False) -> ForwardState:
        """Run experts and decoder for normalized inputs ``x`` (B, M) and fixed gates."""
        b, m = x.shape
        if m != self.num_packets:
            raise InvalidArgumentError(f"series length {m} != model length {self.num_packets}")
        zsum = np.zeros((b, m), dtype=complex)
        fsum = None
        outs, feats = [], []
        for e, (dm, enc) in enumerate(zip(self.demix, self.encoders)):
            z = dm.forward(x, train)
            f = enc.forward(_to_channels(z), train)
            outs.append(z)
            feats.append(f)
            ge = gates[:, e]
            zsum += ge[:, None] * z
            fsum = ge[:, None, None] * f if fsum is None else fsum + ge[:, None, None] * f
        d = self.decoder.forward(self.dropout.forward(fsum, train), train)
        out = zsum + _from_channels(d)
        return ForwardState(gates, np.zeros_like(gates), outs, feats, out)

    def backward(self, state: ForwardState, g_out: np.ndarray) -> np.ndarray:
        """Back-propagate a complex output gradient; returns dL/dgate (B, V)."""
        g_d = self.decoder.backward(_to_channels(g_out))
        g_f = self.dropout.backward(g_d)
        g_gates = np.zeros_like(state.gates)
        for e, (dm, enc) in enumerate(zip(self.demix, self.encoders)):
            ge = state.gates[:, e]
            g_gates[:, e] = (np.sum((np.conj(g_out) * state.expert_out[e]).real, axis=1)
                             + np.sum(g_f * state.expert_feat[e], axis=(1, 2)))
            if not np.any(ge):
                continue
            gz_c = enc.backward(ge[:, None, None] * g_f)
            gz = ge[:, None] * g_out + _from_channels(gz_c)
            dm.backward(gz)
        return g_gates

    def gate_backward(self, g_gates: np.ndarray, probs: np.ndarray):
        """Straight-through: treat the binary gate as its sigmoid probability."""
        g_logit = g_gates * probs * (1.0 - probs)
        g_h = self.res_act.backward(self.gate_head.backward(g_logit))
        self.res_main.backward(g_h)
        self.res_skip.backward(g_h)

    def _prepare(self, series: np.ndarray, keys: Sequence[KeyPhi]):
        series = np.atleast_2d(np.asarray(series, dtype=complex))
        rms = _rms(series)
        x = series / rms[:, None]
        embeds = np.stack([key_embed(k, self.cfg.embed_dim) for k in keys])
        return x, rms, embeds

    def infer_gates(self, series: np.ndarray, keys: Sequence[KeyPhi]) -> np.ndarray:
        x, _, emb = self._prepare(series, keys)
        return self.gates_from_logits(self.gate_logits(x, emb))[0]

    # ------------------------------------------------------------ io
    def save(self, path: Union[str, Path]) -> None:
        c = self.cfg
        meta = {"model": "SubmodelF", "num_packets": self.num_packets,
                "num_experts": c.num_experts, "embed_dim": c.embed_dim,
                "gate_segments": c.gate_segments, "gate_width": c.gate_width,
                "gate_dense": list(c.gate_dense), "encoder_channels": list(c.encoder_channels),
                "decoder_channels": list(c.decoder_channels), "kernel": c.kernel,
                "subspace_rank": c.subspace_rank, "dropout": c.dropout, "seed": c.seed,
                "trained": self.trained}
        save_checkpoint(path, meta, self.named_parameters())

    @classmethod
    def load(cls, path: Union[str, Path]) -> "SubmodelF":
        meta, params = load_checkpoint(path)
        cfg = SubmodelConfig(
            num_experts=meta["num_experts"], embed_dim=meta["embed_dim"],
            gate_segments=meta["gate_segments"], gate_width=meta["gate_width"],
            gate_dense=tuple(meta["gate_dense"]),
            encoder_channels=tuple(meta["encoder_channels"]),
            decoder_channels=tuple(meta["decoder_channels"]), kernel=meta["kernel"],
            subspace_rank=meta["subspace_rank"], dropout=meta["dropout"], seed=meta["seed"])
        model = cls(meta["num_packets"], cfg)
        for name, _, a in model.named_parameters():
            a[...] = params[name]
        model.trained = bool(meta.get("trained", True))
        return model


def surrogate(model: SubmodelF, enc: Union[EncryptedCsiSeries, np.ndarray], phi: KeyPhi
              ) -> np.ndarray:
    """Surrogate CSI for one encrypted series, in the input's amplitude units."""
    if not model.trained:
        raise UninitializedModelError("sub-model has not been trained")
    values = enc.values if isinstance(enc, EncryptedCsiSeries) else np.asarray(enc)
    return surrogate_batch(model, values[None], [phi])[0]


def surrogate_batch(model: SubmodelF, series: np.ndarray, keys: Sequence[KeyPhi],
                    batch: int = 256) -> np.ndarray:
    if not model.trained:
        raise UninitializedModelError("sub-model has not been trained")
    series = np.atleast_2d(np.asarray(series, dtype=complex))
    out = np.empty_like(series)
    for lo in range(0, len(series), batch):
        x, rms, emb = model._prepare(series[lo:lo + batch], keys[lo:lo + batch])
        gates, _ = model.gates_from_logits(model.gate_logits(x, emb))
        out[lo:lo + batch] = model.forward(x, gates).output * rms[:, None]
    return out


# ---------------------------------------------------------------- training

@dataclass
class SubmodelDataset:
    """Encrypted series with their keys, labels and packet schedules.

    ``targets`` (optional) are clean dynamic-path series for the auxiliary
    reconstruction loss, in the same units as ``series``.
    """

    series: np.ndarray
    keys: List[KeyPhi]
    labels: np.ndarray
    schedules: List[TemporalSchedule]
    targets: Optional[np.ndarray] = None

    def __post_init__(self):
        self.series = np.atleast_2d(np.asarray(self.series, dtype=complex))
        self.labels = np.asarray(self.labels, dtype=np.int64)
        n = len(self.series)
        if not (len(self.keys) == len(self.labels) == len(self.schedules) == n):
            raise InvalidArgumentError("dataset fields have mismatched lengths")
        if self.targets is not None:
            self.targets = np.asarray(self.targets, dtype=complex)
            if self.targets.shape != self.series.shape:
                raise InvalidArgumentError("targets must match series shape")

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class SubmodelTrainConfig:
    """Training settings.

    Attributes:
        lr_decay: Multiplicative learning-rate factor applied after each epoch.
        demix_lr_scale: Learning-rate multiplier for the demixing parameters.
        recon_weight: Weight of the auxiliary reconstruction loss.
    """

    epochs: int = 12
    batch_size: int = 128
    lr: float = 1e-3
    lr_decay: float = 0.85
    demix_lr_scale: float = 50.0
    recon_weight: float = 30.0
    subspace_momentum: float = 0.5
    seed: int = 0


@dataclass
class TrainRun:
    """Record of a sub-model training run.

    ``loss_curve[0]`` is the cross-entropy before any update; entry k is the
    cross-entropy over the training set after epoch k.
    """

    loss_curve: List[float]
    epochs: int
    batch_size: int
    lr_schedule: List[float]
    seed: int
    grad_check: Optional["GradCheckReport"] = None
    param_digest_before: str = ""
    param_digest_after: str = ""


class _Objective:
    """Loss of F composed with the feature pipeline and the frozen classifier."""

    def __init__(self, model: SubmodelF, classifier: ClassifierR, data: SubmodelDataset,
                 recon_weight: float):
        self.model, self.classifier, self.data = model, classifier, data
        self.recon_weight = recon_weight if data.targets is not None else 0.0
        sched = data.schedules[0]
        self.pipe = FeaturePipeline(classifier.cfg.features, model.num_packets,
                                    sched.base_interval_s)
        self.resamplers = [None if s.is_regular else Resampler.from_schedule(s)
                           for s in data.schedules]
        x, rms, emb = model._prepare(data.series, data.keys)
        self.x, self.rms, self.emb = x, rms, emb
        self.targets = None if data.targets is None else data.targets / rms[:, None]

    def _resamplers(self, idx):
        rs = [self.resamplers[i] for i in idx]
        if all(r is None for r in rs):
            return None
        m = self.model.num_packets
        ident = Resampler(np.minimum(np.arange(m), m - 2), (np.arange(m) == m - 1).astype(float))
        return [ident if r is None else r for r in rs]

    def gates(self, idx):
        logits = self.model.gate_logits(self.x[idx], self.emb[idx])
        return self.model.gates_from_logits(logits)

    def loss(self, idx, gates, train: bool, backward: bool) -> Tuple[float, float]:
        """Returns (total loss, cross-entropy) and, if asked, accumulates gradients."""
        st = self.model.forward(self.x[idx], gates, train)
        feats = self.pipe.forward(st.output, self._resamplers(idx))
        logits = self.classifier.logits(feats)
        ce, g_logits = cross_entropy(logits, self.data.labels[idx])
        total = ce
        g_out = None
        if self.recon_weight > 0:
            t = self.targets[idx]
            err = st.output - t
            den = max(float(np.sum(np.abs(t) ** 2)), 1e-300)
            total += self.recon_weight * float(np.sum(np.abs(err) ** 2)) / den
            g_out = self.recon_weight * 2.0 * err / den
        if backward:
            g_feat = self.classifier.backward_input(g_logits)
            g = self.pipe.backward(g_feat)
            g_out = g if g_out is None else g_out + g
            self._last_gate_grad = self.model.backward(st, g_out)
        return total, ce

    def mean_ce(self, batch: int = 256) -> float:
        n = len(self.data)
        acc = 0.0
        for lo in range(0, n, batch):
            idx = np.arange(lo, min(n, lo + batch))
            g, _ = self.gates(idx)
            acc += self.loss(idx, g, False, False)[1] * len(idx)
        return acc / n


def train_submodel(model: SubmodelF, classifier: ClassifierR, data: SubmodelDataset,
                   cfg: SubmodelTrainConfig = SubmodelTrainConfig()) -> TrainRun:
    """Fit F so that the frozen classifier recognises its surrogate output.

    Only F's parameters change; binary gates are trained with a
    straight-through estimator.

    Raises:
        ContractViolationError: if the classifier is not frozen.
        InvalidArgumentError: if the data uses fewer than two keys.
    """
    if not classifier.frozen:
        raise ContractViolationError("classifier must be frozen before sub-model training")
    if len({k.hex for k in data.keys}) < 2:
        raise InvalidArgumentError("training data must span at least two encryption matrices")
    digest = classifier.param_digest()
    model.set_demix_lr_scale(cfg.demix_lr_scale)
    obj = _Objective(model, classifier, data, cfg.recon_weight)
    group = ParamGroup(model.param_entries())
    opt = RMSprop(cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    curve = [obj.mean_ce()]
    lrs = []
    lr = cfg.lr
    n = len(data)
    for _ in range(cfg.epochs):
        lrs.append(lr)
        order = rng.permutation(n)
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            model.zero_grad()
            logits = model.gate_logits(obj.x[idx], obj.emb[idx])
            gates, probs = model.gates_from_logits(logits)
            model.update_subspaces(obj.x[idx], gates, cfg.subspace_momentum)
            obj.loss(idx, gates, True, True)
            model.gate_backward(obj._last_gate_grad, probs)
            opt.step(group, lr)
        curve.append(obj.mean_ce())
        if not np.isfinite(curve[-1]):
            raise InvalidArgumentError("sub-model training diverged")
        lr *= cfg.lr_decay
    model.trained = True
    after = classifier.param_digest()
    if after != digest:
        raise ContractViolationError("classifier parameters changed during sub-model training")
    return TrainRun(curve, cfg.epochs, cfg.batch_size, lrs, cfg.seed,
                    param_digest_before=digest, param_digest_after=after)


# ---------------------------------------------------------------- gradient checks

@dataclass(frozen=True)
class GradCheckReport:
    max_rel_error: float
    probes: int
    no_probes: bool
    passed: bool


class LinearToy:
    """One dense layer with squared-error loss; its gradient is exact."""

    def __init__(self, n_in: int = 5, n_out: int = 3, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.layer = Dense(n_in, n_out, rng)
        self.layer.params["b"] = rng.standard_normal(n_out)
        self.x = rng.standard_normal((7, n_in))
        self.y = rng.standard_normal((7, n_out))

    def loss_and_grad(self) -> float:
        self.layer.zero_grad()
        r = self.layer.forward(self.x) - self.y
        self.layer.backward(r)
        return 0.5 * float(np.sum(r * r))

    def loss(self) -> float:
        r = self.layer.forward(self.x) - self.y
        return 0.5 * float(np.sum(r * r))

    def entries(self):
        return [("W", self.layer, "W"), ("b", self.layer, "b")]


def _probe(loss_fn, entries, analytic, probe_count, rng, step, floor, tol):
    sizes = [e[1].params[e[2]].size for e in entries]
    total = sum(sizes)
    # roundoff in the difference quotient is about eps*|loss|/step; gradients
    # below that level divided by tol cannot be resolved to tol
    noise = np.finfo(float).eps * max(abs(loss_fn()), 1.0) / step
    floor = max(floor, noise / tol)
    worst = 0.0
    for _ in range(probe_count):
        flat = int(rng.integers(total))
        j = 0
        while flat >= sizes[j]:
            flat -= sizes[j]
            j += 1
        _, layer, key = entries[j]
        p = layer.params[key].reshape(-1)
        old = p[flat]
        p[flat] = old + step
        lp = loss_fn()
        p[flat] = old - step
        lm = loss_fn()
        p[flat] = old
        fd = (lp - lm) / (2 * step)
        worst = max(worst, abs(fd - analytic[j][flat]) / max(abs(fd), abs(analytic[j][flat]), floor))
    return worst


def grad_check(model, probe_count: int = 100, classifier: Optional[ClassifierR] = None,
               data: Optional[SubmodelDataset] = None, seed: int = 0, step: float = 1e-6,
               floor: float = 1e-7, tol: float = 1e-4) -> GradCheckReport:
    """Compare back-propagated gradients with central differences.

    For a SubmodelF the check runs on a copy whose zero-initialised parameters
    are randomised (so every path carries gradient), gates are frozen at their
    forward values and dropout is off. Gate-network parameters are not probed
    because with frozen gates their true gradient is zero. Without a
    classifier and dataset, a fixed random quadratic loss on the output is used.
    """
    if probe_count <= 0:
        return GradCheckReport(0.0, 0, True, True)
    rng = np.random.default_rng(seed)
    if isinstance(model, LinearToy):
        model.loss_and_grad()
        entries = model.entries()
        analytic = [l.grads[k].reshape(-1).copy() for _, l, k in entries]
        err = _probe(model.loss, entries, analytic, probe_count, rng, step, floor, tol)
        return GradCheckReport(err, probe_count, False, err < tol)
    if isinstance(model, ClassifierR):
        m = copy.deepcopy(model)
        for _, _, a in m.named_parameters():
            a.flags.writeable = True
        x = rng.standard_normal((4,) + m.input_shape)
        y = rng.integers(0, m.cfg.num_classes, 4)
        group = m.param_group()
        m.loss_and_grads(x, y)
        entries = group.entries
        analytic = [l.grads[k].reshape(-1).copy() for _, l, k in entries]
        loss_fn = lambda: cross_entropy(m.logits(x), y)[0]
        err = _probe(loss_fn, entries, analytic, probe_count, rng, step, floor, tol)
        return GradCheckReport(err, probe_count, False, err < tol)
    if not isinstance(model, SubmodelF):
        raise InvalidArgumentError(f"unsupported model type {type(model).__name__}")
    m = copy.deepcopy(model)
    for dm in m.demix:
        if not np.any(dm.params["u"]):
            dm.params["u"][...] = rng.standard_normal(dm.params["u"].shape)
    last = m.decoder.layers[-1]
    if not np.any(last.params["Wt"]):
        last.params["Wt"][...] = 0.3 * rng.standard_normal(last.params["Wt"].shape)
    entries = m.param_entries(include_gate=False)
    # zero biases put units fed by all-zero inputs exactly on a ReLU kink,
    # where central differences see half the slope
    for _, layer, key in entries:
        a = layer.params[key]
        if not np.any(a):
            a[...] = 0.1 * rng.standard_normal(a.shape)
    if classifier is not None and data is not None:
        obj = _Objective(m, classifier, data, 1.0)
        idx = np.arange(min(4, len(data)))
        gates, _ = obj.gates(idx)
        m.zero_grad()
        obj.loss(idx, gates, False, True)
        loss_fn = lambda: obj.loss(idx, gates, False, False)[0]
    else:
        mm = m.num_packets
        x = rng.standard_normal((3, mm)) + 1j * rng.standard_normal((3, mm))
        w = rng.standard_normal((3, mm)) + 1j * rng.standard_normal((3, mm))
        emb = rng.random((3, m.cfg.embed_dim))
        gates, _ = m.gates_from_logits(m.gate_logits(x, emb))

        def loss_fn():
            out = m.forward(x, gates).output
            return float(np.sum((np.conj(w) * out).real) + 0.5 * np.sum(np.abs(out) ** 2))

        m.zero_grad()
        st = m.forward(x, gates)
        m.backward(st, w + st.output)
    analytic = [l.grads[k].reshape(-1).copy() for _, l, k in entries]
    err = _probe(loss_fn, entries, analytic, probe_count, rng, step, floor, tol)
    return GradCheckReport(err, probe_count, False, err < tol)
