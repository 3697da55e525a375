"""Small differentiable layer library in numpy (forward and backward passes)."""
from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import InvalidArgumentError

CKPT_MAGIC = b"MCNN1"


def xavier_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    """Base layer; ``params`` and ``grads`` share keys."""

    kind = "layer"

    def __init__(self):
        self.params: Dict[str, np.ndarray] = {}
        self.grads: Dict[str, np.ndarray] = {}
        self.lr_scale = 1.0

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, g: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def zero_grad(self):
        for k, v in self.params.items():
            self.grads[k] = np.zeros_like(v)

    def config(self) -> dict:
        return {}


class Dense(Layer):
    kind = "dense"

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, bias: bool = True):
        super().__init__()
        self.n_in, self.n_out, self.bias = n_in, n_out, bias
        self.params["W"] = xavier_uniform(rng, (n_in, n_out), n_in, n_out)
        if bias:
            self.params["b"] = np.zeros(n_out)
        self.zero_grad()

    def forward(self, x, train=False):
        self._x = x
        y = x @ self.params["W"]
        if self.bias:
            y = y + self.params["b"]
        return y

    def backward(self, g):
        self.grads["W"] += self._x.T @ g
        if self.bias:
            self.grads["b"] += g.sum(axis=0)
        return g @ self.params["W"].T

    def config(self):
        return {"n_in": self.n_in, "n_out": self.n_out, "bias": self.bias}


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, train=False):
        self._mask = x > 0
        return x * self._mask

    def backward(self, g):
        return g * self._mask


class Dropout(Layer):
    """Inverted dropout; the mask stream is seeded so training is reproducible."""

    kind = "dropout"

    def __init__(self, rate: float, seed: int = 0):
        super().__init__()
        self.rate = rate
        self.rng = np.random.default_rng(seed)
        self.frozen_mask: Optional[np.ndarray] = None

    def forward(self, x, train=False):
        if not train or self.rate == 0:
            self._mask = None
            return x
        if self.frozen_mask is not None and self.frozen_mask.shape == x.shape:
            mask = self.frozen_mask
        else:
            mask = (self.rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        self._mask = mask
        return x * mask

    def backward(self, g):
        return g if self._mask is None else g * self._mask

    def config(self):
        return {"rate": self.rate}


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x, train=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, g):
        return g.reshape(self._shape)


class AvgPool2D(Layer):
    """Non-overlapping 2x2 average pooling; trailing odd rows/columns are dropped."""

    kind = "avgpool2d"

    def forward(self, x, train=False):
        self._shape = x.shape
        b, c, h, w = x.shape
        h2, w2 = h // 2, w // 2
        xs = x[:, :, :2 * h2, :2 * w2].reshape(b, c, h2, 2, w2, 2)
        return xs.mean(axis=(3, 5))

    def backward(self, g):
        b, c, h, w = self._shape
        h2, w2 = g.shape[2], g.shape[3]
        out = np.zeros(self._shape)
        up = np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) / 4.0
        out[:, :, :2 * h2, :2 * w2] = up
        return out


class Conv1D(Layer):
    """Stride-1 1-D convolution, input (B, C, L), 'same' padding for odd k."""

    kind = "conv1d"

    def __init__(self, c_in: int, c_out: int, k: int, rng: np.random.Generator,
                 bias: bool = True, pad: Optional[int] = None):
        super().__init__()
        self.c_in, self.c_out, self.k, self.bias = c_in, c_out, k, bias
        self.pad = (k - 1) // 2 if pad is None else pad
        self.params["W"] = xavier_uniform(rng, (c_in * k, c_out), c_in * k, c_out * k)
        if bias:
            self.params["b"] = np.zeros(c_out)
        self.zero_grad()

    def _weight(self):
        return self.params["W"]

    def forward(self, x, train=False):
        p, k = self.pad, self.k
        xp = np.pad(x, ((0, 0), (0, 0), (p, p)))
        self._in_len = x.shape[2]
        cols = sliding_window_view(xp, k, axis=2)  # (B, C, Lout, k)
        b, c, lout, _ = cols.shape
        cols = cols.transpose(0, 2, 1, 3).reshape(b, lout, c * k)
        self._cols = cols
        y = cols @ self._weight()
        if self.bias:
            y = y + self.params["b"]
        return y.transpose(0, 2, 1)

    def _backward_cols(self, g):
        gt = g.transpose(0, 2, 1)  # (B, Lout, O)
        gw = np.einsum("blc,blo->co", self._cols, gt, optimize=True)
        gcols = gt @ self._weight().T  # (B, Lout, C*k)
        b, lout, _ = gcols.shape
        gcols = gcols.reshape(b, lout, self.c_in, self.k)
        p, k = self.pad, self.k
        gxp = np.zeros((b, self.c_in, self._in_len + 2 * p))
        for j in range(k):
            gxp[:, :, j:j + lout] += gcols[:, :, :, j].transpose(0, 2, 1)
        gx = gxp[:, :, p:p + self._in_len]
        return gw, gt.sum(axis=(0, 1)), gx

    def backward(self, g):
        gw, gb, gx = self._backward_cols(g)
        self.grads["W"] += gw
        if self.bias:
            self.grads["b"] += gb
        return gx

    def config(self):
        return {"c_in": self.c_in, "c_out": self.c_out, "k": self.k, "bias": self.bias,
                "pad": self.pad}


class ConvTranspose1D(Conv1D):
    """Stride-1 transposed 1-D convolution.

    Stored weight has the transposed layout (c_in, c_out, k); the forward pass
    runs an ordinary convolution with the flipped kernel and ``k-1-pad`` padding.
    """

    kind = "convtranspose1d"

    def __init__(self, c_in: int, c_out: int, k: int, rng: np.random.Generator,
                 bias: bool = True, pad: Optional[int] = None, zero_init: bool = False):
        Layer.__init__(self)
        self.c_in, self.c_out, self.k, self.bias = c_in, c_out, k, bias
        self.tpad = (k - 1) // 2 if pad is None else pad
        self.pad = k - 1 - self.tpad
        w = np.zeros((c_in, c_out, k)) if zero_init else \
            xavier_uniform(rng, (c_in, c_out, k), c_in * k, c_out * k)
        self.params["Wt"] = w
        if bias:
            self.params["b"] = np.zeros(c_out)
        self.zero_grad()

    def _weight(self):
        wt = self.params["Wt"]  # (i, o, k)
        # equivalent conv weight: (i*k, o) with flipped taps
        return wt[:, :, ::-1].transpose(0, 2, 1).reshape(self.c_in * self.k, self.c_out)

    def backward(self, g):
        gw, gb, gx = self._backward_cols(g)
        gw = gw.reshape(self.c_in, self.k, self.c_out).transpose(0, 2, 1)[:, :, ::-1]
        self.grads["Wt"] += gw
        if self.bias:
            self.grads["b"] += gb
        return gx

    def config(self):
        return {"c_in": self.c_in, "c_out": self.c_out, "k": self.k, "bias": self.bias,
                "pad": self.tpad}


class Conv2D(Layer):
    """Stride-1 2-D convolution with 'same' padding, input (B, C, H, W)."""

    kind = "conv2d"

    def __init__(self, c_in: int, c_out: int, k: int, rng: np.random.Generator,
                 bias: bool = True):
        super().__init__()
        self.c_in, self.c_out, self.k, self.bias = c_in, c_out, k, bias
        self.pad = (k - 1) // 2
        fan_in, fan_out = c_in * k * k, c_out * k * k
        self.params["W"] = xavier_uniform(rng, (c_in * k * k, c_out), fan_in, fan_out)
        if bias:
            self.params["b"] = np.zeros(c_out)
        self.zero_grad()

    def forward(self, x, train=False):
        p, k = self.pad, self.k
        self._in_shape = x.shape
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        cols = sliding_window_view(xp, (k, k), axis=(2, 3))  # (B, C, H, W, k, k)
        b, c, h, w = cols.shape[:4]
        cols = cols.transpose(0, 2, 3, 1, 4, 5).reshape(b, h, w, c * k * k)
        self._cols = cols
        y = cols @ self.params["W"]
        if self.bias:
            y = y + self.params["b"]
        return y.transpose(0, 3, 1, 2)

    def backward(self, g):
        gt = g.transpose(0, 2, 3, 1)  # (B, H, W, O)
        self.grads["W"] += np.einsum("bhwc,bhwo->co", self._cols, gt, optimize=True)
        if self.bias:
            self.grads["b"] += gt.sum(axis=(0, 1, 2))
        gcols = gt @ self.params["W"].T
        b, h, w, _ = gcols.shape
        k, p = self.k, self.pad
        gcols = gcols.reshape(b, h, w, self.c_in, k, k)
        gxp = np.zeros((b, self.c_in, h + 2 * p, w + 2 * p))
        for i in range(k):
            for j in range(k):
                gxp[:, :, i:i + h, j:j + w] += gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        return gxp[:, :, p:p + h, p:p + w]

    def config(self):
        return {"c_in": self.c_in, "c_out": self.c_out, "k": self.k, "bias": self.bias}


class Sequential(Layer):
    kind = "sequential"

    def __init__(self, layers: Sequence[Layer]):
        super().__init__()
        self.layers = list(layers)

    def forward(self, x, train=False):
        for layer in self.layers:
            x = layer.forward(x, train)
        return x

    def backward(self, g):
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def named_layers(self, prefix: str = "") -> List[Tuple[str, Layer]]:
        return [(f"{prefix}{i}", l) for i, l in enumerate(self.layers)]


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    p = softmax(logits)
    n = logits.shape[0]
    loss = float(-np.mean(np.log(np.maximum(p[np.arange(n), labels], 1e-300))))
    g = p.copy()
    g[np.arange(n), labels] -= 1.0
    return loss, g / n


# ------------------------------------------------------------------ optimizers

class ParamGroup:
    """Flat view over (name, param, grad-getter, lr scale) tuples."""

    def __init__(self, entries: List[Tuple[str, Layer, str]]):
        self.entries = entries

    def arrays(self):
        return [(n, l.params[k], l.grads[k], l.lr_scale) for n, l, k in self.entries]


class RMSprop:
    def __init__(self, lr: float = 1e-3, rho: float = 0.9, eps: float = 1e-7):
        self.lr, self.rho, self.eps = lr, rho, eps
        self.state: Dict[str, np.ndarray] = {}

    def step(self, group: ParamGroup, lr: Optional[float] = None):
        lr = self.lr if lr is None else lr
        for name, p, g, scale in group.arrays():
            s = self.state.setdefault(name, np.zeros_like(p))
            s *= self.rho
            s += (1 - self.rho) * g * g
            p -= (lr * scale) * g / (np.sqrt(s) + self.eps)


class Adam:
    def __init__(self, lr: float = 1e-3, b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, group: ParamGroup, lr: Optional[float] = None):
        lr = self.lr if lr is None else lr
        self.t += 1
        for name, p, g, scale in group.arrays():
            m = self.m.setdefault(name, np.zeros_like(p))
            v = self.v.setdefault(name, np.zeros_like(p))
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            mh = m / (1 - self.b1 ** self.t)
            vh = v / (1 - self.b2 ** self.t)
            p -= (lr * scale) * mh / (np.sqrt(vh) + self.eps)


# ------------------------------------------------------------------ checkpoints

def save_checkpoint(path: Union[str, Path], meta: dict,
                    params: List[Tuple[str, str, np.ndarray]]) -> None:
    """Write ``MCNN1`` + u32 header length + JSON header + float64 LE params.

    The header carries ``meta`` and a layer table of (name, kind, shape).
    """
    table = [{"name": n, "kind": k, "shape": list(a.shape)} for n, k, a in params]
    header = json.dumps({"meta": meta, "layers": table}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for _, _, a in params:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path: Union[str, Path]) -> Tuple[dict, Dict[str, np.ndarray]]:
    blob = Path(path).read_bytes()
    if blob[:5] != CKPT_MAGIC:
        raise InvalidArgumentError(f"{path}: not a model checkpoint")
    (n,) = struct.unpack("<I", blob[5:9])
    header = json.loads(blob[9:9 + n].decode("utf-8"))
    offset = 9 + n
    out = {}
    for entry in header["layers"]:
        size = int(np.prod(entry["shape"])) if entry["shape"] else 1
        arr = np.frombuffer(blob, dtype="<f8", count=size, offset=offset).reshape(entry["shape"])
        out[entry["name"]] = arr.astype(float)
        offset += 8 * size
    return header["meta"], out


# ------------------------------------------------------------------ gradient check

def relative_error(a: float, b: float, floor: float = 1e-7) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)
