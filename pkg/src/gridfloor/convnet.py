"""Minimal convolutional network with an asymmetric-Gaussian uncertainty head.

Implements exactly the stack needed here: 3x3 SAME convolutions with elu,
2x2 average pooling (ceil mode, partial edge windows), dense layers, a
custom head activation, the asymmetric-Gaussian negative log-likelihood,
reverse-mode gradients for all of it, and an adaptive-moment optimizer.
Tensors are float64 numpy arrays shaped (batch, height, width, channels).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ShapeError, TrainingDivergedError
from .grid import GridSpec
from .ioutil import atomic_write_bytes, atomic_write_text

HALF_LOG_HALF_PI = 0.5 * math.log(math.pi / 2.0)
SIGMA_FLOOR = 0.001

# Head output order, fixed for serialization.
HEAD_FIELDS = ("mu_x", "mu_y", "sigma_x", "sigma_y", "r_x", "r_y")


# ---------------------------------------------------------------------------
# Functional pieces


def elu(x: np.ndarray) -> np.ndarray:
    """x for x > 0, exp(x) - 1 otherwise."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def elu_grad(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, 1.0, np.exp(np.minimum(x, 0.0)))


def _im2col3x3(x: np.ndarray) -> np.ndarray:
    b, h, w, c = x.shape
    xp = np.zeros((b, h + 2, w + 2, c), dtype=np.float64)
    xp[:, 1 : h + 1, 1 : w + 1, :] = x
    cols = np.empty((b, h, w, 9 * c), dtype=np.float64)
    for ky in range(3):
        for kx in range(3):
            j = (ky * 3 + kx) * c
            cols[:, :, :, j : j + c] = xp[:, ky : ky + h, kx : kx + w, :]
    return cols


def conv2d_same(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Zero-padded 3x3 convolution preserving height and width.

    x: (h, w, c_in) or (batch, h, w, c_in); kernels: (3, 3, c_in, c_out).
    """
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 3
    if squeeze:
        x = x[None, ...]
    if kernels.shape[:2] != (3, 3):
        raise ShapeError(f"kernels must be 3x3, got {kernels.shape}")
    if x.shape[3] != kernels.shape[2]:
        raise ShapeError(
            f"input has {x.shape[3]} channels, kernels expect {kernels.shape[2]}"
        )
    c_out = kernels.shape[3]
    cols = _im2col3x3(x)
    y = cols @ kernels.reshape(-1, c_out) + bias
    return y[0] if squeeze else y


def avg_pool_2x2(x: np.ndarray) -> np.ndarray:
    """Non-overlapping 2x2 mean pooling, ceil mode: edge windows average only
    the cells present."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 3
    if squeeze:
        x = x[None, ...]
    y, _ = _pool_forward(x)
    return y[0] if squeeze else y


def _pool_forward(x: np.ndarray):
    b, h, w, c = x.shape
    ho, wo = -(-h // 2), -(-w // 2)
    xp = np.zeros((b, 2 * ho, 2 * wo, c), dtype=np.float64)
    xp[:, :h, :w, :] = x
    s = xp[:, 0::2] + xp[:, 1::2]
    s = s[:, :, 0::2] + s[:, :, 1::2]
    rows = np.minimum(2, h - 2 * np.arange(ho))
    cols = np.minimum(2, w - 2 * np.arange(wo))
    counts = np.outer(rows, cols).astype(np.float64)
    return s / counts[None, :, :, None], counts


def custom_activation(raw: np.ndarray) -> np.ndarray:
    """Head activation: mu passes through, sigma and r map to exp(.) + 0.001."""
    raw = np.asarray(raw, dtype=np.float64)
    out = raw.copy()
    with np.errstate(over="ignore"):  # inf propagates to the loss, caught there
        out[..., 2:6] = np.exp(raw[..., 2:6]) + SIGMA_FLOOR
    return out


def asym_gauss_nll(x, mu, sigma, r):
    """Negative log of the normalized asymmetric Gaussian density.

    The density has width sigma left of the mode and sigma*r right of it,
    with normalization N = sqrt(2/pi) / (sigma * (1 + r)) so it integrates
    to one:

        nll = log(sigma) + log(1 + r) + 0.5*log(pi/2) + q
        q   = (x - mu)^2 / (2 sigma^2)        for x <= mu
        q   = (x - mu)^2 / (2 (sigma r)^2)    otherwise
    """
    x = np.asarray(x, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if np.any(sigma <= 0) or np.any(r <= 0):
        raise DomainError("sigma and r must be positive")
    d = x - mu
    width = np.where(d <= 0, sigma, sigma * r)
    quad = d ** 2 / (2.0 * width ** 2)
    out = np.log(sigma) + np.log1p(r) + HALF_LOG_HALF_PI + quad
    return float(out) if out.ndim == 0 else out


def asym_gauss_nll_grads(x, mu, sigma, r):
    """d nll / d (mu, sigma, r), elementwise."""
    d = np.asarray(x, dtype=np.float64) - mu
    left = d <= 0
    width2 = np.where(left, sigma, sigma * r) ** 2
    dmu = -d / width2
    dsigma = 1.0 / sigma - d ** 2 / (sigma * width2)
    dr = 1.0 / (1.0 + r) - np.where(left, 0.0, d ** 2 / (r * width2))
    return dmu, dsigma, dr


# ---------------------------------------------------------------------------
# Layers


class Conv2D:
    def __init__(self, c_in: int, c_out: int, rng):
        limit = math.sqrt(6.0 / (9 * c_in + 9 * c_out))
        self.w = rng.uniform(-limit, limit, size=(3, 3, c_in, c_out))
        self.b = np.zeros(c_out)
        self._cols = None
        self._shape = None

    name = "conv"

    def out_shape(self, shape):
        h, w, c = shape
        if c != self.w.shape[2]:
            raise ShapeError(
                f"conv expects {self.w.shape[2]} input channels, got {c}"
            )
        return (h, w, self.w.shape[3])

    def forward(self, x):
        self._shape = x.shape
        self._cols = _im2col3x3(x)
        return self._cols @ self.w.reshape(-1, self.w.shape[3]) + self.b

    def backward(self, dout):
        b, h, w, _ = self._shape
        c_in, c_out = self.w.shape[2], self.w.shape[3]
        dcols = dout @ self.w.reshape(-1, c_out).T
        self.db = dout.sum(axis=(0, 1, 2))
        self.dw = (
            self._cols.reshape(-1, 9 * c_in).T @ dout.reshape(-1, c_out)
        ).reshape(self.w.shape)
        dxp = np.zeros((b, h + 2, w + 2, c_in), dtype=np.float64)
        for ky in range(3):
            for kx in range(3):
                j = (ky * 3 + kx) * c_in
                dxp[:, ky : ky + h, kx : kx + w, :] += dcols[:, :, :, j : j + c_in]
        return dxp[:, 1 : h + 1, 1 : w + 1, :]

    def params(self):
        return [("w", self.w), ("b", self.b)]

    def grads(self):
        return [self.dw, self.db]


class Elu:
    name = "elu"

    def out_shape(self, shape):
        return shape

    def forward(self, x):
        self._x = x
        return elu(x)

    def backward(self, dout):
        return dout * elu_grad(self._x)

    def params(self):
        return []

    def grads(self):
        return []


class AvgPool2x2:
    name = "pool"

    def out_shape(self, shape):
        h, w, c = shape
        return (-(-h // 2), -(-w // 2), c)

    def forward(self, x):
        self._in_shape = x.shape
        y, self._counts = _pool_forward(x)
        return y

    def backward(self, dout):
        b, h, w, c = self._in_shape
        g = dout / self._counts[None, :, :, None]
        up = np.repeat(np.repeat(g, 2, axis=1), 2, axis=2)
        return up[:, :h, :w, :]

    def params(self):
        return []

    def grads(self):
        return []


class Flatten:
    name = "flatten"

    def out_shape(self, shape):
        n = 1
        for s in shape:
            n *= s
        return (n,)

    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._shape)

    def params(self):
        return []

    def grads(self):
        return []


class Dense:
    def __init__(self, n_in: int, n_out: int, rng):
        limit = math.sqrt(6.0 / (n_in + n_out))
        self.w = rng.uniform(-limit, limit, size=(n_in, n_out))
        self.b = np.zeros(n_out)

    name = "dense"

    def out_shape(self, shape):
        if shape != (self.w.shape[0],):
            raise ShapeError(
                f"dense expects {self.w.shape[0]} inputs, got {shape}"
            )
        return (self.w.shape[1],)

    def forward(self, x):
        self._x = x
        return x @ self.w + self.b

    def backward(self, dout):
        self.dw = self._x.T @ dout
        self.db = dout.sum(axis=0)
        return dout @ self.w.T

    def params(self):
        return [("w", self.w), ("b", self.b)]

    def grads(self):
        return [self.dw, self.db]


class HeadActivation:
    name = "head"

    def out_shape(self, shape):
        if shape != (6,):
            raise ShapeError(f"head expects 6 raw outputs, got {shape}")
        return (6,)

    def forward(self, raw):
        self._raw = raw
        return custom_activation(raw)

    def backward(self, dout):
        dx = dout.copy()
        dx[:, 2:6] = dout[:, 2:6] * np.exp(self._raw[:, 2:6])
        return dx

    def params(self):
        return []

    def grads(self):
        return []


# ---------------------------------------------------------------------------
# Network


@dataclass(frozen=True)
class NetworkSpec:
    """Layer plan: n_blocks of (convs_per_block 3x3 convs + avg pool), then
    flatten and the dense head. Defaults reproduce the reference stack
    (3 blocks of three 64-kernel convolutions, two dense 128 layers, dense 6
    with the custom activation)."""

    grid: GridSpec = GridSpec()
    in_channels: int = 4
    conv_channels: int = 64
    convs_per_block: int = 3
    n_blocks: int = 3
    dense_units: int = 128
    n_dense: int = 2

    def input_shape(self):
        return (self.grid.n_strips, self.grid.nodes_per_strip, self.in_channels)


@dataclass
class HeadOutput:
    """Raw head vector and its activated (mu, sigma, r) form."""

    raw: np.ndarray
    activated: np.ndarray

    @property
    def mu(self):
        return self.activated[..., 0:2]

    @property
    def sigma(self):
        return self.activated[..., 2:4]

    @property
    def r(self):
        return self.activated[..., 4:6]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    lr_decay: float = 1.0  # multiplicative per epoch
    batch_size: int = 32
    max_epochs: int = 200
    patience: int = 10
    seed: int = 0

    def __post_init__(self):
        if min(self.learning_rate, self.batch_size, self.max_epochs, self.patience) <= 0:
            raise ValueError("training hyper-parameters must be positive")
        if not (0.0 < self.lr_decay <= 1.0):
            raise ValueError("lr_decay must be in (0, 1]")


class Network:
    def __init__(self, spec: NetworkSpec, seed: int = 0):
        self.spec = spec
        self.seed = seed
        rng = np.random.default_rng(seed)
        layers = []
        c = spec.in_channels
        for _ in range(spec.n_blocks):
            for _ in range(spec.convs_per_block):
                layers.append(Conv2D(c, spec.conv_channels, rng))
                layers.append(Elu())
                c = spec.conv_channels
            layers.append(AvgPool2x2())
        layers.append(Flatten())
        shape = spec.input_shape()
        for lyr in layers:
            shape = lyr.out_shape(shape)
        n_in = shape[0]
        for _ in range(spec.n_dense):
            layers.append(Dense(n_in, spec.dense_units, rng))
            layers.append(Elu())
            n_in = spec.dense_units
        layers.append(Dense(n_in, 6, rng))
        layers.append(HeadActivation())
        self.layers = layers

    def shape_trace(self) -> list:
        """Per-layer output shapes for the configured input."""
        shape = self.spec.input_shape()
        trace = [shape]
        for lyr in self.layers:
            shape = lyr.out_shape(shape)
            trace.append(shape)
        return trace

    def forward(self, x: np.ndarray) -> HeadOutput:
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 3
        if squeeze:
            x = x[None, ...]
        if x.shape[1:] != self.spec.input_shape():
            raise ShapeError(
                f"input shape {x.shape[1:]} does not match spec {self.spec.input_shape()}"
            )
        out = x
        for i, lyr in enumerate(self.layers):
            try:
                out = lyr.forward(out)
            except ValueError as exc:
                raise ShapeError(f"layer {i} ({lyr.name}): {exc}") from exc
        raw = self.layers[-1]._raw
        head = HeadOutput(raw=raw, activated=out)
        if squeeze:
            head = HeadOutput(raw=raw[0], activated=out[0])
        return head

    def backward(self, dout: np.ndarray) -> np.ndarray:
        g = dout
        for lyr in reversed(self.layers):
            g = lyr.backward(g)
        return g

    def parameters(self) -> list:
        out = []
        for i, lyr in enumerate(self.layers):
            for name, arr in lyr.params():
                out.append((f"{i}.{lyr.name}.{name}", arr))
        return out

    def gradients(self) -> list:
        out = []
        for lyr in self.layers:
            out.extend(lyr.grads())
        return out

    def get_weights(self) -> list:
        return [arr.copy() for _, arr in self.parameters()]

    def set_weights(self, weights: list) -> None:
        for (_, arr), w in zip(self.parameters(), weights):
            arr[...] = w


def batch_nll(head: HeadOutput, labels: np.ndarray) -> float:
    """Mean over the batch of nll(x) + nll(y)."""
    act = head.activated
    labels = np.asarray(labels, dtype=np.float64)
    nll = asym_gauss_nll(labels, act[..., 0:2], act[..., 2:4], act[..., 4:6])
    return float(np.mean(nll.sum(axis=-1)))


def batch_nll_grad(head: HeadOutput, labels: np.ndarray) -> np.ndarray:
    """Gradient of batch_nll with respect to the activated head outputs."""
    act = head.activated
    n = act.shape[0]
    dmu, dsigma, dr = asym_gauss_nll_grads(
        labels, act[..., 0:2], act[..., 2:4], act[..., 4:6]
    )
    return np.concatenate([dmu, dsigma, dr], axis=-1) / n


# ---------------------------------------------------------------------------
# Optimizer and training


class Adam:
    """Adaptive-moment gradient descent (beta1 0.9, beta2 0.999, eps 1e-8)."""

    def __init__(self, params: list, lr: float):
        self.lr = lr
        self.beta1, self.beta2, self.eps = 0.9, 0.999, 1e-8
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list, grads: list) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


@dataclass
class TrainHistory:
    epochs: list = field(default_factory=list)  # (epoch, train_nll, val_nll)
    best_epoch: int = -1
    best_val_nll: float = math.inf

    def to_csv(self) -> str:
        lines = ["epoch,train_nll,val_nll"]
        for e, tr, va in self.epochs:
            lines.append(f"{e},{tr!r},{va!r}")
        return "\n".join(lines) + "\n"


def _evaluate_nll(net: Network, inputs: np.ndarray, labels: np.ndarray, batch: int) -> float:
    total, count = 0.0, 0
    for lo in range(0, len(inputs), batch):
        hi = min(lo + batch, len(inputs))
        head = net.forward(inputs[lo:hi])
        total += batch_nll(head, labels[lo:hi]) * (hi - lo)
        count += hi - lo
    return total / count


def train(
    net: Network,
    train_inputs: np.ndarray,
    train_labels: np.ndarray,
    val_inputs: np.ndarray,
    val_labels: np.ndarray,
    config: TrainConfig,
) -> TrainHistory:
    """Mini-batch training with early stopping on the validation loss.

    The weights left on the network are those of the best validation epoch.
    Raises TrainingDivergedError (with epoch, batch and layer weight norms)
    if the loss goes non-finite.
    """
    rng = np.random.default_rng(config.seed)
    history = TrainHistory()
    optimizer = Adam([arr for _, arr in net.parameters()], config.learning_rate)
    best_weights = net.get_weights()
    stale = 0
    for epoch in range(config.max_epochs):
        order = rng.permutation(len(train_inputs))
        total, count = 0.0, 0
        for bi, lo in enumerate(range(0, len(order), config.batch_size)):
            idx = order[lo : lo + config.batch_size]
            head = net.forward(train_inputs[idx])
            loss = batch_nll(head, train_labels[idx])
            if not math.isfinite(loss):
                norms = {
                    name: float(np.linalg.norm(arr)) for name, arr in net.parameters()
                }
                raise TrainingDivergedError(epoch, bi, norms)
            net.backward(batch_nll_grad(head, train_labels[idx]))
            optimizer.step([arr for _, arr in net.parameters()], net.gradients())
            total += loss * len(idx)
            count += len(idx)
        val_nll = _evaluate_nll(net, val_inputs, val_labels, config.batch_size)
        history.epochs.append((epoch, total / count, val_nll))
        optimizer.lr *= config.lr_decay
        if val_nll < history.best_val_nll:
            history.best_val_nll = val_nll
            history.best_epoch = epoch
            best_weights = net.get_weights()
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    net.set_weights(best_weights)
    return history


# ---------------------------------------------------------------------------
# Gradient verification


def grad_check(spec: NetworkSpec | None = None, seed: int = 0, step: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients
    over every parameter of a small network.

    Relative error per element is |a - n| / max(|a|, |n|, 1e-4); the floor
    turns the comparison absolute for near-zero gradients.
    """
    if spec is None:
        spec = tiny_spec()
    rng = np.random.default_rng(seed)
    net = Network(spec, seed=seed)
    x = rng.normal(size=(2,) + spec.input_shape())
    labels = rng.uniform(0.5, 3.0, size=(2, 2))

    def loss() -> float:
        return batch_nll(net.forward(x), labels)

    head = net.forward(x)
    net.backward(batch_nll_grad(head, labels))
    analytic = [g.copy() for g in net.gradients()]

    worst = 0.0
    for (name, arr), ga in zip(net.parameters(), analytic):
        flat = arr.ravel()
        gflat = ga.ravel()
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            hi = loss()
            flat[j] = orig - step
            lo = loss()
            flat[j] = orig
            num = (hi - lo) / (2.0 * step)
            denom = max(abs(gflat[j]), abs(num), 1e-4)
            worst = max(worst, abs(gflat[j] - num) / denom)
    return worst


def tiny_spec() -> NetworkSpec:
    """Small configuration for gradient checking: 6x4 grid, 2-kernel convs."""
    return NetworkSpec(
        grid=GridSpec(6, 4, 6.0, 4.0),
        in_channels=4,
        conv_channels=2,
        convs_per_block=3,
        n_blocks=3,
        dense_units=8,
        n_dense=2,
    )


def head_grad_check(seed: int = 0, step: float = 1e-6) -> float:
    """Loss-only check: gradient of the nll through the head activation
    against central differences on the raw 6-vector."""
    rng = np.random.default_rng(seed)
    raw = rng.normal(size=(3, 6))
    labels = rng.normal(size=(3, 2))

    def loss(r):
        act = custom_activation(r)
        return float(
            np.mean(
                asym_gauss_nll(labels, act[:, 0:2], act[:, 2:4], act[:, 4:6]).sum(axis=-1)
            )
        )

    act = custom_activation(raw)
    head = HeadOutput(raw=raw, activated=act)
    dact = batch_nll_grad(head, labels)
    danalytic = dact.copy()
    danalytic[:, 2:6] = dact[:, 2:6] * np.exp(raw[:, 2:6])

    worst = 0.0
    for i in range(raw.shape[0]):
        for j in range(raw.shape[1]):
            orig = raw[i, j]
            raw[i, j] = orig + step
            hi = loss(raw)
            raw[i, j] = orig - step
            lo = loss(raw)
            raw[i, j] = orig
            num = (hi - lo) / (2.0 * step)
            denom = max(abs(danalytic[i, j]), abs(num), 1e-6)
            worst = max(worst, abs(danalytic[i, j] - num) / denom)
    return worst


# ---------------------------------------------------------------------------
# Serialization


def save_network(net: Network, weights_path, manifest_path, znorm_ref: str = "") -> None:
    """Weights as flat little-endian float64; manifest as JSON beside them."""
    parts = [arr for _, arr in net.parameters()]
    flat = np.concatenate([p.ravel() for p in parts])
    atomic_write_bytes(weights_path, flat.astype("<f8").tobytes())
    spec = net.spec
    manifest = {
        "version": 1,
        "grid": [spec.grid.n_strips, spec.grid.nodes_per_strip],
        "hall": [spec.grid.hall_length, spec.grid.hall_width],
        "in_channels": spec.in_channels,
        "conv_channels": spec.conv_channels,
        "convs_per_block": spec.convs_per_block,
        "n_blocks": spec.n_blocks,
        "dense_units": spec.dense_units,
        "n_dense": spec.n_dense,
        "seed": net.seed,
        "znorm_ref": znorm_ref,
        "layers": [
            {"name": name, "shape": list(arr.shape)} for name, arr in net.parameters()
        ],
    }
    atomic_write_text(manifest_path, json.dumps(manifest, indent=1) + "\n")


def load_network(weights_path, manifest_path) -> Network:
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("version") != 1:
        raise ShapeError(f"unsupported weights version {manifest.get('version')!r}")
    spec = NetworkSpec(
        grid=GridSpec(
            manifest["grid"][0],
            manifest["grid"][1],
            manifest["hall"][0],
            manifest["hall"][1],
        ),
        in_channels=manifest["in_channels"],
        conv_channels=manifest["conv_channels"],
        convs_per_block=manifest["convs_per_block"],
        n_blocks=manifest["n_blocks"],
        dense_units=manifest["dense_units"],
        n_dense=manifest["n_dense"],
    )
    net = Network(spec, seed=manifest["seed"])
    flat = np.frombuffer(open(weights_path, "rb").read(), dtype="<f8")
    expected = [tuple(d["shape"]) for d in manifest["layers"]]
    own = [arr.shape for _, arr in net.parameters()]
    if expected != own:
        raise ShapeError("manifest layer shapes do not match the configured network")
    offset = 0
    weights = []
    for shape in own:
        n = int(np.prod(shape))
        weights.append(flat[offset : offset + n].reshape(shape).copy())
        offset += n
    if offset != flat.size:
        raise ShapeError(f"weight file holds {flat.size} values, expected {offset}")
    net.set_weights(weights)
    return net
