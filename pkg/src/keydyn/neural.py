"""Minimal float64 network stack for one-class training on encoded images.

Everything is built directly on numpy so every gradient can be checked against
central finite differences: a 5x5 stride-2 convolution (no bias), leaky ReLU,
a dense layer, and Adam.  The one-class detector embeds 3x64x64 images into a
64-dimensional space and is trained to pull genuine embeddings toward a fixed
center; the anomaly score of an input is its embedding's distance from that
center, and the decision value is that distance minus a calibrated radius.

Bias terms and bounded final activations are deliberately absent from the
image network: with them, the trivial constant map would minimize the
objective for any input.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .encoding import EncodedImage
from .errors import NotCalibratedError, TrainingDivergedError

LEAKY_SLOPE = 0.1
DEFAULT_WEIGHT_DECAY = 1e-6
CENTER_SNAP = 0.01
EMBEDDING_DIM = 64
INPUT_SHAPE = (3, 64, 64)


class Conv2D:
    """Valid (unpadded) strided convolution without bias, NCHW, float64."""

    def __init__(self, in_channels: int, out_channels: int, kernel: int = 5,
                 stride: int = 2, rng: np.random.Generator | None = None):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        fan_in = in_channels * kernel * kernel
        rng = rng or np.random.default_rng(0)
        self.weight = rng.normal(0.0, math.sqrt(2.0 / fan_in),
                                 size=(out_channels, in_channels, kernel, kernel))
        self.grad = np.zeros_like(self.weight)
        self._cols = None
        self._x_shape = None

    def out_size(self, size: int) -> int:
        return (size - self.kernel) // self.stride + 1

    def forward(self, x: np.ndarray) -> np.ndarray:
        n, c, h, w = x.shape
        if c != self.in_channels:
            raise ValueError(f"expected {self.in_channels} input channels, got {c}")
        oh, ow = self.out_size(h), self.out_size(w)
        windows = np.lib.stride_tricks.sliding_window_view(
            x, (self.kernel, self.kernel), axis=(2, 3)
        )[:, :, ::self.stride, ::self.stride]
        cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, -1)
        self._cols = cols
        self._x_shape = x.shape
        w2d = self.weight.reshape(self.out_channels, -1)
        out = cols @ w2d.T
        return out.reshape(n, oh, ow, self.out_channels).transpose(0, 3, 1, 2)

    def backward(self, dout: np.ndarray, need_input_grad: bool = True):
        n, f, oh, ow = dout.shape
        d2d = dout.transpose(0, 2, 3, 1).reshape(n * oh * ow, f)
        self.grad = (d2d.T @ self._cols).reshape(self.weight.shape)
        if not need_input_grad:
            return None
        w2d = self.weight.reshape(self.out_channels, -1)
        dcols = (d2d @ w2d).reshape(n, oh, ow, self.in_channels,
                                    self.kernel, self.kernel)
        dx = np.zeros(self._x_shape)
        s = self.stride
        for ki in range(self.kernel):
            for kj in range(self.kernel):
                dx[:, :, ki:ki + s * oh:s, kj:kj + s * ow:s] += \
                    dcols[:, :, :, :, ki, kj].transpose(0, 3, 1, 2)
        return dx


class LeakyReLU:
    def __init__(self, slope: float = LEAKY_SLOPE):
        self.slope = slope
        self._mask = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0
        return np.where(self._mask, x, self.slope * x)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        return np.where(self._mask, dout, self.slope * dout)


class Dense:
    def __init__(self, in_features: int, out_features: int, bias: bool = False,
                 rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        self.weight = rng.normal(0.0, math.sqrt(2.0 / in_features),
                                 size=(in_features, out_features))
        self.bias = np.zeros(out_features) if bias else None
        self.grad = np.zeros_like(self.weight)
        self.bias_grad = np.zeros(out_features) if bias else None
        self._x = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        out = x @ self.weight
        if self.bias is not None:
            out = out + self.bias
        return out

    def backward(self, dout: np.ndarray) -> np.ndarray:
        self.grad = self._x.T @ dout
        if self.bias is not None:
            self.bias_grad = dout.sum(axis=0)
        return dout @ self.weight.T


class Adam:
    """Adam with bias correction; updates parameter arrays in place."""

    def __init__(self, params: list[np.ndarray], lr: float = 0.001,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


class SvddNetwork:
    """conv(3->8, 5x5/2) -> leaky -> conv(8->4, 5x5/2) -> leaky -> dense(->64).

    No layer carries a bias, so an all-zero image always embeds to the zero
    vector regardless of the weights.
    """

    def __init__(self, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.conv1 = Conv2D(INPUT_SHAPE[0], 8, rng=rng)
        self.act1 = LeakyReLU()
        self.conv2 = Conv2D(8, 4, rng=rng)
        self.act2 = LeakyReLU()
        h1 = self.conv1.out_size(INPUT_SHAPE[1])
        h2 = self.conv2.out_size(h1)
        self._flat_dim = 4 * h2 * h2
        self.fc = Dense(self._flat_dim, EMBEDDING_DIM, bias=False, rng=rng)
        self._conv_shape = None

    def forward(self, batch: np.ndarray) -> np.ndarray:
        batch = np.asarray(batch, dtype=np.float64)
        single = batch.ndim == 3
        if single:
            batch = batch[None]
        if batch.shape[1:] != INPUT_SHAPE:
            raise ValueError(
                f"expected input shape (n, {INPUT_SHAPE[0]}, {INPUT_SHAPE[1]}, "
                f"{INPUT_SHAPE[2]}), got {batch.shape}"
            )
        h = self.act1.forward(self.conv1.forward(batch))
        h = self.act2.forward(self.conv2.forward(h))
        self._conv_shape = h.shape
        out = self.fc.forward(h.reshape(h.shape[0], -1))
        return out[0] if single else out

    def backward(self, dout: np.ndarray) -> None:
        dh = self.fc.backward(dout).reshape(self._conv_shape)
        dh = self.act2.backward(dh)
        dh = self.conv2.backward(dh, need_input_grad=True)
        dh = self.act1.backward(dh)
        self.conv1.backward(dh, need_input_grad=False)

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        return [("conv1.weight", self.conv1.weight),
                ("conv2.weight", self.conv2.weight),
                ("fc.weight", self.fc.weight)]

    def gradients(self) -> list[np.ndarray]:
        return [self.conv1.grad, self.conv2.grad, self.fc.grad]

    def frobenius_penalty(self) -> float:
        return float(sum(np.sum(p * p) for _, p in self.parameters()))


def image_to_input(image: EncodedImage) -> np.ndarray:
    """Channels-first float input with 8-bit values scaled to [0, 1]."""
    return image.pixels.astype(np.float64).transpose(2, 0, 1) / 255.0


def images_to_batch(images: Sequence[EncodedImage]) -> np.ndarray:
    if not images:
        raise ValueError("no images given")
    return np.stack([image_to_input(img) for img in images])


def snap_center(center: np.ndarray, snap: float = CENTER_SNAP) -> np.ndarray:
    """Push near-zero coordinates to +/- snap so the zero map is never optimal."""
    out = center.copy()
    small = np.abs(out) < snap
    out[small] = np.where(out[small] >= 0, snap, -snap)
    return out


def init_center(network: SvddNetwork, images: Sequence[EncodedImage],
                snap: float = CENTER_SNAP) -> np.ndarray:
    """Mean embedding of the training images under the initial weights."""
    if len(images) == 0:
        raise ValueError("need at least one training image to initialize a center")
    embeddings = network.forward(images_to_batch(images))
    return snap_center(embeddings.mean(axis=0), snap)


@dataclass
class SvddModel:
    """Network plus the fixed center and the calibrated decision radius."""

    network: SvddNetwork
    center: np.ndarray | None = None
    threshold: float | None = None
    weight_decay: float = DEFAULT_WEIGHT_DECAY
    metadata: dict = field(default_factory=dict)

    def initialize_center(self, images: Sequence[EncodedImage],
                          snap: float = CENTER_SNAP) -> np.ndarray:
        self.center = init_center(self.network, images, snap)
        return self.center

    def embed(self, image: EncodedImage) -> np.ndarray:
        return self.network.forward(image_to_input(image))


@dataclass(frozen=True)
class Decision:
    accepted: bool
    score: float
    decision_value: float

    @property
    def verdict(self) -> str:
        return "accept" if self.accepted else "reject"


def score(model: SvddModel, image: EncodedImage) -> float:
    """Anomaly score: Euclidean distance of the embedding from the center."""
    if model.center is None:
        raise ValueError("center not initialized")
    return float(np.linalg.norm(model.embed(image) - model.center))


def score_batch(model: SvddModel, images: Sequence[EncodedImage]) -> np.ndarray:
    if model.center is None:
        raise ValueError("center not initialized")
    emb = model.network.forward(images_to_batch(images))
    return np.linalg.norm(emb - model.center, axis=1)


def decide(model: SvddModel, image: EncodedImage) -> Decision:
    """Accept iff the score is within the calibrated radius (boundary inclusive)."""
    if model.threshold is None:
        raise NotCalibratedError("decision threshold has not been calibrated")
    s = score(model, image)
    f = s - model.threshold
    return Decision(accepted=f <= 0.0, score=s, decision_value=f)


def svdd_objective(model: SvddModel, batch: np.ndarray) -> float:
    """The training objective evaluated from scratch: mean squared distance of
    embeddings from the center plus the weighted Frobenius penalty."""
    emb = model.network.forward(batch)
    dist_sq = np.sum((emb - model.center) ** 2, axis=1)
    return float(dist_sq.mean() + model.weight_decay * model.network.frobenius_penalty())


@dataclass(frozen=True)
class TrainResult:
    epochs_run: int
    epoch_losses: list[float]
    final_loss: float


def train_svdd(model: SvddModel, images: Sequence[EncodedImage] | np.ndarray,
               epochs: int = 200, lr: float = 0.001, batch_size: int = 64,
               seed: int = 0) -> TrainResult:
    """Minimize the one-class objective with Adam over genuine-only images.

    The center stays fixed; only network weights move.  Shuffling is seeded,
    and a NaN/Inf loss aborts with the epoch, batch, and loss history attached.
    Reported final_loss is the full-dataset objective at the final weights.
    """
    if model.center is None:
        raise ValueError("initialize the center before training")
    data = images if isinstance(images, np.ndarray) else images_to_batch(images)
    n = data.shape[0]
    rng = np.random.default_rng(seed)
    params = [p for _, p in model.network.parameters()]
    adam = Adam(params, lr=lr)
    center = model.center
    lam = model.weight_decay

    epoch_losses: list[float] = []
    for epoch in range(epochs):
        perm = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = perm[start:start + batch_size]
            batch = data[idx]
            emb = model.network.forward(batch)
            diff = emb - center
            dist_loss = float(np.sum(diff * diff) / len(idx))
            loss = dist_loss + lam * model.network.frobenius_penalty()
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss {loss} at epoch {epoch}, batch {start // batch_size}",
                    epoch=epoch, batch=start // batch_size,
                    loss_history=epoch_losses,
                )
            model.network.backward(2.0 * diff / len(idx))
            grads = [g + 2.0 * lam * p
                     for g, p in zip(model.network.gradients(), params)]
            adam.step(grads)
            total += loss * len(idx)
        epoch_losses.append(total / n)

    final_loss = svdd_objective(model, data)
    return TrainResult(epochs_run=epochs, epoch_losses=epoch_losses,
                       final_loss=final_loss)


class AutoencoderModel:
    """Dense reconstruction baseline: D -> 128 -> 30 -> 128 -> D.

    Hidden layers use leaky ReLU; the output layer is linear so standardized
    (negative-valued) features can be reconstructed.
    """

    def __init__(self, input_dim: int, latent_dim: int = 30, hidden_dim: int = 128,
                 seed: int = 0):
        rng = np.random.default_rng(seed)
        self.input_dim = input_dim
        self.latent_dim = latent_dim
        self.hidden_dim = hidden_dim
        self.layers = [
            Dense(input_dim, hidden_dim, bias=True, rng=rng), LeakyReLU(),
            Dense(hidden_dim, latent_dim, bias=True, rng=rng), LeakyReLU(),
            Dense(latent_dim, hidden_dim, bias=True, rng=rng), LeakyReLU(),
            Dense(hidden_dim, input_dim, bias=True, rng=rng),
        ]
        self.metadata: dict = {}

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        h = x[None] if single else x
        if h.shape[1] != self.input_dim:
            raise ValueError(f"expected dimension {self.input_dim}, got {h.shape[1]}")
        for layer in self.layers:
            h = layer.forward(h)
        return h[0] if single else h

    def backward(self, dout: np.ndarray) -> None:
        for layer in reversed(self.layers):
            dout = layer.backward(dout)

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        out = []
        dense_idx = 0
        for layer in self.layers:
            if isinstance(layer, Dense):
                out.append((f"dense{dense_idx}.weight", layer.weight))
                if layer.bias is not None:
                    out.append((f"dense{dense_idx}.bias", layer.bias))
                dense_idx += 1
        return out

    def gradients(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            if isinstance(layer, Dense):
                out.append(layer.grad)
                if layer.bias is not None:
                    out.append(layer.bias_grad)
        return out


def train_autoencoder(model: AutoencoderModel, vectors: np.ndarray,
                      epochs: int = 100, lr: float = 0.001, batch_size: int = 64,
                      seed: int = 0) -> TrainResult:
    """Minimize mean squared reconstruction error with Adam."""
    data = np.asarray(vectors, dtype=np.float64)
    if data.ndim != 2:
        raise ValueError(f"expected an (n, D) matrix, got shape {data.shape}")
    n, d = data.shape
    rng = np.random.default_rng(seed)
    params = [p for _, p in model.parameters()]
    adam = Adam(params, lr=lr)

    epoch_losses: list[float] = []
    for epoch in range(epochs):
        perm = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = perm[start:start + batch_size]
            batch = data[idx]
            recon = model.forward(batch)
            err = recon - batch
            loss = float(np.mean(err * err))
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss {loss} at epoch {epoch}, batch {start // batch_size}",
                    epoch=epoch, batch=start // batch_size,
                    loss_history=epoch_losses,
                )
            model.backward(2.0 * err / err.size)
            adam.step(model.gradients())
            total += loss * len(idx)
        epoch_losses.append(total / n)

    recon = model.forward(data)
    final_loss = float(np.mean((recon - data) ** 2))
    return TrainResult(epochs_run=epochs, epoch_losses=epoch_losses,
                       final_loss=final_loss)


def ae_score(model: AutoencoderModel, vector: np.ndarray) -> float:
    """Reconstruction mean squared error of one vector."""
    v = np.asarray(vector, dtype=np.float64)
    recon = model.forward(v)
    return float(np.mean((recon - v) ** 2))


def ae_score_batch(model: AutoencoderModel, vectors: np.ndarray) -> np.ndarray:
    x = np.asarray(vectors, dtype=np.float64)
    recon = model.forward(x)
    return np.mean((recon - x) ** 2, axis=1)


# ---------------------------------------------------------------------------
# Serialization: little-endian binary, versioned header, named weight arrays,
# then a JSON trailer with center/threshold/metadata.
# ---------------------------------------------------------------------------

_MODEL_MAGIC = b"KDNN"
_MODEL_VERSION = 1


def save_model(model: SvddModel | AutoencoderModel, path: str | Path) -> None:
    if isinstance(model, SvddModel):
        params = model.network.parameters()
        trailer = {
            "kind": "svdd",
            "center": None if model.center is None else model.center.tolist(),
            "threshold": model.threshold,
            "weight_decay": model.weight_decay,
            "metadata": model.metadata,
        }
    else:
        params = model.parameters()
        trailer = {
            "kind": "autoencoder",
            "input_dim": model.input_dim,
            "latent_dim": model.latent_dim,
            "hidden_dim": model.hidden_dim,
            "metadata": model.metadata,
        }
    with open(path, "wb") as fh:
        fh.write(_MODEL_MAGIC)
        fh.write(struct.pack("<II", _MODEL_VERSION, len(params)))
        for name, arr in params:
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        for _, arr in params:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        blob = json.dumps(trailer, sort_keys=True).encode("utf-8")
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)


def load_model(path: str | Path) -> SvddModel | AutoencoderModel:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MODEL_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        version, n_arrays = struct.unpack("<II", fh.read(8))
        if version != _MODEL_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        specs = []
        for _ in range(n_arrays):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<I", fh.read(4))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            specs.append((name, shape))
        arrays = {}
        for name, shape in specs:
            count = int(np.prod(shape))
            arrays[name] = np.frombuffer(
                fh.read(count * 8), dtype="<f8"
            ).reshape(shape).astype(np.float64)
        (blob_len,) = struct.unpack("<Q", fh.read(8))
        trailer = json.loads(fh.read(blob_len).decode("utf-8"))

    if trailer["kind"] == "svdd":
        model = SvddModel(
            network=SvddNetwork(),
            center=None if trailer["center"] is None else np.array(trailer["center"]),
            threshold=trailer["threshold"],
            weight_decay=trailer["weight_decay"],
            metadata=trailer.get("metadata", {}),
        )
        for name, arr in model.network.parameters():
            np.copyto(arr, arrays[name])
        return model

    model = AutoencoderModel(
        input_dim=trailer["input_dim"],
        latent_dim=trailer["latent_dim"],
        hidden_dim=trailer["hidden_dim"],
    )
    model.metadata = trailer.get("metadata", {})
    for name, arr in model.parameters():
        np.copyto(arr, arrays[name])
    return model
