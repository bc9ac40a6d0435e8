"""Minimal feed-forward networks with closed-form gradients and a DP step.

Layers are affine maps with SeLU between them and identity at the output.
Gradients are computed per sample so the DP optimizer can clip each sample's
contribution before summing; the clipped-sum sensitivity under replacement of
up to ``group_size`` samples is 2 * group_size * clip_norm, and the injected
Gaussian noise is calibrated to exactly that, giving a per-step RDP slope of
1 / (2 * noise_multiplier^2) independent of the clip norm and group size.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .accounting import RdpCurve, compose
from .errors import InvalidInputError
from .rng import derive_rng
from .validation import as_float_matrix

SELU_LAMBDA = 1.0507009873554805
SELU_ALPHA = 1.6732632423543772

_CKPT_MAGIC = b"GDPW"
_CKPT_VERSION = 1
_CKPT_HEADER = struct.Struct("<4sII")
_CKPT_RECORD = struct.Struct("<QQ")


def selu(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > 0, SELU_LAMBDA * x, SELU_LAMBDA * SELU_ALPHA * np.expm1(np.minimum(x, 0.0)))


def selu_grad(x):
    """Exact derivative; the subgradient at 0 is taken from the right."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0, SELU_LAMBDA, SELU_LAMBDA * SELU_ALPHA * np.exp(np.minimum(x, 0.0)))


def softmax(logits):
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exps = np.exp(shifted)
    return exps / exps.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, targets):
    """Per-sample loss and d(loss)/d(logits) for one-hot targets."""
    probs = softmax(logits)
    eps = np.finfo(np.float64).tiny
    losses = -np.sum(targets * np.log(probs + eps), axis=-1)
    return losses, probs - targets


@dataclass
class Mlp:
    """Affine layers with SeLU between them, identity at the output."""

    weights: list
    biases: list

    @property
    def widths(self) -> list:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def params(self) -> list:
        out = []
        for W, b in zip(self.weights, self.biases):
            out.extend([W, b])
        return out

    def with_params(self, params: list) -> "Mlp":
        weights = [params[2 * i] for i in range(len(self.weights))]
        biases = [params[2 * i + 1] for i in range(len(self.weights))]
        return Mlp(weights=weights, biases=biases)

    def copy(self) -> "Mlp":
        return Mlp(weights=[w.copy() for w in self.weights], biases=[b.copy() for b in self.biases])


def init_mlp(widths, seed: int) -> Mlp:
    """Seeded per-layer uniform init in +-sqrt(6 / (fan_in + fan_out))."""
    if len(widths) < 2:
        raise InvalidInputError("an MLP needs at least one layer")
    weights, biases = [], []
    for idx, (fan_in, fan_out) in enumerate(zip(widths, widths[1:])):
        rng = derive_rng(seed, "mlp-init", idx)
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Mlp(weights=weights, biases=biases)


def forward(mlp: Mlp, batch, dropout_p: float = 0.0, dropout_rng=None):
    """Return (output, cache).  The cache holds per-layer inputs,
    pre-activations, and dropout masks for the backward pass."""
    a = as_float_matrix(batch, "batch")
    if a.shape[1] != mlp.weights[0].shape[0]:
        raise InvalidInputError(
            f"batch width {a.shape[1]} != first layer input {mlp.weights[0].shape[0]}"
        )
    if dropout_p and dropout_rng is None:
        raise InvalidInputError("dropout requires a generator")
    cache = []
    last = len(mlp.weights) - 1
    for idx, (W, b) in enumerate(zip(mlp.weights, mlp.biases)):
        z = a @ W + b
        mask = None
        if idx < last:
            out = selu(z)
            if dropout_p:
                mask = (dropout_rng.random(out.shape) >= dropout_p).astype(np.float64)
                out = out * mask / (1.0 - dropout_p)
        else:
            out = z
        cache.append((a, z, mask))
        a = out
    return a, cache


def hidden_features(mlp: Mlp, batch, layers: int) -> np.ndarray:
    """Post-activation output of the first ``layers`` layers (the encoder view)."""
    if not 1 <= layers <= len(mlp.weights):
        raise InvalidInputError(f"layers must be in [1, {len(mlp.weights)}]")
    a = as_float_matrix(batch, "batch")
    for W, b in zip(mlp.weights[:layers], mlp.biases[:layers]):
        a = selu(a @ W + b)
    return a


def per_sample_grads(mlp: Mlp, batch, targets, dropout_p: float = 0.0, dropout_rng=None):
    """Exact per-sample gradients of the softmax cross-entropy loss.

    Returns (grads, per-sample losses); grads is a flat list interleaving
    per-layer weight and bias gradients with a leading batch axis.
    """
    targets = as_float_matrix(targets, "targets")
    logits, cache = forward(mlp, batch, dropout_p=dropout_p, dropout_rng=dropout_rng)
    if targets.shape != logits.shape:
        raise InvalidInputError(
            f"targets shape {targets.shape} != logits shape {logits.shape}"
        )
    losses, dz = softmax_cross_entropy(logits, targets)

    grads: list = [None] * (2 * len(mlp.weights))
    for idx in range(len(mlp.weights) - 1, -1, -1):
        a, _, _ = cache[idx]
        grads[2 * idx] = np.einsum("bi,bo->bio", a, dz)
        grads[2 * idx + 1] = dz.copy()
        if idx > 0:
            da = dz @ mlp.weights[idx].T
            _, z_prev, mask_prev = cache[idx - 1]
            if mask_prev is not None:
                da = da * mask_prev / (1.0 - dropout_p)
            dz = da * selu_grad(z_prev)
    return grads, losses


@dataclass(frozen=True)
class DpOptimizerConfig:
    """Per-sample clipping plus Gaussian noise on the gradient sum.

    ``group_size`` is how many training samples one record replacement can
    touch; training is full-batch whenever it exceeds 1 so the clipped-sum
    sensitivity argument stays exact.
    """

    clip_norm: float = 1.0
    noise_multiplier: float = 1.0
    group_size: int = 1
    epochs: int = 100
    learning_rate: float = 1e-3
    dropout: float = 0.0

    def __post_init__(self):
        if not self.clip_norm > 0:
            raise InvalidInputError(f"clip_norm must be positive, got {self.clip_norm}")
        if self.noise_multiplier < 0:
            raise InvalidInputError("noise_multiplier must be >= 0")
        if int(self.group_size) < 1:
            raise InvalidInputError("group_size must be >= 1")
        if int(self.epochs) < 0:
            raise InvalidInputError("epochs must be >= 0")
        if not self.learning_rate > 0:
            raise InvalidInputError("learning_rate must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise InvalidInputError("dropout must lie in [0, 1)")
        object.__setattr__(self, "group_size", int(self.group_size))
        object.__setattr__(self, "epochs", int(self.epochs))

    @property
    def step_sensitivity(self) -> float:
        """Replacement of up to group_size samples moves the clipped sum by
        at most 2 * group_size * clip_norm."""
        return 2.0 * self.group_size * self.clip_norm

    @property
    def step_curve(self) -> RdpCurve:
        if self.noise_multiplier == 0:
            return RdpCurve.linear(math.inf, provenance=("non-private",))
        return RdpCurve.linear(1.0 / (2.0 * self.noise_multiplier**2))


def clip_scales(per_sample: list, clip_norm: float) -> np.ndarray:
    """min(1, C / ||g_i||) over the per-sample global gradient norms."""
    sq = None
    for g in per_sample:
        flat = g.reshape(g.shape[0], -1)
        contrib = np.einsum("bi,bi->b", flat, flat)
        sq = contrib if sq is None else sq + contrib
    norms = np.sqrt(sq)
    if math.isinf(clip_norm):
        return np.ones_like(norms)
    scales = np.ones_like(norms)
    over = norms > clip_norm
    scales[over] = clip_norm / norms[over]
    return scales


def step_noise(shapes, sigma: float, seed: int) -> list:
    """The noise arrays dp_step injects for this seed; replayable by tests."""
    rng = derive_rng(seed, "dp-noise")
    return [sigma * rng.standard_normal(shape) for shape in shapes]


def dp_step(params: list, per_sample: list, config: DpOptimizerConfig, seed: int):
    """One clipped-noised full-batch gradient step.

    Returns (updated params, per-step curve).  With noise_multiplier 0 the
    step is non-private: no noise is injected and the curve is the
    infinite-slope sentinel.
    """
    if len(per_sample) != len(params):
        raise InvalidInputError("per-sample gradient list must match the parameter list")
    B = per_sample[0].shape[0]
    if B == 0:
        return [p.copy() for p in params], config.step_curve

    scales = clip_scales(per_sample, config.clip_norm)
    clipped = [np.tensordot(scales, g, axes=(0, 0)) for g in per_sample]

    if config.noise_multiplier > 0:
        sigma = config.noise_multiplier * config.step_sensitivity
        noise = step_noise([p.shape for p in params], sigma, seed)
        noisy = [c + z for c, z in zip(clipped, noise)]
    else:
        noisy = clipped

    lr = config.learning_rate
    new_params = [p - lr * g / B for p, g in zip(params, noisy)]
    return new_params, config.step_curve


def train(mlp: Mlp, batch, targets, config: DpOptimizerConfig, seed: int, epoch_hook=None):
    """Full-batch training for ``config.epochs`` steps.

    Returns (trained model, total curve, per-epoch mean losses).  The total
    curve composes the per-step curves: slope epochs / (2 noise_multiplier^2).
    ``epoch_hook(model, epoch, loss)`` runs after every step.
    """
    model = mlp.copy()
    losses = []
    step_curves = []
    for t in range(config.epochs):
        drop_rng = derive_rng(seed, "dropout", t) if config.dropout else None
        grads, loss_vec = per_sample_grads(
            model, batch, targets, dropout_p=config.dropout, dropout_rng=drop_rng
        )
        step_seed = int(derive_rng(seed, "step-seed", t).integers(2**63))
        params, curve = dp_step(model.params(), grads, config, step_seed)
        model = model.with_params(params)
        step_curves.append(curve)
        losses.append(float(loss_vec.mean()))
        if epoch_hook is not None:
            epoch_hook(model, t, losses[-1])
    total = compose(step_curves) if step_curves else RdpCurve.zero()
    return model, total, losses


def predict_proba(mlp: Mlp, batch) -> np.ndarray:
    logits, _ = forward(mlp, batch)
    return softmax(logits)


# --- checkpoints -----------------------------------------------------------------


def save_checkpoint(mlp: Mlp, path) -> Path:
    """GDPW header, then (rows, cols, row-major doubles) per array; biases are
    stored as 1-row matrices following their layer's weights."""
    path = Path(path)
    arrays = []
    for W, b in zip(mlp.weights, mlp.biases):
        arrays.append(np.asarray(W, dtype=np.float64))
        arrays.append(np.asarray(b, dtype=np.float64).reshape(1, -1))
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_CKPT_HEADER.pack(_CKPT_MAGIC, _CKPT_VERSION, len(arrays)))
        for arr in arrays:
            fh.write(_CKPT_RECORD.pack(arr.shape[0], arr.shape[1]))
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return path


def load_checkpoint(path) -> Mlp:
    raw = Path(path).read_bytes()
    magic, version, count = _CKPT_HEADER.unpack_from(raw)
    if magic != _CKPT_MAGIC:
        raise InvalidInputError(f"{path} has bad magic {magic!r}")
    if version != _CKPT_VERSION:
        raise InvalidInputError(f"unsupported checkpoint version {version}")
    if count % 2:
        raise InvalidInputError("checkpoint must hold weight/bias pairs")
    offset = _CKPT_HEADER.size
    arrays = []
    for _ in range(count):
        rows, cols = _CKPT_RECORD.unpack_from(raw, offset)
        offset += _CKPT_RECORD.size
        data = np.frombuffer(raw, dtype="<f8", count=rows * cols, offset=offset)
        offset += rows * cols * 8
        arrays.append(data.reshape(rows, cols).copy())
    weights = [arrays[2 * i] for i in range(count // 2)]
    biases = [arrays[2 * i + 1].reshape(-1) for i in range(count // 2)]
    return Mlp(weights=weights, biases=biases)
