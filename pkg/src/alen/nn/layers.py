"""Dense/ELU/BatchNorm/GradReverse layer stack with exact reverse-mode gradients.

All activations are 2-D float64 arrays, rows = batch, cols = features.
Networks are single-writer: one forward caches the activations that the
matching backward consumes.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from alen.exceptions import NumericError, ShapeError, StateError

BATCHNORM_EPS = 1e-5
BATCHNORM_MOMENTUM = 0.1


class LayerKind(enum.Enum):
    DENSE = "Dense"
    ELU = "Elu"
    BATCH_NORM = "BatchNorm"
    GRAD_REVERSE = "GradReverse"


@dataclass(frozen=True)
class LayerSpec:
    """Shape (and, for GradReverse, backward scale) of one layer."""

    kind: LayerKind
    in_dim: int
    out_dim: int
    reverse_scale: float = 1.0

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise ShapeError(f"{self.kind.value}: dims must be >= 1, got "
                             f"{self.in_dim}x{self.out_dim}")
        if self.kind is not LayerKind.DENSE and self.in_dim != self.out_dim:
            raise ShapeError(f"{self.kind.value}: in_dim must equal out_dim")


def dense(in_dim: int, out_dim: int) -> LayerSpec:
    return LayerSpec(LayerKind.DENSE, in_dim, out_dim)


def elu(dim: int) -> LayerSpec:
    return LayerSpec(LayerKind.ELU, dim, dim)


def batch_norm(dim: int) -> LayerSpec:
    return LayerSpec(LayerKind.BATCH_NORM, dim, dim)


def grad_reverse(dim: int, scale: float = 1.0) -> LayerSpec:
    return LayerSpec(LayerKind.GRAD_REVERSE, dim, dim, reverse_scale=scale)


def _as_batch(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"expected a 2-D batch, got ndim={x.ndim}")
    return x


class Network:
    """An ordered layer stack with named parameters and cached activations.

    ``params`` holds the trainable arrays (Dense weight/bias, BatchNorm
    gain/shift); ``buffers`` holds BatchNorm running statistics.  Gradients
    returned by :meth:`backward` mirror ``params`` name-for-name.
    """

    def __init__(self, layers: list[LayerSpec], rng: np.random.Generator):
        for prev, cur in zip(layers, layers[1:]):
            if prev.out_dim != cur.in_dim:
                raise ShapeError(
                    f"layer chain broken: {prev.kind.value}({prev.out_dim}) -> "
                    f"{cur.kind.value} expects {cur.in_dim}")
        self.layers = list(layers)
        self.training = True
        self.params: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self._cache: list[dict] | None = None
        for i, spec in enumerate(self.layers):
            if spec.kind is LayerKind.DENSE:
                bound = math.sqrt(6.0 / (spec.in_dim + spec.out_dim))
                self.params[f"layer{i}.weight"] = rng.uniform(
                    -bound, bound, size=(spec.in_dim, spec.out_dim))
                self.params[f"layer{i}.bias"] = np.zeros(spec.out_dim)
            elif spec.kind is LayerKind.BATCH_NORM:
                self.params[f"layer{i}.gamma"] = np.ones(spec.in_dim)
                self.params[f"layer{i}.beta"] = np.zeros(spec.in_dim)
                self.buffers[f"layer{i}.running_mean"] = np.zeros(spec.in_dim)
                self.buffers[f"layer{i}.running_var"] = np.ones(spec.in_dim)

    @property
    def in_dim(self) -> int | None:
        return self.layers[0].in_dim if self.layers else None

    @property
    def out_dim(self) -> int | None:
        return self.layers[-1].out_dim if self.layers else None

    def train(self) -> "Network":
        self.training = True
        return self

    def eval(self) -> "Network":
        self.training = False
        return self

    def forward(self, x) -> np.ndarray:
        """Run the stack, caching activations for a later backward pass."""
        x = _as_batch(x)
        if self.layers and x.shape[1] != self.layers[0].in_dim:
            raise ShapeError(f"input has {x.shape[1]} columns, first layer "
                             f"expects {self.layers[0].in_dim}")
        cache: list[dict] = []
        out = x
        for i, spec in enumerate(self.layers):
            if spec.kind is LayerKind.DENSE:
                w = self.params[f"layer{i}.weight"]
                b = self.params[f"layer{i}.bias"]
                cache.append({"x": out})
                out = out @ w + b
            elif spec.kind is LayerKind.ELU:
                y = np.where(out > 0, out, np.expm1(np.minimum(out, 0.0)))
                cache.append({"x": out, "y": y})
                out = y
            elif spec.kind is LayerKind.BATCH_NORM:
                gamma = self.params[f"layer{i}.gamma"]
                beta = self.params[f"layer{i}.beta"]
                if self.training:
                    mu = out.mean(axis=0)
                    var = out.var(axis=0)
                    inv_std = 1.0 / np.sqrt(var + BATCHNORM_EPS)
                    x_hat = (out - mu) * inv_std
                    rm = self.buffers[f"layer{i}.running_mean"]
                    rv = self.buffers[f"layer{i}.running_var"]
                    rm *= 1.0 - BATCHNORM_MOMENTUM
                    rm += BATCHNORM_MOMENTUM * mu
                    rv *= 1.0 - BATCHNORM_MOMENTUM
                    rv += BATCHNORM_MOMENTUM * var
                else:
                    rm = self.buffers[f"layer{i}.running_mean"]
                    rv = self.buffers[f"layer{i}.running_var"]
                    inv_std = 1.0 / np.sqrt(rv + BATCHNORM_EPS)
                    x_hat = (out - rm) * inv_std
                cache.append({"x_hat": x_hat, "inv_std": inv_std,
                              "train": self.training})
                out = gamma * x_hat + beta
            else:  # GRAD_REVERSE: identity forward
                cache.append({})
        if not np.isfinite(out).all():
            raise NumericError("forward pass produced non-finite values")
        self._cache = cache
        return out

    def backward(self, upstream) -> tuple[dict[str, np.ndarray], np.ndarray]:
        """Propagate ``upstream`` back through the cached forward pass.

        Returns (parameter gradients, gradient w.r.t. the forward input).
        The cache is consumed; a second backward needs a new forward.
        """
        if self._cache is None:
            raise StateError("backward called without a preceding forward")
        grad = _as_batch(upstream)
        grads: dict[str, np.ndarray] = {}
        for i in reversed(range(len(self.layers))):
            spec = self.layers[i]
            saved = self._cache[i]
            if spec.kind is LayerKind.DENSE:
                x = saved["x"]
                grads[f"layer{i}.weight"] = x.T @ grad
                grads[f"layer{i}.bias"] = grad.sum(axis=0)
                grad = grad @ self.params[f"layer{i}.weight"].T
            elif spec.kind is LayerKind.ELU:
                x, y = saved["x"], saved["y"]
                grad = grad * np.where(x > 0, 1.0, y + 1.0)
            elif spec.kind is LayerKind.BATCH_NORM:
                x_hat, inv_std = saved["x_hat"], saved["inv_std"]
                gamma = self.params[f"layer{i}.gamma"]
                grads[f"layer{i}.gamma"] = (grad * x_hat).sum(axis=0)
                grads[f"layer{i}.beta"] = grad.sum(axis=0)
                d_xhat = grad * gamma
                if saved["train"]:
                    n = grad.shape[0]
                    grad = (inv_std / n) * (
                        n * d_xhat
                        - d_xhat.sum(axis=0)
                        - x_hat * (d_xhat * x_hat).sum(axis=0))
                else:
                    grad = d_xhat * inv_std
            else:  # GRAD_REVERSE: scale and flip the passing gradient
                grad = -spec.reverse_scale * grad
        self._cache = None
        for arr in grads.values():
            if not np.isfinite(arr).all():
                raise NumericError("backward pass produced non-finite gradients")
        if not np.isfinite(grad).all():
            raise NumericError("backward pass produced non-finite input gradient")
        return grads, grad

    def zero_like_grads(self) -> dict[str, np.ndarray]:
        return {name: np.zeros_like(arr) for name, arr in self.params.items()}

    def copy(self) -> "Network":
        """Deep copy of layers, parameters, buffers and mode (not the cache)."""
        dup = Network.__new__(Network)
        dup.layers = list(self.layers)
        dup.training = self.training
        dup.params = {k: v.copy() for k, v in self.params.items()}
        dup.buffers = {k: v.copy() for k, v in self.buffers.items()}
        dup._cache = None
        return dup


def accumulate_grads(into: dict[str, np.ndarray],
                     extra: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Sum two named-gradient dicts, in place on ``into``."""
    for name, arr in extra.items():
        if name in into:
            into[name] = into[name] + arr
        else:
            into[name] = arr
    return into
