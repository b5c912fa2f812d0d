"""Diagonal Gaussians and Gaussian mixtures.

Gaussian routines are written with tensor ops so gradients flow through
means, log-variances and evaluation points; plain arrays are accepted and
treated as constants.  Batched inputs of shape ``(n, d)`` return ``(n,)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import tensor as T
from .tensor import Tensor, as_tensor

LOG_2PI = math.log(2.0 * math.pi)


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class DiagonalGaussian:
    """N(mean, diag(exp(log_variance))); fields may be arrays or Tensors."""

    mean: Tensor
    log_variance: Tensor

    def __post_init__(self):
        object.__setattr__(self, "mean", as_tensor(self.mean))
        object.__setattr__(self, "log_variance", as_tensor(self.log_variance))
        if self.mean.shape != self.log_variance.shape:
            raise DimensionError(
                f"mean shape {self.mean.shape} differs from log_variance shape {self.log_variance.shape}")
        if not np.all(np.isfinite(self.log_variance.data)):
            raise ValueError("log_variance must be finite")

    @classmethod
    def standard(cls, dim: int) -> "DiagonalGaussian":
        return cls(np.zeros(dim), np.zeros(dim))

    @property
    def dim(self) -> int:
        return self.mean.shape[-1]

    @property
    def variance(self) -> np.ndarray:
        return np.exp(self.log_variance.data)


def _check_dim(name: str, g: DiagonalGaussian, x: Tensor) -> None:
    if x.shape[-1:] != g.mean.shape[-1:]:
        raise DimensionError(f"{name}: point dimension {x.shape[-1:]} != distribution dimension {g.dim}")


def gaussian_log_pdf(g: DiagonalGaussian, x) -> Tensor:
    x = as_tensor(x)
    _check_dim("gaussian_log_pdf", g, x)
    diff = T.broadcast_add(x, T.negate(g.mean))
    mahal = T.broadcast_multiply(T.square(diff), T.exp(T.negate(g.log_variance)))
    per_dim = T.broadcast_add(mahal, T.broadcast_add(g.log_variance, LOG_2PI))
    return T.multiply(T.sum_reduce(per_dim, axis=-1), -0.5)


def gaussian_kl(a: DiagonalGaussian, b: DiagonalGaussian) -> Tensor:
    """Closed-form KL(a || b), summed over the last axis."""
    if a.mean.shape[-1:] != b.mean.shape[-1:]:
        raise DimensionError(f"gaussian_kl: dimensions {a.dim} and {b.dim} differ")
    var_ratio = T.exp(T.broadcast_add(a.log_variance, T.negate(b.log_variance)))
    mean_term = T.broadcast_multiply(T.square(T.broadcast_add(a.mean, T.negate(b.mean))),
                                     T.exp(T.negate(b.log_variance)))
    log_term = T.broadcast_add(b.log_variance, T.negate(a.log_variance))
    per_dim = T.broadcast_add(T.broadcast_add(var_ratio, mean_term), T.broadcast_add(log_term, -1.0))
    return T.multiply(T.sum_reduce(per_dim, axis=-1), 0.5)


def symmetric_kl_gaussian(a: DiagonalGaussian, b: DiagonalGaussian) -> Tensor:
    return T.add(gaussian_kl(a, b), gaussian_kl(b, a))


def sample_reparameterized(g: DiagonalGaussian, eps) -> Tensor:
    """``mean + exp(log_variance / 2) * eps``, differentiable in both fields."""
    eps = as_tensor(eps)
    _check_dim("sample_reparameterized", g, eps)
    std = T.exp(T.multiply(g.log_variance, 0.5))
    return T.broadcast_add(g.mean, T.broadcast_multiply(std, eps))


def gaussian_entropy(g: DiagonalGaussian) -> Tensor:
    return T.multiply(T.sum_reduce(T.broadcast_add(g.log_variance, LOG_2PI + 1.0), axis=-1), 0.5)


# ----------------------------------------------------------------- mixtures


@dataclass(frozen=True)
class GmmDensity:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        mu = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        var = np.atleast_2d(np.asarray(self.variances, dtype=np.float64))
        if abs(w.sum() - 1.0) > 1e-12 or np.any(w < 0):
            raise ValueError(f"weights must be a probability vector, sum={w.sum()!r}")
        if mu.shape != var.shape or mu.shape[0] != w.shape[0]:
            raise DimensionError(f"inconsistent shapes: weights {w.shape}, means {mu.shape}, variances {var.shape}")
        if np.any(var <= 0):
            raise ValueError("variances must be positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "variances", var)

    @property
    def n_components(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def component_log_pdfs(self, x) -> np.ndarray:
        """``(n, k)`` matrix of log N(x_i; mean_k, var_k)."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.dim:
            raise DimensionError(f"gmm: point dimension {x.shape[1]} != {self.dim}")
        diff = x[:, None, :] - self.means[None, :, :]
        return -0.5 * np.sum(diff * diff / self.variances + np.log(self.variances) + LOG_2PI, axis=-1)

    def responsibilities(self, x) -> np.ndarray:
        joint = self.component_log_pdfs(x) + np.log(self.weights)
        return np.exp(joint - logsumexp(joint, axis=1, keepdims=True))

    def sample(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        labels = rng.choice(self.n_components, size=n, p=self.weights)
        noise = rng.standard_normal((n, self.dim))
        return self.means[labels] + np.sqrt(self.variances[labels]) * noise, labels


def gmm_log_pdf(m: GmmDensity, x) -> np.ndarray | float:
    """log q(x) via log-sum-exp; a single point returns a float."""
    arr = np.asarray(x, dtype=np.float64)
    out = logsumexp(m.component_log_pdfs(arr) + np.log(m.weights), axis=1)
    return float(out[0]) if arr.ndim == 1 else out
