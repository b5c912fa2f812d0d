"""Discriminator and generator objectives for sVAE, sVAE-r, ALI, GAN and WGAN.

Sign convention: the discriminator logit f(x, z) is trained to be large on
model pairs (z ~ p(z), x ~ p(x|z)) and small on data pairs (x ~ q(x),
z ~ q(z|x)), so at optimum f = log p(x, z) - log q(x, z).  Both phases
*maximize* their objective.

Generator transforms:

``raw-f``
    E_q f - E_p f, the log-likelihood-ratio objective.
``log-sigmoid``
    -(E_p log s(f) + E_q log(1 - s(f))): minus the discriminator's value,
    i.e. the saturating minimax game of ALI and of the original GAN.
``log-sigmoid-ns``
    E_q log s(f) + E_p log s(-f): the monotone replacement of +-f by
    log s(+-f), which has the same fixed points but does not saturate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from . import tensor as T
from .distributions import DiagonalGaussian, gaussian_kl, gaussian_log_pdf
from .identities import LinearGaussianSpec
from .models import ModelTriple, conditional_density, decode, discriminate, encode
from .tensor import Tensor


class Variant(str, Enum):
    SVAE = "SVAE"
    SVAE_R = "SVAE_R"
    ALI = "ALI"
    GAN = "GAN"
    WGAN = "WGAN"

    @classmethod
    def parse(cls, name: "str | Variant") -> "Variant":
        if isinstance(name, Variant):
            return name
        key = str(name).strip().upper().replace("-", "_")
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown variant {name!r}; expected one of {[v.value for v in cls]}") from None


TRANSFORMS = ("raw-f", "log-sigmoid", "log-sigmoid-ns")

_DEFAULT_TRANSFORM = {Variant.SVAE: "raw-f", Variant.SVAE_R: "raw-f", Variant.ALI: "log-sigmoid",
                      Variant.GAN: "log-sigmoid", Variant.WGAN: "raw-f"}


@dataclass(frozen=True)
class ObjectiveSpec:
    variant: Variant = Variant.SVAE
    lam: float = 0.0
    generator_transform: str | None = None

    def __post_init__(self):
        v = Variant.parse(self.variant)
        object.__setattr__(self, "variant", v)
        transform = self.generator_transform or _DEFAULT_TRANSFORM[v]
        object.__setattr__(self, "generator_transform", transform)
        lam = float(self.lam)
        object.__setattr__(self, "lam", lam)
        if not lam >= 0.0:
            raise ValueError(f"lambda must be nonnegative, got {lam}")
        if lam > 0 and v is not Variant.SVAE_R:
            raise ValueError(f"lambda > 0 requires variant SVAE_R, got {v.value}")
        if transform not in TRANSFORMS:
            raise ValueError(f"generator_transform must be one of {TRANSFORMS}, got {transform!r}")
        if v is Variant.WGAN and transform != "raw-f":
            raise ValueError("WGAN critic output is not a logit; only raw-f applies")

    @property
    def decoder_only(self) -> bool:
        return self.variant in (Variant.GAN, Variant.WGAN)

    @property
    def label(self) -> str:
        return f"{self.variant.value}(lambda={self.lam:g},{self.generator_transform})"

    def with_transform(self, transform: str) -> "ObjectiveSpec":
        return replace(self, generator_transform=transform)


@dataclass
class BatchPair:
    """Paired samples from the data-side and model-side joints.

    q side: x from data, z = encode(x, eps).  p side: z from the prior,
    x = decode(z, eps).  ``z_q`` is None for decoder-only models.
    ``leaves`` holds the generator parameter tensors the batch was built
    from when it is part of a differentiable graph.
    """

    x_q: Tensor
    z_q: Tensor | None
    x_p: Tensor
    z_p: Tensor
    leaves: dict[str, dict[str, Tensor]] | None = None

    def __post_init__(self):
        if self.x_q.shape[0] == 0 or self.x_p.shape[0] == 0:
            raise ValueError("BatchPair: both batches must be nonempty")
        if self.z_q is not None and self.z_q.shape[0] != self.x_q.shape[0]:
            raise ValueError("BatchPair: q-side x and z batch sizes differ")
        if self.z_p.shape[0] != self.x_p.shape[0]:
            raise ValueError("BatchPair: p-side x and z batch sizes differ")

    def detached(self) -> "BatchPair":
        return BatchPair(self.x_q.detach(), None if self.z_q is None else self.z_q.detach(),
                         self.x_p.detach(), self.z_p.detach())


@dataclass
class Noise:
    """Everything random in one batch, so a batch can be rebuilt exactly."""

    x_data: np.ndarray
    z_prior: np.ndarray
    eps_enc: np.ndarray
    eps_dec: np.ndarray

    @classmethod
    def draw(cls, rng: np.random.Generator, data: np.ndarray, batch_size: int, z_dim: int) -> "Noise":
        idx = rng.integers(0, len(data), size=batch_size)
        x = data[idx]
        return cls(x, rng.standard_normal((batch_size, z_dim)), rng.standard_normal((batch_size, z_dim)),
                   rng.standard_normal((batch_size, x.shape[1])))


def generator_leaves(triple: ModelTriple, trainable: bool = True) -> dict[str, dict[str, Tensor]]:
    groups = {"decoder": T.leaf_params(triple.decoder.params, trainable)}
    if triple.encoder is not None:
        groups["encoder"] = T.leaf_params(triple.encoder.params, trainable)
    return groups


def build_batch(triple: ModelTriple, noise: Noise, trainable: bool = False) -> BatchPair:
    leaves = generator_leaves(triple, trainable)
    z_q = None
    if not triple.decoder_only:
        z_q, _ = encode(triple, noise.x_data, noise.eps_enc, leaves=leaves["encoder"])
    x_p, _ = decode(triple, noise.z_prior, noise.eps_dec, leaves=leaves["decoder"])
    return BatchPair(T.Tensor(noise.x_data), z_q, x_p, T.Tensor(noise.z_prior), leaves if trainable else None)


def _logits(triple: ModelTriple, batch: BatchPair, disc_leaves=None) -> tuple[Tensor, Tensor]:
    """Discriminator outputs on both sides from one pass over the stacked batch."""
    n_q = batch.x_q.shape[0]
    x = T.concat([batch.x_q, batch.x_p], axis=0)
    z = None if batch.z_q is None else T.concat([batch.z_q, batch.z_p], axis=0)
    f = discriminate(triple, x, z, leaves=disc_leaves)
    return f[:n_q], f[n_q:]


def discriminator_objective(spec: ObjectiveSpec, triple: ModelTriple, batch: BatchPair,
                            leaves: dict[str, Tensor] | None = None) -> Tensor:
    """Value maximized over the discriminator parameters.

    Batch samples are detached so gradients reach only ``leaves`` (trainable
    leaf tensors for the discriminator, created here when omitted).
    """
    if leaves is None:
        leaves = T.leaf_params(triple.discriminator.params, True)
    f_q, f_p = _logits(triple, batch.detached(), leaves)
    if spec.variant is Variant.WGAN:
        return T.subtract(T.mean_reduce(f_p), T.mean_reduce(f_q))
    # E_q log(1 - s(f)) + E_p log s(f)
    return T.negate(T.add(T.mean_reduce(T.softplus(f_q)), T.mean_reduce(T.softplus(T.negate(f_p)))))


def generator_objective(spec: ObjectiveSpec, triple: ModelTriple, batch: BatchPair) -> Tensor:
    """Value maximized over encoder/decoder parameters with the discriminator frozen.

    For decoder-only variants the data-side term does not depend on the
    decoder; it is evaluated on detached data and contributes no gradient.
    """
    if spec.decoder_only != triple.decoder_only:
        raise ValueError(f"{spec.label} needs a {'decoder-only' if spec.decoder_only else 'joint'} model")
    f_q, f_p = _logits(triple, batch)
    transform = spec.generator_transform
    if transform == "raw-f":
        value = T.subtract(T.mean_reduce(f_q), T.mean_reduce(f_p))
    elif transform == "log-sigmoid":
        value = T.add(T.mean_reduce(T.softplus(T.negate(f_p))), T.mean_reduce(T.softplus(f_q)))
    else:
        value = T.negate(T.add(T.mean_reduce(T.softplus(T.negate(f_q))), T.mean_reduce(T.softplus(f_p))))
    if spec.lam > 0:
        value = T.add(value, T.multiply(reconstruction_terms(triple, batch), spec.lam))
    return value


def reconstruction_terms(triple: ModelTriple, batch: BatchPair) -> Tensor:
    """mean log p(x|z) over data pairs + mean log q(z|x) over model pairs.

    Both conditionals are evaluated through the same parameter tensors that
    produced the batch, so gradients reach the samples and the densities.
    """
    if triple.decoder_only or batch.z_q is None:
        raise ValueError("reconstruction terms need explicit encoder and decoder densities")
    leaves = batch.leaves or generator_leaves(triple, trainable=False)
    p_x_given_z = conditional_density(triple.decoder, batch.z_q, leaves["decoder"])
    q_z_given_x = conditional_density(triple.encoder, batch.x_p, leaves["encoder"])
    return T.add(T.mean_reduce(gaussian_log_pdf(p_x_given_z, batch.x_q)),
                 T.mean_reduce(gaussian_log_pdf(q_z_given_x, batch.z_p)))


def elbo(triple: ModelTriple, x: np.ndarray, eps: np.ndarray,
         leaves: dict[str, dict[str, Tensor]] | None = None) -> Tensor:
    """Single-sample ELBO, mean over the batch: E log p(x|z) - KL(q(z|x) || p(z))."""
    leaves = leaves or generator_leaves(triple, trainable=False)
    z, q = encode(triple, x, eps, leaves=leaves["encoder"])
    p = conditional_density(triple.decoder, z, leaves["decoder"])
    prior = DiagonalGaussian.standard(triple.z_dim)
    return T.mean_reduce(T.subtract(gaussian_log_pdf(p, x), gaussian_kl(q, prior)))


# ----------------------------------------------------------- log-ratio tools


def analytic_log_ratio(model: LinearGaussianSpec, x, z) -> np.ndarray:
    """log p(x, z) - log q(x, z) for a linear-Gaussian pair, through its factorizations."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    if x.shape[1] != model.dx or z.shape[1] != model.dz or x.shape[0] != z.shape[0]:
        raise ValueError(f"expected x (n, {model.dx}) and z (n, {model.dz}), got {x.shape} and {z.shape}")

    def diag_log_pdf(u, mean, var):
        return -0.5 * np.sum((u - mean) ** 2 / var + np.log(var) + math.log(2 * math.pi), axis=1)

    log_p = diag_log_pdf(z, 0.0, 1.0) + diag_log_pdf(x, z @ model.A.T + model.b, model.sigma ** 2)
    log_q = diag_log_pdf(x, model.m, model.S) + diag_log_pdf(z, x @ model.C.T + model.d, model.tau ** 2)
    return log_p - log_q


def symmetric_kl_from_logratios(f_q: np.ndarray, f_p: np.ndarray) -> tuple[float, float]:
    """E_p f - E_q f with its standard error (independent sample sets)."""
    f_q, f_p = np.asarray(f_q, float).ravel(), np.asarray(f_p, float).ravel()
    if f_q.size < 2 or f_p.size < 2:
        raise ValueError("need at least two samples on each side")
    est = float(f_p.mean() - f_q.mean())
    se = math.sqrt(f_p.var(ddof=1) / f_p.size + f_q.var(ddof=1) / f_q.size)
    return est, se


def symmetric_kl_estimate(triple: ModelTriple, batch: BatchPair) -> tuple[float, float]:
    """Symmetric-KL estimate from a fitted discriminator: ``(estimate, standard_error)``."""
    f_q, f_p = _logits(triple, batch.detached())
    return symmetric_kl_from_logratios(f_q.data, f_p.data)
