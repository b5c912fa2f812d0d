"""Evaluation: reconstruction error, mode coverage, a GMM-posterior inception
score analog, an importance-weighted log-likelihood bound, and the
discriminator-saturation gradient probe."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import logsumexp, xlogy

from . import tensor as T
from .distributions import DiagonalGaussian, GmmDensity, gaussian_log_pdf
from .models import ModelTriple, conditional_density, decode, encode
from .objectives import (BatchPair, Noise, ObjectiveSpec, Variant, build_batch, discriminator_objective,
                         generator_leaves, generator_objective, symmetric_kl_estimate)


@dataclass
class MetricsRecord:
    step: int
    mse: float | None
    modes_covered: int
    high_quality_fraction: float
    is_analog: float
    iw_loglik: float | None
    skl_estimate: float
    gen_grad_norm_raw_f: float | None = None
    gen_grad_norm_log_sigmoid: float | None = None

    def __post_init__(self):
        if self.mse is not None and self.mse < 0:
            raise ValueError("mse must be nonnegative")
        if not 0.0 <= self.high_quality_fraction <= 1.0:
            raise ValueError("high_quality_fraction outside [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


def reconstruction_mse(triple: ModelTriple, eval_set) -> float:
    """Mean squared norm of x - decode_mean(encode_mean(x)); no sampling noise."""
    x = np.atleast_2d(np.asarray(eval_set, dtype=np.float64))
    if x.shape[0] == 0:
        raise ValueError("empty evaluation set")
    z_mean = conditional_density(triple.encoder, x).mean.data
    x_hat = conditional_density(triple.decoder, z_mean).mean.data
    return float(np.mean(np.sum((x - x_hat) ** 2, axis=1)))


def _nearest_component(generated: np.ndarray, gmm: GmmDensity) -> tuple[np.ndarray, np.ndarray]:
    """Index of the closest component in standardized distance, and that distance."""
    diff = generated[:, None, :] - gmm.means[None, :, :]
    scaled = np.sqrt(np.sum(diff * diff / gmm.variances[None, :, :], axis=-1))
    idx = np.argmin(scaled, axis=1)
    return idx, scaled[np.arange(len(idx)), idx]


def mode_coverage(generated, gmm: GmmDensity, threshold_sigmas: float = 3.0,
                  min_mode_fraction: float = 0.01) -> tuple[int, float]:
    """``(modes_covered, high_quality_fraction)``.

    A point is high quality when it lies within ``threshold_sigmas`` standard
    deviations of a component mean; a mode is covered when at least
    ``min_mode_fraction`` of all generated points are high quality and
    nearest to it.
    """
    pts = np.atleast_2d(np.asarray(generated, dtype=np.float64))
    if pts.shape[0] == 0:
        raise ValueError("empty generated set")
    idx, dist = _nearest_component(pts, gmm)
    good = dist <= threshold_sigmas
    counts = np.bincount(idx[good], minlength=gmm.n_components)
    covered = int(np.sum(counts >= min_mode_fraction * len(pts)))
    return covered, float(np.mean(good))


def inception_score_analog(generated, gmm: GmmDensity) -> float:
    """exp(mean_x KL(r(.|x) || mean_x r(.|x))) with the true mixture posterior as classifier."""
    pts = np.atleast_2d(np.asarray(generated, dtype=np.float64))
    if pts.shape[0] == 0:
        raise ValueError("empty generated set")
    r = gmm.responsibilities(pts)
    r_bar = r.mean(axis=0)
    kl = np.sum(xlogy(r, r) - xlogy(r, np.broadcast_to(r_bar, r.shape)), axis=1)
    score = math.exp(float(np.mean(kl)))
    # KL >= 0 and mean KL <= log(n) hold exactly; clip float round-off only
    return min(max(score, 1.0), float(gmm.n_components))


def iw_log_weights(triple: ModelTriple, x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """``(n, k)`` log importance weights log p(x|z) + log p(z) - log q(z|x), z ~ q(z|x)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    n = x.shape[0]
    xr = np.repeat(x, k, axis=0)
    eps = rng.standard_normal((n * k, triple.z_dim))
    z, q = encode(triple, xr, eps)
    p_x = conditional_density(triple.decoder, z)
    prior = DiagonalGaussian.standard(triple.z_dim)
    log_w = gaussian_log_pdf(p_x, xr).data + gaussian_log_pdf(prior, z).data - gaussian_log_pdf(q, z).data
    return log_w.reshape(n, k)


def iw_loglik_per_point(triple: ModelTriple, eval_set, k: int, rng) -> np.ndarray:
    if k < 1:
        raise ValueError("k must be >= 1")
    if triple.encoder is None:
        raise ValueError("importance-weighted bound needs an encoder")
    log_w = iw_log_weights(triple, eval_set, k, np.random.default_rng(rng))
    return logsumexp(log_w, axis=1) - math.log(k)


def iw_loglik(triple: ModelTriple, eval_set, k: int, rng=None) -> float:
    """Importance-weighted lower bound on mean log p(x) with k proposals per point.

    This is a k-sample bound, not annealed importance sampling; k = 1 is the
    ordinary single-sample ELBO.
    """
    return float(np.mean(iw_loglik_per_point(triple, eval_set, k, rng)))


# ------------------------------------------------------------ gradient probe


@dataclass
class ProbeResult:
    raw_f_norm: float | None
    log_sigmoid_norm: float | None

    @property
    def failed(self) -> bool:
        return self.raw_f_norm is None or self.log_sigmoid_norm is None

    @property
    def ratio(self) -> float | None:
        if self.failed or self.log_sigmoid_norm == 0:
            return None
        return self.raw_f_norm / self.log_sigmoid_norm


def generator_grad_norm(spec: ObjectiveSpec, triple: ModelTriple, noise: Noise) -> float:
    batch = build_batch(triple, noise, trainable=True)
    value = generator_objective(spec, triple, batch)
    grads = T.backward(value)
    leaves = [t for group in batch.leaves.values() for t in group.values()]
    return T.global_norm(grads.get(t, np.zeros_like(t.data)) for t in leaves)


def _disc_steps_on_batch(triple: ModelTriple, spec: ObjectiveSpec, fixed: BatchPair, state, steps: int,
                         lr: float) -> bool:
    """Adam ascent on the discriminator over one fixed batch; False on a non-finite gradient."""
    from .training import adam_step

    for _ in range(steps):
        leaves = T.leaf_params(triple.discriminator.params, True)
        grads = T.gradients(discriminator_objective(spec, triple, fixed, leaves), leaves)
        if not all(np.all(np.isfinite(g)) for g in grads.values()):
            return False
        triple.discriminator.params = adam_step(state, triple.discriminator.params,
                                                {n: -g for n, g in grads.items()}, lr)
    return True


def fit_discriminator_on_batch(triple: ModelTriple, noise: Noise, steps: int, lr: float = 1e-3,
                               variant: Variant | str = Variant.SVAE) -> ModelTriple:
    """Copy of ``triple`` whose discriminator took ``steps`` Adam steps on the batch from ``noise``."""
    from .training import AdamState

    clone = triple.copy()
    if not _disc_steps_on_batch(clone, ObjectiveSpec(variant), build_batch(clone, noise),
                                AdamState.zeros(clone.discriminator.params), steps, lr):
        raise FloatingPointError("non-finite discriminator gradient")
    return clone


def gradient_norm_probe(triple: ModelTriple, noise: Noise, extra_disc_steps, lr: float = 1e-3,
                        variant: Variant | str = Variant.SVAE) -> dict[int, ProbeResult]:
    """Generator gradient norms under raw-f and log-sigmoid after k more discriminator steps.

    A private copy of the discriminator is trained with Adam on the fixed
    batch described by ``noise``; the caller's triple is never touched.
    Steps accumulate across the sorted ``extra_disc_steps``.
    """
    from .training import AdamState

    clone = triple.copy()
    base = ObjectiveSpec(variant)
    specs = {"raw": base.with_transform("raw-f"), "ls": base.with_transform("log-sigmoid")}
    fixed = build_batch(clone, noise, trainable=False)
    state = AdamState.zeros(clone.discriminator.params)
    results: dict[int, ProbeResult] = {}
    done = 0
    healthy = True
    for k in sorted(set(int(k) for k in extra_disc_steps)):
        if healthy:
            healthy = _disc_steps_on_batch(clone, base, fixed, state, k - done, lr)
            done = k
        if not healthy:
            results[k] = ProbeResult(None, None)
            continue
        norms = []
        for key in ("raw", "ls"):
            nrm = generator_grad_norm(specs[key], clone, noise)
            norms.append(nrm if math.isfinite(nrm) else None)
        results[k] = ProbeResult(*norms)
    return results


# ------------------------------------------------------------------ summary


def sample_model(triple: ModelTriple, n: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((n, triple.z_dim))
    x, _ = decode(triple, z, rng.standard_normal((n, triple.x_dim)))
    return x.data


def evaluate(triple: ModelTriple, spec: ObjectiveSpec, gmm: GmmDensity, real: np.ndarray, step: int,
             rng: np.random.Generator, n_generated: int = 5000, iw_k: int = 16,
             threshold_sigmas: float = 3.0) -> MetricsRecord:
    """One MetricsRecord from fresh draws of ``rng``; model state is read only."""
    generated = sample_model(triple, n_generated, rng)
    covered, hq = mode_coverage(generated, gmm, threshold_sigmas)
    is_score = inception_score_analog(generated, gmm)
    mse = iw = None
    if not triple.decoder_only:
        mse = reconstruction_mse(triple, real)
        iw = iw_loglik(triple, real[:1000], iw_k, rng)
    noise = Noise.draw(rng, real, min(len(real), 1000), triple.z_dim)
    skl, _ = symmetric_kl_estimate(triple, build_batch(triple, noise))
    return MetricsRecord(step, mse, covered, hq, is_score, iw, skl)
