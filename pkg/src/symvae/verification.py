"""Self-checks on linear-Gaussian models: decompositions, the fitted
discriminator against the analytic log-ratio, and the symmetric-KL estimator."""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .identities import IDENTITIES, DecompositionReport, LinearGaussianSpec, evaluate_decomposition
from .models import Architecture, ModelTriple, build_triple, discriminate
from .objectives import (BatchPair, ObjectiveSpec, analytic_log_ratio, discriminator_objective,
                         symmetric_kl_from_logratios)
from .training import AdamState, adam_step


def random_models(n: int, seed: int, dx: int = 2, dz: int = 2) -> list[LinearGaussianSpec]:
    rng = np.random.default_rng(seed)
    return [LinearGaussianSpec.random(rng, dx, dz) for _ in range(n)]


def check_decompositions(n_models: int = 20, n_samples: int = 100_000, seed: int = 0) -> list[DecompositionReport]:
    reports = []
    rng = np.random.default_rng(seed + 1)
    for model in random_models(n_models, seed):
        for identity in IDENTITIES:
            reports.append(evaluate_decomposition(model, identity, n_samples, rng))
    return reports


@dataclass
class RatioFit:
    correlation: float
    grid_size: int
    final_objective: float


def _pair_batch(model: LinearGaussianSpec, n: int, rng) -> BatchPair:
    xq, zq = model.sample_q(n, rng)
    xp, zp = model.sample_p(n, rng)
    return BatchPair(T.Tensor(xq), T.Tensor(zq), T.Tensor(xp), T.Tensor(zp))


def fit_discriminator(model: LinearGaussianSpec, steps: int = 4000, batch_size: int = 256, lr: float = 1e-3,
                      hidden: tuple[int, ...] = (64, 64), seed: int = 0) -> ModelTriple:
    """Train only the discriminator on exact samples of the two joints."""
    arch = Architecture(encoder_hidden=(1,), decoder_hidden=(1,), discriminator_hidden=hidden)
    triple = build_triple(model.dx, model.dz, seed, arch)
    rng = np.random.default_rng(seed)
    spec = ObjectiveSpec("SVAE")
    state = AdamState.zeros(triple.discriminator.params)
    for _ in range(steps):
        leaves = T.leaf_params(triple.discriminator.params, True)
        value = discriminator_objective(spec, triple, _pair_batch(model, batch_size, rng), leaves)
        grads = T.gradients(value, leaves)
        triple.discriminator.params = adam_step(state, triple.discriminator.params,
                                                {k: -g for k, g in grads.items()}, lr)
    return triple


def evaluation_grid(model: LinearGaussianSpec, per_axis: int = 5, width: float = 1.5) -> tuple[np.ndarray, np.ndarray]:
    """Regular grid in the whitened coordinates of the equal mixture of both joints.

    Whitening keeps the grid on the correlated ridge where the joints put
    their mass instead of in empty box corners.
    """
    mp, cp = model.joint_p()
    mq, cq = model.joint_q()
    mean = 0.5 * (mp + mq)
    cov = 0.5 * (cp + cq) + 0.25 * np.outer(mp - mq, mp - mq)
    axis = np.linspace(-width, width, per_axis)
    u = np.array(list(itertools.product(axis, repeat=len(mean))))
    pts = mean + u @ np.linalg.cholesky(cov).T
    return pts[:, :model.dx], pts[:, model.dx:]


def optimal_discriminator_check(model: LinearGaussianSpec, seed: int = 0, steps: int = 4000) -> RatioFit:
    """Pearson correlation of the fitted logit with log p(x,z) - log q(x,z) on a held-out grid."""
    triple = fit_discriminator(model, steps=steps, seed=seed)
    x, z = evaluation_grid(model)
    fitted = discriminate(triple, x, z).data
    exact = analytic_log_ratio(model, x, z)
    final = discriminator_objective(ObjectiveSpec("SVAE"), triple,
                                    _pair_batch(model, 5000, np.random.default_rng(seed + 99))).item()
    return RatioFit(float(np.corrcoef(fitted, exact)[0, 1]), len(x), final)


def symmetric_kl_check(model: LinearGaussianSpec, n: int = 100_000, seed: int = 0) -> tuple[float, float, float]:
    """``(estimate, standard_error, closed_form)`` with the analytic ratio as discriminator."""
    rng = np.random.default_rng(seed)
    xq, zq = model.sample_q(n, rng)
    xp, zp = model.sample_p(n, rng)
    est, se = symmetric_kl_from_logratios(analytic_log_ratio(model, xq, zq), analytic_log_ratio(model, xp, zp))
    return est, se, model.joint_symmetric_kl()


def run_verification(seed: int = 0, n_models: int = 20, n_ratio_models: int = 5,
                     ratio_threshold: float = 0.95, disc_steps: int = 4000) -> dict:
    """Everything ``verify`` checks, as a JSON-ready record with an overall ``passed`` flag."""
    seconds = {}
    t0 = time.perf_counter()
    decomp = check_decompositions(n_models, seed=seed)
    seconds["decompositions"] = time.perf_counter() - t0
    ratio_models = random_models(n_ratio_models, seed + 1000)
    t0 = time.perf_counter()
    fits = [optimal_discriminator_check(m, seed=seed + i, steps=disc_steps) for i, m in enumerate(ratio_models)]
    seconds["optimal_discriminator"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    skl = [symmetric_kl_check(m, seed=seed + i) for i, m in enumerate(ratio_models)]
    seconds["symmetric_kl"] = time.perf_counter() - t0
    out = {
        "decompositions": [dict(r.to_record(), passed=bool(r.passed())) for r in decomp],
        "optimal_discriminator": [{"correlation": float(f.correlation), "grid_size": f.grid_size,
                                   "passed": bool(f.correlation > ratio_threshold)} for f in fits],
        "symmetric_kl": [{"estimate": float(e), "standard_error": float(s), "closed_form": float(c), "passed": bool(abs(e - c) < 3 * s)}
                         for e, s, c in skl],
    }
    out["passed"] = all(r["passed"] for section in out.values() for r in section)
    out["seconds"] = seconds
    return out
