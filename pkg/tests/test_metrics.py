import math

import numpy as np
import pytest
from scipy.special import logsumexp
from scipy.stats import multivariate_normal

from symvae.data import ToyDatasetSpec, build_toy_gmm, make_dataset
from symvae.metrics import (MetricsRecord, evaluate, gradient_norm_probe, inception_score_analog, iw_loglik,
                            iw_loglik_per_point, mode_coverage, reconstruction_mse)
from symvae.models import Architecture, build_triple, unclamp_log_variance
from symvae.objectives import Noise, ObjectiveSpec

from .helpers import linear_triple, posterior_model

GMM = build_toy_gmm(ToyDatasetSpec())


def test_mode_coverage_true_samples():
    pts, _ = GMM.sample(100_000, np.random.default_rng(0))
    covered, hq = mode_coverage(pts, GMM, 3.0)
    assert covered == 5
    # 2-D Gaussian mass within 3 sigma is 1 - exp(-4.5)
    p = 1.0 - math.exp(-4.5)
    assert abs(hq - p) < 4 * math.sqrt(p * (1 - p) / 100_000)


def test_mode_coverage_collapse_and_box():
    covered, hq = mode_coverage(np.tile(GMM.means[2], (100, 1)), GMM)
    assert (covered, hq) == (1, 1.0)
    rng = np.random.default_rng(1)
    box = rng.uniform(-5, 5, size=(200_000, 2))
    _, hq = mode_coverage(box, GMM, 3.0)
    expected = 5 * math.pi * 0.3 ** 2 / 100.0
    assert abs(hq - expected) < 4 * math.sqrt(expected / 200_000)


def test_mode_coverage_one_percent_rule():
    pts = np.vstack([np.tile(GMM.means[0], (990, 1)), np.tile(GMM.means[1], (10, 1))])
    assert mode_coverage(pts, GMM)[0] == 2
    pts = np.vstack([np.tile(GMM.means[0], (991, 1)), np.tile(GMM.means[1], (9, 1))])
    assert mode_coverage(pts, GMM)[0] == 1


def test_inception_analog_extremes():
    assert inception_score_analog(np.tile(GMM.means[0], (50, 1)), GMM) == pytest.approx(1.0, abs=1e-9)
    split = np.repeat(GMM.means, 20, axis=0)
    assert inception_score_analog(split, GMM) == pytest.approx(5.0, abs=1e-6)
    pts, _ = GMM.sample(100_000, np.random.default_rng(2))
    assert abs(inception_score_analog(pts, GMM) - 5.0) < 0.1


def test_inception_analog_against_direct_formula():
    pts = np.random.default_rng(3).normal(scale=2.0, size=(300, 2))
    dens = np.column_stack([w * multivariate_normal(m, np.diag(v)).pdf(pts)
                            for w, m, v in zip(GMM.weights, GMM.means, GMM.variances)])
    ok = dens.sum(1) > 1e-300
    r = dens[ok] / dens[ok].sum(1, keepdims=True)
    rbar = r.mean(0)
    with np.errstate(divide="ignore", invalid="ignore"):
        kl = np.nansum(np.where(r > 0, r * np.log(r / rbar), 0.0), axis=1)
    assert inception_score_analog(pts[ok], GMM) == pytest.approx(math.exp(kl.mean()), rel=1e-9)


def _identity_triple():
    """x -> z = x -> x with near-zero variance on both sides (dims 2, 2)."""
    eye, zero = np.eye(2), np.zeros(2)
    lv = unclamp_log_variance(-6.0) * np.ones(2)
    return linear_triple(eye, zero, lv, eye, zero, lv)


def test_reconstruction_mse_identity_and_constant():
    x = np.random.default_rng(0).standard_normal((50, 2))
    assert reconstruction_mse(_identity_triple(), x) < 1e-20
    c = np.array([0.5, -1.0])
    triple = linear_triple(np.eye(2), np.zeros(2), np.zeros(2), np.zeros((2, 2)), c, np.zeros(2))
    direct = np.mean(np.sum((x - c) ** 2, axis=1))
    assert reconstruction_mse(triple, x) == pytest.approx(direct, abs=1e-12)
    assert reconstruction_mse(triple, x[::-1]) == pytest.approx(reconstruction_mse(triple, x), abs=1e-12)


def test_iw_k1_is_single_sample_elbo():
    model, triple = posterior_model(np.random.default_rng(4), exact=False)
    x = np.random.default_rng(5).standard_normal((20, 1))
    per = iw_loglik_per_point(triple, x, 1, 7)
    # same draws by hand
    rng = np.random.default_rng(7)
    eps = rng.standard_normal((20, 1))
    W, b = triple.encoder.params["0.W"], triple.encoder.params["0.b"]
    mu, lv = x @ W[:, :1] + b[:1], np.full((20, 1), model["enc_lv"])
    z = mu + np.exp(0.5 * lv) * eps
    log_q = multivariate_normal(0, 1).logpdf(eps[:, 0]) - 0.5 * lv[:, 0]
    log_prior = multivariate_normal(0, 1).logpdf(z[:, 0])
    mean_x = z @ model["A"].T + model["b"]
    log_px = np.array([multivariate_normal(m, model["sigma"] ** 2).logpdf(xx) for m, xx in zip(mean_x[:, 0], x[:, 0])])
    np.testing.assert_allclose(per, log_px + log_prior - log_q, atol=1e-10)


def test_iw_exact_posterior_is_exact():
    model, triple = posterior_model(np.random.default_rng(6), exact=True)
    x = np.random.default_rng(8).standard_normal((30, 1)) * 2
    marginal = multivariate_normal(model["b"][0], model["A"][0, 0] ** 2 + model["sigma"] ** 2).logpdf(x[:, 0])
    for k in (1, 16):
        np.testing.assert_allclose(iw_loglik_per_point(triple, x, k, 0), marginal, atol=1e-9)


def test_iw_monotone_in_k_on_average():
    _, triple = posterior_model(np.random.default_rng(9), exact=False)
    x = np.random.default_rng(1).standard_normal((50, 1))
    k1 = np.mean([iw_loglik(triple, x, 1, s) for s in range(20)])
    k64 = np.mean([iw_loglik(triple, x, 64, s) for s in range(20)])
    assert k64 >= k1


def test_iw_validation():
    _, triple = posterior_model(np.random.default_rng(0), exact=True)
    with pytest.raises(ValueError):
        iw_loglik(triple, np.zeros((2, 1)), 0)
    with pytest.raises(ValueError):
        iw_loglik(build_triple(2, 2, 0, decoder_only=True), np.zeros((2, 2)), 4)


def test_logsumexp_stability_in_iw():
    log_w = np.array([[-1000.0, -1000.0]])
    assert logsumexp(log_w, axis=1)[0] - math.log(2) == pytest.approx(-1000.0)


def test_metrics_record_validation():
    with pytest.raises(ValueError):
        MetricsRecord(0, -1.0, 5, 0.5, 2.0, None, 0.0)
    with pytest.raises(ValueError):
        MetricsRecord(0, 1.0, 5, 1.5, 2.0, None, 0.0)


def test_evaluate_is_pure_and_seeded():
    gmm, ds = make_dataset(ToyDatasetSpec(n_samples=600))
    triple = build_triple(2, 2, 0, Architecture((8,), (8,), (8,)))
    before = {g: {k: v.copy() for k, v in p.items()} for g, p in triple.named_params().items()}
    a = evaluate(triple, ObjectiveSpec("SVAE"), gmm, ds.points, 1, np.random.default_rng(3), 500, 4)
    b = evaluate(triple, ObjectiveSpec("SVAE"), gmm, ds.points, 1, np.random.default_rng(3), 500, 4)
    assert a == b
    assert 1.0 <= a.is_analog <= 5.0 and 0 <= a.modes_covered <= 5
    for g, p in triple.named_params().items():
        for k, v in p.items():
            np.testing.assert_array_equal(v, before[g][k])


def test_probe_does_not_mutate_and_is_deterministic():
    triple = build_triple(2, 2, 0, Architecture((8,), (8,), (16,)))
    rng = np.random.default_rng(0)
    noise = Noise.draw(rng, rng.standard_normal((100, 2)) + 3.0, 64, 2)
    disc_before = {k: v.copy() for k, v in triple.discriminator.params.items()}
    r1 = gradient_norm_probe(triple, noise, [0, 5])
    r2 = gradient_norm_probe(triple, noise, [0, 5])
    assert r1[0] == r2[0] and r1[5] == r2[5]
    assert not r1[5].failed and r1[5].ratio > 0
    for k, v in triple.discriminator.params.items():
        np.testing.assert_array_equal(v, disc_before[k])
