"""Hand-built networks with known closed forms."""

import math

import numpy as np

from symvae.models import MlpSpec, ModelTriple, Network, init_xavier, unclamp_log_variance


def linear_gaussian_net(M, c, lv_raw) -> Network:
    """Single affine layer: mean = u @ M + c, raw log-variance head constant ``lv_raw``."""
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    d_in, d_out = M.shape
    spec = MlpSpec((d_in, 2 * d_out), (), (("mean", d_out), ("log_variance", d_out)))
    W = np.hstack([M, np.zeros((d_in, d_out))])
    b = np.concatenate([np.broadcast_to(np.asarray(c, float), (d_out,)),
                        np.broadcast_to(np.asarray(lv_raw, float), (d_out,))])
    return Network(spec, {"0.W": W, "0.b": b})


def linear_triple(M_enc, c_enc, lv_enc, M_dec, c_dec, lv_dec, disc_hidden=(8,)) -> ModelTriple:
    enc = linear_gaussian_net(M_enc, c_enc, lv_enc)
    dec = linear_gaussian_net(M_dec, c_dec, lv_dec)
    x_dim, z_dim = enc.spec.input_dim, dec.spec.input_dim
    disc_spec = MlpSpec.logit(x_dim + z_dim, disc_hidden)
    return ModelTriple(enc, dec, Network(disc_spec, init_xavier(disc_spec, 0)), x_dim, z_dim)


def posterior_model(rng, exact=True):
    """1-D linear-Gaussian decoder with its exact (or a perturbed) posterior as encoder."""
    A = rng.uniform(0.5, 1.5) * rng.choice([-1.0, 1.0])
    b = rng.normal(scale=0.5)
    sigma = rng.uniform(0.5, 1.2)
    s2 = A * A + sigma * sigma
    m_enc, c_enc, lv = A / s2, -A * b / s2, math.log(sigma * sigma / s2)
    if not exact:
        m_enc, c_enc, lv = m_enc * 0.7, c_enc + 0.3, lv + 0.5
    model = {"A": np.array([[A]]), "b": np.array([b]), "sigma": sigma, "enc_lv": lv}
    triple = linear_triple([[m_enc]], [c_enc], unclamp_log_variance(lv), [[A]], [b],
                           unclamp_log_variance(math.log(sigma * sigma)))
    return model, triple
