import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from symvae import tensor as T
from symvae.distributions import DimensionError
from symvae.models import (LOGVAR_MAX, LOGVAR_MIN, MlpSpec, Network, build_triple, clamp_log_variance,
                           conditional_density, decode, discriminate, encode, init_xavier,
                           unclamp_log_variance, with_params)


def test_param_shapes_and_xavier_bounds():
    spec = MlpSpec.gaussian(2, 3, (8, 4))
    params = init_xavier(spec, 0)
    assert {k: v.shape for k, v in params.items()} == spec.param_shapes()
    assert spec.param_shapes()["2.W"] == (4, 6)
    for name, v in params.items():
        if name.endswith(".b"):
            assert np.all(v == 0)
        else:
            assert np.max(np.abs(v)) <= np.sqrt(6.0 / sum(v.shape))


def test_spec_validation():
    with pytest.raises(ValueError):
        MlpSpec((2, 4, 3), "relu", (("mean", 1), ("log_variance", 1)))
    with pytest.raises(ValueError):
        MlpSpec((2, 4, 1), "swish", (("logit", 1),))
    with pytest.raises(ValueError):
        MlpSpec((2, 4, 4, 1), ("relu",), (("logit", 1),))


def test_spec_roundtrip():
    spec = MlpSpec.gaussian(2, 2, (16, 8), "tanh")
    assert MlpSpec.from_dict(spec.to_dict()) == spec


def test_clamp_range_and_inverse():
    raw = T.Tensor(np.linspace(-1e3, 1e3, 101))
    lv = clamp_log_variance(raw).data
    assert np.all(lv >= LOGVAR_MIN) and np.all(lv <= LOGVAR_MAX)
    targets = np.array([-7.5, -2.0, 0.0, 1.3, 3.9])
    np.testing.assert_allclose(clamp_log_variance(T.Tensor(unclamp_log_variance(targets))).data, targets,
                               atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(-50, 50), st.floats(-50, 50))
def test_clamp_monotone(a, b):
    ca = clamp_log_variance(T.Tensor(a)).item()
    cb = clamp_log_variance(T.Tensor(b)).item()
    assert (ca - cb) * (a - b) >= 0


def test_network_rejects_wrong_input_dim():
    net = Network(MlpSpec.logit(3, (4,)), init_xavier(MlpSpec.logit(3, (4,)), 0))
    with pytest.raises(DimensionError):
        net.forward(np.zeros((5, 2)))


def test_build_triple_shapes():
    triple = build_triple(2, 3, seed=1)
    x = np.random.default_rng(0).standard_normal((10, 2))
    z, q = encode(triple, x, np.zeros((10, 3)))
    np.testing.assert_array_equal(z.data, q.mean.data)
    xs, p = decode(triple, z, np.zeros((10, 2)))
    assert xs.shape == (10, 2) and p.log_variance.shape == (10, 2)
    assert discriminate(triple, x, z).shape == (10,)
    with pytest.raises(ValueError):
        discriminate(triple, x)


def test_decoder_only_triple():
    triple = build_triple(2, 2, seed=1, decoder_only=True)
    assert triple.decoder_only and triple.encoder is None
    assert triple.discriminator.spec.input_dim == 2
    assert discriminate(triple, np.zeros((4, 2))).shape == (4,)
    with pytest.raises(ValueError):
        encode(triple, np.zeros((4, 2)), np.zeros((4, 2)))


def test_build_triple_deterministic_and_copy_independent():
    a, b = build_triple(2, 2, seed=3), build_triple(2, 2, seed=3)
    for group, params in a.named_params().items():
        for k, v in params.items():
            np.testing.assert_array_equal(v, b.named_params()[group][k])
    c = a.copy()
    c.decoder.params["0.W"][0, 0] += 1.0
    assert a.decoder.params["0.W"][0, 0] != c.decoder.params["0.W"][0, 0]


def test_noise_shape_checked():
    triple = build_triple(2, 2, seed=0)
    with pytest.raises(DimensionError):
        encode(triple, np.zeros((3, 2)), np.zeros((3, 1)))


def test_with_params_replaces_one_group():
    triple = build_triple(2, 2, seed=0)
    zeroed = {k: np.zeros_like(v) for k, v in triple.decoder.params.items()}
    other = with_params(triple, decoder=zeroed)
    out = conditional_density(other.decoder, np.ones((3, 2)))
    np.testing.assert_array_equal(out.mean.data, 0.0)
    assert other.encoder is triple.encoder
    assert np.any(triple.decoder.params["0.W"] != 0)
