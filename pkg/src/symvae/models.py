"""Encoder, decoder and discriminator MLPs.

Encoder and decoder are Gaussian-head networks: the last layer is split into
a mean head and a log-variance head, so every draw comes with an explicit
conditional density.  The discriminator returns the raw logit f(x, z).
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .distributions import DiagonalGaussian, DimensionError, sample_reparameterized
from .tensor import Tensor, as_tensor

LOGVAR_MIN = -8.0
LOGVAR_MAX = 4.0
_LV_MID = 0.5 * (LOGVAR_MIN + LOGVAR_MAX)
_LV_HALF = 0.5 * (LOGVAR_MAX - LOGVAR_MIN)

ACTIVATIONS = ("relu", "leaky-relu", "tanh", "sigmoid", "softplus")


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths including input and output; one activation per hidden layer."""

    layer_widths: tuple[int, ...]
    activation: tuple[str, ...]
    output_heads: tuple[tuple[str, int], ...]
    leaky_slope: float = 0.2

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        acts = (self.activation,) * (len(widths) - 2) if isinstance(self.activation, str) else tuple(self.activation)
        heads = tuple((str(n), int(w)) for n, w in self.output_heads)
        object.__setattr__(self, "layer_widths", widths)
        object.__setattr__(self, "activation", acts)
        object.__setattr__(self, "output_heads", heads)
        if len(widths) < 2 or any(w <= 0 for w in widths):
            raise ValueError(f"need at least one layer of positive widths, got {widths}")
        if len(acts) != len(widths) - 2:
            raise ValueError(f"{len(widths) - 2} hidden layers but {len(acts)} activations")
        for a in acts:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        if sum(w for _, w in heads) != widths[-1]:
            raise ValueError(f"head widths {heads} do not sum to output width {widths[-1]}")

    @property
    def input_dim(self) -> int:
        return self.layer_widths[0]

    @property
    def n_layers(self) -> int:
        return len(self.layer_widths) - 1

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes = {}
        for i, (fan_in, fan_out) in enumerate(zip(self.layer_widths[:-1], self.layer_widths[1:])):
            shapes[f"{i}.W"] = (fan_in, fan_out)
            shapes[f"{i}.b"] = (fan_out,)
        return shapes

    @classmethod
    def gaussian(cls, in_dim: int, out_dim: int, hidden: tuple[int, ...], activation: str = "leaky-relu") -> "MlpSpec":
        return cls((in_dim, *hidden, 2 * out_dim), activation, (("mean", out_dim), ("log_variance", out_dim)))

    @classmethod
    def logit(cls, in_dim: int, hidden: tuple[int, ...], activation: str = "relu") -> "MlpSpec":
        return cls((in_dim, *hidden, 1), activation, (("logit", 1),))

    def to_dict(self) -> dict:
        return {"layer_widths": list(self.layer_widths), "activation": list(self.activation),
                "output_heads": [list(h) for h in self.output_heads], "leaky_slope": self.leaky_slope}

    @classmethod
    def from_dict(cls, d: dict) -> "MlpSpec":
        return cls(tuple(d["layer_widths"]), tuple(d["activation"]),
                   tuple(tuple(h) for h in d["output_heads"]), d.get("leaky_slope", 0.2))


def init_xavier(spec: MlpSpec, seed: int | np.random.Generator) -> dict[str, np.ndarray]:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in spec.param_shapes().items():
        if name.endswith(".W"):
            limit = math.sqrt(6.0 / (shape[0] + shape[1]))
            params[name] = rng.uniform(-limit, limit, size=shape)
        else:
            params[name] = np.zeros(shape)
    return params


@dataclass
class Network:
    spec: MlpSpec
    params: dict[str, np.ndarray]

    def forward(self, inputs, trainable: bool = False, leaves: dict[str, Tensor] | None = None) -> dict[str, Tensor]:
        """Run the MLP; ``leaves`` lets the caller supply (and later read) parameter tensors."""
        h = as_tensor(inputs)
        if h.ndim != 2 or h.shape[1] != self.spec.input_dim:
            raise DimensionError(f"network expects (n, {self.spec.input_dim}) input, got {h.shape}")
        if leaves is None:
            leaves = T.leaf_params(self.params, trainable)
        last = self.spec.n_layers - 1
        for i in range(self.spec.n_layers):
            h = T.broadcast_add(T.matmul(h, leaves[f"{i}.W"]), leaves[f"{i}.b"])
            if i < last:
                act = self.spec.activation[i]
                h = T.leaky_relu(h, self.spec.leaky_slope) if act == "leaky-relu" else T.PRIMITIVES[act](h)
        out, start = {}, 0
        for name, width in self.spec.output_heads:
            out[name] = h[:, start:start + width]
            start += width
        return out

    def copy(self) -> "Network":
        return Network(self.spec, {k: v.copy() for k, v in self.params.items()})


def clamp_log_variance(raw: Tensor) -> Tensor:
    """Smoothly squash into [LOGVAR_MIN, LOGVAR_MAX] via a rescaled tanh."""
    return T.add(T.multiply(T.tanh(T.multiply(T.add(raw, -_LV_MID), 1.0 / _LV_HALF)), _LV_HALF), _LV_MID)


def unclamp_log_variance(target: float | np.ndarray) -> np.ndarray:
    """Pre-activation that ``clamp_log_variance`` maps onto ``target``."""
    return _LV_MID + _LV_HALF * np.arctanh((np.asarray(target, dtype=np.float64) - _LV_MID) / _LV_HALF)


@dataclass
class ModelTriple:
    """Encoder q(z|x), decoder p(x|z), discriminator f(x, z).

    ``encoder`` is None for decoder-only models (GAN, WGAN), whose
    discriminator sees x alone.
    """

    encoder: Network | None
    decoder: Network
    discriminator: Network
    x_dim: int
    z_dim: int

    @property
    def decoder_only(self) -> bool:
        return self.encoder is None

    def copy(self) -> "ModelTriple":
        return ModelTriple(None if self.encoder is None else self.encoder.copy(), self.decoder.copy(),
                           self.discriminator.copy(), self.x_dim, self.z_dim)

    def named_params(self) -> dict[str, dict[str, np.ndarray]]:
        groups = {"decoder": self.decoder.params, "discriminator": self.discriminator.params}
        if self.encoder is not None:
            groups["encoder"] = self.encoder.params
        return groups

    def specs(self) -> dict[str, MlpSpec]:
        out = {"decoder": self.decoder.spec, "discriminator": self.discriminator.spec}
        if self.encoder is not None:
            out["encoder"] = self.encoder.spec
        return out


@dataclass(frozen=True)
class Architecture:
    """Hidden widths and activations for the three networks."""

    encoder_hidden: tuple[int, ...] = (64, 64)
    decoder_hidden: tuple[int, ...] = (64, 64)
    discriminator_hidden: tuple[int, ...] = (128, 128, 128)
    generator_activation: str = "leaky-relu"
    discriminator_activation: str = "relu"


def build_triple(x_dim: int, z_dim: int, seed: int, arch: Architecture = Architecture(),
                 decoder_only: bool = False) -> ModelTriple:
    rng = np.random.default_rng(seed)
    enc_spec = MlpSpec.gaussian(x_dim, z_dim, arch.encoder_hidden, arch.generator_activation)
    dec_spec = MlpSpec.gaussian(z_dim, x_dim, arch.decoder_hidden, arch.generator_activation)
    disc_in = x_dim if decoder_only else x_dim + z_dim
    disc_spec = MlpSpec.logit(disc_in, arch.discriminator_hidden, arch.discriminator_activation)
    encoder = None if decoder_only else Network(enc_spec, init_xavier(enc_spec, rng))
    decoder = Network(dec_spec, init_xavier(dec_spec, rng))
    disc = Network(disc_spec, init_xavier(disc_spec, rng))
    return ModelTriple(encoder, decoder, disc, x_dim, z_dim)


def conditional_density(net: Network, inputs, leaves: dict[str, Tensor] | None = None,
                        trainable: bool = False) -> DiagonalGaussian:
    heads = net.forward(inputs, trainable, leaves)
    return DiagonalGaussian(heads["mean"], clamp_log_variance(heads["log_variance"]))


def _conditional(net: Network, inputs, eps, trainable: bool, leaves) -> tuple[Tensor, DiagonalGaussian]:
    density = conditional_density(net, inputs, leaves, trainable)
    eps = as_tensor(eps)
    if eps.shape != density.mean.shape:
        raise DimensionError(f"noise shape {eps.shape} != sample shape {density.mean.shape}")
    return sample_reparameterized(density, eps), density


def encode(triple: ModelTriple, x, eps, trainable: bool = False,
           leaves: dict[str, Tensor] | None = None) -> tuple[Tensor, DiagonalGaussian]:
    """Reparameterized draw z ~ q(z|x) together with the density it was drawn from."""
    if triple.encoder is None:
        raise ValueError("decoder-only model has no encoder")
    return _conditional(triple.encoder, x, eps, trainable, leaves)


def decode(triple: ModelTriple, z, eps, trainable: bool = False,
           leaves: dict[str, Tensor] | None = None) -> tuple[Tensor, DiagonalGaussian]:
    """Reparameterized draw x ~ p(x|z) together with its density."""
    return _conditional(triple.decoder, z, eps, trainable, leaves)


def discriminate(triple: ModelTriple, x, z=None, trainable: bool = False,
                 leaves: dict[str, Tensor] | None = None) -> Tensor:
    """Pre-sigmoid discriminator output, shape ``(n,)``."""
    x = as_tensor(x)
    if triple.decoder_only:
        inputs = x
    else:
        if z is None:
            raise ValueError("joint discriminator needs z")
        z = as_tensor(z)
        if x.shape[0] != z.shape[0]:
            raise DimensionError(f"x batch {x.shape[0]} != z batch {z.shape[0]}")
        inputs = T.concat([x, z], axis=1)
    return triple.discriminator.forward(inputs, trainable, leaves)["logit"][:, 0]


def with_params(triple: ModelTriple, **groups: dict[str, np.ndarray]) -> ModelTriple:
    """Shallow copy with some parameter groups replaced."""
    out = copy.copy(triple)
    for name, params in groups.items():
        net = getattr(triple, name)
        setattr(out, name, Network(net.spec, params))
    return out
