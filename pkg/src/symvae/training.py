"""Alternating adversarial optimization with Adam.

Each outer step runs ``disc_steps_per_gen_step`` discriminator updates with
the encoder/decoder frozen, then one encoder/decoder update with the
discriminator frozen.  Both phases maximize; Adam is handed negated
gradients.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .distributions import GmmDensity
from .metrics import evaluate
from .models import ModelTriple
from .objectives import (Noise, ObjectiveSpec, Variant, build_batch, discriminator_objective, elbo,
                         generator_leaves, generator_objective)

log = logging.getLogger(__name__)

LOG_COLUMNS = ("step", "variant", "lambda", "seed", "disc_loss", "gen_loss", "mse", "mode_coverage",
               "is_analog", "skl_estimate", "gen_grad_norm", "disc_grad_norm",
               "high_quality_fraction", "iw_loglik")


class TrainingDivergedError(FloatingPointError):
    def __init__(self, step: int, phase: str, what: str):
        super().__init__(f"non-finite {what} at step {step} in {phase} phase")
        self.step = step
        self.phase = phase


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 512
    total_generator_steps: int = 20_000
    disc_steps_per_gen_step: int | None = None
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    clip_value: float = 0.01
    seed: int = 0
    eval_every: int = 1000
    eval_generated: int = 5000
    eval_real: int = 5000

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.total_generator_steps < 0:
            raise ValueError("total_generator_steps must be >= 0")
        if self.disc_steps_per_gen_step is not None and self.disc_steps_per_gen_step < 1:
            raise ValueError("disc_steps_per_gen_step must be >= 1")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")

    def disc_steps_for(self, spec: ObjectiveSpec) -> int:
        if self.disc_steps_per_gen_step is not None:
            return self.disc_steps_per_gen_step
        return 5 if spec.variant is Variant.WGAN else 1

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AdamState:
    first_moment: dict[str, np.ndarray]
    second_moment: dict[str, np.ndarray]
    step_count: int = 0
    beta1: float = 0.5
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros(cls, params: dict[str, np.ndarray], beta1: float = 0.5, beta2: float = 0.999,
              epsilon: float = 1e-8) -> "AdamState":
        return cls({k: np.zeros_like(v) for k, v in params.items()},
                   {k: np.zeros_like(v) for k, v in params.items()}, 0, beta1, beta2, epsilon)


def adam_step(state: AdamState, params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              lr: float) -> dict[str, np.ndarray]:
    """Bias-corrected Adam descent step; updates ``state`` and returns new parameter arrays."""
    missing = set(params) - set(grads)
    if missing:
        raise KeyError(f"missing gradients for {sorted(missing)}")
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    out = {}
    for name, p in params.items():
        g = grads[name]
        m = state.first_moment[name] = state.beta1 * state.first_moment[name] + (1.0 - state.beta1) * g
        v = state.second_moment[name] = state.beta2 * state.second_moment[name] + (1.0 - state.beta2) * g * g
        out[name] = p - lr * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
    return out


def clip_parameters(params: dict[str, np.ndarray], c: float) -> dict[str, np.ndarray]:
    if not c > 0:
        raise ValueError("clip value must be positive")
    return {k: np.clip(v, -c, c) for k, v in params.items()}


def _check_finite(value: float, grads: dict[str, np.ndarray], step: int, phase: str) -> None:
    if not math.isfinite(value):
        raise TrainingDivergedError(step, phase, "objective")
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingDivergedError(step, phase, f"gradient of {name}")


@dataclass
class Trainer:
    """Mutable state of one run; ``train_run`` is the functional wrapper."""

    triple: ModelTriple
    spec: ObjectiveSpec
    config: TrainConfig
    data: np.ndarray
    disc_state: AdamState = field(init=False)
    gen_states: dict[str, AdamState] = field(init=False)

    def __post_init__(self):
        c = self.config
        self.disc_state = AdamState.zeros(self.triple.discriminator.params, c.adam_beta1, c.adam_beta2,
                                          c.adam_epsilon)
        self.gen_states = {name: AdamState.zeros(getattr(self.triple, name).params, c.adam_beta1,
                                                 c.adam_beta2, c.adam_epsilon)
                           for name in generator_leaves(self.triple, False)}

    def _noise(self, rng: np.random.Generator) -> Noise:
        return Noise.draw(rng, self.data, self.config.batch_size, self.triple.z_dim)

    def disc_step(self, rng: np.random.Generator, step: int) -> tuple[float, float]:
        """One discriminator ascent step; returns (objective, gradient norm)."""
        batch = build_batch(self.triple, self._noise(rng), trainable=False)
        leaves = T.leaf_params(self.triple.discriminator.params, True)
        value = discriminator_objective(self.spec, self.triple, batch, leaves)
        grads = T.gradients(value, leaves)
        _check_finite(value.item(), grads, step, "discriminator")
        disc = self.triple.discriminator
        disc.params = adam_step(self.disc_state, disc.params, {k: -g for k, g in grads.items()},
                                self.config.learning_rate)
        if self.spec.variant is Variant.WGAN:
            disc.params = clip_parameters(disc.params, self.config.clip_value)
        return value.item(), T.global_norm(grads.values())

    def gen_step(self, rng: np.random.Generator, step: int) -> tuple[float, float]:
        batch = build_batch(self.triple, self._noise(rng), trainable=True)
        value = generator_objective(self.spec, self.triple, batch)
        leaf_grads = T.backward(value)
        grads = {group: {k: leaf_grads.get(t, np.zeros_like(t.data)) for k, t in leaves.items()}
                 for group, leaves in batch.leaves.items()}
        flat = {f"{g}.{k}": v for g, d in grads.items() for k, v in d.items()}
        _check_finite(value.item(), flat, step, "generator")
        for group, g in grads.items():
            net = getattr(self.triple, group)
            net.params = adam_step(self.gen_states[group], net.params, {k: -v for k, v in g.items()},
                                   self.config.learning_rate)
        return value.item(), T.global_norm(flat.values())


def train_run(triple: ModelTriple, objective: ObjectiveSpec, data: np.ndarray, gmm: GmmDensity,
              config: TrainConfig, progress: bool = False) -> tuple[ModelTriple, list[dict]]:
    """Train a copy of ``triple``; returns it with the metrics log (one dict per evaluation).

    Training and evaluation draw from separate child streams of ``config.seed``
    so evaluation never shifts training randomness.
    """
    triple = triple.copy()
    if objective.decoder_only != triple.decoder_only:
        raise ValueError(f"{objective.label} is incompatible with this model triple")
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != triple.x_dim:
        raise ValueError(f"data must be (n, {triple.x_dim}), got {data.shape}")
    train_seq, eval_seq = np.random.SeedSequence(config.seed).spawn(2)
    train_rng = np.random.default_rng(train_seq)
    eval_rng = np.random.default_rng(eval_seq)
    trainer = Trainer(triple, objective, config, data)
    n_disc = config.disc_steps_for(objective)
    eval_real = data[: config.eval_real]
    rows: list[dict] = []
    for step in range(1, config.total_generator_steps + 1):
        for _ in range(n_disc):
            d_val, d_norm = trainer.disc_step(train_rng, step)
        g_val, g_norm = trainer.gen_step(train_rng, step)
        if step % config.eval_every == 0 or step == config.total_generator_steps:
            rec = evaluate(triple, objective, gmm, eval_real, step, eval_rng, config.eval_generated)
            row = {"step": step, "variant": objective.variant.value, "lambda": objective.lam,
                   "seed": config.seed, "disc_loss": -d_val, "gen_loss": -g_val, "mse": rec.mse,
                   "mode_coverage": rec.modes_covered, "is_analog": rec.is_analog,
                   "skl_estimate": rec.skl_estimate, "gen_grad_norm": g_norm, "disc_grad_norm": d_norm,
                   "high_quality_fraction": rec.high_quality_fraction, "iw_loglik": rec.iw_loglik}
            for k, v in row.items():
                if isinstance(v, float) and not math.isfinite(v):
                    raise TrainingDivergedError(step, "evaluation", k)
            rows.append(row)
            if progress:
                log.info("%s step %d: modes=%d is=%.3f mse=%s", objective.label, step, rec.modes_covered,
                         rec.is_analog, rec.mse)
    return triple, rows


def train_vae(triple: ModelTriple, data: np.ndarray, steps: int, batch_size: int = 256, lr: float = 1e-3,
              seed: int = 0) -> ModelTriple:
    """Maximum-likelihood style fit by maximizing the single-sample ELBO (no discriminator)."""
    triple = triple.copy()
    rng = np.random.default_rng(seed)
    states = {n: AdamState.zeros(getattr(triple, n).params) for n in ("encoder", "decoder")}
    for step in range(1, steps + 1):
        x = data[rng.integers(0, len(data), size=batch_size)]
        eps = rng.standard_normal((batch_size, triple.z_dim))
        leaves = generator_leaves(triple, trainable=True)
        value = elbo(triple, x, eps, leaves)
        leaf_grads = T.backward(value)
        for group in ("encoder", "decoder"):
            net = getattr(triple, group)
            g = {k: -leaf_grads.get(t, np.zeros_like(t.data)) for k, t in leaves[group].items()}
            _check_finite(value.item(), g, step, "elbo")
            net.params = adam_step(states[group], net.params, g, lr)
    return triple
