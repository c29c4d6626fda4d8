"""Minibatch gradient-descent training of the encoder and classifier head.

The loop is sequential and fully seeded: shuffling, initialization, and the
per-step Beta target draws all derive from one seed, so identical configs
produce bit-identical checkpoints.  Every epoch is one shuffled pass with the
ragged final batch dropped.
"""
from __future__ import annotations

import hashlib
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from .data import Dataset, RngState, beta_sample
from .errors import ConfigError, DivergedLoss, NotALeaf, ShapeMismatch, UnknownLabel
from .hierarchy import Taxonomy, distance_matrix
from .losses import SimLossConfig, total_loss
from .model import (
    ClassifierParams,
    EncoderParams,
    checkpoint_bytes,
    encoder_backward,
    encoder_forward,
    init_classifier,
    init_encoder,
)

VARIANTS = ("shrewd", "shred")


@dataclass
class TrainConfig:
    code_length: int = 16
    hidden_sizes: tuple[int, ...] = (256, 128)
    lambda_sim: float = 1.0
    lambda1: float = 1.0
    lambda2: float = 1.0
    gamma: float = 0.1
    rho: float = 2.0
    alpha: float = 0.1
    beta: float = 0.1
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0
    tau_floor: float = 1e-8
    variant: str = "shred"

    def __post_init__(self) -> None:
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.code_length < 1:
            raise ConfigError(f"code_length must be >= 1, got {self.code_length}")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        for name in ("learning_rate", "adam_eps", "gamma", "alpha", "beta", "tau_floor"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if not 0 <= self.adam_beta1 < 1 or not 0 <= self.adam_beta2 < 1:
            raise ConfigError("adam betas must lie in [0, 1)")
        if self.rho < 0 or self.lambda1 < 0 or self.lambda2 < 0 or self.lambda_sim < 0:
            raise ConfigError("loss weights must be non-negative")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.variant == "shrewd" and self.lambda2 != 0:
            raise ConfigError("variant 'shrewd' requires lambda2 = 0")
        if self.variant == "shred" and self.lambda2 <= 0:
            raise ConfigError("variant 'shred' requires lambda2 > 0")

    def sim_config(self) -> SimLossConfig:
        return SimLossConfig(gamma=self.gamma, rho=self.rho, tau_floor=self.tau_floor)


_INT_KEYS = {"code_length", "batch_size", "epochs", "seed"}
_FLOAT_KEYS = {
    "lambda_sim", "lambda1", "lambda2", "gamma", "rho", "alpha", "beta",
    "learning_rate", "adam_beta1", "adam_beta2", "adam_eps", "tau_floor",
}


def parse_config(text: str) -> TrainConfig:
    """Parse "key = value" lines; unknown keys are an error."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key in _INT_KEYS:
            values[key] = int(value)
        elif key in _FLOAT_KEYS:
            values[key] = float(value)
        elif key == "hidden_sizes":
            values[key] = tuple(int(v) for v in value.split(",") if v.strip())
        elif key == "variant":
            values[key] = value
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    return TrainConfig(**values)


def format_config(cfg: TrainConfig) -> str:
    lines = []
    for key, value in asdict(cfg).items():
        if key == "hidden_sizes":
            value = ",".join(str(v) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


@dataclass
class StepRecord:
    step: int
    sim: float
    kl: float
    cls: float
    total: float


@dataclass
class TrainLog:
    records: list[StepRecord] = field(default_factory=list)
    wall_time: float = 0.0
    params_digest: str = ""

    def to_csv(self) -> str:
        lines = ["step,sim,kl,cls,total"]
        lines.extend(
            f"{r.step},{r.sim!r},{r.kl!r},{r.cls!r},{r.total!r}" for r in self.records
        )
        return "\n".join(lines) + "\n"


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]

    @classmethod
    def zeros_like(cls, params: list[np.ndarray]) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])


def adam_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    state: AdamState,
    step_index: int,
    lr: float,
    beta1: float,
    beta2: float,
    eps: float,
) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected Adam update; returns fresh arrays."""
    if step_index < 1:
        raise ConfigError(f"step index must be >= 1, got {step_index}")
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeMismatch("params, grads and moments must have equal lengths")
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ShapeMismatch(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**step_index)
        v_hat = v / (1.0 - beta2**step_index)
        new_params.append(p - lr * m_hat / (np.sqrt(v_hat) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamState(m=new_m, v=new_v)


def _flatten(encoder: EncoderParams, classifier: ClassifierParams) -> list[np.ndarray]:
    flat = []
    for w, b in encoder.layers:
        flat.extend([w, b])
    flat.extend([classifier.weights, classifier.biases])
    return flat


def _unflatten(
    flat: list[np.ndarray], n_layers: int, code_length: int
) -> tuple[EncoderParams, ClassifierParams]:
    layers = [(flat[2 * i], flat[2 * i + 1]) for i in range(n_layers)]
    encoder = EncoderParams(layers=layers, code_length=code_length)
    classifier = ClassifierParams(weights=flat[2 * n_layers], biases=flat[2 * n_layers + 1])
    return encoder, classifier


def train(
    config: TrainConfig, dataset: Dataset, taxonomy: Taxonomy
) -> tuple[EncoderParams, ClassifierParams, TrainLog]:
    """Train encoder and head; deterministic given ``config.seed``."""
    n = dataset.n_samples
    if n < config.batch_size:
        raise ConfigError(f"dataset size {n} < batch size {config.batch_size}")
    for label in dataset.label_universe:
        if not taxonomy.is_leaf(int(label)):
            raise NotALeaf(f"label universe entry {label} is not a leaf")
    universe = [int(l) for l in dataset.label_universe]
    class_of = {label: i for i, label in enumerate(universe)}
    try:
        class_idx = np.array([class_of[int(l)] for l in dataset.labels], dtype=np.int64)
    except KeyError as exc:
        raise UnknownLabel(f"dataset label {exc} missing from the label universe") from None

    init_rng, shuffle_rng, target_rng = RngState.from_seed(config.seed).split(3)
    dist = distance_matrix(taxonomy, universe).values
    encoder = init_encoder(dataset.dim, config.hidden_sizes, config.code_length, init_rng)
    classifier = init_classifier(config.code_length, len(universe), init_rng)
    params = _flatten(encoder, classifier)
    adam = AdamState.zeros_like(params)
    sim_cfg = config.sim_config()
    features = dataset.features.astype(np.float64)

    log = TrainLog()
    step = 0
    started = time.perf_counter()
    bsz = config.batch_size
    for _ in range(config.epochs):
        perm = shuffle_rng.generator.permutation(n)
        for start in range(0, n - bsz + 1, bsz):
            idx = perm[start : start + bsz]
            y = class_idx[idx]
            target = beta_sample(config.alpha, config.beta, (bsz, config.code_length), target_rng)
            batch, cache = encoder_forward(encoder, features[idx], sample_ids=idx)
            loss = total_loss(
                batch,
                dist[np.ix_(y, y)],
                y,
                classifier,
                target,
                config.lambda1,
                config.lambda2,
                sim_cfg,
                sim_weight=config.lambda_sim,
            )
            step += 1
            if not np.isfinite(loss.total):
                raise DivergedLoss(
                    f"step {step}: non-finite total "
                    f"(sim={loss.sim!r}, kl={loss.kl!r}, cls={loss.cls!r})"
                )
            grads = []
            for gw, gb in encoder_backward(encoder, cache, loss.grad_z):
                grads.extend([gw, gb])
            grads.extend(loss.grad_classifier)
            params, adam = adam_step(
                params, grads, adam, step,
                config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps,
            )
            if not all(np.all(np.isfinite(p)) for p in params):
                raise DivergedLoss(f"step {step}: parameters became non-finite")
            encoder, classifier = _unflatten(params, len(encoder.layers), config.code_length)
            log.records.append(StepRecord(step, loss.sim, loss.kl, loss.cls, loss.total))

    log.wall_time = time.perf_counter() - started
    log.params_digest = hashlib.sha256(checkpoint_bytes(encoder, classifier)).hexdigest()
    return encoder, classifier, log


def apply_variant(config: TrainConfig, variant: str) -> tuple[TrainConfig, Optional[str]]:
    """Force a variant onto a config; returns (config, warning or None)."""
    if variant not in VARIANTS:
        raise ConfigError(f"variant must be one of {VARIANTS}, got {variant!r}")
    warning = None
    if variant == "shrewd":
        if config.lambda2 != 0:
            warning = f"variant 'shrewd' forces lambda2 = 0 (config had {config.lambda2})"
        config = replace(config, lambda2=0.0, variant="shrewd")
    else:
        if config.lambda2 <= 0:
            warning = "variant 'shred' requires lambda2 > 0; using 1.0"
            config = replace(config, lambda2=1.0, variant="shred")
        else:
            config = replace(config, variant="shred")
    return config, warning
