"""Training losses and their analytic gradients.

Three terms are combined:

* a similarity loss that matches batch-normalized Manhattan distances between
  embeddings to batch-normalized semantic distances between their labels,
  down-weighting distant pairs;
* a divergence loss that pulls the embedding distribution toward a bimodal
  Beta target using nearest-neighbor distance ratios, which both spreads the
  codes and pushes coordinates toward 0/1 before quantization;
* categorical cross-entropy on a linear head over the continuous embeddings.

All gradients are exact for the functions as implemented, with sign(0) = 0 at
absolute-value kinks and nearest-neighbor assignments held locally constant.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BatchTooSmall, ConfigError, LabelOutOfRange, ShapeMismatch
from .model import ClassifierParams, EmbeddingBatch, classifier_forward

_NU_EPS = 1e-12  # distance clamp before logs; keeps duplicates finite


@dataclass
class SimLossConfig:
    gamma: float = 0.1
    rho: float = 2.0
    tau_floor: float = 1e-8

    def __post_init__(self) -> None:
        if self.gamma <= 0 or self.rho < 0 or self.tau_floor <= 0:
            raise ConfigError(
                f"need gamma > 0, rho >= 0, tau_floor > 0; got {self}"
            )


@dataclass
class LossValue:
    """Component values plus gradients of the weighted total."""

    total: float
    sim: float
    kl: float
    cls: float
    grad_z: np.ndarray
    grad_classifier: tuple[np.ndarray, np.ndarray]
    lambda1: float
    lambda2: float
    sim_weight: float = 1.0

    @property
    def variant(self) -> str:
        return "shred" if self.lambda2 > 0 else "shrewd"


def _values(z) -> np.ndarray:
    if isinstance(z, EmbeddingBatch):
        return z.values
    return np.asarray(z, dtype=np.float64)


def pair_weight(d, cfg: SimLossConfig):
    """Decaying pair weight in (0, 1]: 1 at distance 0, small for far pairs."""
    d = np.asarray(d, dtype=np.float64)
    out = (cfg.gamma / (cfg.gamma + d)) ** cfg.rho
    return float(out) if out.ndim == 0 else out


def _offdiag_mean(m: np.ndarray) -> float:
    b = m.shape[0]
    return float((m.sum() - np.trace(m)) / (b * (b - 1)))


def batch_scale(distances: np.ndarray, floor: float) -> float:
    """Mean of the off-diagonal entries, clamped below by ``floor``."""
    distances = np.asarray(distances, dtype=np.float64)
    if distances.ndim != 2 or distances.shape[0] != distances.shape[1]:
        raise ShapeMismatch(f"distances must be square, got {distances.shape}")
    if distances.shape[0] < 2:
        raise BatchTooSmall("batch scale needs at least 2 rows")
    return max(_offdiag_mean(distances), floor)


def sim_loss(z, distances: np.ndarray, cfg: SimLossConfig) -> tuple[float, np.ndarray]:
    """Distance-matching loss and its gradient w.r.t. the embeddings.

    value = mean over all ordered pairs of
    ``| manhattan(z_b, z_b') / tau_z  -  d_bb' / tau_y | * w_bb'``
    where tau_z and tau_y are the off-diagonal batch means (floored).  tau_z
    depends on the embeddings and is differentiated through.
    """
    zv = _values(z)
    if zv.ndim != 2:
        raise ShapeMismatch(f"embeddings must be B x K, got {zv.shape}")
    b, _ = zv.shape
    if b < 2:
        raise BatchTooSmall(f"similarity loss needs B >= 2, got {b}")
    d = np.asarray(distances, dtype=np.float64)
    if d.shape != (b, b):
        raise ShapeMismatch(f"distance matrix {d.shape} != ({b}, {b})")

    diff = zv[:, None, :] - zv[None, :, :]  # B x B x K
    sgn = np.sign(diff)
    manh = np.abs(diff).sum(axis=2)

    raw_tau_z = _offdiag_mean(manh)
    tau_z = max(raw_tau_z, cfg.tau_floor)
    tau_y = batch_scale(d, cfg.tau_floor)

    w = pair_weight(d, cfg)
    resid = manh / tau_z - d / tau_y
    value = float(np.sum(np.abs(resid) * w)) / (b * b)

    coeff = w * np.sign(resid)  # symmetric
    grad = 2.0 * np.einsum("bp,bpk->bk", coeff, sgn) / (b * b * tau_z)
    if raw_tau_z > cfg.tau_floor:
        # tau_z moves with the embeddings unless the floor clamps it
        weighted_manh = float(np.sum(coeff * manh))
        dtau = 2.0 * sgn.sum(axis=1) / (b * (b - 1))
        grad -= (weighted_manh / (b * b * tau_z * tau_z)) * dtau
    return value, grad


def kl_loss(z, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Nearest-neighbor estimate of divergence from the target sample.

    For each embedding, compares the log distance to its nearest target point
    against the log distance to its nearest batch neighbor (self excluded).
    Distances are Euclidean and clamped at 1e-12 before the logarithm, so
    duplicated points stay finite.  Neighbor assignments are treated as
    locally constant when differentiating.
    """
    zv = _values(z)
    tv = np.asarray(target, dtype=np.float64)
    if zv.ndim != 2 or tv.ndim != 2:
        raise ShapeMismatch("embeddings and target must be 2-D")
    b, k = zv.shape
    if b < 2:
        raise BatchTooSmall(f"divergence loss needs B >= 2, got {b}")
    if tv.shape[0] < 1:
        raise BatchTooSmall("target sample must be non-empty")
    if tv.shape[1] != k:
        raise ShapeMismatch(f"target dim {tv.shape[1]} != embedding dim {k}")

    dist_t = np.sqrt(((zv[:, None, :] - tv[None, :, :]) ** 2).sum(axis=2))
    nn_t = np.argmin(dist_t, axis=1)
    nu_t = dist_t[np.arange(b), nn_t]

    dist_z = np.sqrt(((zv[:, None, :] - zv[None, :, :]) ** 2).sum(axis=2))
    np.fill_diagonal(dist_z, np.inf)
    nn_z = np.argmin(dist_z, axis=1)
    nu_z = dist_z[np.arange(b), nn_z]

    value = float(np.mean(np.log(np.maximum(nu_t, _NU_EPS)) - np.log(np.maximum(nu_z, _NU_EPS))))

    grad = np.zeros_like(zv)
    for i in range(b):
        if nu_t[i] > _NU_EPS:
            v = zv[i] - tv[nn_t[i]]
            grad[i] += v / (nu_t[i] ** 2 * b)
        if np.isfinite(nu_z[i]) and nu_z[i] > _NU_EPS:
            v = zv[i] - zv[nn_z[i]]
            grad[i] -= v / (nu_z[i] ** 2 * b)
            grad[nn_z[i]] += v / (nu_z[i] ** 2 * b)
    return value, grad


def cls_loss(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy under softmax, with max-subtraction for stability."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2:
        raise ShapeMismatch(f"logits must be B x C, got {logits.shape}")
    b, c = logits.shape
    if labels.shape != (b,):
        raise ShapeMismatch(f"{b} logit rows but labels shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise LabelOutOfRange(f"labels must lie in [0, {c})")

    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    log_probs = shifted - log_norm[:, None]
    value = float(-log_probs[np.arange(b), labels].mean())

    grad = np.exp(log_probs)
    grad[np.arange(b), labels] -= 1.0
    grad /= b
    return value, grad


def total_loss(
    z,
    distances: np.ndarray,
    labels: np.ndarray,
    classifier: ClassifierParams,
    target: np.ndarray,
    lambda1: float,
    lambda2: float,
    cfg: SimLossConfig,
    sim_weight: float = 1.0,
) -> LossValue:
    """Weighted sum of the three terms with gradients of the total.

    ``grad_z`` backpropagates the classification term through the linear head;
    ``grad_classifier`` carries the lambda2-scaled head gradients.  With the
    default ``sim_weight`` the total is sim + lambda1*kl + lambda2*cls;
    ``sim_weight=0`` supports head-only ablation runs.
    """
    zv = _values(z)
    sim_v, sim_g = sim_loss(zv, distances, cfg)
    kl_v, kl_g = kl_loss(zv, target)
    logits = classifier_forward(classifier, zv)
    cls_v, grad_logits = cls_loss(logits, labels)

    total = sim_weight * sim_v + lambda1 * kl_v + lambda2 * cls_v
    grad_z = sim_weight * sim_g + lambda1 * kl_g + lambda2 * (grad_logits @ classifier.weights)
    grad_w = lambda2 * (grad_logits.T @ zv)
    grad_b = lambda2 * grad_logits.sum(axis=0)
    return LossValue(
        total=total,
        sim=sim_v,
        kl=kl_v,
        cls=cls_v,
        grad_z=grad_z,
        grad_classifier=(grad_w, grad_b),
        lambda1=lambda1,
        lambda2=lambda2,
        sim_weight=sim_weight,
    )
