"""Hierarchy-aware semantic hashing toolkit."""

__version__ = "0.1.0"

from . import benchmark, cli, data, hashing, hierarchy, losses, metrics, model, trainer
from .data import Dataset, RngState, beta_sample, generate_synthetic, load_dataset
from .hashing import HashCode, HashIndex, binarize, build_index, hamming, query_topk
from .hierarchy import (
    SemanticDistanceMatrix,
    Taxonomy,
    distance_matrix,
    lca,
    parse_taxonomy,
    semantic_distance,
)
from .losses import LossValue, SimLossConfig, batch_scale, cls_loss, kl_loss, pair_weight, sim_loss, total_loss
from .metrics import MetricsReport, ahp_at_k, evaluate, evaluate_embeddings, hp_at_k, mean_ap, relevance
from .model import (
    ClassifierParams,
    EmbeddingBatch,
    EncoderParams,
    classifier_forward,
    encoder_backward,
    encoder_forward,
    gradient_check,
    load_checkpoint,
    save_checkpoint,
)
from .trainer import AdamState, TrainConfig, TrainLog, adam_step, parse_config, train
