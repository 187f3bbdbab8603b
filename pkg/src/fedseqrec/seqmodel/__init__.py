from .losses import contrastive_loss, rec_loss
from .model import (
    ContrastiveViews,
    Forward,
    forward,
    forward_gru,
    forward_sasrec,
    fuse_embeddings,
    next_item_scores,
    total_loss,
    training_steps,
)
from .optim import AdamState, adam_step
from .params import KINDS, ModelParams, init_params, load_checkpoint, save_checkpoint

__all__ = [
    "AdamState",
    "ContrastiveViews",
    "Forward",
    "KINDS",
    "ModelParams",
    "adam_step",
    "contrastive_loss",
    "forward",
    "forward_gru",
    "forward_sasrec",
    "fuse_embeddings",
    "init_params",
    "load_checkpoint",
    "next_item_scores",
    "rec_loss",
    "save_checkpoint",
    "total_loss",
    "training_steps",
]
