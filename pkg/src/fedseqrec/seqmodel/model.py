"""Fused item table, model forward passes, and the training objective with gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import attention_block_backward, attention_block_forward, gru_backward, gru_forward
from .losses import contrastive_loss, rec_loss
from .params import ModelParams


def fuse_embeddings(params: ModelParams, llm: np.ndarray | None, rows=None) -> np.ndarray:
    """``item_emb[v] + phi(llm[v])`` for the requested rows (all rows by default)."""
    ids = params["item_emb"] if rows is None else params["item_emb"][rows]
    if llm is None:
        return ids.copy() if rows is None else ids
    if llm.shape[1] != params["phi_w"].shape[1]:
        raise ValueError(f"service embeddings have dim {llm.shape[1]}, adapter expects {params['phi_w'].shape[1]}")
    sub = llm if rows is None else llm[rows]
    return ids + (sub @ params["phi_w"].T + params["phi_b"])


def encode(params: ModelParams, X: np.ndarray):
    """Latents H (T, d) for input embeddings X, plus caches for backward."""
    caches = []
    if params.kind == "gru":
        for layer in range(params.depth):
            X, c = gru_forward(params.arrays, f"gru{layer}.", X)
            caches.append(c)
        return X, caches
    T = X.shape[0]
    if T > params.max_len:
        raise ValueError(f"sequence length {T} exceeds position table ({params.max_len})")
    X = X + params["pos_emb"][:T]
    for b in range(params.depth):
        X, c = attention_block_forward(params.arrays, f"blk{b}.", X)
        caches.append(c)
    return X, caches


def encode_backward(params: ModelParams, dH: np.ndarray, caches, grads: dict) -> np.ndarray:
    if params.kind == "gru":
        for layer in reversed(range(params.depth)):
            dH = gru_backward(params.arrays, f"gru{layer}.", dH, caches[layer], grads)
        return dH
    for b in reversed(range(params.depth)):
        dH = attention_block_backward(params.arrays, f"blk{b}.", dH, caches[b], grads)
    grads["pos_emb"][:dH.shape[0]] += dH
    return dH


@dataclass
class Forward:
    latents: np.ndarray  # (T, d)
    scores: np.ndarray   # (T, |V|); row t scores the item at step t + 1


def _check_items(params, items):
    items = np.asarray(items, dtype=np.int64)
    if items.ndim != 1 or items.size < 1:
        raise ValueError("need a non-empty 1-D item sequence")
    if items.min() < 0 or items.max() >= params.num_items:
        raise ValueError("item id out of range")
    return items


def forward_gru(params: ModelParams, items, llm: np.ndarray | None = None) -> Forward:
    if params.kind != "gru":
        raise ValueError("not a GRU parameter set")
    items = _check_items(params, items)
    E = fuse_embeddings(params, llm, items)
    H, _ = encode(params, E)
    return Forward(H, H @ params["out_w"].T + params["out_b"])


def forward_sasrec(params: ModelParams, items, llm: np.ndarray | None = None) -> Forward:
    if params.kind != "sasrec":
        raise ValueError("not a self-attention parameter set")
    items = _check_items(params, items)
    E = fuse_embeddings(params, llm)
    H, _ = encode(params, E[items])
    return Forward(H, H @ E.T)


def forward(params: ModelParams, items, llm: np.ndarray | None = None) -> Forward:
    fn = forward_gru if params.kind == "gru" else forward_sasrec
    return fn(params, items, llm)


def next_item_scores(params: ModelParams, history, llm: np.ndarray | None = None) -> np.ndarray:
    """Scores over the whole catalog for the item following ``history``."""
    history = _check_items(params, history)
    if params.kind == "sasrec" and history.size > params.max_len:
        history = history[-params.max_len:]
    if params.kind == "gru":
        E = fuse_embeddings(params, llm, history)
        H, _ = encode(params, E)
        return H[-1] @ params["out_w"].T + params["out_b"]
    E = fuse_embeddings(params, llm)
    H, _ = encode(params, E[history])
    return E @ H[-1]


@dataclass
class ContrastiveViews:
    positive: np.ndarray   # (N,) service embedding of the perturbed sequence
    negatives: np.ndarray  # (k, N) service embeddings of random sequences


def total_loss(params: ModelParams, inputs, positives, negatives, llm: np.ndarray | None = None,
               alpha: float = 0.0, views: ContrastiveViews | None = None):
    """L_rec + alpha * L_cl with gradients for every parameter.

    ``inputs``/``positives`` have length T (positives[t] is the item after
    inputs[t]); ``negatives`` is (T,) or (T, k). The contrastive term uses the
    final latent ``h_T`` and is skipped entirely when ``alpha == 0``.

    Returns ``(loss, rec, cl, grads)`` where ``grads`` maps parameter names to
    dense arrays; rows of item-indexed tables that were not touched stay zero.
    """
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    inputs = np.asarray(inputs, dtype=np.int64)
    positives = np.asarray(positives, dtype=np.int64)
    negatives = np.asarray(negatives, dtype=np.int64)
    if negatives.ndim == 1:
        negatives = negatives[:, None]
    T = inputs.size
    if T < 1 or positives.shape != (T,) or negatives.shape[0] != T:
        raise ValueError("inputs, positives and negatives must align per step")

    grads = params.zeros_like()
    rows, inv = np.unique(np.concatenate([inputs, positives, negatives.ravel()]), return_inverse=True)
    in_idx = inv[:T]
    pos_idx = inv[T:2 * T]
    neg_idx = inv[2 * T:].reshape(negatives.shape)

    E = fuse_embeddings(params, llm, rows)
    H, caches = encode(params, E[in_idx])
    dE = np.zeros_like(E)

    if params.kind == "gru":
        W, b = params["out_w"], params["out_b"]
        pos_s = np.einsum("td,td->t", H, W[positives]) + b[positives]
        neg_s = np.einsum("td,tkd->tk", H, W[negatives]) + b[negatives]
    else:
        pos_s = np.einsum("td,td->t", H, E[pos_idx])
        neg_s = np.einsum("td,tkd->tk", H, E[neg_idx])
    rec, dpos, dneg = rec_loss(pos_s, neg_s)

    if params.kind == "gru":
        dH = dpos[:, None] * W[positives] + np.einsum("tk,tkd->td", dneg, W[negatives])
        np.add.at(grads["out_w"], positives, dpos[:, None] * H)
        np.add.at(grads["out_w"], negatives, dneg[:, :, None] * H[:, None, :])
        np.add.at(grads["out_b"], positives, dpos)
        np.add.at(grads["out_b"], negatives, dneg)
    else:
        dH = dpos[:, None] * E[pos_idx] + np.einsum("tk,tkd->td", dneg, E[neg_idx])
        np.add.at(dE, pos_idx, dpos[:, None] * H)
        np.add.at(dE, neg_idx, dneg[:, :, None] * H[:, None, :])

    cl = 0.0
    if alpha > 0:
        if views is None:
            raise ValueError("alpha > 0 needs contrastive views")
        cl, d_su, d_psi_w, d_psi_b = contrastive_loss(H[-1], views.positive, views.negatives,
                                                      params["psi_w"], params["psi_b"])
        dH[-1] += alpha * d_su
        grads["psi_w"] += alpha * d_psi_w
        grads["psi_b"] += alpha * d_psi_b

    dX = encode_backward(params, dH, caches, grads)
    np.add.at(dE, in_idx, dX)
    grads["item_emb"][rows] += dE
    if llm is not None:
        grads["phi_w"] += dE.T @ llm[rows]
        grads["phi_b"] += dE.sum(axis=0)
    return rec + alpha * cl, rec, cl, grads


def training_steps(train_items):
    """(inputs, positives) for next-item prediction over a training sequence."""
    train_items = np.asarray(train_items, dtype=np.int64)
    return train_items[:-1], train_items[1:]
