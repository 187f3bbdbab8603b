"""Recommendation BCE loss and the cosine InfoNCE contrastive loss."""

from __future__ import annotations

import numpy as np

from .layers import sigmoid, softplus


def rec_loss(pos_scores: np.ndarray, neg_scores: np.ndarray):
    """Sum over steps of -log s(r_pos) - sum_k log(1 - s(r_neg_k)).

    ``pos_scores`` has shape (T,), ``neg_scores`` (T,) or (T, k). Returns the
    loss and gradients w.r.t. both score arrays.
    """
    pos = np.asarray(pos_scores, dtype=np.float64)
    neg = np.asarray(neg_scores, dtype=np.float64)
    loss = float(softplus(-pos).sum() + softplus(neg).sum())
    return loss, sigmoid(pos) - 1.0, sigmoid(neg)


def _cos_and_grads(a: np.ndarray, B: np.ndarray):
    na = np.linalg.norm(a)
    nb = np.linalg.norm(B, axis=1)
    if na == 0.0 or np.any(nb == 0.0):
        raise ValueError("cosine of a zero-norm vector")
    cos = (B @ a) / (na * nb)
    da = B / (na * nb)[:, None] - cos[:, None] * a[None, :] / (na * na)
    dB = a[None, :] / (na * nb)[:, None] - cos[:, None] * B / (nb * nb)[:, None]
    return cos, da, dB


def contrastive_loss(s_u: np.ndarray, s_pos: np.ndarray, s_negs: np.ndarray,
                     psi_w: np.ndarray, psi_b: np.ndarray):
    """-log softmax over cosines, positive view first, no temperature.

    ``s_pos`` is the service embedding of the user's perturbed sequence,
    ``s_negs`` (k, N) those of random sequences; both are mapped through the
    affine projection ``psi``. Returns ``(loss, d_s_u, d_psi_w, d_psi_b)``.
    """
    S = np.vstack([np.atleast_2d(s_pos), np.atleast_2d(s_negs)])
    if S.shape[0] < 2:
        raise ValueError("need at least one negative view")
    P = S @ psi_w.T + psi_b
    cos, da, dB = _cos_and_grads(s_u, P)
    m = cos.max()
    lse = m + np.log(np.exp(cos - m).sum())
    loss = float(lse - cos[0])
    dlogit = np.exp(cos - lse)
    dlogit[0] -= 1.0
    d_su = dlogit @ da
    dP = dlogit[:, None] * dB
    return loss, d_su, dP.T @ S, dP.sum(axis=0)
