"""Forward/backward for the GRU cell stack and the causal self-attention block.

Each ``*_forward`` returns ``(output, cache)``; the matching ``*_backward``
takes the upstream gradient and the cache, adds parameter gradients into
``grads`` and returns the gradient w.r.t. the layer input.
"""

from __future__ import annotations

import numpy as np

LN_EPS = 1e-5


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softplus(x):
    return np.logaddexp(0.0, x)


# -- GRU ---------------------------------------------------------------------

def gru_forward(p: dict, prefix: str, X: np.ndarray):
    w_x, w_h = p[prefix + "w_x"], p[prefix + "w_h"]
    b_x, b_h = p[prefix + "b_x"], p[prefix + "b_h"]
    T = X.shape[0]
    d = w_h.shape[0]
    gx = X @ w_x + b_x
    H = np.empty((T, d))
    R, Z, N, GHn, Hprev = (np.empty((T, d)) for _ in range(5))
    h = np.zeros(d)
    for t in range(T):
        gh = h @ w_h + b_h
        r = sigmoid(gx[t, :d] + gh[:d])
        z = sigmoid(gx[t, d:2 * d] + gh[d:2 * d])
        n = np.tanh(gx[t, 2 * d:] + r * gh[2 * d:])
        Hprev[t] = h
        h = (1.0 - z) * n + z * h
        H[t], R[t], Z[t], N[t], GHn[t] = h, r, z, n, gh[2 * d:]
    return H, (X, R, Z, N, GHn, Hprev)


def gru_backward(p: dict, prefix: str, dH: np.ndarray, cache, grads: dict) -> np.ndarray:
    X, R, Z, N, GHn, Hprev = cache
    w_x, w_h = p[prefix + "w_x"], p[prefix + "w_h"]
    T, d = dH.shape
    dgx = np.empty((T, 3 * d))
    dw_h = np.zeros_like(w_h)
    db_h = np.zeros(3 * d)
    carry = np.zeros(d)
    for t in range(T - 1, -1, -1):
        dh = dH[t] + carry
        r, z, n = R[t], Z[t], N[t]
        dn = dh * (1.0 - z)
        dz = dh * (Hprev[t] - n)
        dan = dn * (1.0 - n * n)
        dar = dan * GHn[t] * r * (1.0 - r)
        daz = dz * z * (1.0 - z)
        dgx[t, :d], dgx[t, d:2 * d], dgx[t, 2 * d:] = dar, daz, dan
        dgh = np.concatenate([dar, daz, dan * r])
        dw_h += np.outer(Hprev[t], dgh)
        db_h += dgh
        carry = dh * z + w_h @ dgh
    grads[prefix + "w_x"] += X.T @ dgx
    grads[prefix + "b_x"] += dgx.sum(axis=0)
    grads[prefix + "w_h"] += dw_h
    grads[prefix + "b_h"] += db_h
    return dgx @ w_x.T


# -- layer norm ----------------------------------------------------------------

def layernorm_forward(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + LN_EPS)
    xhat = xc * inv
    return xhat * g + b, (xhat, inv)


def layernorm_backward(dy, g, cache):
    xhat, inv = cache
    dxhat = dy * g
    dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, (dy * xhat).sum(axis=0), dy.sum(axis=0)


# -- causal self-attention block -----------------------------------------------

def attention_block_forward(p: dict, prefix: str, X: np.ndarray):
    """Single-head causal attention + residual + LN, then FFN + residual + LN."""
    T, d = X.shape
    scale = 1.0 / np.sqrt(d)
    Q, K, V = X @ p[prefix + "wq"], X @ p[prefix + "wk"], X @ p[prefix + "wv"]
    S = (Q @ K.T) * scale
    S = np.where(np.tri(T, dtype=bool), S, -np.inf)
    S -= S.max(axis=1, keepdims=True)
    A = np.exp(S)
    A /= A.sum(axis=1, keepdims=True)
    C = A @ V
    O = C @ p[prefix + "wo"]
    H1, ln1 = layernorm_forward(X + O, p[prefix + "ln1_g"], p[prefix + "ln1_b"])
    U = H1 @ p[prefix + "ff_w1"] + p[prefix + "ff_b1"]
    M = np.maximum(U, 0.0)
    F = M @ p[prefix + "ff_w2"] + p[prefix + "ff_b2"]
    H, ln2 = layernorm_forward(H1 + F, p[prefix + "ln2_g"], p[prefix + "ln2_b"])
    return H, (X, Q, K, V, A, C, H1, ln1, U, M, ln2, scale)


def attention_block_backward(p: dict, prefix: str, dH: np.ndarray, cache, grads: dict) -> np.ndarray:
    X, Q, K, V, A, C, H1, ln1, U, M, ln2, scale = cache
    dR2, dg, db = layernorm_backward(dH, p[prefix + "ln2_g"], ln2)
    grads[prefix + "ln2_g"] += dg
    grads[prefix + "ln2_b"] += db
    grads[prefix + "ff_w2"] += M.T @ dR2
    grads[prefix + "ff_b2"] += dR2.sum(axis=0)
    dU = (dR2 @ p[prefix + "ff_w2"].T) * (U > 0)
    grads[prefix + "ff_w1"] += H1.T @ dU
    grads[prefix + "ff_b1"] += dU.sum(axis=0)
    dH1 = dR2 + dU @ p[prefix + "ff_w1"].T
    dR1, dg, db = layernorm_backward(dH1, p[prefix + "ln1_g"], ln1)
    grads[prefix + "ln1_g"] += dg
    grads[prefix + "ln1_b"] += db
    grads[prefix + "wo"] += C.T @ dR1
    dC = dR1 @ p[prefix + "wo"].T
    dA = dC @ V.T
    dV = A.T @ dC
    dS = A * (dA - (dA * A).sum(axis=1, keepdims=True)) * scale
    dQ = dS @ K
    dK = dS.T @ Q
    grads[prefix + "wq"] += X.T @ dQ
    grads[prefix + "wk"] += X.T @ dK
    grads[prefix + "wv"] += X.T @ dV
    return (dR1 + dQ @ p[prefix + "wq"].T + dK @ p[prefix + "wk"].T
            + dV @ p[prefix + "wv"].T)
