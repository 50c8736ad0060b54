"""Brute-force reference implementations written with explicit index loops.

None of these import the package under test; they restate each quantity
from its elementwise definition so the vectorised code can be checked
against something independent.
"""

import math

import numpy as np


def mode_product_loop(t, v, mode):
    d1, d2, d3 = t.shape
    if mode == 1:
        out = np.zeros((d2, d3))
        for j in range(d2):
            for k in range(d3):
                out[j, k] = sum(t[i, j, k] * v[i] for i in range(d1))
    elif mode == 2:
        out = np.zeros((d1, d3))
        for i in range(d1):
            for k in range(d3):
                out[i, k] = sum(t[i, j, k] * v[j] for j in range(d2))
    else:
        out = np.zeros((d1, d2))
        for i in range(d1):
            for j in range(d2):
                out[i, j] = sum(t[i, j, k] * v[k] for k in range(d3))
    return out


def kron_loop(u, v):
    """Entries ordered u1 v1, u2 v1, ..., uK v1, u1 v2, ..."""
    out = []
    for j in range(len(v)):
        for i in range(len(u)):
            out.append(u[i] * v[j])
    return np.array(out)


def unfold2_loop(t):
    """Rows indexed by mode 2; column of (k1, k3) is k1 + d1 * k3."""
    d1, d2, d3 = t.shape
    out = np.zeros((d2, d1 * d3))
    for i in range(d1):
        for j in range(d2):
            for k in range(d3):
                out[j, i + d1 * k] = t[i, j, k]
    return out


def outer3_loop(a, b, c):
    out = np.zeros((len(a), len(b), len(c)))
    for i in range(len(a)):
        for j in range(len(b)):
            for k in range(len(c)):
                out[i, j, k] = a[i] * b[j] * c[k]
    return out


def cp_loop(U_D, U_C, U_B):
    K, D = U_D.shape
    C, B = U_C.shape[1], U_B.shape[1]
    W = np.zeros((D, C, B))
    for d in range(D):
        for c in range(C):
            for b in range(B):
                W[d, c, b] = sum(U_D[k, d] * U_C[k, c] * U_B[k, b] for k in range(K))
    return W


def tucker_loop(S, U_D, U_C, U_B):
    KD, KC, KB = S.shape
    D, C, B = U_D.shape[1], U_C.shape[1], U_B.shape[1]
    W = np.zeros((D, C, B))
    for d in range(D):
        for c in range(C):
            for b in range(B):
                acc = 0.0
                for p in range(KD):
                    for q in range(KC):
                        for r in range(KB):
                            acc += S[p, q, r] * U_D[p, d] * U_C[q, c] * U_B[r, b]
                W[d, c, b] = acc
    return W


def tt_loop(U_D, S, U_B):
    D, KD = U_D.shape
    _, C, KB = S.shape
    B = U_B.shape[1]
    W = np.zeros((D, C, B))
    for d in range(D):
        for c in range(C):
            for b in range(B):
                W[d, c, b] = sum(
                    U_D[d, p] * S[p, c, r] * U_B[r, b] for p in range(KD) for r in range(KB)
                )
    return W


def tensor_predict_loop(W, x, z):
    """Contract the weight tensor with x on mode 1 and z on mode 3."""
    D, C, B = W.shape
    return np.array(
        [sum(W[d, c, b] * x[d] * z[b] for d in range(D) for b in range(B)) for c in range(C)]
    )


def bilinear_loop(P, Q, x, z):
    D, K = P.shape
    B = Q.shape[1]
    qz = [sum(Q[k, b] * z[b] for b in range(B)) for k in range(K)]
    w = [sum(P[d, k] * qz[k] for k in range(K)) for d in range(D)]
    return sum(x[d] * w[d] for d in range(D))


def hinge_loop(s, y):
    return max(0.0, 1.0 - y * s)


def xent_loop(scores, label):
    m = max(scores)
    return math.log(sum(math.exp(v - m) for v in scores)) - (scores[label] - m)


def central_difference(f, x, eps=1e-6):
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f(x)
        flat[i] = orig - eps
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * eps)
    return g


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-300)
    return float(np.max(np.abs(a - b)) / scale)
