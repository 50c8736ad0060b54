"""Norm penalties on factor matrices, with (sub)gradients.

The trace norm needs singular vectors; they come from a one-sided Jacobi
SVD kept in this module so the penalty has no solver dependency.
"""

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError

__all__ = [
    "RegKind",
    "Regularizer",
    "jacobi_svd",
    "reg_value_subgrad",
    "regularization",
    "parse_regularizers",
]

BLOCK_NAMES = ("P", "Q", "U_D", "U_C", "U_B", "S", "W")


class RegKind(str, enum.Enum):
    FROBENIUS = "frobenius"
    L21 = "l21"
    TRACE = "trace"
    L1 = "l1"


@dataclass(frozen=True)
class Regularizer:
    target: str
    kind: RegKind
    weight: float

    def __post_init__(self):
        object.__setattr__(self, "kind", RegKind(self.kind))
        if self.target not in BLOCK_NAMES:
            raise ValueError(f"unknown regularizer target {self.target!r}")
        if not self.weight >= 0:
            raise ValueError(f"regularizer weight must be >= 0, got {self.weight}")

    def __str__(self):
        return f"{self.target}:{self.kind.value}:{self.weight!r}"


def parse_regularizers(text):
    """Parse ``"Q:l21:0.01, P:frobenius:1e-4"``; empty or ``none`` gives ``[]``."""
    text = (text or "").strip()
    if not text or text.lower() == "none":
        return []
    regs = []
    for item in text.split(","):
        parts = [p.strip() for p in item.split(":")]
        if len(parts) != 3:
            raise ValueError(f"regularizer {item.strip()!r} is not target:kind:weight")
        regs.append(Regularizer(parts[0], parts[1].lower(), float(parts[2])))
    return regs


def jacobi_svd(A, tol=1e-14, max_sweeps=80):
    """Thin SVD by one-sided (Hestenes) Jacobi rotations.

    Returns ``U, s, Vt`` with ``s`` descending and ``A = U @ diag(s) @ Vt``.
    Columns of ``U`` belonging to zero singular values are left as zeros.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ShapeError(f"jacobi_svd needs a matrix, got shape {A.shape}")
    transposed = A.shape[0] < A.shape[1]
    U = (A.T if transposed else A).copy()
    n = U.shape[1]
    V = np.eye(n)
    for _ in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                alpha = U[:, p] @ U[:, p]
                beta = U[:, q] @ U[:, q]
                gamma = U[:, p] @ U[:, q]
                if gamma == 0.0 or abs(gamma) <= tol * np.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = (1.0 if zeta >= 0 else -1.0) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                up, uq = U[:, p].copy(), U[:, q].copy()
                U[:, p] = c * up - s * uq
                U[:, q] = s * up + c * uq
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
        if not rotated:
            break
    sigma = np.sqrt(np.einsum("ij,ij->j", U, U))
    order = np.argsort(-sigma, kind="stable")
    sigma, U, V = sigma[order], U[:, order], V[:, order]
    nz = sigma > 0
    U[:, nz] /= sigma[nz]
    U[:, ~nz] = 0.0
    if transposed:
        return V, sigma, U.T
    return U, sigma, V.T


def reg_value_subgrad(kind, M, lam):
    """Penalty value and a subgradient for matrix (or tensor) ``M``.

    Parameters
    ----------
    kind : RegKind or str
        ``frobenius`` (squared, ``lam * sum M**2``), ``l21`` (sum of row
        2-norms), ``trace`` (sum of singular values) or ``l1`` (entrywise).
    M : ndarray
        Matrix; ``frobenius`` and ``l1`` also accept order-3 tensors.
    lam : float
        Non-negative weight.

    Returns
    -------
    value : float
    grad : ndarray
        Same shape as ``M``. At non-differentiable points the minimum-norm
        subgradient is used (zero rows for ``l21``, zero entries for ``l1``,
        singular vectors of non-zero singular values only for ``trace``).
    """
    kind = RegKind(kind)
    M = np.asarray(M, dtype=np.float64)
    if lam < 0:
        raise ValueError("regularizer weight must be >= 0")
    if kind is RegKind.FROBENIUS:
        return lam * float(np.sum(M * M)), 2.0 * lam * M
    if kind is RegKind.L1:
        return lam * float(np.sum(np.abs(M))), lam * np.sign(M)
    if M.ndim != 2:
        raise ShapeError(f"{kind.value} norm is defined for matrices, got shape {M.shape}")
    if kind is RegKind.L21:
        norms = np.sqrt(np.sum(M * M, axis=1))
        grad = np.zeros_like(M)
        nz = norms > 0
        grad[nz] = M[nz] / norms[nz, None]
        return lam * float(norms.sum()), lam * grad
    U, s, Vt = jacobi_svd(M)
    keep = s > s[0] * 1e-12 if s.size and s[0] > 0 else np.zeros_like(s, dtype=bool)
    grad = U[:, keep] @ Vt[keep]
    return lam * float(s.sum()), lam * grad


def regularization(model, regs):
    """Total penalty and per-block gradients for ``model`` under ``regs``."""
    total = 0.0
    grads = {}
    blocks = model.params()
    for r in regs:
        if r.target not in blocks:
            raise ValueError(f"model {model.kind!r} has no block {r.target!r} to regularize")
        if r.weight == 0:
            continue
        value, g = reg_value_subgrad(r.kind, blocks[r.target], r.weight)
        total += value
        grads[r.target] = grads.get(r.target, 0.0) + g
    return total, grads
