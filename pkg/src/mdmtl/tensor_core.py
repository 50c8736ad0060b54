"""Dense vector / matrix / third-order tensor arithmetic.

Vectors, matrices and order-3 tensors are plain ``float64`` numpy arrays of
ndim 1, 2 and 3. Tensors use C order, so for ``t[i, j, k]`` the last index
varies fastest in memory.

Two orderings must agree for the gated (Kronecker) prediction path to be
correct, and both are pinned here:

* ``kron(u, v)`` lists ``u`` fastest: ``[u1 v1, u2 v1, ..., uK v1, u1 v2, ...]``.
* ``mode2_unfold(t)`` places ``t[i, j, k]`` at row ``j``, column
  ``i + dim1 * k`` (mode-1 index fastest).

With these, ``kron(a, c) @ mode2_unfold(t).T`` equals ``t`` contracted with
``a`` on mode 1 and ``c`` on mode 3.
"""

import numpy as np

from .errors import ShapeError

__all__ = [
    "as_vector",
    "as_matrix",
    "as_tensor3",
    "mode_product",
    "mode2_unfold",
    "mode2_refold",
    "kron",
    "hadamard",
    "outer3",
    "compose_cp",
    "compose_tucker",
    "compose_tt",
    "superdiagonal",
]


def _as_array(a, ndim, what):
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != ndim:
        raise ShapeError(f"{what} must have ndim {ndim}, got shape {arr.shape}")
    if arr.size == 0:
        raise ShapeError(f"{what} must be non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains non-finite entries")
    return arr


def as_vector(v, what="vector"):
    return _as_array(v, 1, what)


def as_matrix(m, what="matrix"):
    return _as_array(m, 2, what)


def as_tensor3(t, what="tensor"):
    return _as_array(t, 3, what)


def mode_product(t, v, mode):
    """Contract an order-3 tensor with a vector along ``mode`` (1, 2 or 3).

    The result keeps the two remaining dimensions in ascending mode order.
    """
    t = as_tensor3(t)
    v = as_vector(v)
    if mode not in (1, 2, 3):
        raise ValueError(f"mode must be 1, 2 or 3, got {mode!r}")
    size = t.shape[mode - 1]
    if v.shape[0] != size:
        raise ShapeError(
            f"mode-{mode} product: tensor dimension {size} != vector length {v.shape[0]}"
        )
    return np.tensordot(t, v, axes=([mode - 1], [0]))


def mode2_unfold(t):
    """Mode-2 matricisation: ``dim2 x (dim1*dim3)``, mode-1 index fastest."""
    t = as_tensor3(t)
    d1, d2, d3 = t.shape
    return t.transpose(1, 2, 0).reshape(d2, d3 * d1)


def mode2_refold(m, shape):
    """Inverse of :func:`mode2_unfold` for a tensor of the given shape."""
    m = as_matrix(m)
    d1, d2, d3 = shape
    if m.shape != (d2, d1 * d3):
        raise ShapeError(f"cannot refold {m.shape} into tensor of shape {tuple(shape)}")
    return m.reshape(d2, d3, d1).transpose(2, 0, 1).copy()


def kron(u, v):
    """Kronecker product layer output, ``u`` index varying fastest."""
    u = as_vector(u)
    v = as_vector(v)
    return np.kron(v, u)


def hadamard(u, v):
    u = as_vector(u)
    v = as_vector(v)
    if u.shape != v.shape:
        raise ShapeError(f"hadamard: lengths differ ({u.shape[0]} vs {v.shape[0]})")
    return u * v


def outer3(a, b, c):
    a, b, c = as_vector(a), as_vector(b), as_vector(c)
    return np.einsum("i,j,k->ijk", a, b, c)


def superdiagonal(k):
    """``k x k x k`` tensor with ones on the superdiagonal."""
    s = np.zeros((k, k, k))
    idx = np.arange(k)
    s[idx, idx, idx] = 1.0
    return s


def compose_cp(U_D, U_C, U_B):
    """Sum of ``K`` rank-one terms built from matching factor rows.

    Factors are ``K x D``, ``K x C`` and ``K x B``; the result is ``D x C x B``.
    """
    U_D = as_matrix(U_D, "U_D")
    U_C = as_matrix(U_C, "U_C")
    U_B = as_matrix(U_B, "U_B")
    ks = (U_D.shape[0], U_C.shape[0], U_B.shape[0])
    if len(set(ks)) != 1:
        raise ShapeError(f"CP factors need a shared rank, got leading dims {ks}")
    return np.einsum("kd,kc,kb->dcb", U_D, U_C, U_B)


def compose_tucker(S, U_D, U_C, U_B):
    """Core ``K_D x K_C x K_B`` expanded by ``K_n x n`` factors on each mode."""
    S = as_tensor3(S, "core")
    U_D = as_matrix(U_D, "U_D")
    U_C = as_matrix(U_C, "U_C")
    U_B = as_matrix(U_B, "U_B")
    lead = (U_D.shape[0], U_C.shape[0], U_B.shape[0])
    if S.shape != lead:
        raise ShapeError(f"Tucker core shape {S.shape} does not match factor ranks {lead}")
    return np.einsum("pqr,pd,qc,rb->dcb", S, U_D, U_C, U_B, optimize=True)


def compose_tt(U_D, S, U_B):
    """Train ``U_D (D x K_D)``, core ``K_D x C x K_B``, ``U_B (K_B x B)``."""
    U_D = as_matrix(U_D, "U_D")
    S = as_tensor3(S, "core")
    U_B = as_matrix(U_B, "U_B")
    if U_D.shape[1] != S.shape[0] or S.shape[2] != U_B.shape[0]:
        raise ShapeError(
            f"TT chain mismatch: U_D {U_D.shape}, core {S.shape}, U_B {U_B.shape}"
        )
    return np.einsum("dp,pcr,rb->dcb", U_D, S, U_B, optimize=True)
