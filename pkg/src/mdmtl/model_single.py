"""Single-output descriptor-parametrised linear model.

A domain's weight vector is generated from its descriptor ``z`` by a
low-rank map, ``w = P @ Q @ z``, and the score for an input ``x`` is the
bilinear form ``x @ P @ Q @ z``. ``P`` (``D x K``) is a representation
shared by every domain; ``Q`` (``K x B``) turns descriptors into weights.
"""

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._base import FactorizedModel, uniform_init
from .descriptors import DomainSchema, build_Z, encode_one_hot, encode_one_hot_const
from .errors import ShapeError
from .regularizers import Regularizer, RegKind
from .tensor_core import as_matrix, as_vector

__all__ = [
    "SingleOutputModel",
    "MethodPreset",
    "default_rank",
    "init_single",
    "generate_weights",
    "predict",
    "apply_preset",
]


def default_rank(d):
    """``K = D / ln(D)``, rounded, at least 1."""
    if d <= 2:
        return 1
    return max(1, int(round(d / math.log(d))))


@dataclass(eq=False)
class SingleOutputModel(FactorizedModel):
    P: np.ndarray
    Q: np.ndarray
    fixed_P: bool = False
    schema: Optional[DomainSchema] = None
    frozen: frozenset = field(default_factory=frozenset)

    kind = "single"
    blocks = ("P", "Q")

    def __post_init__(self):
        self.P = as_matrix(self.P, "P").copy()
        self.Q = as_matrix(self.Q, "Q").copy()
        if self.P.shape[1] != self.Q.shape[0]:
            raise ShapeError(f"P is {self.P.shape} but Q is {self.Q.shape}: inner ranks differ")
        if self.schema is not None and self.schema.length != self.Q.shape[1]:
            raise ShapeError(f"Q has {self.Q.shape[1]} columns, schema length is {self.schema.length}")
        if self.fixed_P:
            if self.P.shape[0] != self.P.shape[1] or not np.array_equal(self.P, np.eye(self.P.shape[0])):
                raise ShapeError("fixed_P requires P to be the D x D identity")
            self.frozen = frozenset(self.frozen) | {"P"}
        self.frozen = frozenset(self.frozen)

    @property
    def dims(self):
        """``(D, C, B)`` with ``C = 1``."""
        return self.P.shape[0], 1, self.Q.shape[1]

    @property
    def rank(self):
        return self.P.shape[1]

    n_outputs = 1

    def weights(self, z):
        return generate_weights(self, z)

    def predict(self, x, z):
        return predict(self, x, z)

    def forward(self, X, Z):
        X, Z = self._prep(X, Z)
        return np.einsum("nk,nk->n", X @ self.P, Z @ self.Q.T)

    def _backward(self, X, Z, dscores):
        X, Z = self._prep(X, Z)
        dy = np.asarray(dscores, dtype=np.float64).reshape(-1)
        r = X @ self.P
        s = Z @ self.Q.T
        return {
            "P": X.T @ (dy[:, None] * s),
            "Q": (dy[:, None] * r).T @ Z,
        }


def init_single(d, b, k=None, seed=0, fixed_P=False, schema=None):
    """Random model; ``k`` defaults to :func:`default_rank` (ignored if ``fixed_P``)."""
    rng = np.random.default_rng(seed)
    if fixed_P:
        P = np.eye(d)
        k = d
    else:
        k = default_rank(d) if k is None else int(k)
        P = uniform_init(rng, (d, k), d)
    # with P = I the score sums over D inputs, so Q takes the D fan-in
    Q = uniform_init(rng, (k, b), d if fixed_P else b)
    return SingleOutputModel(P, Q, fixed_P=fixed_P, schema=schema)


def _check_xz(model, x=None, z=None):
    d, _, b = model.dims
    if z is not None and z.shape[0] != b:
        raise ShapeError(f"descriptor length {z.shape[0]} != B={b}")
    if x is not None and x.shape[0] != d:
        raise ShapeError(f"feature length {x.shape[0]} != D={d}")


def generate_weights(model, z):
    """Domain weight vector ``P @ (Q @ z)`` of length ``D``."""
    z = as_vector(z, "descriptor")
    _check_xz(model, z=z)
    return model.P @ (model.Q @ z)


def predict(model, x, z):
    """Bilinear score ``x^T P Q z``; the binary label is its sign."""
    x = as_vector(x, "x")
    z = as_vector(z, "descriptor")
    _check_xz(model, x, z)
    return float((x @ model.P) @ (model.Q @ z))


class MethodPreset(str, enum.Enum):
    RMTL_FEDA = "rmtl_feda"
    MTFL = "mtfl"
    TNMTL = "tnmtl"
    GOMTL = "gomtl"
    FREE = "free"


def apply_preset(preset, d, m, k=None, weight=1e-3, seed=0):
    """Model skeleton, descriptor matrix and penalties for a classic method.

    ==========  ==================  ==========  =========================
    preset      descriptors         P           penalties
    ==========  ==================  ==========  =========================
    rmtl_feda   one-hot + constant  identity    none
    mtfl        one-hot             identity    l2,1 on Q
    tnmtl       one-hot             identity    trace norm on Q
    gomtl       one-hot             learned     Frobenius on P, l1 on Q
    free        one-hot             learned     none
    ==========  ==================  ==========  =========================

    ``k`` only matters for the presets with a learned ``P``.

    Returns
    -------
    model : SingleOutputModel
    Z : ndarray, shape (B, M)
    regs : list of Regularizer
    """
    preset = MethodPreset(preset)
    if preset is MethodPreset.RMTL_FEDA:
        schema = DomainSchema.one_hot_const(m)
        Z = build_Z(encode_one_hot_const(schema, i) for i in range(m))
    else:
        schema = DomainSchema.one_hot(m)
        Z = build_Z(encode_one_hot(schema, i) for i in range(m))
    fixed = preset in (MethodPreset.RMTL_FEDA, MethodPreset.MTFL, MethodPreset.TNMTL)
    model = init_single(d, schema.length, k, seed=seed, fixed_P=fixed, schema=schema)
    regs = {
        MethodPreset.RMTL_FEDA: [],
        MethodPreset.MTFL: [Regularizer("Q", RegKind.L21, weight)],
        MethodPreset.TNMTL: [Regularizer("Q", RegKind.TRACE, weight)],
        MethodPreset.GOMTL: [
            Regularizer("P", RegKind.FROBENIUS, weight),
            Regularizer("Q", RegKind.L1, weight),
        ],
        MethodPreset.FREE: [],
    }[preset]
    return model, Z, regs
