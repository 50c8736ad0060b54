"""Multi-output (``C`` scores) models whose ``D x C`` weight matrix is
generated from a descriptor by a factorised third-order tensor.

Every model can produce scores along two routes: the gated factorised
path (Hadamard layer for CP, Kronecker layer for Tucker and TT) and the
reference path, which composes the full ``D x C x B`` tensor and contracts
it with ``x`` on mode 1 and ``z`` on mode 3. The two must agree.
"""

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from ._base import FactorizedModel, uniform_init
from .descriptors import DomainSchema
from .errors import ShapeError
from .model_single import SingleOutputModel
from .tensor_core import (
    as_matrix,
    as_tensor3,
    as_vector,
    compose_cp,
    compose_tt,
    compose_tucker,
    hadamard,
    kron,
    mode2_unfold,
    mode_product,
    superdiagonal,
)

__all__ = [
    "CPModel",
    "TuckerModel",
    "TTModel",
    "FullTensorModel",
    "MultiModel",
    "init_cp",
    "init_tucker",
    "init_tt",
    "init_full",
    "predict_cp",
    "predict_tucker",
    "predict_tt",
    "predict_full",
    "predict_multi",
    "generate_weight_matrix",
    "compose",
    "to_tucker",
    "RANK_GRID",
    "rank_grid",
]


class _MultiBase(FactorizedModel):
    def _finish(self):
        if self.schema is not None and self.schema.length != self.dims[2]:
            raise ShapeError(f"B={self.dims[2]} but schema length is {self.schema.length}")
        self.frozen = frozenset(self.frozen)

    @property
    def n_outputs(self):
        return self.dims[1]

    def predict(self, x, z):
        return predict_multi(self, x, z)

    def weights(self, z):
        return generate_weight_matrix(self, z)

    def compose(self):
        return compose(self)


@dataclass(eq=False)
class CPModel(_MultiBase):
    """Factors ``U_D (K x D)``, ``U_C (K x C)``, ``U_B (K x B)``."""

    U_D: np.ndarray
    U_C: np.ndarray
    U_B: np.ndarray
    schema: Optional[DomainSchema] = None
    frozen: frozenset = field(default_factory=frozenset)

    kind = "cp"
    blocks = ("U_D", "U_C", "U_B")

    def __post_init__(self):
        self.U_D = as_matrix(self.U_D, "U_D").copy()
        self.U_C = as_matrix(self.U_C, "U_C").copy()
        self.U_B = as_matrix(self.U_B, "U_B").copy()
        ks = {self.U_D.shape[0], self.U_C.shape[0], self.U_B.shape[0]}
        if len(ks) != 1:
            raise ShapeError(f"CP factors need a shared rank, got {sorted(ks)}")
        self._finish()

    @property
    def dims(self):
        return self.U_D.shape[1], self.U_C.shape[1], self.U_B.shape[1]

    @property
    def rank(self):
        return self.U_D.shape[0]

    def forward(self, X, Z):
        X, Z = self._prep(X, Z)
        return ((X @ self.U_D.T) * (Z @ self.U_B.T)) @ self.U_C

    def _backward(self, X, Z, dY):
        X, Z = self._prep(X, Z)
        dY = np.asarray(dY, dtype=np.float64).reshape(X.shape[0], -1)
        a = X @ self.U_D.T
        g = Z @ self.U_B.T
        dh = dY @ self.U_C.T
        return {
            "U_D": (dh * g).T @ X,
            "U_C": (a * g).T @ dY,
            "U_B": (dh * a).T @ Z,
        }


@dataclass(eq=False)
class TuckerModel(_MultiBase):
    """Core ``S (K_D x K_C x K_B)`` and factors ``U_n (K_n x n)``."""

    S: np.ndarray
    U_D: np.ndarray
    U_C: np.ndarray
    U_B: np.ndarray
    schema: Optional[DomainSchema] = None
    frozen: frozenset = field(default_factory=frozenset)

    kind = "tucker"
    blocks = ("S", "U_D", "U_C", "U_B")

    def __post_init__(self):
        self.S = as_tensor3(self.S, "S").copy()
        self.U_D = as_matrix(self.U_D, "U_D").copy()
        self.U_C = as_matrix(self.U_C, "U_C").copy()
        self.U_B = as_matrix(self.U_B, "U_B").copy()
        lead = (self.U_D.shape[0], self.U_C.shape[0], self.U_B.shape[0])
        if self.S.shape != lead:
            raise ShapeError(f"core shape {self.S.shape} does not match factor ranks {lead}")
        self._finish()

    @property
    def dims(self):
        return self.U_D.shape[1], self.U_C.shape[1], self.U_B.shape[1]

    @property
    def ranks(self):
        return self.S.shape

    def forward(self, X, Z):
        X, Z = self._prep(X, Z)
        a = X @ self.U_D.T
        g = Z @ self.U_B.T
        return np.einsum("np,pqr,nr->nq", a, self.S, g, optimize=True) @ self.U_C

    def _backward(self, X, Z, dY):
        X, Z = self._prep(X, Z)
        dY = np.asarray(dY, dtype=np.float64).reshape(X.shape[0], -1)
        a = X @ self.U_D.T
        g = Z @ self.U_B.T
        t = np.einsum("np,pqr,nr->nq", a, self.S, g, optimize=True)
        dt = dY @ self.U_C.T
        da = np.einsum("nq,pqr,nr->np", dt, self.S, g, optimize=True)
        dg = np.einsum("np,pqr,nq->nr", a, self.S, dt, optimize=True)
        return {
            "S": np.einsum("np,nq,nr->pqr", a, dt, g, optimize=True),
            "U_D": da.T @ X,
            "U_C": t.T @ dY,
            "U_B": dg.T @ Z,
        }


@dataclass(eq=False)
class TTModel(_MultiBase):
    """``U_D (D x K_D)``, core ``S (K_D x C x K_B)``, ``U_B (K_B x B)``.

    Note ``U_D`` is stored ``D x K_D``, transposed relative to CP/Tucker.
    """

    U_D: np.ndarray
    S: np.ndarray
    U_B: np.ndarray
    schema: Optional[DomainSchema] = None
    frozen: frozenset = field(default_factory=frozenset)

    kind = "tt"
    blocks = ("U_D", "S", "U_B")

    def __post_init__(self):
        self.U_D = as_matrix(self.U_D, "U_D").copy()
        self.S = as_tensor3(self.S, "S").copy()
        self.U_B = as_matrix(self.U_B, "U_B").copy()
        if self.U_D.shape[1] != self.S.shape[0] or self.S.shape[2] != self.U_B.shape[0]:
            raise ShapeError(
                f"TT chain mismatch: U_D {self.U_D.shape}, S {self.S.shape}, U_B {self.U_B.shape}"
            )
        self._finish()

    @property
    def dims(self):
        return self.U_D.shape[0], self.S.shape[1], self.U_B.shape[1]

    @property
    def ranks(self):
        return self.S.shape[0], self.S.shape[2]

    def forward(self, X, Z):
        X, Z = self._prep(X, Z)
        a = X @ self.U_D
        g = Z @ self.U_B.T
        return np.einsum("np,pcr,nr->nc", a, self.S, g, optimize=True)

    def _backward(self, X, Z, dY):
        X, Z = self._prep(X, Z)
        dY = np.asarray(dY, dtype=np.float64).reshape(X.shape[0], -1)
        a = X @ self.U_D
        g = Z @ self.U_B.T
        da = np.einsum("nc,pcr,nr->np", dY, self.S, g, optimize=True)
        dg = np.einsum("np,pcr,nc->nr", a, self.S, dY, optimize=True)
        return {
            "U_D": X.T @ da,
            "S": np.einsum("np,nc,nr->pcr", a, dY, g, optimize=True),
            "U_B": dg.T @ Z,
        }


@dataclass(eq=False)
class FullTensorModel(_MultiBase):
    """Unfactorised ``D x C x B`` weight tensor."""

    W: np.ndarray
    schema: Optional[DomainSchema] = None
    frozen: frozenset = field(default_factory=frozenset)

    kind = "full"
    blocks = ("W",)

    def __post_init__(self):
        self.W = as_tensor3(self.W, "W").copy()
        self._finish()

    @property
    def dims(self):
        return self.W.shape

    def forward(self, X, Z):
        X, Z = self._prep(X, Z)
        return np.einsum("nd,dcb,nb->nc", X, self.W, Z, optimize=True)

    def _backward(self, X, Z, dY):
        X, Z = self._prep(X, Z)
        dY = np.asarray(dY, dtype=np.float64).reshape(X.shape[0], -1)
        return {"W": np.einsum("nd,nc,nb->dcb", X, dY, Z, optimize=True)}


MultiModel = Union[CPModel, TuckerModel, TTModel, FullTensorModel]


def init_cp(d, c, b, k, seed=0, schema=None):
    rng = np.random.default_rng(seed)
    return CPModel(
        uniform_init(rng, (k, d), d),
        uniform_init(rng, (k, c), k),
        uniform_init(rng, (k, b), b),
        schema=schema,
    )


def init_tucker(d, c, b, ranks, seed=0, schema=None):
    kd, kc, kb = ranks
    rng = np.random.default_rng(seed)
    return TuckerModel(
        uniform_init(rng, (kd, kc, kb), kd * kb),
        uniform_init(rng, (kd, d), d),
        uniform_init(rng, (kc, c), kc),
        uniform_init(rng, (kb, b), b),
        schema=schema,
    )


def init_tt(d, c, b, ranks, seed=0, schema=None):
    kd, kb = ranks
    rng = np.random.default_rng(seed)
    return TTModel(
        uniform_init(rng, (d, kd), d),
        uniform_init(rng, (kd, c, kb), kd * kb),
        uniform_init(rng, (kb, b), b),
        schema=schema,
    )


def init_full(d, c, b, seed=0, schema=None):
    rng = np.random.default_rng(seed)
    return FullTensorModel(uniform_init(rng, (d, c, b), d), schema=schema)


def _xz(model, x, z):
    x = as_vector(x, "x")
    z = as_vector(z, "descriptor")
    d, _, b = model.dims
    if x.shape[0] != d:
        raise ShapeError(f"feature length {x.shape[0]} != D={d}")
    if z.shape[0] != b:
        raise ShapeError(f"descriptor length {z.shape[0]} != B={b}")
    return x, z


def predict_cp(m, x, z):
    """``U_C^T ((U_D x) o (U_B z))`` through the Hadamard layer."""
    x, z = _xz(m, x, z)
    return m.U_C.T @ hadamard(m.U_D @ x, m.U_B @ z)


def predict_tucker(m, x, z):
    """``((U_D x) kron (U_B z)) S_(2)^T U_C`` through the Kronecker layer."""
    x, z = _xz(m, x, z)
    return (kron(m.U_D @ x, m.U_B @ z) @ mode2_unfold(m.S).T) @ m.U_C


def predict_tt(m, x, z):
    """``((U_D^T x) kron (U_B z)) S_(2)^T`` through the Kronecker layer."""
    x, z = _xz(m, x, z)
    return kron(m.U_D.T @ x, m.U_B @ z) @ mode2_unfold(m.S).T


def predict_full(m, x, z):
    """Reference route: contract the weight tensor with ``x`` (mode 1), then ``z``."""
    x, z = _xz(m, x, z)
    return mode_product(m.W, z, 3).T @ x


def predict_multi(m, x, z):
    return {
        "cp": predict_cp,
        "tucker": predict_tucker,
        "tt": predict_tt,
        "full": predict_full,
    }[m.kind](m, x, z)


def compose(m):
    """The full ``D x C x B`` weight tensor a model represents."""
    if m.kind == "cp":
        return compose_cp(m.U_D, m.U_C, m.U_B)
    if m.kind == "tucker":
        return compose_tucker(m.S, m.U_D, m.U_C, m.U_B)
    if m.kind == "tt":
        return compose_tt(m.U_D, m.S, m.U_B)
    if m.kind == "full":
        return m.W.copy()
    raise TypeError(f"cannot compose a {m.kind!r} model")


def generate_weight_matrix(m, z):
    """``D x C`` weight matrix for the domain described by ``z``.

    Uses each decomposition's own factored form; scores satisfy
    ``predict(m, x, z) == x @ generate_weight_matrix(m, z)``.
    """
    z = as_vector(z, "descriptor")
    b = m.dims[2]
    if z.shape[0] != b:
        raise ShapeError(f"descriptor length {z.shape[0]} != B={b}")
    if m.kind == "cp":
        return m.U_D.T @ np.diag(m.U_B @ z) @ m.U_C
    if m.kind == "tucker":
        return np.einsum("pqr,pd,qc,r->dc", m.S, m.U_D, m.U_C, m.U_B @ z, optimize=True)
    if m.kind == "tt":
        return np.einsum("dp,pcr,r->dc", m.U_D, m.S, m.U_B @ z, optimize=True)
    if m.kind == "full":
        return mode_product(m.W, z, 3)
    raise TypeError(f"no weight matrix for a {m.kind!r} model")


def to_tucker(m):
    """Re-express a CP, TT or single-output model as a Tucker network.

    The added constants (superdiagonal core for CP and single-output, a
    ``C x C`` identity ``U_C`` for TT, an all-ones ``K x 1`` ``U_C`` for
    single-output) are marked frozen. Blocks frozen in the source stay frozen.
    """
    if isinstance(m, TuckerModel):
        return m.copy()
    if isinstance(m, CPModel):
        k = m.rank
        frozen = {"S"} | set(m.frozen)
        return TuckerModel(superdiagonal(k), m.U_D, m.U_C, m.U_B, schema=m.schema, frozen=frozen)
    if isinstance(m, TTModel):
        c = m.dims[1]
        frozen = {"U_C"} | set(m.frozen)
        return TuckerModel(m.S, m.U_D.T, np.eye(c), m.U_B, schema=m.schema, frozen=frozen)
    if isinstance(m, SingleOutputModel):
        k = m.rank
        frozen = {"S", "U_C"} | ({"U_D"} if "P" in m.frozen else set())
        return TuckerModel(
            superdiagonal(k), m.P.T, np.ones((k, 1)), m.Q, schema=m.schema, frozen=frozen
        )
    raise TypeError(f"cannot convert {type(m).__name__} to Tucker")


RANK_GRID = {"K_D": (16, 64, 256), "K_C": (2, 4, 8), "K_B": (2, 4)}


def rank_grid(kind, d, c, b, grid=None):
    """Candidate rank settings for ``kind``, each axis clipped to its dimension.

    CP uses the ``K_D`` axis for its single rank; TT ignores ``K_C``.
    """
    grid = grid or RANK_GRID

    def clip(values, limit):
        return sorted({min(int(v), limit) for v in values})

    kd = clip(grid["K_D"], d)
    kc = clip(grid["K_C"], c)
    kb = clip(grid["K_B"], b)
    if kind == "cp":
        return [(k,) for k in kd]
    if kind == "tt":
        return [(p, r) for p in kd for r in kb]
    if kind == "tucker":
        return [(p, q, r) for p in kd for q in kc for r in kb]
    raise ValueError(f"no rank grid for {kind!r}")
