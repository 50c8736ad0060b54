"""Semantic descriptors: the vectors ``z`` that tell a model which domain
(or task) an instance comes from.

Three encodings are supported:

``ONE_HOT``
    ``z`` indexes one of ``M`` atomic domains (``B = M``).
``ONE_HOT_CONST``
    one-hot followed by a constant 1, giving every domain a shared
    component (``B = M + 1``).
``DISTRIBUTED``
    one one-hot block per domain factor, concatenated in declared factor
    order (``B = sum of factor cardinalities``). An optional trailing
    constant entry may be switched on.
"""

import enum
import itertools
from dataclasses import dataclass

import numpy as np

from .errors import DescriptorError

__all__ = [
    "Encoding",
    "Factor",
    "DomainSchema",
    "Descriptor",
    "encode_one_hot",
    "encode_one_hot_const",
    "encode_distributed",
    "build_Z",
]


class Encoding(str, enum.Enum):
    ONE_HOT = "one_hot"
    ONE_HOT_CONST = "one_hot_const"
    DISTRIBUTED = "distributed"


@dataclass(frozen=True)
class Factor:
    name: str
    states: tuple

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(str(s) for s in self.states))
        if len(self.states) < 1:
            raise DescriptorError(f"factor {self.name!r} has no states")
        if len(set(self.states)) != len(self.states):
            raise DescriptorError(f"factor {self.name!r} has duplicate states")


@dataclass(frozen=True)
class DomainSchema:
    """How domains map to descriptor vectors.

    Use the ``one_hot``, ``one_hot_const`` and ``distributed`` constructors
    rather than calling this directly.
    """

    mode: Encoding
    domain_count: int = 0
    factors: tuple = ()
    constant: bool = False

    def __post_init__(self):
        object.__setattr__(self, "mode", Encoding(self.mode))
        if self.mode is Encoding.DISTRIBUTED:
            if not self.factors:
                raise DescriptorError("distributed schema needs at least one factor")
            names = [f.name for f in self.factors]
            if len(set(names)) != len(names):
                raise DescriptorError("duplicate factor names")
        elif self.domain_count < 1:
            raise DescriptorError(f"domain count must be >= 1, got {self.domain_count}")

    @classmethod
    def one_hot(cls, m):
        return cls(Encoding.ONE_HOT, domain_count=int(m))

    @classmethod
    def one_hot_const(cls, m):
        return cls(Encoding.ONE_HOT_CONST, domain_count=int(m))

    @classmethod
    def distributed(cls, factors, constant=False):
        """``factors`` is a sequence of ``(name, states)`` pairs or :class:`Factor`."""
        fs = tuple(f if isinstance(f, Factor) else Factor(f[0], tuple(f[1])) for f in factors)
        return cls(Encoding.DISTRIBUTED, factors=fs, constant=bool(constant))

    @property
    def length(self):
        """Descriptor length ``B``."""
        if self.mode is Encoding.ONE_HOT:
            return self.domain_count
        if self.mode is Encoding.ONE_HOT_CONST:
            return self.domain_count + 1
        return sum(len(f.states) for f in self.factors) + int(self.constant)

    @property
    def n_domains(self):
        """Number of distinct domains the schema can describe."""
        if self.mode is Encoding.DISTRIBUTED:
            return int(np.prod([len(f.states) for f in self.factors]))
        return self.domain_count

    def all_descriptors(self):
        """Every describable domain, in index / factorial (last factor fastest) order."""
        if self.mode is Encoding.ONE_HOT:
            return [encode_one_hot(self, i) for i in range(self.domain_count)]
        if self.mode is Encoding.ONE_HOT_CONST:
            return [encode_one_hot_const(self, i) for i in range(self.domain_count)]
        grid = itertools.product(*(f.states for f in self.factors))
        return [encode_distributed(self, states) for states in grid]

    def to_dict(self):
        return {
            "mode": self.mode.value,
            "domain_count": self.domain_count,
            "factors": [[f.name, list(f.states)] for f in self.factors],
            "constant": self.constant,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            Encoding(d["mode"]),
            domain_count=int(d.get("domain_count", 0)),
            factors=tuple(Factor(n, tuple(s)) for n, s in d.get("factors", [])),
            constant=bool(d.get("constant", False)),
        )


@dataclass(frozen=True, eq=False)
class Descriptor:
    """A descriptor vector tied to the schema that produced it.

    Behaves as an array under ``np.asarray``.
    """

    values: np.ndarray
    schema: DomainSchema

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        _check_invariant(v, self.schema)

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.values
        return self.values.astype(dtype)

    def __len__(self):
        return self.values.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Descriptor):
            return NotImplemented
        return self.schema == other.schema and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash((self.schema, self.values.tobytes()))

    def decode(self):
        """Recover the domain index (one-hot modes) or state tuple (distributed)."""
        v = self.values
        if self.schema.mode is not Encoding.DISTRIBUTED:
            return int(np.flatnonzero(v[: self.schema.domain_count])[0])
        states, pos = [], 0
        for f in self.schema.factors:
            block = v[pos : pos + len(f.states)]
            states.append(f.states[int(np.flatnonzero(block)[0])])
            pos += len(f.states)
        return tuple(states)

    @property
    def label(self):
        d = self.decode()
        if isinstance(d, tuple):
            return "-".join(f"{f.name}{s}" for f, s in zip(self.schema.factors, d))
        return f"domain{d}"


def _check_invariant(v, schema):
    if v.ndim != 1 or v.shape[0] != schema.length:
        raise DescriptorError(f"descriptor length {v.shape} != schema length {schema.length}")
    if not np.all((v == 0.0) | (v == 1.0)):
        raise DescriptorError("encoded descriptors are binary")
    if schema.mode is Encoding.ONE_HOT:
        ok = v.sum() == 1
    elif schema.mode is Encoding.ONE_HOT_CONST:
        ok = v[-1] == 1 and v[:-1].sum() == 1
    else:
        pos, ok = 0, True
        for f in schema.factors:
            ok = ok and v[pos : pos + len(f.states)].sum() == 1
            pos += len(f.states)
        if schema.constant:
            ok = ok and v[-1] == 1
    if not ok:
        raise DescriptorError(f"descriptor {v.tolist()} violates {schema.mode.value} encoding")


def _check_index(schema, index, mode):
    if schema.mode is not mode:
        raise DescriptorError(f"schema is {schema.mode.value}, not {mode.value}")
    if not 0 <= index < schema.domain_count:
        raise DescriptorError(
            f"domain index {index} out of range for {schema.domain_count} domains"
        )


def encode_one_hot(schema, index):
    _check_index(schema, index, Encoding.ONE_HOT)
    v = np.zeros(schema.length)
    v[index] = 1.0
    return Descriptor(v, schema)


def encode_one_hot_const(schema, index):
    _check_index(schema, index, Encoding.ONE_HOT_CONST)
    v = np.zeros(schema.length)
    v[index] = 1.0
    v[-1] = 1.0
    return Descriptor(v, schema)


def encode_distributed(schema, states):
    """One state per factor, given in factor order (or as a ``{name: state}`` map)."""
    if schema.mode is not Encoding.DISTRIBUTED:
        raise DescriptorError(f"schema is {schema.mode.value}, not distributed")
    if isinstance(states, dict):
        missing = [f.name for f in schema.factors if f.name not in states]
        if missing:
            raise DescriptorError(f"no state given for factors {missing}")
        states = [states[f.name] for f in schema.factors]
    states = list(states)
    if len(states) != len(schema.factors):
        raise DescriptorError(
            f"expected {len(schema.factors)} states, got {len(states)}"
        )
    blocks = []
    for f, s in zip(schema.factors, states):
        s = str(s)
        if s not in f.states:
            raise DescriptorError(f"unknown state {s!r} for factor {f.name!r}; known: {list(f.states)}")
        block = np.zeros(len(f.states))
        block[f.states.index(s)] = 1.0
        blocks.append(block)
    if schema.constant:
        blocks.append(np.ones(1))
    return Descriptor(np.concatenate(blocks), schema)


def build_Z(descriptors):
    """Stack descriptors as columns into a ``B x M`` matrix."""
    descriptors = list(descriptors)
    if not descriptors:
        raise DescriptorError("no descriptors to stack")
    schema = descriptors[0].schema
    if any(d.schema != schema for d in descriptors[1:]):
        raise DescriptorError("descriptors come from different schemas")
    return np.column_stack([d.values for d in descriptors])
