"""Multi-domain datasets: synthetic benchmarks with a planted model,
delimited-file ingestion, splits and the baseline views.

Label convention: ``n_classes == 1`` is binary with labels in ``{-1, +1}``;
``n_classes >= 2`` is multi-class with labels ``0 .. C-1``.
"""

import dataclasses
import itertools
import os
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .descriptors import Descriptor, DomainSchema, Encoding, Factor
from .errors import DataFormatError, DescriptorError
from .losses import predict_labels
from .model_multi import TuckerModel, init_tucker
from .model_single import SingleOutputModel

__all__ = [
    "MultiDomainDataset",
    "SynthSpec",
    "generate",
    "save_delimited",
    "load_delimited",
    "split",
    "leave_one_domain_out",
    "baselines_view",
    "sum_normalize",
    "ZScore",
    "preprocess",
    "add_bias",
    "FORMAT_VERSION",
]

FORMAT_VERSION = 1


@dataclass(frozen=True, eq=False)
class MultiDomainDataset:
    """Instances ``(x, domain, label)`` plus one descriptor per domain.

    ``descriptors[i]`` is the descriptor of domain ``i``; ``domain_labels``
    names the domains (state combination or index) and survives subsetting.
    """

    X: np.ndarray
    domains: np.ndarray
    y: np.ndarray
    schema: DomainSchema
    descriptors: np.ndarray
    n_classes: int = 1
    domain_labels: tuple = ()
    class_names: tuple = ()
    note: str = ""

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64)
        domains = np.array(self.domains, dtype=np.int64).reshape(-1)
        y = np.array(self.y, dtype=np.int64).reshape(-1)
        desc = np.array(self.descriptors, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] != domains.shape[0] or X.shape[0] != y.shape[0]:
            raise ValueError(f"inconsistent sizes: X {X.shape}, domains {domains.shape}, y {y.shape}")
        if not np.all(np.isfinite(X)):
            raise ValueError("features must be finite")
        if desc.ndim != 2 or desc.shape[1] != self.schema.length:
            raise ValueError(f"descriptor table {desc.shape} does not match B={self.schema.length}")
        m = desc.shape[0]
        counts = np.bincount(domains, minlength=m) if domains.size else np.zeros(m, int)
        if domains.size and (domains.min() < 0 or domains.max() >= m):
            raise ValueError("domain id without a descriptor")
        if np.any(counts[:m] == 0):
            raise ValueError(f"domains {np.flatnonzero(counts == 0).tolist()} have no instances")
        if self.n_classes == 1:
            if not np.all(np.abs(y) == 1):
                raise ValueError("binary labels must be -1 or +1")
        elif np.any((y < 0) | (y >= self.n_classes)):
            raise ValueError(f"labels must lie in 0..{self.n_classes - 1}")
        labels = tuple(self.domain_labels) or tuple(f"domain{i}" for i in range(m))
        if len(labels) != m:
            raise ValueError("one domain label per descriptor required")
        for arr in (X, domains, y, desc):
            arr.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "domains", domains)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "descriptors", desc)
        object.__setattr__(self, "domain_labels", labels)
        object.__setattr__(self, "class_names", tuple(self.class_names))

    @property
    def N(self):
        return self.X.shape[0]

    @property
    def D(self):
        return self.X.shape[1]

    @property
    def B(self):
        return self.schema.length

    @property
    def C(self):
        return self.n_classes

    @property
    def M(self):
        return self.descriptors.shape[0]

    @property
    def Z(self):
        """Per-instance descriptor rows, ``N x B``."""
        return self.descriptors[self.domains]

    def descriptor(self, i):
        return Descriptor(self.descriptors[i], self.schema)

    def domain_counts(self):
        return np.bincount(self.domains, minlength=self.M)

    def subset(self, idx):
        """Instances ``idx``; domains left empty are dropped and ids compacted."""
        idx = np.asarray(idx, dtype=np.int64)
        present = np.unique(self.domains[idx])
        remap = np.full(self.M, -1)
        remap[present] = np.arange(present.size)
        return dataclasses.replace(
            self,
            X=self.X[idx],
            domains=remap[self.domains[idx]],
            y=self.y[idx],
            descriptors=self.descriptors[present],
            domain_labels=tuple(self.domain_labels[i] for i in present),
        )

    def with_features(self, X):
        return dataclasses.replace(self, X=X)

    def same_as(self, other):
        """Exact equality of every array and piece of metadata."""
        return (
            self.schema == other.schema
            and self.n_classes == other.n_classes
            and self.domain_labels == other.domain_labels
            and self.class_names == other.class_names
            and all(
                np.array_equal(getattr(self, a), getattr(other, a))
                for a in ("X", "domains", "y", "descriptors")
            )
        )


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for a synthetic benchmark.

    ``planted`` is ``"additive"`` (single output: each domain's weight is a
    shared vector plus one vector per factor state) or ``"tucker"`` (random
    low-rank Tucker tensor with ``ranks = (K_D, K_C, K_B)``). ``n`` and
    ``n_test`` are per-domain counts. Planted scores have unit scale on
    average, so ``margin`` is in units of the typical score spread.
    """

    schema: DomainSchema
    D: int
    C: int = 1
    n: int = 100
    n_test: Optional[int] = None
    planted: str = "additive"
    ranks: tuple = (2, 2, 2)
    noise: float = 0.0
    margin: float = 0.0
    seed: int = 0
    shared_scale: float = 1.0
    max_rounds: int = 200

    def __post_init__(self):
        if self.planted not in ("additive", "tucker"):
            raise ValueError(f"unknown planted model {self.planted!r}")
        if self.planted == "additive" and self.C != 1:
            raise ValueError("additive planted model is single-output (C=1)")
        if not 0.0 <= self.noise < 0.5:
            raise ValueError("label noise rate must lie in [0, 0.5)")
        if self.margin < 0:
            raise ValueError("margin must be >= 0")
        if self.n_test is not None and self.n_test < 0:
            raise ValueError("n_test must be >= 0")
        if self.D < 1 or self.C < 1 or self.n < 1:
            raise ValueError("D, C and n must be positive")
        if self.planted == "tucker":
            kd, kc, kb = self.ranks
            if kd > self.D or kc > max(self.C, 1) or kb > self.schema.length:
                raise ValueError(f"planted ranks {self.ranks} exceed dims")


def _planted_additive(spec, rng):
    schema = spec.schema
    d, b = spec.D, schema.length
    shared = rng.normal(0.0, 1.0 / np.sqrt(d), size=d) * spec.shared_scale
    parts = rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, b))
    Q = parts.copy()
    if schema.mode is Encoding.DISTRIBUTED:
        first = len(schema.factors[0].states)
        if schema.constant:
            Q[:, -1] = shared
        else:
            Q[:, :first] += shared[:, None]
    elif schema.mode is Encoding.ONE_HOT_CONST:
        Q[:, -1] = shared
    else:
        Q += shared[:, None]
    Z = np.array([z.values for z in schema.all_descriptors()])
    scale = np.mean(np.linalg.norm(Z @ Q.T, axis=1))
    return SingleOutputModel(np.eye(d), Q / scale, fixed_P=True, schema=schema)


def _planted_tucker(spec, rng):
    schema = spec.schema
    model = init_tucker(spec.D, spec.C, schema.length, spec.ranks, seed=int(rng.integers(2**31)), schema=schema)
    Z = np.array([z.values for z in schema.all_descriptors()])
    X = rng.normal(size=(256, spec.D))
    scores = np.concatenate([model.forward(X, np.repeat(z[None], 256, 0)) for z in Z])
    spread = np.std(scores) if spec.C == 1 else np.mean(np.std(scores, axis=1))
    model.S /= spread
    return model


def _sample_domain(spec, model, z, count, rng):
    """Draw ``count`` noiseless-margin instances for one domain, then add label noise."""
    kept_x, kept_y = [], []
    have = 0
    for _ in range(spec.max_rounds):
        X = rng.normal(size=(max(2 * (count - have), 16), spec.D))
        s = model.forward(X, np.repeat(z[None], X.shape[0], 0))
        if spec.C == 1:
            s = np.asarray(s).reshape(-1)
            ok = np.abs(s) >= spec.margin
        else:
            top2 = np.sort(s, axis=1)[:, -2:]
            ok = (top2[:, 1] - top2[:, 0]) >= spec.margin
        X, s = X[ok], s[ok]
        kept_x.append(X)
        kept_y.append(predict_labels(s))
        have += X.shape[0]
        if have >= count:
            break
    else:
        raise ValueError(
            f"margin {spec.margin} infeasible: fewer than {count} instances after {spec.max_rounds} rounds"
        )
    X = np.concatenate(kept_x)[:count]
    y = np.concatenate(kept_y)[:count]
    flip = rng.random(count) < spec.noise
    if spec.C == 1:
        y = np.where(flip, -y, y)
    elif flip.any():
        shift = rng.integers(1, spec.C, size=count)
        y = np.where(flip, (y + shift) % spec.C, y)
    return X, y


def generate(spec):
    """Build ``(train, test, planted_model)`` from ``spec``.

    Features are i.i.d. standard normal. Labels are the planted model's
    decision (sign or argmax); instances closer than ``margin`` to the
    decision boundary are redrawn; then each label is corrupted with
    probability ``noise`` (flipped, or moved to a uniformly chosen other
    class). The planted model's expected error is therefore ``noise``.
    ``test`` is ``None`` when ``spec.n_test == 0``.
    """
    rng = np.random.default_rng(spec.seed)
    if spec.planted == "additive":
        model = _planted_additive(spec, rng)
    else:
        model = _planted_tucker(spec, rng)
    descs = spec.schema.all_descriptors()
    Z = np.array([d.values for d in descs])
    labels = tuple(d.label for d in descs)
    n_test = spec.n if spec.n_test is None else spec.n_test

    def build(count, note):
        xs, ys, ds = [], [], []
        for i, z in enumerate(Z):
            X, y = _sample_domain(spec, model, z, count, rng)
            xs.append(X)
            ys.append(y)
            ds.append(np.full(count, i))
        return MultiDomainDataset(
            np.concatenate(xs),
            np.concatenate(ds),
            np.concatenate(ys),
            spec.schema,
            Z,
            n_classes=spec.C,
            domain_labels=labels,
            note=note,
        )

    train = build(spec.n, f"synthetic {spec.planted} seed={spec.seed} train")
    test = build(n_test, f"synthetic {spec.planted} seed={spec.seed} test") if n_test else None
    return train, test, model


# ----------------------------------------------------------------------------
# delimited files


def _class_names(ds):
    if ds.class_names:
        return list(ds.class_names)
    if ds.n_classes == 1:
        return ["-1", "1"]
    return [str(i) for i in range(ds.n_classes)]


def _file_factors(schema):
    """Factors written to the file: real factors, or one ``domain`` factor for one-hot modes."""
    if schema.mode is Encoding.DISTRIBUTED:
        return list(schema.factors)
    return [Factor("domain", tuple(str(i) for i in range(schema.domain_count)))]


def _atomic_write(path, text):
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def header_path_for(path):
    return f"{path}.header"


def save_delimited(ds, path, header_path=None):
    """Write ``ds`` as a data file plus a sidecar header (``<path>.header``)."""
    header_path = header_path or header_path_for(path)
    names = _class_names(ds)
    factors = _file_factors(ds.schema)
    head = [
        f"format={FORMAT_VERSION}",
        f"features={ds.D}",
        f"task={'binary' if ds.n_classes == 1 else 'multiclass'}",
        "labels=" + ",".join(names),
        f"encoding={ds.schema.mode.value}",
        f"constant={int(ds.schema.constant)}",
    ]
    head += [f"factor={f.name}:" + ",".join(f.states) for f in factors]
    rows = [f"format={FORMAT_VERSION}"]
    for x, dom, y in zip(ds.X, ds.domains, ds.y):
        z = Descriptor(ds.descriptors[dom], ds.schema)
        d = z.decode()
        states = list(d) if isinstance(d, tuple) else [str(d)]
        label = names[(int(y) + 1) // 2] if ds.n_classes == 1 else names[int(y)]
        rows.append(",".join([label, *states, *(repr(float(v)) for v in x)]))
    _atomic_write(header_path, "\n".join(head) + "\n")
    _atomic_write(path, "\n".join(rows) + "\n")


def _read_header(path):
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0].strip() != f"format={FORMAT_VERSION}":
        raise DataFormatError(f"{path}: expected leading 'format={FORMAT_VERSION}'", line=1)
    info = {"factors": []}
    for no, ln in enumerate(lines[1:], start=2):
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        if "=" not in ln:
            raise DataFormatError(f"{path}: expected key=value", line=no)
        key, value = (p.strip() for p in ln.split("=", 1))
        if key == "factor":
            if ":" not in value:
                raise DataFormatError(f"{path}: factor must be name:state,state", line=no)
            name, states = value.split(":", 1)
            info["factors"].append(Factor(name.strip(), tuple(s.strip() for s in states.split(","))))
        else:
            info[key] = value
    for key in ("features", "labels"):
        if key not in info:
            raise DataFormatError(f"{path}: header lacks '{key}'")
    if not info["factors"]:
        raise DataFormatError(f"{path}: header declares no factor")
    return info


def load_delimited(path, header_path=None):
    """Read a data file and its header into a :class:`MultiDomainDataset`.

    Domains are numbered in the schema's enumeration order, keeping only
    the domains that occur in the file.
    """
    header_path = header_path or header_path_for(path)
    info = _read_header(header_path)
    d = int(info["features"])
    names = [s.strip() for s in info["labels"].split(",")]
    task = info.get("task", "binary" if len(names) == 2 else "multiclass")
    if task == "binary" and len(names) != 2:
        raise DataFormatError(f"{header_path}: binary task needs exactly two labels")
    n_classes = 1 if task == "binary" else len(names)
    encoding = Encoding(info.get("encoding", "distributed"))
    factors = info["factors"]
    if encoding is Encoding.DISTRIBUTED:
        schema = DomainSchema.distributed(factors, constant=info.get("constant", "0") == "1")
    else:
        combos = int(np.prod([len(f.states) for f in factors]))
        make = DomainSchema.one_hot if encoding is Encoding.ONE_HOT else DomainSchema.one_hot_const
        schema = make(combos)
    grid = list(itertools.product(*(f.states for f in factors)))
    all_desc = schema.all_descriptors()

    nf = len(factors)
    xs, doms, ys = [], [], []
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().strip()
        if first != f"format={FORMAT_VERSION}":
            raise DataFormatError(f"{path}: expected leading 'format={FORMAT_VERSION}'", line=1)
        for no, raw in enumerate(fh, start=2):
            line = raw.strip()
            if not line:
                continue
            fields = [f.strip() for f in line.split(",")]
            if len(fields) != 1 + nf + d:
                raise DataFormatError(f"expected {1 + nf + d} fields, got {len(fields)}", line=no)
            if fields[0] not in names:
                raise DataFormatError(f"unknown label {fields[0]!r}", line=no)
            k = names.index(fields[0])
            ys.append((2 * k - 1) if n_classes == 1 else k)
            states = tuple(fields[1 : 1 + nf])
            for f, s in zip(factors, states):
                if s not in f.states:
                    raise DataFormatError(f"unknown state {s!r} for factor {f.name!r}", line=no)
            doms.append(grid.index(states))
            try:
                x = [float(v) for v in fields[1 + nf :]]
            except ValueError as exc:
                raise DataFormatError(f"non-numeric feature ({exc})", line=no) from None
            if not all(np.isfinite(x)):
                raise DataFormatError("non-finite feature", line=no)
            xs.append(x)
    if not xs:
        raise DataFormatError(f"{path}: no instances")
    doms = np.array(doms)
    present = np.unique(doms)
    remap = np.full(len(grid), -1)
    remap[present] = np.arange(present.size)
    return MultiDomainDataset(
        np.array(xs, dtype=np.float64).reshape(-1, d),
        remap[doms],
        np.array(ys),
        schema,
        np.array([all_desc[i].values for i in present]),
        n_classes=n_classes,
        domain_labels=tuple(all_desc[i].label for i in present),
        class_names=tuple(names) if tuple(names) != tuple(_default_names(n_classes)) else (),
        note=f"loaded from {os.path.basename(path)}",
    )


def _default_names(n_classes):
    return ["-1", "1"] if n_classes == 1 else [str(i) for i in range(n_classes)]


# ----------------------------------------------------------------------------
# splits and views


def split(ds, train_fraction, seed=0):
    """Stratified (domain x class) random split into ``(train, test)``.

    Strata with fewer than two instances go entirely to train, with a warning.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for dom in range(ds.M):
        for label in np.unique(ds.y):
            idx = np.flatnonzero((ds.domains == dom) & (ds.y == label))
            if idx.size == 0:
                continue
            if idx.size < 2:
                warnings.warn(
                    f"stratum (domain {ds.domain_labels[dom]}, label {label}) has one instance; kept in train",
                    stacklevel=2,
                )
                train_idx.extend(idx)
                continue
            idx = rng.permutation(idx)
            k = min(max(int(round(train_fraction * idx.size)), 1), idx.size - 1)
            train_idx.extend(idx[:k])
            test_idx.extend(idx[k:])
    return ds.subset(np.sort(train_idx)), ds.subset(np.sort(test_idx))


def leave_one_domain_out(ds, held_out):
    """``(train without domain held_out, test = domain held_out)``."""
    if ds.M < 2:
        raise ValueError("leave-one-domain-out needs at least two domains")
    if not 0 <= held_out < ds.M:
        raise DescriptorError(f"unknown domain id {held_out} (have {ds.M})")
    mask = ds.domains == held_out
    return ds.subset(np.flatnonzero(~mask)), ds.subset(np.flatnonzero(mask))


def baselines_view(ds, mode):
    """Views for the two classic baselines.

    ``"sdl"`` returns one single-domain dataset per domain; ``"aggregation"``
    returns one dataset pooling every instance under a constant descriptor
    ``z = [1]``. Both views use a one-domain schema with ``B = 1``.
    """
    mode = mode.lower()
    single = DomainSchema.one_hot(1)
    if mode == "sdl":
        views = []
        for dom in range(ds.M):
            idx = np.flatnonzero(ds.domains == dom)
            views.append(
                dataclasses.replace(
                    ds,
                    X=ds.X[idx],
                    domains=np.zeros(idx.size, dtype=np.int64),
                    y=ds.y[idx],
                    schema=single,
                    descriptors=np.ones((1, 1)),
                    domain_labels=(ds.domain_labels[dom],),
                )
            )
        return views
    if mode == "aggregation":
        return dataclasses.replace(
            ds,
            domains=np.zeros(ds.N, dtype=np.int64),
            schema=single,
            descriptors=np.ones((1, 1)),
            domain_labels=("all",),
        )
    raise ValueError(f"unknown baseline view {mode!r}")


# ----------------------------------------------------------------------------
# preprocessing


def sum_normalize(X):
    """Scale each row to sum to one (rows summing to zero are left as is)."""
    X = np.asarray(X, dtype=np.float64)
    s = X.sum(axis=1, keepdims=True)
    return np.where(s != 0, X / np.where(s != 0, s, 1.0), X)


class ZScore:
    """Per-feature standardisation with statistics from the data passed to ``fit``."""

    def fit(self, X):
        X = np.asarray(X, dtype=np.float64)
        self.mean_ = X.mean(axis=0)
        std = X.std(axis=0)
        self.scale_ = np.where(std > 0, std, 1.0)
        return self

    def transform(self, X):
        return (np.asarray(X, dtype=np.float64) - self.mean_) / self.scale_


def preprocess(train, test, normalize_sum=True, zscore=True):
    """Sum-normalise rows, then z-score with train-split statistics."""
    Xtr, Xte = train.X, test.X
    if normalize_sum:
        Xtr, Xte = sum_normalize(Xtr), sum_normalize(Xte)
    if zscore:
        z = ZScore().fit(Xtr)
        Xtr, Xte = z.transform(Xtr), z.transform(Xte)
    return train.with_features(Xtr), test.with_features(Xte)


def add_bias(ds):
    """Append a constant-1 feature so linear models gain an intercept."""
    return ds.with_features(np.hstack([ds.X, np.ones((ds.N, 1))]))
