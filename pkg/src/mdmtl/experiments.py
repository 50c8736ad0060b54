"""Experiment protocols: multi-domain learning with baselines, and
leave-one-domain-out zero-shot domain adaptation.

Methods
-------
``sdl``            one independent linear model per domain
``aggregation``    one linear model for all data, domains ignored
``md1``            low-rank model, one-hot domain descriptors
``md2``            low-rank model, one-hot + constant descriptors
``parametrised``   low-rank model, the dataset's own (distributed) descriptors
``cp``/``tucker``/``tt``/``full``  multi-output architectures, own descriptors
``rmtl_feda``/``mtfl``/``tnmtl``/``gomtl``/``free``  classic single-output presets

Single-output data uses the ``P Q`` bilinear model for the low-rank
methods; multi-class data uses a Tucker network.
"""

import dataclasses
import logging
import os
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .datasets import (
    add_bias,
    baselines_view,
    generate,
    leave_one_domain_out,
    load_delimited,
    preprocess,
    split,
)
from .descriptors import DomainSchema, encode_one_hot, encode_one_hot_const
from .errors import ConfigError
from .losses import error_rate, loss_value_grad
from .model_multi import init_cp, init_full, init_tt, init_tucker, rank_grid, to_tucker
from .model_single import MethodPreset, apply_preset, default_rank, init_single
from .persist import save_model
from .regularizers import Regularizer
from .trainer import fit, grad_check
from .zero_shot import zsda_predict

__all__ = [
    "MetricsReport",
    "ExperimentResult",
    "Trained",
    "recode",
    "train_method",
    "select_ranks",
    "load_data",
    "run_mdl",
    "run_zsda",
    "run_train",
    "run_gradcheck",
    "GradCheckRow",
    "write_result",
]

log = logging.getLogger(__name__)

PRESETS = {p.value for p in MethodPreset}


@dataclass
class MetricsReport:
    """Error rates of one method over repeats, overall and per domain.

    ``std`` is the sample standard deviation (``ddof=1``; 0 for one repeat).
    """

    method: str
    protocol: str
    seeds: list
    errors: list
    domain_labels: tuple
    domain_errors: list
    mean: float = float("nan")
    std: float = float("nan")
    ranks: list = field(default_factory=list)

    def __post_init__(self):
        self.mean, self.std = summarize(self.errors)

    def consistent(self, tol=1e-12):
        m, s = summarize(self.errors)
        return abs(m - self.mean) <= tol and abs(s - self.std) <= tol

    def domain_means(self):
        return np.mean(np.asarray(self.domain_errors, dtype=float), axis=0)


def summarize(errors):
    e = np.asarray(errors, dtype=float)
    if e.size == 0:
        return float("nan"), float("nan")
    std = float(np.std(e, ddof=1)) if e.size > 1 else 0.0
    return float(np.mean(e)), std


@dataclass
class ExperimentResult:
    protocol: str
    reports: dict
    config_text: str = ""
    models: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)


# ----------------------------------------------------------------------------
# data


def load_data(cfg):
    """``(pool, planted_model_or_None)`` for an :class:`ExperimentConfig`."""
    if cfg.source == "synthetic":
        pool, _, planted = generate(cfg.synth)
    else:
        pool, planted = load_delimited(cfg.data_path, cfg.header_path or None), None
        classes = int(cfg.raw["data"]["classes"])
        if pool.n_classes != classes:
            raise ConfigError(f"data.classes: {classes} but the file declares {pool.n_classes}")
    if cfg.bias:
        # the planted model has no weight for the extra feature
        pool, planted = add_bias(pool), None
    return pool, planted


def _preprocess(cfg, train, test):
    if cfg.preprocess == "none":
        return train, test
    return preprocess(train, test, normalize_sum=cfg.preprocess == "sum_zscore", zscore=True)


def recode(ds, encoding, universe=None):
    """Same data with one-hot (``"one_hot"``) or one-hot + constant descriptors.

    ``universe`` fixes the domain order (by label) so train and test subsets
    recode consistently; it defaults to the dataset's own domains.
    """
    universe = tuple(universe or ds.domain_labels)
    m = len(universe)
    if encoding == "one_hot":
        schema = DomainSchema.one_hot(m)
        enc = encode_one_hot
    elif encoding == "one_hot_const":
        schema = DomainSchema.one_hot_const(m)
        enc = encode_one_hot_const
    else:
        raise ValueError(f"unknown encoding {encoding!r}")
    try:
        rows = [enc(schema, universe.index(lab)).values for lab in ds.domain_labels]
    except ValueError:
        raise ValueError("dataset has a domain outside the recoding universe") from None
    return dataclasses.replace(ds, schema=schema, descriptors=np.array(rows))


# ----------------------------------------------------------------------------
# methods


_ENCODING = {
    "md1": "one_hot",
    "md2": "one_hot_const",
    "rmtl_feda": "one_hot_const",
    "mtfl": "one_hot",
    "tnmtl": "one_hot",
    "gomtl": "one_hot",
    "free": "one_hot",
}


@dataclass
class Trained:
    """A fitted method, able to score any subset of the same data pool."""

    method: str
    models: dict
    universe: tuple
    encoding: Optional[str] = None
    ranks: tuple = ()

    def scores(self, ds):
        if self.method == "sdl":
            out = None
            for lab in ds.domain_labels:
                if lab not in self.models:
                    raise ValueError(f"no single-domain model for {lab!r}")
            for dom, lab in enumerate(ds.domain_labels):
                rows = ds.domains == dom
                s = self.models[lab].forward(ds.X[rows], np.ones((rows.sum(), 1)))
                if out is None:
                    out = np.zeros((ds.N,) + np.shape(s)[1:])
                out[rows] = s
            return out
        model = self.models[None]
        if self.method == "aggregation":
            return model.forward(ds.X, np.ones((ds.N, 1)))
        if self.encoding is not None:
            ds = recode(ds, self.encoding, self.universe)
        return model.forward(ds.X, ds.Z)


def _arch(method, ds):
    binary = ds.n_classes == 1
    if method in ("md1", "md2", "parametrised"):
        return "single" if binary else "tucker"
    if method in PRESETS:
        if not binary:
            raise ConfigError(f"model.methods: preset {method} is single-output (binary data only)")
        return "preset"
    return method


def default_ranks(method, ds, cfg):
    """Ranks used when not tuning: explicit config, else heuristics."""
    arch = _arch(method, ds)
    d, c, b = ds.D, max(ds.n_classes, 1), ds.B
    k = cfg.rank if cfg.rank is not None else default_rank(d)
    if arch in ("single", "cp", "preset"):
        return (min(k, d),)
    if arch == "tucker":
        if cfg.ranks is not None:
            return cfg.ranks
        return (min(k, d), c, b)
    if arch == "tt":
        if cfg.ranks is not None:
            return (cfg.ranks[0], cfg.ranks[2])
        return (min(k, d), b)
    return ()


def _build(method, ds, ranks, seed, cfg, universe):
    """Fresh model, training view of ``ds`` and penalties for ``method``."""
    arch = _arch(method, ds)
    d, c = ds.D, max(ds.n_classes, 1)
    regs = list(cfg.train.regs)
    if method in _ENCODING:
        ds = recode(ds, _ENCODING[method], universe)
    b = ds.B
    if arch == "preset":
        model, _, preset_regs = apply_preset(method, d, len(universe), k=ranks[0], weight=cfg.preset_weight, seed=seed)
        regs += preset_regs
    elif arch == "single":
        model = init_single(d, b, ranks[0], seed=seed, schema=ds.schema)
    elif arch in ("sdl", "aggregation"):
        model = init_single(d, b, fixed_P=True, seed=seed) if c == 1 else init_full(d, c, b, seed=seed)
    elif arch == "cp":
        model = init_cp(d, c, b, ranks[0], seed=seed, schema=ds.schema)
    elif arch == "tucker":
        model = init_tucker(d, c, b, ranks, seed=seed, schema=ds.schema)
    elif arch == "tt":
        model = init_tt(d, c, b, ranks, seed=seed, schema=ds.schema)
    elif arch == "full":
        model = init_full(d, c, b, seed=seed, schema=ds.schema)
    else:
        raise ConfigError(f"model.methods: unknown method {method!r}")
    regs = [r for r in regs if r.target in model.blocks]
    return model, ds, regs


def train_method(method, train_ds, cfg, seed, universe=None, ranks=None):
    """Fit ``method`` on ``train_ds``; returns a :class:`Trained`."""
    universe = tuple(universe or train_ds.domain_labels)
    ranks = tuple(ranks) if ranks is not None else default_ranks(method, train_ds, cfg)
    tcfg = dataclasses.replace(cfg.train, seed=seed)
    if method == "sdl":
        models = {}
        for i, view in enumerate(baselines_view(train_ds, "sdl")):
            model, view, regs = _build("sdl", view, ranks, seed + 7919 * (i + 1), cfg, universe)
            models[view.domain_labels[0]], _ = fit(model, view, dataclasses.replace(tcfg, regs=regs, seed=seed + i))
        return Trained(method, models, universe)
    if method == "aggregation":
        view = baselines_view(train_ds, "aggregation")
        model, view, regs = _build("aggregation", view, ranks, seed, cfg, universe)
        trained, _ = fit(model, view, dataclasses.replace(tcfg, regs=regs))
        return Trained(method, {None: trained}, universe)
    model, view, regs = _build(method, train_ds, ranks, seed, cfg, universe)
    trained, _ = fit(model, view, dataclasses.replace(tcfg, regs=regs))
    return Trained(method, {None: trained}, universe, _ENCODING.get(method), ranks)


def _per_domain(scores, ds):
    return [error_rate(scores[ds.domains == m], ds.y[ds.domains == m]) for m in range(ds.M)]


def _fold_ids(ds, k, rng):
    folds = np.zeros(ds.N, dtype=np.int64)
    for dom in range(ds.M):
        for lab in np.unique(ds.y):
            idx = np.flatnonzero((ds.domains == dom) & (ds.y == lab))
            folds[rng.permutation(idx)] = np.arange(idx.size) % k
    return folds


def select_ranks(method, train_ds, cfg, seed, universe=None, folds=None):
    """Grid-search ranks by stratified k-fold cross-validation on ``train_ds``.

    Candidates come from :func:`mdmtl.model_multi.rank_grid` (single-output
    and CP models search ``K`` over the ``K_D`` axis). The fold count drops,
    with a warning, when some domain/class stratum is smaller than it.
    Ties go to the first (smallest) candidate.
    """
    arch = _arch(method, train_ds)
    d, c, b = train_ds.D, max(train_ds.n_classes, 1), train_ds.B
    if arch in ("sdl", "aggregation", "full"):
        return ()
    if method in _ENCODING:
        b = len(universe or train_ds.domain_labels) + (method in ("md2", "rmtl_feda"))
    kind = "cp" if arch in ("single", "preset") else arch
    candidates = rank_grid(kind, d, c, b)
    k = folds or cfg.cv_folds
    smallest = min(
        int(np.sum((train_ds.domains == m) & (train_ds.y == lab)))
        for m in range(train_ds.M)
        for lab in np.unique(train_ds.y)
        if np.any((train_ds.domains == m) & (train_ds.y == lab))
    )
    if smallest < k:
        new_k = max(2, smallest)
        warnings.warn(f"{k}-fold CV reduced to {new_k} folds: a stratum has {smallest} instances", stacklevel=2)
        k = new_k
    fold = _fold_ids(train_ds, k, np.random.default_rng(seed))
    best, best_score = None, np.inf
    for cand in candidates:
        scores = []
        for f in range(k):
            tr = train_ds.subset(np.flatnonzero(fold != f))
            va = train_ds.subset(np.flatnonzero(fold == f))
            if tr.M != train_ds.M:
                continue
            t = train_method(method, tr, cfg, seed + f, universe, cand)
            s = t.scores(va)
            if cfg.tune_metric == "loss":
                vals, _ = loss_value_grad(cfg.loss, s, va.y)
                scores.append(float(np.mean(vals)))
            else:
                scores.append(error_rate(s, va.y))
        score = float(np.mean(scores)) if scores else np.inf
        log.info("cv %s ranks=%s score=%.4f", method, cand, score)
        if score < best_score:
            best, best_score = cand, score
    return tuple(best)


# ----------------------------------------------------------------------------
# protocols


def run_mdl(cfg, pool=None, planted=None, keep_models=False):
    """Fixed-split multi-domain learning: every method on every repeat.

    Repeat ``r`` uses seed ``cfg.seed + r`` for both its split and training.
    If a planted model is known its test error is reported as ``planted``.
    """
    if pool is None:
        pool, planted = load_data(cfg)
    universe = pool.domain_labels
    seeds = [cfg.seed + r for r in range(cfg.repeats)]
    rows = {m: ([], [], []) for m in cfg.methods}
    ref = ([], [])
    models = {}
    for r, seed in enumerate(seeds):
        train, test = split(pool, cfg.train_fraction, seed)
        train, test = _preprocess(cfg, train, test)
        for method in cfg.methods:
            ranks = select_ranks(method, train, cfg, seed, universe) if cfg.tune else None
            t = train_method(method, train, cfg, seed, universe, ranks)
            s = t.scores(test)
            rows[method][0].append(error_rate(s, test.y))
            rows[method][1].append(_per_domain(s, test))
            rows[method][2].append(list(t.ranks))
            if r == 0 and keep_models:
                models[method] = t
        if planted is not None and cfg.preprocess == "none":
            s = planted.forward(test.X, test.Z)
            ref[0].append(error_rate(s, test.y))
            ref[1].append(_per_domain(s, test))
    reports = {
        m: MetricsReport(m, "fixed_split", seeds, e, universe, de, ranks=rk)
        for m, (e, de, rk) in rows.items()
    }
    if ref[0]:
        reports["planted"] = MetricsReport("planted", "fixed_split", seeds, ref[0], universe, ref[1])
    notes = [f"rank selection: {'cv ' + cfg.tune_metric if cfg.tune else 'fixed'}"]
    return ExperimentResult("fixed_split", reports, cfg.echo(), models, notes)


def run_zsda(cfg, pool=None, planted=None):
    """Leave-one-domain-out zero-shot domain adaptation.

    For each held-out domain and repeat, the descriptor-parametrised model is
    trained on the other domains and a model for the held-out domain is
    synthesised from its descriptor alone. The ``direct`` baseline applies
    an aggregate model of the observed domains unchanged.
    """
    if pool is None:
        pool, planted = load_data(cfg)
    if pool.schema.mode.value != "distributed":
        raise ConfigError(
            "data.encoding: zero-shot domain adaptation needs distributed descriptors; "
            "a one-hot code for a held-out domain carries no information"
        )
    if pool.M < 2:
        raise ConfigError("data: zero-shot domain adaptation needs at least two domains")
    seeds = [cfg.seed + r for r in range(cfg.repeats)]
    labels = pool.domain_labels
    zs = np.zeros((cfg.repeats, pool.M))
    direct = np.zeros_like(zs)
    ref = np.zeros_like(zs)
    for h in range(pool.M):
        train, test = leave_one_domain_out(pool, h)
        train, test = _preprocess(cfg, train, test)
        z_new = test.descriptor(0)
        for r, seed in enumerate(seeds):
            t = train_method("parametrised", train, cfg, seed, labels)
            s = zsda_predict(t.models[None], test.X, z_new)
            zs[r, h] = error_rate(s, test.y)
            d = train_method("aggregation", train, cfg, seed, labels)
            direct[r, h] = error_rate(d.scores(test), test.y)
            if planted is not None and cfg.preprocess == "none":
                ref[r, h] = error_rate(planted.forward(test.X, test.Z), test.y)
    reports = {
        "zsda": MetricsReport("zsda", "lodo", seeds, zs.mean(1).tolist(), labels, zs.tolist()),
        "direct": MetricsReport("direct", "lodo", seeds, direct.mean(1).tolist(), labels, direct.tolist()),
    }
    if planted is not None and cfg.preprocess == "none":
        reports["planted"] = MetricsReport("planted", "lodo", seeds, ref.mean(1).tolist(), labels, ref.tolist())
    return ExperimentResult("lodo", reports, cfg.echo(), notes=["held-out models synthesised from descriptors"])


run_train = run_mdl


@dataclass
class GradCheckRow:
    arch: str
    loss: str
    block: str
    error: float
    frozen: bool
    analytic_max: float


def _gradcheck_models(seed):
    d, c, b = 5, 3, 4
    yield "single", "hinge", init_single(d, b, 3, seed=seed), 1
    for loss, cc in (("hinge", 1), ("cross_entropy", c)):
        cp = init_cp(d, cc, b, 3, seed=seed)
        yield "cp", loss, cp, cc
        yield "tucker", loss, init_tucker(d, cc, b, (3, min(2, cc), 3), seed=seed), cc
        yield "tt", loss, init_tt(d, cc, b, (3, 3), seed=seed), cc
        yield "tucker_from_cp", loss, to_tucker(cp), cc
    yield "tucker_from_single", "hinge", to_tucker(init_single(d, b, 3, seed=seed)), 1


def run_gradcheck(seed=0, n=12, tol=1e-5, corrupt=None, eps=1e-6):
    """Finite-difference check of every block of every architecture.

    Each model gets a small Frobenius penalty on its first trainable block so
    penalty gradients are covered too. ``corrupt`` names a block whose
    analytic gradient is perturbed before comparison (used to confirm that
    the checker can fail). Returns ``(rows, passed)``.
    """
    rng = np.random.default_rng(seed)
    rows = []

    def hook(grads):
        if corrupt in grads:
            grads = dict(grads)
            grads[corrupt] = grads[corrupt] + 1e-3 * (1.0 + np.abs(grads[corrupt]))
        return grads

    for arch, loss, model, c in _gradcheck_models(seed):
        d, _, b = model.dims
        X = rng.normal(size=(n, d))
        Z = rng.integers(0, 2, size=(n, b)).astype(float)
        Z[:, 0] = 1.0
        y = rng.choice([-1, 1], size=n) if loss == "hinge" else rng.integers(0, c, size=n)
        regs = [Regularizer(model.trainable()[0], "frobenius", 0.01)]
        rep = grad_check(model, X, Z, y, loss, regs, eps=eps, analytic_hook=hook if corrupt else None)
        for block in model.blocks:
            frozen = block in rep.frozen
            rows.append(GradCheckRow(arch, loss, block, 0.0 if frozen else rep.errors[block], frozen, rep.analytic_max[block]))
    passed = all(r.error <= tol for r in rows)
    return rows, passed


def gradcheck_table(rows, tol=1e-5):
    lines = ["format=1", "arch,loss,block,max_rel_error,frozen,status"]
    for r in rows:
        status = "frozen" if r.frozen else ("pass" if r.error <= tol else "FAIL")
        lines.append(f"{r.arch},{r.loss},{r.block},{r.error:.3e},{int(r.frozen)},{status}")
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------------------------
# output


def _atomic(path, data):
    tmp = f"{path}.tmp{os.getpid()}"
    mode = "wb" if isinstance(data, bytes) else "w"
    kw = {} if mode == "wb" else {"encoding": "utf-8", "newline": "\n"}
    with open(tmp, mode, **kw) as fh:
        fh.write(data)
    os.replace(tmp, path)


def metrics_table(result):
    """Machine-readable per-repeat, per-domain error rates."""
    lines = ["format=1", "method,repeat,seed,domain,error"]
    for name, rep in result.reports.items():
        for r, seed in enumerate(rep.seeds):
            lines.append(f"{name},{r},{seed},all,{rep.errors[r]!r}")
            for lab, e in zip(rep.domain_labels, rep.domain_errors[r]):
                lines.append(f"{name},{r},{seed},{lab},{float(e)!r}")
    return "\n".join(lines) + "\n"


def summary_table(result):
    lines = ["format=1", "method,mean,std,repeats"]
    for name, rep in result.reports.items():
        lines.append(f"{name},{rep.mean!r},{rep.std!r},{len(rep.errors)}")
    return "\n".join(lines) + "\n"


def human_table(result):
    reps = result.reports
    labels = next(iter(reps.values())).domain_labels if reps else ()
    width = max([len(n) for n in reps] + [8])
    head = f"{'method':<{width}}  {'error %':>16}" + "".join(f"  {lab:>10}" for lab in labels)
    out = [f"protocol: {result.protocol}", head, "-" * len(head)]
    for name, rep in reps.items():
        cell = f"{100 * rep.mean:6.2f} +/- {100 * rep.std:5.2f}"
        dom = "".join(f"  {100 * v:10.2f}" for v in rep.domain_means())
        out.append(f"{name:<{width}}  {cell:>16}{dom}")
    out += [f"# {n}" for n in result.notes]
    return "\n".join(out) + "\n"


def write_result(result, out_dir):
    """Write ``metrics.csv``, ``summary.csv``, ``report.txt``, ``config.ini``
    and one model file per method (first repeat) into ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    _atomic(os.path.join(out_dir, "metrics.csv"), metrics_table(result))
    _atomic(os.path.join(out_dir, "summary.csv"), summary_table(result))
    _atomic(os.path.join(out_dir, "report.txt"), human_table(result))
    _atomic(os.path.join(out_dir, "config.ini"), result.config_text)
    for method, t in result.models.items():
        for key, model in t.models.items():
            suffix = "" if key is None else "_" + str(key)
            save_model(model, os.path.join(out_dir, f"model_{method}{suffix}.bin"))
