"""Mini-batch SGD on the domain-averaged empirical risk, and a
finite-difference gradient checker.

The objective is::

    J = (1/M) sum_i (1/N_i) sum_j loss(score_ij, y_ij) + sum_r weight_r * penalty_r

With uniform instance sampling each instance's loss gradient is weighted
by ``N / (M * N_i)`` so mini-batch gradients are unbiased for ``J``; with
domain-balanced sampling (domain first, then instance) no weight is needed.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, ShapeError
from .losses import LossKind, error_rate, loss_value_grad
from .regularizers import regularization

__all__ = [
    "TrainConfig",
    "TrainReport",
    "fit",
    "objective",
    "epoch_batches",
    "grad_check",
    "GradCheckReport",
    "check_compatible",
]


@dataclass
class TrainConfig:
    lr: float = 0.01
    schedule: str = "constant"
    decay_factor: float = 0.5
    decay_every: int = 100
    batch_size: int = 32
    epochs: int = 500
    seed: int = 0
    loss: LossKind = LossKind.HINGE
    regs: tuple = ()
    balanced: bool = False

    def __post_init__(self):
        self.loss = LossKind(self.loss)
        self.regs = tuple(self.regs)
        if not self.lr >= 0:
            raise ValueError("learning rate must be >= 0")
        if self.schedule not in ("constant", "step"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.batch_size < 1 or self.epochs < 1 or self.decay_every < 1:
            raise ValueError("batch_size, epochs and decay_every must be >= 1")
        if not 0 < self.decay_factor <= 1:
            raise ValueError("decay_factor must lie in (0, 1]")

    def lr_at(self, epoch):
        if self.schedule == "step":
            return self.lr * self.decay_factor ** (epoch // self.decay_every)
        return self.lr


@dataclass
class TrainReport:
    objectives: list = field(default_factory=list)
    domain_errors: list = field(default_factory=list)
    wall_clock: float = 0.0
    iterations: int = 0


def check_compatible(model, ds, loss):
    d, c, b = model.dims
    if d != ds.D or b != ds.B:
        raise ShapeError(f"model expects D={d}, B={b}; dataset has D={ds.D}, B={ds.B}")
    loss = LossKind(loss)
    if ds.n_classes == 1:
        if c != 1 or loss is not LossKind.HINGE:
            raise ShapeError("binary data needs a single-output model and hinge loss")
    elif c != ds.n_classes or loss is not LossKind.CROSS_ENTROPY:
        raise ShapeError(
            f"{ds.n_classes}-class data needs {ds.n_classes} outputs and cross-entropy loss"
        )


def _risk(model, X, Z, y, loss, weights=None):
    vals, grads = loss_value_grad(loss, model.forward(X, Z), y)
    if weights is None:
        return float(np.mean(vals)), grads / len(y)
    return float(np.sum(weights * vals) / len(y)), grads * (weights / len(y)).reshape(
        (-1,) + (1,) * (grads.ndim - 1)
    )


def objective(model, ds, loss, regs=()):
    """Domain-averaged risk plus penalties on the whole dataset."""
    vals, _ = loss_value_grad(loss, model.forward(ds.X, ds.Z), ds.y)
    per_domain = np.bincount(ds.domains, weights=vals, minlength=ds.M) / ds.domain_counts()
    penalty, _ = regularization(model, regs)
    return float(per_domain.mean() + penalty)


def epoch_batches(ds, cfg, rng):
    """Index batches for one epoch: ``ceil(N / batch_size)`` batches."""
    n = ds.N
    nb = math.ceil(n / cfg.batch_size)
    if not cfg.balanced:
        perm = rng.permutation(n)
        return [perm[i * cfg.batch_size : (i + 1) * cfg.batch_size] for i in range(nb)]
    members = [np.flatnonzero(ds.domains == m) for m in range(ds.M)]
    out = []
    for _ in range(nb):
        doms = rng.integers(0, ds.M, size=cfg.batch_size)
        out.append(np.array([members[m][rng.integers(members[m].size)] for m in doms]))
    return out


def fit(model, ds, cfg, order=None, divergence_factor=1e6):
    """Train a copy of ``model`` on ``ds``; returns ``(trained, report)``.

    ``order`` optionally fixes the sample sequence: one list of index
    arrays per epoch (overrides ``cfg.epochs`` and the sampler). Frozen
    blocks are never updated.

    Raises
    ------
    DivergenceError
        If the epoch objective is non-finite or exceeds
        ``divergence_factor`` times its initial value.
    """
    check_compatible(model, ds, cfg.loss)
    if np.any(ds.domain_counts() == 0):
        raise ValueError("every domain needs at least one instance")
    model = model.copy()
    start = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    X, Z, y = ds.X, ds.Z, ds.y
    if cfg.balanced:
        inst_w = None
    else:
        inst_w = ds.N / (ds.M * ds.domain_counts()[ds.domains])
        if np.all(inst_w == 1.0):
            inst_w = None
    trainable = model.trainable()
    j0 = objective(model, ds, cfg.loss, cfg.regs)
    report = TrainReport()
    epochs = len(order) if order is not None else cfg.epochs
    for epoch in range(epochs):
        lr = cfg.lr_at(epoch)
        batches = order[epoch] if order is not None else epoch_batches(ds, cfg, rng)
        for idx in batches:
            idx = np.asarray(idx)
            w = None if inst_w is None else inst_w[idx]
            _, dscores = _risk(model, X[idx], Z[idx], y[idx], cfg.loss, w)
            grads = model.backward(X[idx], Z[idx], dscores)
            _, rgrads = regularization(model, cfg.regs)
            for name in trainable:
                g = grads[name]
                if name in rgrads:
                    g = g + rgrads[name]
                param = getattr(model, name)
                param -= lr * g
            report.iterations += 1
        j = objective(model, ds, cfg.loss, cfg.regs)
        report.objectives.append(j)
        if not np.isfinite(j) or j > divergence_factor * max(j0, 1e-12):
            raise DivergenceError(epoch + 1, j)
    scores = model.forward(X, Z)
    report.domain_errors = [
        error_rate(scores[ds.domains == m], y[ds.domains == m]) for m in range(ds.M)
    ]
    report.wall_clock = time.perf_counter() - start
    return model, report


@dataclass
class GradCheckReport:
    """Per-block maximum relative error and analytic gradient size."""

    errors: dict
    analytic_max: dict
    frozen: tuple

    @property
    def max_error(self):
        return max(self.errors.values()) if self.errors else 0.0

    def passed(self, tol=1e-5):
        return self.max_error <= tol


def _batch_objective(model, X, Z, y, loss, regs):
    vals, _ = loss_value_grad(loss, model.forward(X, Z), y)
    penalty, _ = regularization(model, regs)
    return float(np.mean(vals) + penalty)


def grad_check(model, X, Z, y, loss, regs=(), eps=1e-6, kink_tol=1e-4, analytic_hook=None):
    """Compare analytic gradients of the batch objective with central differences.

    The batch objective is the mean loss over the batch plus penalties.
    Hinge instances within ``kink_tol`` of the kink are dropped first.
    Frozen blocks are not differenced; their analytic gradient is reported.
    ``analytic_hook`` may rewrite the analytic gradient dict (testing aid).

    Relative error for a block is ``max|analytic - numeric|`` divided by
    ``max(max|analytic|, max|numeric|, 1e-8)``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    y = np.asarray(y)
    loss = LossKind(loss)
    model = model.copy()
    if loss is LossKind.HINGE:
        s = np.asarray(model.forward(X, Z)).reshape(-1)
        keep = np.abs(1.0 - y * s) > kink_tol
        if not keep.any():
            raise ValueError("every instance sits on the hinge kink")
        X, Z, y = X[keep], Z[keep], y[keep]
    _, dscores = _risk(model, X, Z, y, loss)
    grads = model.backward(X, Z, dscores)
    _, rgrads = regularization(model, regs)
    for name in model.trainable():
        if name in rgrads:
            grads[name] = grads[name] + rgrads[name]
    if analytic_hook is not None:
        grads = analytic_hook(grads)
    errors, amax = {}, {}
    for name in model.blocks:
        a = grads[name]
        amax[name] = float(np.max(np.abs(a)))
        if name in model.frozen:
            continue
        param = getattr(model, name)
        num = np.zeros_like(param)
        flat = param.reshape(-1)
        nflat = num.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = _batch_objective(model, X, Z, y, loss, regs)
            flat[i] = orig - eps
            fm = _batch_objective(model, X, Z, y, loss, regs)
            flat[i] = orig
            nflat[i] = (fp - fm) / (2 * eps)
        scale = max(np.max(np.abs(a)), np.max(np.abs(num)), 1e-8)
        errors[name] = float(np.max(np.abs(a - num)) / scale)
    return GradCheckReport(errors, amax, tuple(sorted(model.frozen)))
