"""Experiment configuration: ``[section]`` headers with ``key = value`` lines.

Any key can be overridden from the command line with ``section.key=value``.
Validation errors name the offending field as ``section.key``.
"""

import configparser
from dataclasses import dataclass, field
from typing import Optional

from .datasets import SynthSpec
from .descriptors import DomainSchema
from .errors import ConfigError
from .losses import LossKind
from .model_single import MethodPreset
from .regularizers import parse_regularizers
from .trainer import TrainConfig

__all__ = ["ExperimentConfig", "DEFAULTS", "load_config", "parse_factors", "METHOD_NAMES"]

METHOD_NAMES = (
    "sdl",
    "aggregation",
    "md1",
    "md2",
    "parametrised",
    "cp",
    "tucker",
    "tt",
    "full",
) + tuple(p.value for p in MethodPreset)

DEFAULTS = {
    "data": {
        "source": "synthetic",
        "factors": "A:1,2; B:1,2",
        "encoding": "distributed",
        "features": "50",
        "classes": "1",
        "per_domain": "200",
        "planted": "additive",
        "planted_ranks": "2,2,2",
        "noise": "0.1",
        "margin": "0.5",
        "shared_scale": "1.0",
        "seed": "0",
        "path": "",
        "header": "",
        "preprocess": "none",
        "bias": "false",
    },
    "model": {
        "methods": "sdl, aggregation, md1, md2, parametrised",
        "rank": "auto",
        "ranks": "auto",
        "tune": "false",
        "cv_folds": "10",
        "preset_weight": "0.001",
    },
    "train": {
        "lr": "0.01",
        "schedule": "constant",
        "decay_factor": "0.5",
        "decay_every": "100",
        "batch_size": "32",
        "epochs": "500",
        "balanced": "false",
        "regs": "none",
        "loss": "auto",
    },
    "eval": {
        "protocol": "fixed_split",
        "train_fraction": "0.5",
        "repeats": "10",
        "seed": "0",
        "tune_metric": "error",
    },
    "output": {"dir": "out"},
}


def parse_factors(text):
    """``"A:1,2; B:1,2"`` -> ``[("A", ("1", "2")), ("B", ("1", "2"))]``."""
    out = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        if ":" not in chunk:
            raise ValueError(f"factor {chunk!r} is not name:state,state")
        name, states = chunk.split(":", 1)
        out.append((name.strip(), tuple(s.strip() for s in states.split(",") if s.strip())))
    if not out:
        raise ValueError("no factors declared")
    return out


@dataclass
class ExperimentConfig:
    raw: dict
    source: str
    synth: Optional[SynthSpec]
    data_path: str
    header_path: str
    preprocess: str
    bias: bool
    methods: tuple
    rank: Optional[int]
    ranks: Optional[tuple]
    tune: bool
    cv_folds: int
    preset_weight: float
    train: TrainConfig
    loss: str
    protocol: str
    train_fraction: float
    repeats: int
    seed: int
    out_dir: str
    tune_metric: str = "error"
    extra: dict = field(default_factory=dict)

    def echo(self):
        """Resolved configuration as ``[section]`` / ``key = value`` text."""
        lines = []
        for section in sorted(self.raw):
            lines.append(f"[{section}]")
            for key in sorted(self.raw[section]):
                lines.append(f"{key} = {self.raw[section][key]}")
            lines.append("")
        return "\n".join(lines)


def _field(raw, section, key, conv, check=None, why=""):
    text = raw[section][key]
    try:
        value = conv(text)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{section}.{key}: cannot parse {text!r} ({exc})") from None
    if check is not None and not check(value):
        raise ConfigError(f"{section}.{key}: {text!r} {why}")
    return value


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected true/false")


def _ints(text):
    return tuple(int(v) for v in text.replace(";", ",").split(",") if v.strip())


def apply_overrides(raw, overrides):
    for item in overrides or ():
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} is not section.key=value")
        lhs, value = item.split("=", 1)
        section, key = lhs.strip().split(".", 1)
        if section not in DEFAULTS or key not in DEFAULTS[section]:
            raise ConfigError(f"{section}.{key}: unknown setting")
        raw[section][key] = value.strip()


def load_config(path=None, overrides=(), text=None):
    """Read defaults, then ``path`` (or ``text``), then ``overrides``; validate."""
    raw = {s: dict(v) for s, v in DEFAULTS.items()}
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        if path is not None:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        elif text is not None:
            parser.read_string(text)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    for section in parser.sections():
        if section not in DEFAULTS:
            raise ConfigError(f"{section}: unknown section")
        for key, value in parser.items(section):
            if key not in DEFAULTS[section]:
                raise ConfigError(f"{section}.{key}: unknown setting")
            raw[section][key] = value.strip()
    apply_overrides(raw, overrides)
    return _resolve(raw)


def _resolve(raw):
    source = _field(raw, "data", "source", str.strip, lambda v: v in ("synthetic", "file"), "must be synthetic or file")
    classes = _field(raw, "data", "classes", int, lambda v: v >= 1, "must be >= 1")
    synth = None
    if source == "synthetic":
        try:
            factors = parse_factors(raw["data"]["factors"])
        except ValueError as exc:
            raise ConfigError(f"data.factors: {exc}") from None
        encoding = _field(raw, "data", "encoding", str.strip, lambda v: v in ("distributed", "one_hot", "one_hot_const"), "must be distributed, one_hot or one_hot_const")
        schema = DomainSchema.distributed(factors)
        if encoding != "distributed":
            m = schema.n_domains
            schema = DomainSchema.one_hot(m) if encoding == "one_hot" else DomainSchema.one_hot_const(m)
        try:
            synth = SynthSpec(
                schema=schema,
                D=_field(raw, "data", "features", int, lambda v: v >= 1, "must be >= 1"),
                C=classes,
                n=_field(raw, "data", "per_domain", int, lambda v: v >= 2, "must be >= 2"),
                n_test=0,
                planted=raw["data"]["planted"].strip(),
                ranks=_field(raw, "data", "planted_ranks", _ints, lambda v: len(v) == 3, "needs three ranks"),
                noise=_field(raw, "data", "noise", float),
                margin=_field(raw, "data", "margin", float),
                seed=_field(raw, "data", "seed", int),
                shared_scale=_field(raw, "data", "shared_scale", float),
            )
        except ValueError as exc:
            raise ConfigError(f"data: {exc}") from None
    else:
        if not raw["data"]["path"].strip():
            raise ConfigError("data.path: required when data.source = file")
    preprocess = _field(raw, "data", "preprocess", str.strip, lambda v: v in ("none", "sum_zscore", "zscore"), "must be none, zscore or sum_zscore")

    methods = tuple(m.strip().lower() for m in raw["model"]["methods"].split(",") if m.strip())
    if not methods:
        raise ConfigError("model.methods: no methods listed")
    for m in methods:
        if m not in METHOD_NAMES:
            raise ConfigError(f"model.methods: unknown method {m!r}; choose from {', '.join(METHOD_NAMES)}")
    rank_text = raw["model"]["rank"].strip().lower()
    rank = None if rank_text == "auto" else _field(raw, "model", "rank", int, lambda v: v >= 1, "must be >= 1")
    ranks_text = raw["model"]["ranks"].strip().lower()
    ranks = None if ranks_text == "auto" else _field(raw, "model", "ranks", _ints, lambda v: len(v) == 3 and min(v) >= 1, "needs three positive ranks K_D,K_C,K_B (TT ignores K_C)")

    loss_text = raw["train"]["loss"].strip().lower()
    if loss_text == "auto":
        loss = "hinge" if classes == 1 else "cross_entropy"
    else:
        loss = _field(raw, "train", "loss", lambda t: LossKind(t.strip().lower()).value)
    if (loss == "hinge") != (classes == 1):
        raise ConfigError(f"train.loss: {loss} does not fit data.classes = {classes}")
    try:
        regs = parse_regularizers(raw["train"]["regs"])
    except ValueError as exc:
        raise ConfigError(f"train.regs: {exc}") from None
    try:
        train = TrainConfig(
            lr=_field(raw, "train", "lr", float),
            schedule=raw["train"]["schedule"].strip(),
            decay_factor=_field(raw, "train", "decay_factor", float),
            decay_every=_field(raw, "train", "decay_every", int),
            batch_size=_field(raw, "train", "batch_size", int),
            epochs=_field(raw, "train", "epochs", int),
            loss=loss,
            regs=regs,
            balanced=_field(raw, "train", "balanced", _bool),
        )
    except ValueError as exc:
        raise ConfigError(f"train: {exc}") from None

    protocol = _field(raw, "eval", "protocol", str.strip, lambda v: v in ("fixed_split", "lodo"), "must be fixed_split or lodo")
    cfg = ExperimentConfig(
        raw=raw,
        source=source,
        synth=synth,
        data_path=raw["data"]["path"].strip(),
        header_path=raw["data"]["header"].strip(),
        preprocess=preprocess,
        bias=_field(raw, "data", "bias", _bool),
        methods=methods,
        rank=rank,
        ranks=ranks,
        tune=_field(raw, "model", "tune", _bool),
        cv_folds=_field(raw, "model", "cv_folds", int, lambda v: v >= 2, "must be >= 2"),
        preset_weight=_field(raw, "model", "preset_weight", float, lambda v: v >= 0, "must be >= 0"),
        train=train,
        loss=loss,
        protocol=protocol,
        train_fraction=_field(raw, "eval", "train_fraction", float, lambda v: 0 < v < 1, "must lie in (0, 1)"),
        repeats=_field(raw, "eval", "repeats", int, lambda v: v >= 1, "must be >= 1"),
        seed=_field(raw, "eval", "seed", int),
        out_dir=raw["output"]["dir"].strip(),
        tune_metric=_field(raw, "eval", "tune_metric", str.strip, lambda v: v in ("error", "loss"), "must be error or loss"),
    )
    if synth is not None:
        validate_ranks(cfg, synth.D + cfg.bias, synth.C, synth.schema.length)
    return cfg


def validate_ranks(cfg, d, c, b):
    """Reject rank settings that exceed the model dimensions they factor."""
    if cfg.rank is not None and cfg.rank > d:
        raise ConfigError(f"model.rank: K={cfg.rank} exceeds D={d}")
    if cfg.ranks is None:
        return
    kd, kc, kb = cfg.ranks
    if kc > c:
        raise ConfigError(f"model.ranks: K_C={kc} exceeds C={c}")
    if kd > d:
        raise ConfigError(f"model.ranks: K_D={kd} exceeds D={d}")
    if kb > b:
        raise ConfigError(f"model.ranks: K_B={kb} exceeds B={b}")
