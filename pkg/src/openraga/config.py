"""Experiment configuration.

INI-style files (key-value with sections) cover every stage; any
hyperparameter the pipeline consumes has a named key here, so a config
file plus a seed fully determines a run. Unknown sections or keys are
rejected, as are out-of-range values, with the offending field named.
"""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, fields

from .errors import ConfigError

STAGES = ("features", "classifier", "ood", "ncd", "clustering", "metrics")
CLUSTER_METHODS = ("cosine-threshold", "kmeans", "reduce-kmeans")
LOSS_MASKS = ("cl", "bce", "bce+cl", "full")


@dataclass
class DataConfig:
    mode: str = "synthetic"            # synthetic | files
    labeled_classes: int = 12
    novel_classes: int = 5
    recordings_per_class: int = 8
    clips_per_recording: int = 4
    clip_seconds: float = 30.0
    frame_hop: float = 0.5
    noise: float = 0.05
    weight_jitter: float = 0.25
    silence_prob: float = 0.03
    min_notes: int = 5
    max_notes: int = 7
    gain_jitter: float = 0.2
    train_fraction: float = 0.6
    val_fraction: float = 0.2
    test_fraction: float = 0.2
    labeled_file: str = ""             # files mode: pre-extracted chroma datasets
    unlabeled_file: str = ""
    labels_file: str = ""


@dataclass
class ClassifierConfig:
    epochs: int = 40
    lr: float = 0.08
    batch: int = 32
    embed_dim: int = 32
    dropout: float = 0.3
    momentum: float = 0.9
    conv_channels: int = 32
    kernel: int = 5


@dataclass
class OodConfig:
    mc_passes: int = 50
    percentile: float = 95.0
    aggregate: str = "mean"            # mean | max over per-class variances


@dataclass
class NcdSection:
    delta: float = 0.9
    hard_negatives: int = 32
    temperature: float = 0.5
    beta: float = 1.0
    gamma: float = 1.0
    epochs: int = 50
    batch: int = 64
    lr: float = 1e-3
    momentum: float = 0.9
    shift_seconds: float = 2.0
    gain_up: float = 1.2
    gain_down: float = 0.8
    labeled_batch: int = 32
    token_count: int = 4
    heads: int = 2
    blocks: int = 2
    d_z: int = 16
    ff_mult: int = 4
    loss: str = "full"                 # cl | bce | bce+cl | full


@dataclass
class ClusteringConfig:
    methods: tuple = CLUSTER_METHODS
    cosine_threshold: float = 0.9
    kmeans_k: int = 0                  # 0 = use the novel-class count
    restarts: int = 8
    max_iters: int = 100
    reduce_dims: int = 2


@dataclass
class MetricsConfig:
    mi_base: str = "nats"              # nats or a numeric base


@dataclass
class PipelineConfig:
    seed: int = 0
    out: str = "runs/out"
    stages: tuple = STAGES
    figures: bool = True


@dataclass
class ExperimentConfig:
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    data: DataConfig = field(default_factory=DataConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    ood: OodConfig = field(default_factory=OodConfig)
    ncd: NcdSection = field(default_factory=NcdSection)
    clustering: ClusteringConfig = field(default_factory=ClusteringConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)

    def echo(self) -> dict:
        doc = asdict(self)
        doc["pipeline"]["stages"] = list(self.pipeline.stages)
        doc["clustering"]["methods"] = list(self.clustering.methods)
        return doc


def _convert(section: str, key: str, raw: str, current):
    where = f"{section}.{key}"
    raw = raw.strip()
    if isinstance(current, bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{where}: expected a boolean, got {raw!r}")
    if isinstance(current, int) and not isinstance(current, bool):
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"{where}: expected an integer, got {raw!r}") from exc
    if isinstance(current, float):
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"{where}: expected a number, got {raw!r}") from exc
    if isinstance(current, tuple):
        return tuple(part.strip() for part in raw.split(",") if part.strip())
    return raw


def load_config(path: str | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Build a config from defaults, an optional INI file, and overrides.

    `overrides` maps "section.key" to values (already typed or strings).
    """
    cfg = ExperimentConfig()
    sections = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
    if path is not None:
        parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        read = parser.read(path)
        if not read:
            raise ConfigError(f"config file not found: {path}")
        for section in parser.sections():
            if section not in sections:
                raise ConfigError(f"unknown config section [{section}] "
                                  f"(known: {', '.join(sections)})")
            target = sections[section]
            known = {f.name for f in fields(target)}
            for key, raw in parser.items(section):
                if key not in known:
                    raise ConfigError(f"unknown key {section}.{key}")
                setattr(target, key, _convert(section, key, raw, getattr(target, key)))
    for dotted, value in (overrides or {}).items():
        section, _, key = dotted.partition(".")
        if section not in sections or not key:
            raise ConfigError(f"unknown override {dotted!r}")
        target = sections[section]
        if key not in {f.name for f in fields(target)}:
            raise ConfigError(f"unknown override {dotted!r}")
        current = getattr(target, key)
        if isinstance(value, str):
            value = _convert(section, key, value, current)
        setattr(target, key, value)
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig) -> None:
    p = cfg.pipeline
    for stage in p.stages:
        if stage not in STAGES:
            raise ConfigError(f"pipeline.stages: unknown stage {stage!r} "
                              f"(known: {', '.join(STAGES)})")
    if p.seed < 0:
        raise ConfigError(f"pipeline.seed must be nonnegative, got {p.seed}")
    d = cfg.data
    if d.mode not in ("synthetic", "files"):
        raise ConfigError(f"data.mode must be synthetic or files, got {d.mode!r}")
    total = d.train_fraction + d.val_fraction + d.test_fraction
    if abs(total - 1.0) > 1e-9:
        raise ConfigError(f"data fractions must sum to 1, got {total}")
    if d.mode == "synthetic":
        if d.labeled_classes < 2:
            raise ConfigError(f"data.labeled_classes must be >= 2, got {d.labeled_classes}")
        if d.novel_classes < 0:
            raise ConfigError(f"data.novel_classes must be >= 0, got {d.novel_classes}")
        if d.recordings_per_class < 1:
            raise ConfigError("data.recordings_per_class must be >= 1")
    if not 0.0 <= cfg.classifier.dropout < 1.0:
        raise ConfigError(f"classifier.dropout must lie in [0,1), got {cfg.classifier.dropout}")
    o = cfg.ood
    if o.mc_passes < 1:
        raise ConfigError(f"ood.mc_passes must be >= 1, got {o.mc_passes}")
    if not 0.0 < o.percentile < 100.0:
        raise ConfigError(f"ood.percentile must lie in (0,100), got {o.percentile}")
    if o.aggregate not in ("mean", "max"):
        raise ConfigError(f"ood.aggregate must be mean or max, got {o.aggregate!r}")
    n = cfg.ncd
    if not -1.0 < n.delta < 1.0:
        raise ConfigError(f"ncd.delta must lie in (-1,1), got {n.delta}")
    if n.temperature <= 0:
        raise ConfigError(f"ncd.temperature must be positive, got {n.temperature}")
    if n.beta < 0 or n.gamma < 0:
        raise ConfigError("ncd loss weights must be nonnegative")
    if n.loss not in LOSS_MASKS:
        raise ConfigError(f"ncd.loss must be one of {', '.join(LOSS_MASKS)}, got {n.loss!r}")
    c = cfg.clustering
    for method in c.methods:
        if method not in CLUSTER_METHODS:
            raise ConfigError(f"clustering.methods: unknown method {method!r} "
                              f"(known: {', '.join(CLUSTER_METHODS)})")
    if not -1.0 < c.cosine_threshold < 1.0:
        raise ConfigError(f"clustering.cosine_threshold must lie in (-1,1), "
                          f"got {c.cosine_threshold}")
    if cfg.metrics.mi_base != "nats":
        try:
            base = float(cfg.metrics.mi_base)
        except ValueError as exc:
            raise ConfigError(f"metrics.mi_base must be 'nats' or a number, "
                              f"got {cfg.metrics.mi_base!r}") from exc
        if base <= 1.0:
            raise ConfigError(f"metrics.mi_base must exceed 1, got {base}")


def mi_base_value(cfg: MetricsConfig) -> float | None:
    return None if cfg.mi_base == "nats" else float(cfg.mi_base)


def loss_mask_flags(loss: str) -> dict:
    if loss not in LOSS_MASKS:
        raise ConfigError(f"unknown loss mask {loss!r} (known: {', '.join(LOSS_MASKS)})")
    return {
        "cl": {"use_bce": False, "use_cl": True, "use_mse": False},
        "bce": {"use_bce": True, "use_cl": False, "use_mse": False},
        "bce+cl": {"use_bce": True, "use_cl": True, "use_mse": False},
        "full": {"use_bce": True, "use_cl": True, "use_mse": True},
    }[loss]
