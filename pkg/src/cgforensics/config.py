"""Experiment configuration: flat INI sections mirroring the run types.

Defaults are pre-filled so a config naming only the data paths trains with
the standard setup (lr 0.001, batch 256, 100 epochs, fused RGB+LCH+HSV
with rescale and residual on the non-RGB branches).
"""

import configparser
import hashlib
import os
from dataclasses import dataclass, field

from .head import TrainConfig
from .preprocess import LoGConfig, PipelineConfig, mc_branches, sc_branch


class ConfigError(Exception):
    pass


@dataclass
class ExperimentConfig:
    manifest: str = ""
    backbone: str = ""
    output_dir: str = "run"
    seed: int = 0
    pipelines: str = "mc"  # mc | mc1 | sc:<SPACE>[:raw]
    train: TrainConfig = field(default_factory=TrainConfig)
    log: LoGConfig = field(default_factory=LoGConfig)
    batch: int = 16
    workers: int = 1
    host: str = "127.0.0.1"
    port: int = 8077
    study_dir: str = ""

    def pipeline_set(self):
        spec = self.pipelines.strip()
        if spec == "mc":
            return mc_branches(self.log, residual=True)
        if spec == "mc1":
            return mc_branches(self.log, residual=False)
        if spec.startswith("sc:"):
            parts = spec.split(":")
            space = parts[1]
            rescale = None
            if len(parts) > 2:
                if parts[2] != "raw":
                    raise ConfigError("pipeline modifier must be 'raw', got %r" % parts[2])
                rescale = False
            return [sc_branch(space, rescale=rescale, log_cfg=self.log)]
        raise ConfigError("pipelines must be mc, mc1 or sc:<SPACE>, got %r" % spec)

    def digest(self) -> str:
        items = []
        for key in ("manifest", "backbone", "output_dir", "seed", "pipelines",
                    "batch", "host", "port", "study_dir"):
            items.append("%s=%s" % (key, getattr(self, key)))
        t = self.train
        items.append("train=%g,%d,%d,%g,%g,%g,%d,%s" % (
            t.learning_rate, t.batch_size, t.epochs, t.beta1, t.beta2,
            t.epsilon, t.seed, t.checkpoint))
        items.append("log=%g,%d" % (self.log.sigma, self.log.kernel_size))
        return hashlib.sha256("\n".join(items).encode()).hexdigest()[:12]

    def stamp_lines(self):
        """Comment lines embedded at the top of every numeric output."""
        return ["config_hash=%s" % self.digest(), "seed=%d" % self.seed]


def _get(parser, section, key, cast, default):
    if parser.has_option(section, key):
        raw = parser.get(section, key)
        try:
            if cast is bool:
                return parser.getboolean(section, key)
            return cast(raw)
        except ValueError:
            raise ConfigError("bad value for [%s] %s: %r" % (section, key, raw))
    return default


def load_config(path) -> ExperimentConfig:
    if not os.path.isfile(path):
        raise ConfigError("config file not found: %s" % path)
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read(path)
    except configparser.Error as e:
        raise ConfigError("cannot parse config: %s" % e)
    cfg = ExperimentConfig()
    sec = "experiment"
    cfg.manifest = _get(parser, sec, "manifest", str, cfg.manifest)
    cfg.backbone = _get(parser, sec, "backbone", str, cfg.backbone)
    cfg.output_dir = _get(parser, sec, "output_dir", str, cfg.output_dir)
    cfg.seed = _get(parser, sec, "seed", int, cfg.seed)
    cfg.pipelines = _get(parser, sec, "pipelines", str, cfg.pipelines)
    cfg.batch = _get(parser, sec, "batch", int, cfg.batch)
    cfg.workers = _get(parser, sec, "workers", int, cfg.workers)
    try:
        cfg.train = TrainConfig(
            learning_rate=_get(parser, "train", "learning_rate", float, 0.001),
            batch_size=_get(parser, "train", "batch_size", int, 256),
            epochs=_get(parser, "train", "epochs", int, 100),
            beta1=_get(parser, "train", "beta1", float, 0.9),
            beta2=_get(parser, "train", "beta2", float, 0.999),
            epsilon=_get(parser, "train", "epsilon", float, 1e-7),
            seed=_get(parser, "train", "seed", int, cfg.seed),
            checkpoint=_get(parser, "train", "checkpoint", str, "best_val"),
        )
        cfg.log = LoGConfig(
            sigma=_get(parser, "log", "sigma", float, 1.0),
            kernel_size=_get(parser, "log", "kernel_size", int, 5),
        )
    except ValueError as e:
        raise ConfigError(str(e))
    cfg.host = _get(parser, "psycho", "host", str, cfg.host)
    cfg.port = _get(parser, "psycho", "port", int, cfg.port)
    cfg.study_dir = _get(parser, "psycho", "study_dir", str, cfg.study_dir)
    return cfg
