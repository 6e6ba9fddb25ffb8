"""Experiment configuration: TOML files in, validated ExperimentConfig out.

Every field has a default so a config file only states what it changes.
String specs name activations ("relu", "fourier", "alpha_relu:0.5",
"fourier_then_relu", ...) and interventions ("l2_init:0.01", ...).
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, asdict

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import nn, optim, streams
from .nn import EngineError


def parse_activation(spec: str):
    """Map an activation name, with optional ':param', to an ActivationKind.

    'fourier_then_relu' is handled by the network builder (first hidden layer
    Fourier, rest ReLU) and returns the sentinel string unchanged.
    """
    name, _, arg = spec.partition(":")
    name = name.strip().lower()
    if name == "identity":
        return nn.Identity()
    if name == "relu":
        return nn.ReLU()
    if name == "sin":
        return nn.Sin()
    if name == "crelu":
        return nn.CReLU()
    if name == "fourier":
        return nn.Fourier()
    if name == "leaky_relu":
        return nn.LeakyReLU(float(arg) if arg else 0.01)
    if name == "alpha_relu":
        return nn.AlphaLinearized(nn.ReLU(), float(arg))
    if name == "alpha_sin":
        return nn.AlphaLinearized(nn.Sin(), float(arg))
    if name == "fourier_then_relu":
        return "fourier_then_relu"
    raise EngineError(f"unknown activation spec: {spec!r}")


def parse_norm(spec: str):
    name = spec.strip().lower()
    if name in ("", "none"):
        return None
    if name in (nn.LAYERNORM, nn.LINEARIZED_LAYERNORM):
        return name
    raise EngineError(f"unknown norm spec: {spec!r}")


def parse_intervention(spec: str, power_iters: int = 10, every_n_tasks: int = 1,
                       shrink: float = 0.8, noise_std: float = 0.01):
    name, _, arg = spec.partition(":")
    name = name.strip().lower()
    value = float(arg) if arg else None
    if name in ("", "none"):
        return optim.NoIntervention()
    if name == "l2_zero":
        return optim.L2Zero(value if value is not None else 0.01)
    if name == "l2_init":
        return optim.L2Init(value if value is not None else 0.01)
    if name == "spectral":
        return optim.Spectral(value if value is not None else 0.01, power_iters=power_iters)
    if name == "shrink_perturb":
        return optim.ShrinkPerturb(shrink=shrink, noise_std=noise_std,
                                   every_n_tasks=every_n_tasks)
    if name == "redo":
        return optim.ReDO(threshold=value if value is not None else 0.03,
                          every_n_tasks=every_n_tasks)
    raise EngineError(f"unknown intervention spec: {spec!r}")


@dataclass
class ExperimentConfig:
    # experiment
    name: str = "experiment"
    out_dir: str = "runs"
    seeds: tuple = (0,)
    # data
    data_source: str = "synthetic"          # "synthetic" or "idx"
    images_path: str = ""
    labels_path: str = ""
    test_images_path: str = ""
    test_labels_path: str = ""
    synthetic_n: int = 12800
    synthetic_dim: int = 32
    synthetic_classes: int = 10
    synthetic_noise: float = 0.12
    data_seed: int = 1234
    subsample: int = 0                      # 0 = keep all
    separable_subset: int = 0               # 0 = off; else probe-and-prune to n
    # stream
    stream_kind: str = streams.RANDOM_LABELS
    num_tasks: int = 10
    epochs_per_task: int = 10
    batch_size: int = 256
    initial_noise: float = 0.5
    classes_per_task: int = 5
    # network
    depth: int = 4
    width: int = 64
    activation: str = "relu"
    norm: str = "none"
    use_bias: bool = True
    # optimizer
    optimizer: str = optim.ADAM
    step_size: float = 0.001
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    # intervention
    intervention: str = "none"
    power_iters: int = 10
    every_n_tasks: int = 1
    shrink: float = 0.8
    noise_std: float = 0.01
    # eval
    eval_every: int = 1                     # epochs between metric rows

    def __post_init__(self):
        if not self.seeds:
            raise EngineError("seeds must be non-empty")
        self.seeds = tuple(int(s) for s in self.seeds)
        parse_activation(self.activation)
        parse_norm(self.norm)
        parse_intervention(self.intervention)
        if self.batch_size <= 0:
            raise EngineError("batch_size must be positive")
        if self.eval_every < 1:
            raise EngineError("eval_every must be >= 1")
        if self.epochs_per_task < 0:
            raise EngineError("epochs_per_task must be >= 0")
        OptimizerConfigOf(self)  # validates optimizer fields

    def resolved(self) -> dict:
        return asdict(self)


def OptimizerConfigOf(cfg: ExperimentConfig) -> optim.OptimizerConfig:
    return optim.OptimizerConfig(
        kind=cfg.optimizer, step_size=cfg.step_size,
        adam_beta1=cfg.adam_beta1, adam_beta2=cfg.adam_beta2, adam_eps=cfg.adam_eps,
    )


_SECTION_FIELDS = {
    "experiment": {"name", "out_dir", "seeds"},
    "data": {"data_source", "images_path", "labels_path", "test_images_path",
             "test_labels_path", "synthetic_n", "synthetic_dim", "synthetic_classes",
             "synthetic_noise", "data_seed", "subsample", "separable_subset"},
    "stream": {"stream_kind", "num_tasks", "epochs_per_task", "batch_size",
               "initial_noise", "classes_per_task"},
    "network": {"depth", "width", "activation", "norm", "use_bias"},
    "optimizer": {"optimizer", "step_size", "adam_beta1", "adam_beta2", "adam_eps"},
    "intervention": {"intervention", "power_iters", "every_n_tasks", "shrink",
                     "noise_std"},
    "eval": {"eval_every"},
}

_KEY_ALIASES = {
    ("stream", "kind"): "stream_kind",
    ("data", "source"): "data_source",
    ("optimizer", "kind"): "optimizer",
    ("intervention", "kind"): "intervention",
}


def config_from_dict(doc: dict) -> ExperimentConfig:
    kwargs = {}
    for section, table in doc.items():
        if section == "sweep":
            continue
        if section not in _SECTION_FIELDS:
            raise EngineError(f"unknown config section [{section}]")
        if not isinstance(table, dict):
            raise EngineError(f"[{section}] must be a table")
        for key, value in table.items():
            field_name = _KEY_ALIASES.get((section, key), key)
            if field_name not in _SECTION_FIELDS[section]:
                raise EngineError(f"unknown key {key!r} in [{section}]")
            if field_name == "seeds":
                value = tuple(value)
            kwargs[field_name] = value
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    with open(path, "rb") as f:
        doc = tomllib.load(f)
    return config_from_dict(doc)


def sweep_axes(path) -> list:
    """The [sweep] section: keys 'section.key' mapped to lists of values.

    Returns a list of (section, key, values) triples in file order."""
    with open(path, "rb") as f:
        doc = tomllib.load(f)
    axes = []
    for dotted, values in doc.get("sweep", {}).items():
        section, _, key = dotted.partition(".")
        if not key or section not in _SECTION_FIELDS:
            raise EngineError(f"sweep key must be 'section.key', got {dotted!r}")
        if not isinstance(values, list) or not values:
            raise EngineError(f"sweep values for {dotted!r} must be a non-empty list")
        axes.append((section, key, values))
    return axes
