# -*- coding: utf-8 -*-
"""Configuration objects.

Every configuration class validates its values in the constructor and can be
converted from and to plain dictionaries, which is also the layout of the JSON
config files read by the command line interface.
"""
import copy
import json
import math
import os

from .errors import ConfigError, ContractViolation

ABLATION_MODES = ("baseline", "DS", "SDE", "SDD", "DSD", "custom")

# (eta, alpha1, alpha2) per ablation mode, "custom" keeps the DsdConfig as given
ABLATION_COEFFICIENTS = {"baseline": (0., 0., 0.),
                         "DS":       (1., 0., 0.),
                         "SDE":      (1., 1., 0.),
                         "SDD":      (1., 0., 1.),
                         "DSD":      (1., 1., 1.),
                         }

NORM_KINDS = ("instance", "batch")
ACTIVATIONS = ("relu", "leaky-relu")
UPSAMPLE_MODES = ("deconv", "trilinear")
OPTIMIZERS = ("adam", "adamw", "sgd")
PRECISIONS = ("float32", "float64")


def _number(value, field, minimum=None, exclusive=False, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError("expected a number, got %r" % (value,), field=field)
    if integer and int(value) != value:
        raise ConfigError("expected an integer, got %r" % (value,), field=field)
    if not math.isfinite(value):
        raise ConfigError("value must be finite, got %r" % (value,), field=field)
    if minimum is not None:
        if exclusive and not value > minimum:
            raise ConfigError("value must be > %s, got %r" % (minimum, value), field=field)
        if not exclusive and not value >= minimum:
            raise ConfigError("value must be >= %s, got %r" % (minimum, value), field=field)
    return int(value) if integer else float(value)


def _choice(value, choices, field):
    if value not in choices:
        raise ConfigError("expected one of %s, got %r" % (", ".join(choices), value), field=field)
    return value


def _flag(value, field):
    if not isinstance(value, bool):
        raise ConfigError("expected true or false, got %r" % (value,), field=field)
    return value


def _optional_flag(value, field):
    if value is None:
        return None
    return _flag(value, field)


def _unknown_keys(data, cls, prefix):
    if not isinstance(data, dict):
        raise ConfigError("expected an object, got %r" % (data,), field=prefix or None)
    allowed = cls.FIELDS
    for key in data:
        if key not in allowed:
            raise ConfigError("unknown setting", field=prefix + key)


class DsdConfig(object):
    """Coefficients and numerical safeguards of the dual self-distillation loss.

    Parameters:
    * eta: float >= 0, weight of the deep supervision sum over decoder heads
    * alpha1: float >= 0, weight of the encoder-side distillation sum
    * alpha2: float >= 0, weight of the decoder-side distillation sum
    * tau: float > 0, softmax temperature of the distillation distributions
    * dice_smooth_eps: float >= 0, added to numerator and denominator of each Dice fraction
    * prob_clamp_floor: float in (0, 1e-3), lower clamp of probabilities inside logarithms
    * detach_teacher: bool, stop gradients into the teacher distributions
    * detach_encoder_teacher: bool or None, overrides detach_teacher for the deepest
                              encoder E_Z; None follows detach_teacher
    * kl_temperature_scaling: bool, multiply the distillation terms by tau^2
    * supervise_softened: bool, deep supervision on the tau-softened decoder
                          distributions instead of the tau=1 ones
    """
    FIELDS = ("eta", "alpha1", "alpha2", "tau", "dice_smooth_eps", "prob_clamp_floor",
              "detach_teacher", "kl_temperature_scaling", "supervise_softened", "detach_encoder_teacher")

    def __init__(self, eta=1., alpha1=1., alpha2=1., tau=3., dice_smooth_eps=1e-5,
                 prob_clamp_floor=1e-7, detach_teacher=True, kl_temperature_scaling=False,
                 supervise_softened=False, detach_encoder_teacher=None):
        self.eta = _number(eta, "dsd.eta", minimum=0)
        self.alpha1 = _number(alpha1, "dsd.alpha1", minimum=0)
        self.alpha2 = _number(alpha2, "dsd.alpha2", minimum=0)
        self.tau = _number(tau, "dsd.tau", minimum=0, exclusive=True)
        self.dice_smooth_eps = _number(dice_smooth_eps, "dsd.dice_smooth_eps", minimum=0)
        self.prob_clamp_floor = _number(prob_clamp_floor, "dsd.prob_clamp_floor", minimum=0, exclusive=True)
        if not self.prob_clamp_floor < 1e-3:
            raise ConfigError("value must be < 1e-3, got %r" % prob_clamp_floor, field="dsd.prob_clamp_floor")
        self.detach_teacher = _flag(detach_teacher, "dsd.detach_teacher")
        self.kl_temperature_scaling = _flag(kl_temperature_scaling, "dsd.kl_temperature_scaling")
        self.supervise_softened = _flag(supervise_softened, "dsd.supervise_softened")
        self.detach_encoder_teacher = _optional_flag(detach_encoder_teacher, "dsd.detach_encoder_teacher")

    @property
    def encoder_teacher_detached(self):
        if self.detach_encoder_teacher is None:
            return self.detach_teacher
        return self.detach_encoder_teacher

    def frozen_encoder_teacher(self):
        """True when alpha1 > 0 but nothing in the loss trains the deepest encoder head.

        Deep supervision only reaches the decoder heads, so a detached E_Z keeps
        its initial, nearly uniform output.
        """
        return self.alpha1 > 0 and self.encoder_teacher_detached

    def with_coefficients(self, eta, alpha1, alpha2, **changes):
        """Copy of this config with the three loss coefficients (and any other field) replaced."""
        data = self.to_dict()
        data.update(eta=eta, alpha1=alpha1, alpha2=alpha2, **changes)
        return DsdConfig(**data)

    def to_dict(self):
        return {key: getattr(self, key) for key in self.FIELDS}

    @classmethod
    def from_dict(cls, data, prefix="dsd."):
        _unknown_keys(data, cls, prefix)
        return cls(**data)

    def __eq__(self, other):
        return isinstance(other, DsdConfig) and self.to_dict() == other.to_dict()

    def __repr__(self):
        return "DsdConfig(eta=%g, alpha1=%g, alpha2=%g, tau=%g)" % (self.eta, self.alpha1, self.alpha2, self.tau)


class ArchConfig(object):
    """Geometry of the U-shaped backbone and of its bottleneck heads.

    Parameters:
    * num_stages: int >= 2, number of encoder stages Z (and of decoder stages)
    * in_channels: int >= 1, number of imaging channels C
    * num_classes: int >= 2, number of classes K including background
    * base_channels: int >= 4, feature channels of the first stage
    * channel_growth: int >= 1, channel multiplier from one stage to the next
    * norm_kind: "instance" or "batch"
    * activation: "relu" or "leaky-relu"
    * upsample_mode: "deconv" or "trilinear", upsampling inside the bottleneck heads
    """
    FIELDS = ("num_stages", "in_channels", "num_classes", "base_channels", "channel_growth",
              "norm_kind", "activation", "upsample_mode")

    def __init__(self, num_stages=3, in_channels=1, num_classes=2, base_channels=8,
                 channel_growth=2, norm_kind="instance", activation="relu", upsample_mode="deconv"):
        self.num_stages = _number(num_stages, "arch.num_stages", minimum=2, integer=True)
        self.in_channels = _number(in_channels, "arch.in_channels", minimum=1, integer=True)
        self.num_classes = _number(num_classes, "arch.num_classes", minimum=2, integer=True)
        self.base_channels = _number(base_channels, "arch.base_channels", minimum=4, integer=True)
        self.channel_growth = _number(channel_growth, "arch.channel_growth", minimum=1, integer=True)
        self.norm_kind = _choice(norm_kind, NORM_KINDS, "arch.norm_kind")
        self.activation = _choice(activation, ACTIVATIONS, "arch.activation")
        self.upsample_mode = _choice(upsample_mode, UPSAMPLE_MODES, "arch.upsample_mode")

    @property
    def encoder_channels(self):
        """Channel width of every stage, shallowest first."""
        return [self.base_channels * self.channel_growth**i for i in range(self.num_stages)]

    @property
    def divisor(self):
        """Every input spatial axis must be a multiple of this number."""
        return 2**(self.num_stages - 1)

    def check_spatial_shape(self, shape):
        shape = tuple(int(s) for s in shape)
        if len(shape) != 3:
            raise ContractViolation("expected 3 spatial axes, got shape %s" % (shape,))
        bad = [s for s in shape if s < 1 or s % self.divisor != 0]
        if bad:
            raise ContractViolation("spatial shape %s is not divisible by 2^(Z-1) = %d per axis"
                                    % (shape, self.divisor))
        # normalisation needs more than one voxel per axis at the deepest stage
        if any(s // self.divisor < 2 for s in shape):
            raise ContractViolation("spatial shape %s leaves a single voxel per axis at the deepest stage, "
                                    "every axis must be at least 2^Z = %d" % (shape, 2*self.divisor))
        return shape

    def to_dict(self):
        return {key: getattr(self, key) for key in self.FIELDS}

    @classmethod
    def from_dict(cls, data, prefix="arch."):
        _unknown_keys(data, cls, prefix)
        return cls(**data)


class OptimizerConfig(object):
    """Optimizer settings.

    Parameters:
    * name: "adam", "adamw" or "sgd"
    * learning_rate: float > 0
    * weight_decay: float >= 0
    """
    FIELDS = ("name", "learning_rate", "weight_decay")

    def __init__(self, name="adam", learning_rate=1e-3, weight_decay=1e-5):
        self.name = _choice(name, OPTIMIZERS, "optimizer.name")
        self.learning_rate = _number(learning_rate, "optimizer.learning_rate", minimum=0, exclusive=True)
        self.weight_decay = _number(weight_decay, "optimizer.weight_decay", minimum=0)

    def to_dict(self):
        return {key: getattr(self, key) for key in self.FIELDS}

    @classmethod
    def from_dict(cls, data, prefix="optimizer."):
        _unknown_keys(data, cls, prefix)
        return cls(**data)


class TrainConfig(object):
    """Everything a training run depends on.

    Parameters:
    * dsd: DsdConfig
    * arch: ArchConfig
    * ablation_mode: one of ABLATION_MODES, overrides (eta, alpha1, alpha2) of `dsd`
                     unless "custom"
    * optimizer: OptimizerConfig
    * epochs: int >= 1
    * batch_size: int >= 1
    * seed: int
    * augment_flips: bool, random axis flips of training samples
    * manifest_path: str, dataset manifest (JSON)
    * output_dir: str, run directory
    * num_workers: int >= 0 or None, data loader workers (None reads DSDSEG_NUM_WORKERS)
    * deterministic: bool, pin torch to deterministic algorithms
    * precision: "float32" or "float64", dtype of parameters and activations
    """
    FIELDS = ("dsd", "arch", "ablation_mode", "optimizer", "epochs", "batch_size", "seed",
              "augment_flips", "manifest_path", "output_dir", "num_workers", "deterministic",
              "precision")

    def __init__(self, dsd=None, arch=None, ablation_mode="DSD", optimizer=None, epochs=100,
                 batch_size=2, seed=0, augment_flips=True, manifest_path=None, output_dir="run",
                 num_workers=None, deterministic=True, precision="float32"):
        self.dsd = dsd if dsd is not None else DsdConfig()
        self.arch = arch if arch is not None else ArchConfig()
        self.ablation_mode = _choice(ablation_mode, ABLATION_MODES, "ablation_mode")
        self.optimizer = optimizer if optimizer is not None else OptimizerConfig()
        self.epochs = _number(epochs, "epochs", minimum=1, integer=True)
        self.batch_size = _number(batch_size, "batch_size", minimum=1, integer=True)
        self.seed = _number(seed, "seed", integer=True)
        self.augment_flips = _flag(augment_flips, "augment_flips")
        if manifest_path is not None and not isinstance(manifest_path, str):
            raise ConfigError("expected a path string", field="manifest_path")
        if not isinstance(output_dir, str):
            raise ConfigError("expected a path string", field="output_dir")
        self.manifest_path = manifest_path
        self.output_dir = output_dir
        self.num_workers = None if num_workers is None else _number(num_workers, "num_workers", minimum=0, integer=True)
        self.deterministic = _flag(deterministic, "deterministic")
        self.precision = _choice(precision, PRECISIONS, "precision")

    @property
    def detach_heads(self):
        """In baseline mode the heads only observe the backbone."""
        return self.ablation_mode == "baseline"

    def effective_dsd(self):
        """The DsdConfig after applying the ablation preset.

        Presets with encoder distillation leave E_Z attached unless
        dsd.detach_encoder_teacher is set explicitly.
        """
        if self.ablation_mode == "custom":
            return self.dsd
        eta, alpha1, alpha2 = ABLATION_COEFFICIENTS[self.ablation_mode]
        changes = {}
        if alpha1 > 0 and self.dsd.detach_encoder_teacher is None:
            changes["detach_encoder_teacher"] = False
        return self.dsd.with_coefficients(eta, alpha1, alpha2, **changes)

    def resolved_num_workers(self):
        if self.num_workers is not None:
            return self.num_workers
        return num_workers_from_env()

    def replace(self, **changes):
        """Copy with some top-level fields replaced."""
        other = copy.deepcopy(self)
        for key, value in changes.items():
            if key not in self.FIELDS:
                raise ConfigError("unknown setting", field=key)
            setattr(other, key, value)
        # re-run validation
        return TrainConfig.from_dict(other.to_dict())

    def to_dict(self):
        data = {key: getattr(self, key) for key in self.FIELDS}
        data["dsd"] = self.dsd.to_dict()
        data["arch"] = self.arch.to_dict()
        data["optimizer"] = self.optimizer.to_dict()
        return data

    @classmethod
    def from_dict(cls, data):
        _unknown_keys(data, cls, "")
        data = dict(data)
        data["dsd"] = DsdConfig.from_dict(data.get("dsd", {}))
        data["arch"] = ArchConfig.from_dict(data.get("arch", {}))
        data["optimizer"] = OptimizerConfig.from_dict(data.get("optimizer", {}))
        return cls(**data)

    def save(self, path):
        with open(path, "w") as open_file:
            json.dump(self.to_dict(), open_file, indent=2, sort_keys=True)


def load_train_config(path):
    """Reads a TrainConfig from a JSON file.

    Syntax errors are reported with line and column, schema errors with the
    dotted path of the offending field.
    """
    with open(path, "r") as open_file:
        text = open_file.read()
    try:
        raw_data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError("invalid JSON in %s: %s" % (path, err.msg), line=err.lineno, column=err.colno)
    try:
        return TrainConfig.from_dict(raw_data)
    except TypeError as err:
        raise ConfigError("invalid config %s: %s" % (path, err))


def num_workers_from_env(default=0):
    """Worker cap from the DSDSEG_NUM_WORKERS environment variable."""
    value = os.environ.get("DSDSEG_NUM_WORKERS")
    if value is None or value == "":
        return default
    try:
        workers = int(value)
    except ValueError:
        raise ConfigError("DSDSEG_NUM_WORKERS must be an integer, got %r" % value, field="DSDSEG_NUM_WORKERS")
    if workers < 0:
        raise ConfigError("DSDSEG_NUM_WORKERS must be >= 0", field="DSDSEG_NUM_WORKERS")
    return workers
