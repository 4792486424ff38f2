# -*- coding: utf-8 -*-
"""Dual self-distillation for 3D U-shaped segmentation networks."""
__version__ = "0.1.0"

from .errors import (DsdError, ContractViolation, ConfigError, ManifestError, VolumeFormatError,
                     NonFiniteLossError)
from .config import DsdConfig, ArchConfig, OptimizerConfig, TrainConfig, load_train_config
