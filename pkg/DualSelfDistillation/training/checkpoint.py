# -*- coding: utf-8 -*-
"""Checkpoint files of a training run."""
import logging
import random

import numpy as np
import torch

from ..config import TrainConfig
from ..errors import ContractViolation

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


def rng_state():
    return {"torch": torch.get_rng_state(),
            "numpy": np.random.get_state(),
            "python": random.getstate()}


def set_rng_state(state):
    torch.set_rng_state(state["torch"])
    np.random.set_state(state["numpy"])
    random.setstate(state["python"])


def save_checkpoint(path, network, optimizer, epoch, best_val_dice, cfg):
    """Writes backbone, heads, optimizer state, progress and config to `path`."""
    torch.save({"version": CHECKPOINT_VERSION,
                "backbone": network.backbone.state_dict(),
                "heads": {"encoder": network.encoder_heads.state_dict(),
                          "decoder": network.decoder_heads.state_dict()},
                "optimizer": optimizer.state_dict() if optimizer is not None else None,
                "epoch": int(epoch),
                "best_val_dice": best_val_dice,
                "config": cfg.to_dict(),
                "rng_state": rng_state(),
                }, path)
    logger.debug("saved checkpoint of epoch %d to %s", epoch, path)


class Checkpoint(object):
    """Contents of a checkpoint file.

    Parameters:
    * data: dict as written by save_checkpoint
    """
    def __init__(self, data):
        if data.get("version") != CHECKPOINT_VERSION:
            raise ContractViolation("unsupported checkpoint version %r" % (data.get("version"),))
        self.data = data
        self.config = TrainConfig.from_dict(data["config"])
        self.epoch = data["epoch"]
        self.best_val_dice = data["best_val_dice"]

    def restore(self, network, optimizer=None, restore_rng=True):
        network.backbone.load_state_dict(self.data["backbone"])
        network.encoder_heads.load_state_dict(self.data["heads"]["encoder"])
        network.decoder_heads.load_state_dict(self.data["heads"]["decoder"])
        if optimizer is not None and self.data["optimizer"] is not None:
            optimizer.load_state_dict(self.data["optimizer"])
        if restore_rng:
            set_rng_state(self.data["rng_state"])


def load_checkpoint(path):
    # RNG states and the numpy state tuple are not plain tensors
    data = torch.load(path, map_location="cpu", weights_only=False)
    return Checkpoint(data)
