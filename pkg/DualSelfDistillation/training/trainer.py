# -*- coding: utf-8 -*-
"""Training loop of a backbone with dual self-distillation heads.

A run directory holds

    config.json    the TrainConfig of the run
    log.csv        one row per epoch: mean loss terms and validation Dice
    steps.csv      one row per optimizer step: loss terms
    ckpt_last.pt   checkpoint after the latest epoch
    ckpt_best.pt   checkpoint with the best validation mean foreground Dice
    curves.png     training curves
    nan_dump.json  written only when a loss turned non-finite

The loss is always reduced in double precision, so the logged total equals
the sum of the logged terms to rounding of doubles.
"""
import csv
import json
import logging
import os
import random

import numpy as np
import torch

from ..errors import NonFiniteLossError, ContractViolation
from ..losses import dsd_loss, TERM_NAMES
from ..network import build_network, StageDistribution
from ..simulation import one_hot, DatasetManifest
from ..analysis.metrics import evaluate_segmentation
from ..plotting import plot_training_curves
from .data import VolumeDataset, make_loader
from .checkpoint import save_checkpoint, load_checkpoint

logger = logging.getLogger(__name__)

TORCH_DTYPES = {"float32": torch.float32, "float64": torch.float64}
STEP_COLUMNS = ("epoch", "step", "total") + TERM_NAMES
LOG_COLUMNS = ("epoch", "total") + TERM_NAMES + ("val_dice",)


def configure_determinism(cfg):
    """Seeds every RNG from cfg.seed and pins torch to deterministic kernels."""
    torch.manual_seed(cfg.seed)
    np.random.seed(cfg.seed % 2**32)
    random.seed(cfg.seed)
    if cfg.deterministic:
        torch.use_deterministic_algorithms(True, warn_only=True)
        torch.backends.cudnn.benchmark = False


def build_optimizer(parameters, opt_cfg):
    if opt_cfg.name == "adam":
        return torch.optim.Adam(parameters, lr=opt_cfg.learning_rate, weight_decay=opt_cfg.weight_decay)
    if opt_cfg.name == "adamw":
        return torch.optim.AdamW(parameters, lr=opt_cfg.learning_rate, weight_decay=opt_cfg.weight_decay)
    return torch.optim.SGD(parameters, lr=opt_cfg.learning_rate, momentum=0.9, weight_decay=opt_cfg.weight_decay)


def predict(network, image):
    """Integer label volume predicted from an image (C,H,W,D) through the inference path."""
    dtype = next(network.parameters()).dtype
    with torch.no_grad():
        logits = network.infer(torch.as_tensor(np.ascontiguousarray(image)).to(dtype))
    return logits.argmax(dim=1)[0].cpu().numpy()


def _double(dist):
    soft = dist.hard.double() if dist.soft is dist.hard else dist.soft.double()
    return StageDistribution(dist.hard.double(), soft, dist.logits, dist.stage_id, dist.side)


def _finite_output(output):
    fields = [output.main_pred] + [f for d in output.encoder_dists + output.decoder_dists for f in (d.hard, d.soft)]
    return all(bool(torch.isfinite(f.detach()).all()) for f in fields)


def _format(value):
    if value is None:
        return ""
    return repr(float(value))


class Trainer(object):
    """Owns the network and the optimizer of one run.

    Parameters:
    * cfg: TrainConfig
    * network: optional DualSelfDistillationNetwork, built from cfg.arch and cfg.seed otherwise
    * run_dir: optional directory for the diagnostic dump of non-finite losses
    """
    def __init__(self, cfg, network=None, run_dir=None):
        self.cfg = cfg
        self.dsd = cfg.effective_dsd()
        if self.dsd.frozen_encoder_teacher():
            logger.warning("alpha1 = %g with a detached encoder teacher: nothing trains the deepest encoder head, "
                           "encoder distillation pulls towards its initial output (set "
                           "dsd.detach_encoder_teacher to false)", self.dsd.alpha1)
        self.dtype = TORCH_DTYPES[cfg.precision]
        configure_determinism(cfg)
        self.network = network if network is not None else build_network(cfg.arch, seed=cfg.seed)
        self.network.to(self.dtype)
        self.optimizer = build_optimizer(self.network.parameters(), cfg.optimizer)
        self.run_dir = run_dir
        self.epoch = 0
        self.best_val_dice = None

    def forward(self, image):
        """DsdOutput of a batch image (B,C,H,W,D) at the distillation temperature."""
        return self.network(image.to(self.dtype), tau=self.dsd.tau, detach_taps=self.cfg.detach_heads)

    def loss_of(self, output, label):
        """(total, LossBreakdown) of a DsdOutput against labels (B,H,W,D)."""
        truth = one_hot(label, self.cfg.arch.num_classes).to(torch.float64)
        return dsd_loss(output.main_pred.double(),
                        [_double(d) for d in output.encoder_dists],
                        [_double(d) for d in output.decoder_dists],
                        truth, self.dsd)

    def loss(self, image, label):
        """(total, LossBreakdown) of a batch, image (B,C,H,W,D), label (B,H,W,D)."""
        return self.loss_of(self.forward(image), label)

    def train_step(self, image, label, epoch=None, step=None, sample_ids=None):
        """One optimizer step; returns the loss terms as floats."""
        self.network.train()
        self.optimizer.zero_grad(set_to_none=True)
        output = self.forward(image)
        if not _finite_output(output):
            # non-finite probabilities must not reach the loss contracts
            self._abort(dict.fromkeys(("total",) + TERM_NAMES, float("nan")), epoch, step, sample_ids)
        total, breakdown = self.loss_of(output, label)
        values = breakdown.as_floats()
        if not breakdown.is_finite():
            self._abort(values, epoch, step, sample_ids)
        total.backward()
        self.optimizer.step()
        return values

    def _abort(self, values, epoch, step, sample_ids):
        dump_path = None
        if self.run_dir is not None:
            dump_path = os.path.join(self.run_dir, "nan_dump.json")
            with open(dump_path, "w") as open_file:
                json.dump({"epoch": epoch, "step": step, "samples": sample_ids, "terms": values,
                           "dsd": self.dsd.to_dict()}, open_file, indent=2)
        logger.error("non-finite loss at epoch %s step %s: %s", epoch, step, values)
        raise NonFiniteLossError("non-finite loss at epoch %s step %s" % (epoch, step), terms=values,
                                 dump_path=dump_path)

    def train_epoch(self, loader, epoch, on_step=None):
        """Runs one epoch; returns the list of per-step loss dicts."""
        steps = []
        for step, (image, label, index) in enumerate(loader):
            ids = [int(i) for i in index]
            values = self.train_step(image, label, epoch, step, ids)
            values.update(epoch=epoch, step=step)
            steps.append(values)
            if on_step is not None:
                on_step(values)
        self.epoch = epoch
        return steps

    def validate(self, dataset):
        """Mean foreground Dice over `dataset`, None if it is empty."""
        self.network.eval()
        scores = []
        for pair in dataset.pairs:
            report = evaluate_segmentation(predict(self.network, pair.image), pair.label, self.cfg.arch.num_classes,
                                           pair.spacing, with_hd95=False)
            if report.mean_dice is not None:
                scores.append(report.mean_dice)
        self.network.train()
        return float(np.mean(scores)) if scores else None


class _CsvLog(object):
    def __init__(self, path, columns, append=False):
        self.columns = columns
        exists = append and os.path.exists(path)
        self.file = open(path, "a" if exists else "w", newline="")
        self.writer = csv.writer(self.file)
        if not exists:
            self.writer.writerow(columns)

    def write(self, values):
        self.writer.writerow([values[c] if c in ("epoch", "step") else _format(values[c]) for c in self.columns])
        self.file.flush()

    def close(self):
        self.file.close()


def _check_manifest(manifest, cfg):
    if manifest.num_classes != cfg.arch.num_classes:
        raise ContractViolation("manifest has K = %d classes but arch.num_classes = %d"
                                % (manifest.num_classes, cfg.arch.num_classes))
    if manifest.in_channels != cfg.arch.in_channels:
        raise ContractViolation("manifest has %d image channels but arch.in_channels = %d"
                                % (manifest.in_channels, cfg.arch.in_channels))


def train(cfg, resume_from=None, overwrite=False):
    """Trains a network as configured and fills the run directory cfg.output_dir.

    Parameters:
    * cfg: TrainConfig with manifest_path set
    * resume_from: optional checkpoint path, training continues after its epoch
    * overwrite: bool, replace an existing run directory

    Returns:
    * the run directory
    """
    if cfg.manifest_path is None:
        raise ContractViolation("TrainConfig.manifest_path is not set")
    run_dir = cfg.output_dir
    if os.path.exists(os.path.join(run_dir, "config.json")) and not overwrite and resume_from is None:
        raise FileExistsError("%s already holds a run, use overwrite to replace it" % run_dir)
    os.makedirs(run_dir, exist_ok=True)

    manifest = DatasetManifest.load(cfg.manifest_path)
    _check_manifest(manifest, cfg)
    trainer = Trainer(cfg, run_dir=run_dir)
    train_set = VolumeDataset.from_manifest(manifest, "train", augment_flips=cfg.augment_flips, seed=cfg.seed,
                                            dtype=trainer.dtype)
    val_set = VolumeDataset.from_manifest(manifest, "val", dtype=trainer.dtype)
    if len(train_set) == 0:
        raise ContractViolation("the manifest has no training samples")
    cfg.arch.check_spatial_shape(train_set.pairs[0].shape)

    if resume_from is not None:
        checkpoint = load_checkpoint(resume_from)
        checkpoint.restore(trainer.network, trainer.optimizer)
        trainer.epoch = checkpoint.epoch
        trainer.best_val_dice = checkpoint.best_val_dice
        logger.info("resumed from %s after epoch %d", resume_from, checkpoint.epoch)
    cfg.save(os.path.join(run_dir, "config.json"))

    num_workers = cfg.resolved_num_workers()
    append = resume_from is not None
    log = _CsvLog(os.path.join(run_dir, "log.csv"), LOG_COLUMNS, append)
    step_log = _CsvLog(os.path.join(run_dir, "steps.csv"), STEP_COLUMNS, append)
    try:
        for epoch in range(trainer.epoch + 1, cfg.epochs + 1):
            loader = make_loader(train_set, cfg.batch_size, shuffle=True, seed=cfg.seed, epoch=epoch,
                                 num_workers=num_workers)
            steps = trainer.train_epoch(loader, epoch, on_step=step_log.write)
            row = {"epoch": epoch}
            for name in ("total",) + TERM_NAMES:
                row[name] = float(np.mean([s[name] for s in steps]))
            row["val_dice"] = trainer.validate(val_set)
            log.write(row)
            logger.info("epoch %d/%d: total %.5f main %.5f deep_supervision %.5f encoder_distillation %.5f "
                        "decoder_distillation %.5f val_dice %s", epoch, cfg.epochs, row["total"], row["main"],
                        row["deep_supervision"], row["encoder_distillation"], row["decoder_distillation"],
                        "n/a" if row["val_dice"] is None else "%.4f" % row["val_dice"])

            improved = row["val_dice"] is None or trainer.best_val_dice is None \
                or row["val_dice"] > trainer.best_val_dice
            if improved:
                trainer.best_val_dice = row["val_dice"]
            save_checkpoint(os.path.join(run_dir, "ckpt_last.pt"), trainer.network, trainer.optimizer, epoch,
                            trainer.best_val_dice, cfg)
            if improved:
                save_checkpoint(os.path.join(run_dir, "ckpt_best.pt"), trainer.network, trainer.optimizer, epoch,
                                trainer.best_val_dice, cfg)
    finally:
        log.close()
        step_log.close()

    plot_training_curves(os.path.join(run_dir, "log.csv"), savepath=os.path.join(run_dir, "curves.png"),
                         close_on_exit=True)
    logger.info("finished training in %s, best val dice %s", run_dir, trainer.best_val_dice)
    return run_dir
