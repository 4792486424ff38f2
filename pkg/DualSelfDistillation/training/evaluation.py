# -*- coding: utf-8 -*-
"""Evaluation of a trained checkpoint on one manifest split.

Only the inference path of the network runs: the bottleneck heads are loaded
with the checkpoint but never evaluated.
"""
import json
import logging
import os
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor

from ..errors import ContractViolation
from ..network import build_network
from ..simulation import DatasetManifest
from ..plotting import plot_slice_comparison
from ..analysis.metrics import evaluate_segmentation, metrics_frame, summarize, write_metrics_csv
from .checkpoint import load_checkpoint
from .trainer import TORCH_DTYPES, predict

logger = logging.getLogger(__name__)


class EvaluationResult(object):
    """Per-sample MetricsReports of a split plus their aggregate.

    Parameters:
    * reports: OrderedDict sample id -> MetricsReport
    * split: str
    * num_classes: int
    """
    def __init__(self, reports, split, num_classes):
        self.reports = reports
        self.split = split
        self.num_classes = num_classes
        self.frame = metrics_frame(reports)
        self.summary = summarize(self.frame)

    @property
    def mean_dice(self):
        return self.summary["overall"]["dice"]["mean"]

    @property
    def mean_hd95(self):
        return self.summary["overall"]["hd95"]["mean"]

    def to_dict(self):
        return {"split": self.split,
                "num_classes": self.num_classes,
                "samples": OrderedDict((sample_id, report.to_dict()) for sample_id, report in self.reports.items()),
                "summary": self.summary}

    def save(self, output_dir):
        """Writes report.json and metrics.csv to `output_dir`."""
        os.makedirs(output_dir, exist_ok=True)
        with open(os.path.join(output_dir, "report.json"), "w") as open_file:
            json.dump(self.to_dict(), open_file, indent=2)
        write_metrics_csv(self.frame, os.path.join(output_dir, "metrics.csv"))


def load_network(checkpoint):
    """Network of a Checkpoint in evaluation mode, in the precision it was trained with."""
    cfg = checkpoint.config
    network = build_network(cfg.arch, seed=cfg.seed)
    network.to(TORCH_DTYPES[cfg.precision])
    checkpoint.restore(network, restore_rng=False)
    network.eval()
    return network


def evaluate_predictions(predictions, manifest, split="test", num_workers=0, pooled=False):
    """EvaluationResult of given label predictions.

    Parameters:
    * predictions: dict sample id -> integer label volume, one per sample of the split
    * manifest: DatasetManifest
    """
    entries = manifest.entries(split)
    missing = [e["id"] for e in entries if e["id"] not in predictions]
    if missing:
        raise ContractViolation("no prediction for samples %s" % ", ".join(missing))

    def score(entry):
        pair = manifest.load_pair(entry)
        return evaluate_segmentation(predictions[entry["id"]], pair.label, manifest.num_classes, pair.spacing,
                                     pooled=pooled)

    if num_workers > 0:
        with ThreadPoolExecutor(max_workers=num_workers) as pool:
            scored = list(pool.map(score, entries))
    else:
        scored = [score(entry) for entry in entries]
    reports = OrderedDict((entry["id"], report) for entry, report in zip(entries, scored))
    return EvaluationResult(reports, split, manifest.num_classes)


def evaluate(checkpoint_path, manifest_path, split="test", output_dir=None, overwrite=True, num_workers=0,
             pooled=False, plot_slices=False):
    """Evaluates a checkpoint on a manifest split.

    Parameters:
    * checkpoint_path: path of a checkpoint written by the trainer
    * manifest_path: path of a dataset manifest
    * split: "train", "val" or "test"
    * output_dir: where report.json and metrics.csv go, None writes nothing
    * overwrite: bool, replace an existing report
    * plot_slices: bool, also save slices/<id>.png per sample to `output_dir`

    Returns:
    * EvaluationResult
    """
    checkpoint = load_checkpoint(checkpoint_path)
    manifest = DatasetManifest.load(manifest_path)
    num_classes = checkpoint.config.arch.num_classes
    if manifest.num_classes != num_classes:
        raise ContractViolation("checkpoint predicts %d classes but the manifest has %d"
                                % (num_classes, manifest.num_classes))
    if output_dir is not None and os.path.exists(os.path.join(output_dir, "report.json")) and not overwrite:
        raise FileExistsError("%s already holds a report, use overwrite to replace it" % output_dir)
    network = load_network(checkpoint)
    predictions = OrderedDict()
    for entry in manifest.entries(split):
        pair = manifest.load_pair(entry)
        predictions[entry["id"]] = predict(network, pair.image)
        if plot_slices and output_dir is not None:
            slice_dir = os.path.join(output_dir, "slices")
            os.makedirs(slice_dir, exist_ok=True)
            plot_slice_comparison(pair.image, pair.label, predictions[entry["id"]], num_classes=num_classes,
                                  savepath=os.path.join(slice_dir, "%s.png" % entry["id"]), close_on_exit=True)
    result = evaluate_predictions(predictions, manifest, split, num_workers, pooled)
    if output_dir is not None:
        result.save(output_dir)
    logger.info("evaluated %s on %d %s samples: mean dice %s, mean hd95 %s", checkpoint_path,
                len(predictions), split, result.mean_dice, result.mean_hd95)
    return result
