# -*- coding: utf-8 -*-
"""Dataset manifests and generation of phantom datasets on disk.

A manifest is a JSON file

    {"num_classes": K, "in_channels": C, "format": "vseg",
     "samples": [{"id": ..., "image_path": ..., "label_path": ..., "split": "train"}, ...]}

Paths are relative to the manifest's directory. The "format" field names the
volume reader; only "vseg" is implemented, the field leaves room for external
formats.
"""
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor

from ..errors import ManifestError, ContractViolation
from .phantom import generate_phantom
from .volume_io import write_volume, read_volume

logger = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
FORMATS = ("vseg",)


def split_sizes(num_samples, ratios=(0.6, 0.2, 0.2)):
    """Integer train/val/test sizes for `ratios` (largest remainder rounding).

    `ratios` may also be absolute counts summing to `num_samples`.
    """
    ratios = [float(r) for r in ratios]
    if len(ratios) != 3 or min(ratios) < 0 or sum(ratios) <= 0:
        raise ContractViolation("split ratios must be 3 non-negative numbers, got %s" % (ratios,))
    if all(r == int(r) for r in ratios) and sum(ratios) == num_samples and num_samples > 1:
        return tuple(int(r) for r in ratios)
    total = sum(ratios)
    exact = [num_samples*r/total for r in ratios]
    sizes = [int(e) for e in exact]
    order = sorted(range(3), key=lambda i: (sizes[i] - exact[i], i))
    for i in order[:num_samples - sum(sizes)]:
        sizes[i] += 1
    return tuple(sizes)


class DatasetManifest(object):
    """List of samples with their split assignment.

    Parameters:
    * samples: list of dicts with keys id, image_path, label_path, split
    * num_classes: int >= 2
    * in_channels: int >= 1
    * root: directory the relative paths refer to
    * format: volume file format of the samples
    """
    def __init__(self, samples, num_classes, in_channels=1, root=".", format="vseg"):
        if format not in FORMATS:
            raise ManifestError("unsupported volume format %r" % (format,))
        if int(num_classes) < 2:
            raise ManifestError("num_classes must be >= 2")
        self.num_classes = int(num_classes)
        self.in_channels = int(in_channels)
        self.root = root
        self.format = format
        self.samples = []
        seen = {}
        for sample in samples:
            missing = [key for key in ("id", "image_path", "label_path", "split") if key not in sample]
            if missing:
                raise ManifestError("sample %r lacks %s" % (sample.get("id"), ", ".join(missing)))
            if sample["split"] not in SPLITS:
                raise ManifestError("sample %r has unknown split %r" % (sample["id"], sample["split"]))
            if sample["id"] in seen:
                raise ManifestError("sample %r appears in splits %s and %s"
                                    % (sample["id"], seen[sample["id"]], sample["split"]))
            seen[sample["id"]] = sample["split"]
            self.samples.append(dict(sample))

    def ids(self, split=None):
        return [s["id"] for s in self.samples if split is None or s["split"] == split]

    def entries(self, split=None):
        return [s for s in self.samples if split is None or s["split"] == split]

    def counts(self):
        return {split: len(self.ids(split)) for split in SPLITS}

    def resolve(self, path):
        return path if os.path.isabs(path) else os.path.join(self.root, path)

    def load_pair(self, entry):
        return read_volume(self.resolve(entry["image_path"]), self.resolve(entry["label_path"]), self.num_classes)

    def to_dict(self):
        return {"num_classes": self.num_classes, "in_channels": self.in_channels,
                "format": self.format, "samples": self.samples}

    def save(self, path):
        with open(path, "w") as open_file:
            json.dump(self.to_dict(), open_file, indent=2)

    @classmethod
    def load(cls, path):
        try:
            with open(path, "r") as open_file:
                raw_data = json.load(open_file)
        except json.JSONDecodeError as err:
            raise ManifestError("invalid JSON in %s: %s (line %d, column %d)" % (path, err.msg, err.lineno, err.colno))
        for key in ("num_classes", "samples"):
            if key not in raw_data:
                raise ManifestError("%s lacks the %r field" % (path, key))
        return cls(raw_data["samples"], raw_data["num_classes"], raw_data.get("in_channels", 1),
                   root=os.path.dirname(os.path.abspath(path)), format=raw_data.get("format", "vseg"))


def generate_dataset(output_dir, spec, num_samples, ratios=(0.6, 0.2, 0.2), num_workers=0, overwrite=False):
    """Writes `num_samples` phantoms and their manifest to `output_dir`.

    Sample i is generated from `spec` with seed spec.seed + i, so datasets are
    reproducible and samples can be generated in parallel.

    Parameters:
    * output_dir: str
    * spec: PhantomSpec, template of every sample
    * num_samples: int >= 1
    * ratios: train/val/test ratios or counts
    * num_workers: int, parallel generator threads (0 = sequential)
    * overwrite: bool, replace an existing manifest

    Returns:
    * path of the manifest
    """
    if num_samples < 1:
        raise ContractViolation("num_samples must be >= 1")
    manifest_path = os.path.join(output_dir, "manifest.json")
    if os.path.exists(manifest_path) and not overwrite:
        raise FileExistsError("%s exists, use overwrite to replace it" % manifest_path)
    os.makedirs(os.path.join(output_dir, "volumes"), exist_ok=True)
    sizes = split_sizes(num_samples, ratios)
    splits = ["train"]*sizes[0] + ["val"]*sizes[1] + ["test"]*sizes[2]

    def make(index):
        sample_id = "phantom_%04d" % index
        pair = generate_phantom(spec.with_seed(spec.seed + index))
        image_path = os.path.join("volumes", sample_id + "_image.vseg")
        label_path = os.path.join("volumes", sample_id + "_label.vseg")
        write_volume(pair, os.path.join(output_dir, image_path), os.path.join(output_dir, label_path))
        return {"id": sample_id, "image_path": image_path, "label_path": label_path, "split": splits[index]}

    if num_workers > 0:
        with ThreadPoolExecutor(max_workers=num_workers) as pool:
            samples = list(pool.map(make, range(num_samples)))
    else:
        samples = [make(i) for i in range(num_samples)]
    manifest = DatasetManifest(samples, spec.num_classes, spec.in_channels, root=output_dir)
    manifest.save(manifest_path)
    logger.info("wrote %d phantoms (%d/%d/%d train/val/test) to %s",
                num_samples, sizes[0], sizes[1], sizes[2], output_dir)
    return manifest_path
