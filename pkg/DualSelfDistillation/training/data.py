# -*- coding: utf-8 -*-
"""Datasets and loaders over a dataset manifest.

Shuffling and flip augmentation are pure functions of (seed, epoch, sample
index), so an epoch sees the same batches whatever the number of workers and
whether or not the run was resumed in between.
"""
import logging

import numpy as np
import torch
from torch.utils.data import Dataset, DataLoader

from ..errors import ContractViolation

logger = logging.getLogger(__name__)


class VolumeDataset(Dataset):
    """Image/label pairs of one manifest split.

    Parameters:
    * pairs: list of VolumePair
    * ids: list of sample ids, same order as `pairs`
    * augment_flips: bool, random flips along every spatial axis
    * seed: int, base seed of the flip decisions
    * dtype: torch dtype of the images
    """
    def __init__(self, pairs, ids=None, augment_flips=False, seed=0, dtype=torch.float32):
        self.pairs = list(pairs)
        self.ids = list(ids) if ids is not None else [str(i) for i in range(len(self.pairs))]
        if len(self.ids) != len(self.pairs):
            raise ContractViolation("got %d ids for %d pairs" % (len(self.ids), len(self.pairs)))
        self.augment_flips = augment_flips
        self.seed = seed
        self.dtype = dtype
        self.epoch = 0

    @classmethod
    def from_manifest(cls, manifest, split, **kwargs):
        entries = manifest.entries(split)
        pairs = [manifest.load_pair(entry) for entry in entries]
        logger.info("loaded %d %s samples", len(pairs), split)
        return cls(pairs, [entry["id"] for entry in entries], **kwargs)

    def set_epoch(self, epoch):
        self.epoch = int(epoch)

    def flips(self, index):
        """Spatial axes (1, 2, 3 of the image) flipped for sample `index` in the current epoch."""
        if not self.augment_flips:
            return ()
        rng = np.random.RandomState([self.seed % 2**32, self.epoch, index])
        return tuple(axis for axis in (1, 2, 3) if rng.rand() < 0.5)

    def __len__(self):
        return len(self.pairs)

    def __getitem__(self, index):
        pair = self.pairs[index]
        image = pair.image
        label = pair.label
        axes = self.flips(index)
        if axes:
            image = np.flip(image, axis=axes)
            label = np.flip(label, axis=tuple(a - 1 for a in axes))
        image = torch.from_numpy(np.ascontiguousarray(image)).to(self.dtype)
        label = torch.from_numpy(np.ascontiguousarray(label).astype(np.int64))
        return image, label, index


def make_loader(dataset, batch_size=1, shuffle=False, seed=0, epoch=0, num_workers=0):
    """DataLoader whose shuffling order depends on seed + epoch only."""
    if hasattr(dataset, "set_epoch"):
        dataset.set_epoch(epoch)
    generator = torch.Generator()
    generator.manual_seed(int(seed) + int(epoch))
    return DataLoader(dataset, batch_size=batch_size, shuffle=shuffle, generator=generator,
                      num_workers=num_workers, drop_last=False)
