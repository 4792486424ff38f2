# -*- coding: utf-8 -*-
"""Synthetic multi-class 3D phantoms.

Every foreground class is realised as one or more axis-aligned ellipsoids
painted into the label volume in class order, so later classes overwrite
earlier ones. The image is the class-wise intensity mean plus noise.

With the default "nested" layout class k+1 is placed strictly inside class k
(cardiac chambers inside the heart, tumour core inside the oedema), which
guarantees that every class keeps a visible shell.
"""
import logging

import numpy as np
import torch

from ..errors import ContractViolation
from .noise import WhiteNoise

logger = logging.getLogger(__name__)

MIN_AXIS = 8
LAYOUTS = ("nested", "independent")


class Ellipsoid(object):
    """Axis-aligned ellipsoid in voxel coordinates.

    Parameters:
    * center: 3 floats, voxel index coordinates of the center
    * semi_axes: 3 floats > 0, semi axes in voxels
    """
    def __init__(self, center, semi_axes):
        self.center = tuple(float(c) for c in center)
        self.semi_axes = tuple(float(a) for a in semi_axes)
        if len(self.center) != 3 or len(self.semi_axes) != 3 or min(self.semi_axes) <= 0:
            raise ContractViolation("an ellipsoid needs a 3D center and 3 positive semi axes")

    def contains(self, shape):
        """Boolean mask of the voxels inside the ellipsoid for a volume of `shape`."""
        grid = np.indices(shape, dtype=np.float64)
        radius2 = np.zeros(shape)
        for axis in range(3):
            radius2 += ((grid[axis] - self.center[axis])/self.semi_axes[axis])**2
        return radius2 <= 1.

    def __repr__(self):
        return "Ellipsoid(center=%s, semi_axes=%s)" % (self.center, self.semi_axes)


class VolumePair(object):
    """An image with its integer label volume.

    Parameters:
    * image: array (C, H, W, D), float
    * label: array (H, W, D), integer class ids in [0, K)
    * spacing: 3 positive floats, voxel size in mm per axis
    * num_classes: int or None, K if known
    """
    def __init__(self, image, label, spacing=(1., 1., 1.), num_classes=None):
        image = np.asarray(image)
        label = np.asarray(label)
        if image.ndim == 3:
            image = image[None]
        if image.ndim != 4 or label.ndim != 3 or image.shape[1:] != label.shape:
            raise ContractViolation("image %s and label %s shapes are inconsistent" % (image.shape, label.shape))
        if not np.issubdtype(label.dtype, np.integer):
            raise ContractViolation("label must hold integer class ids, got dtype %s" % label.dtype)
        spacing = tuple(float(s) for s in spacing)
        if len(spacing) != 3 or min(spacing) <= 0:
            raise ContractViolation("spacing must be 3 positive values, got %s" % (spacing,))
        if label.size and label.min() < 0:
            raise ContractViolation("label contains negative class ids")
        if num_classes is not None and label.size and label.max() >= num_classes:
            raise ContractViolation("label contains class %d but K = %d" % (label.max(), num_classes))
        self.image = image
        self.label = label
        self.spacing = spacing
        self.num_classes = num_classes

    @property
    def shape(self):
        return self.label.shape

    @property
    def in_channels(self):
        return self.image.shape[0]


class PhantomSpec(object):
    """Recipe of a synthetic phantom.

    Parameters:
    * shape: 3 ints >= 8, spatial shape (H, W, D)
    * num_classes: int >= 2, K including background class 0
    * num_structures: int or list of K-1 ints; number of nested groups ("nested")
                      or of ellipsoids per foreground class ("independent")
    * intensity_means: None, K floats, or (C, K) floats; default linspace(0, 1, K)
    * noise_sigma: float >= 0, standard deviation of the default white noise
    * seed: int
    * in_channels: int >= 1, number of image channels C
    * layout: "nested" or "independent"
    * structures: optional list of (class_id, Ellipsoid) replacing random sampling
    * noise: optional Noise source replacing WhiteNoise(noise_sigma)
    * spacing: 3 floats, voxel size in mm
    """
    def __init__(self, shape=(32, 32, 32), num_classes=4, num_structures=1, intensity_means=None,
                 noise_sigma=0.1, seed=0, in_channels=1, layout="nested", structures=None, noise=None,
                 spacing=(1., 1., 1.)):
        if isinstance(shape, int):
            shape = (shape,)*3
        self.shape = tuple(int(s) for s in shape)
        if len(self.shape) != 3 or min(self.shape) < MIN_AXIS:
            raise ContractViolation("phantom shape must have 3 axes of at least %d voxels, got %s"
                                    % (MIN_AXIS, self.shape))
        if int(num_classes) < 2:
            raise ContractViolation("a phantom needs K >= 2 classes, got %r" % (num_classes,))
        self.num_classes = int(num_classes)
        if np.isscalar(num_structures):
            num_structures = [int(num_structures)]*(self.num_classes - 1)
        self.num_structures = [int(n) for n in num_structures]
        if len(self.num_structures) != self.num_classes - 1 or min(self.num_structures) < 1:
            raise ContractViolation("num_structures needs one count >= 1 per foreground class")
        if int(in_channels) < 1:
            raise ContractViolation("in_channels must be >= 1")
        self.in_channels = int(in_channels)
        if intensity_means is None:
            intensity_means = np.linspace(0., 1., self.num_classes)
        means = np.asarray(intensity_means, dtype=np.float64)
        if means.ndim == 1:
            means = np.tile(means, (self.in_channels, 1))
        if means.shape != (self.in_channels, self.num_classes):
            raise ContractViolation("intensity_means must have K or (C, K) entries, got shape %s" % (means.shape,))
        self.intensity_means = means
        if noise_sigma < 0:
            raise ContractViolation("noise_sigma must be >= 0")
        self.noise_sigma = float(noise_sigma)
        self.seed = int(seed)
        if layout not in LAYOUTS:
            raise ContractViolation("layout must be one of %s, got %r" % (LAYOUTS, layout))
        self.layout = layout
        self.structures = structures
        self.noise = noise
        self.spacing = tuple(float(s) for s in spacing)

    def with_seed(self, seed):
        """Copy of the spec with another seed."""
        other = PhantomSpec.__new__(PhantomSpec)
        other.__dict__.update(self.__dict__)
        other.seed = int(seed)
        return other


def _random_center(rng, shape, semi_axes):
    center = []
    for n, a in zip(shape, semi_axes):
        low, high = a, n - 1 - a
        center.append(rng.uniform(low, high) if high > low else (n - 1)/2.)
    return center


def sample_structures(spec, rng):
    """Random (class_id, Ellipsoid) list for `spec`, in painting order."""
    smallest = min(spec.shape)
    structures = []
    if spec.layout == "nested":
        groups = max(spec.num_structures)
        shrink = groups**(1./3)
        for _ in range(groups):
            semi_axes = rng.uniform(0.2, 0.32, size=3)*smallest/shrink
            outer = Ellipsoid(_random_center(rng, spec.shape, semi_axes), semi_axes)
            structures.append((1, outer))
            for class_id in range(2, spec.num_classes):
                scale = rng.uniform(0.5, 0.65)
                direction = rng.normal(size=3)
                direction /= np.linalg.norm(direction)
                # |A^-1 offset| <= 0.3 (1 - scale) keeps the inner ellipsoid strictly inside
                offset = np.array(outer.semi_axes)*direction*rng.uniform(0., 0.3*(1 - scale))
                inner = Ellipsoid(np.array(outer.center) + offset, np.array(outer.semi_axes)*scale)
                structures.append((class_id, inner))
                outer = inner
    else:
        for class_id, count in zip(range(1, spec.num_classes), spec.num_structures):
            for _ in range(count):
                semi_axes = rng.uniform(0.1, 0.2, size=3)*smallest
                structures.append((class_id, Ellipsoid(_random_center(rng, spec.shape, semi_axes), semi_axes)))
    return structures


def generate_phantom(spec):
    """Deterministic VolumePair for a PhantomSpec.

    Parameters:
    * spec: PhantomSpec

    Returns:
    * VolumePair with float32 image (C, H, W, D) and uint8/int32 label (H, W, D)
    """
    rng = np.random.RandomState(spec.seed)
    structures = spec.structures if spec.structures is not None else sample_structures(spec, rng)
    label_dtype = np.uint8 if spec.num_classes <= 256 else np.int32
    label = np.zeros(spec.shape, dtype=label_dtype)
    for class_id, ellipsoid in sorted(structures, key=lambda s: s[0]):
        if not 0 < class_id < spec.num_classes:
            raise ContractViolation("structure class %d outside 1..%d" % (class_id, spec.num_classes - 1))
        label[ellipsoid.contains(spec.shape)] = class_id

    noise = spec.noise if spec.noise is not None else WhiteNoise(spec.noise_sigma)
    image = np.empty((spec.in_channels,) + spec.shape, dtype=np.float32)
    for channel in range(spec.in_channels):
        image[channel] = spec.intensity_means[channel][label] + noise(spec.shape, rng)
    pair = VolumePair(image, label, spec.spacing, spec.num_classes)
    pair.structures = structures
    return pair


def one_hot(label, num_classes):
    """One-hot encoding with the class axis first.

    Parameters:
    * label: integer array or tensor (..., H, W, D) with values in [0, K)
    * num_classes: int K

    Returns:
    * array or tensor (K, H, W, D); batched input (B, H, W, D) gives (B, K, H, W, D)
    """
    if torch.is_tensor(label):
        if label.numel() and (label.min() < 0 or label.max() >= num_classes):
            raise ContractViolation("label values must lie in [0, %d)" % num_classes)
        encoded = torch.nn.functional.one_hot(label.long(), num_classes)
        return torch.movedim(encoded, -1, -4 if label.dim() >= 3 else 0)
    label = np.asarray(label)
    if not np.issubdtype(label.dtype, np.integer):
        raise ContractViolation("label must hold integer class ids, got dtype %s" % label.dtype)
    if label.size and (label.min() < 0 or label.max() >= num_classes):
        raise ContractViolation("label values must lie in [0, %d)" % num_classes)
    encoded = np.eye(num_classes, dtype=np.uint8)[label]
    return np.moveaxis(encoded, -1, -4 if label.ndim >= 3 else 0)


def from_one_hot(encoded):
    """Per-voxel argmax over the class axis, the inverse of one_hot."""
    if torch.is_tensor(encoded):
        return encoded.argmax(dim=-4)
    return np.asarray(encoded).argmax(axis=-4)
