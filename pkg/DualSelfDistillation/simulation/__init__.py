# -*- coding: utf-8 -*-
from .phantom import Ellipsoid, VolumePair, PhantomSpec, generate_phantom, one_hot, from_one_hot
from .noise import Noise, MixedNoise, WhiteNoise, FreqNoise, LinearShading
from .volume_io import write_volume, read_volume, write_array, read_array
from .manifest import DatasetManifest, generate_dataset, split_sizes
