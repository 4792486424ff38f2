# -*- coding: utf-8 -*-
"""Noise sources added to phantom images.

Every source is called with the shape of the volume and an optional random
state and returns an array of that shape. Sources can be combined with
MixedNoise.
"""
import numpy as np
import scipy.fft as fftpack


class Noise(object):
    def __init__(self, rng=None):
        self.rng = rng
        if self.rng is None:
            self.rng = np.random.RandomState()

    def __call__(self, shape, rng=None):
        return np.zeros(shape)


class MixedNoise(Noise):
    def __init__(self, components=(), rng=None):
        super(MixedNoise, self).__init__(rng)
        self.components = list(components)

    def __call__(self, shape, rng=None):
        if rng is None: rng = self.rng
        noise = np.zeros(shape)
        for component in self.components:
            noise += component(shape, rng)
        return noise


class WhiteNoise(Noise):
    def __init__(self, scale, rng=None):
        super(WhiteNoise, self).__init__(rng)
        self.scale = scale

    def __call__(self, shape, rng=None):
        if rng is None: rng = self.rng
        if self.scale == 0:
            return np.zeros(shape)
        return rng.normal(loc=0.0, scale=self.scale, size=shape)


class FreqNoise(Noise):
    """Spatially correlated noise with power spectrum |k|^power.

    A negative power gives smooth, blotchy noise. The result is rescaled to
    standard deviation `scale` and has zero mean.
    """
    def __init__(self, power, scale, rng=None):
        super(FreqNoise, self).__init__(rng)
        self.power = power
        self.scale = scale

    def __call__(self, shape, rng=None):
        if rng is None: rng = self.rng
        white = rng.normal(loc=0.0, scale=1.0, size=shape)
        freq = np.sqrt(sum(k**2 for k in np.meshgrid(*[fftpack.fftfreq(n) for n in shape], indexing="ij")))
        fft = fftpack.fftn(white)
        fft[freq != 0] *= np.power(freq[freq != 0], self.power/2.)
        fft[freq == 0] = 0
        noise = np.real(fftpack.ifftn(fft))
        std = np.std(noise)
        if std == 0:
            return np.zeros(shape)
        return noise*self.scale/std


class LinearShading(Noise):
    """Intensity ramp along one axis, from -scale/2 to +scale/2 (a bias field stand-in)."""
    def __init__(self, scale, axis=0, rng=None):
        super(LinearShading, self).__init__(rng)
        self.scale = scale
        self.axis = axis

    def __call__(self, shape, rng=None):
        ramp = np.linspace(-0.5, 0.5, shape[self.axis])*self.scale
        view = [1]*len(shape)
        view[self.axis] = shape[self.axis]
        return np.broadcast_to(ramp.reshape(view), shape).copy()
