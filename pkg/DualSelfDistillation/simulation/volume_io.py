# -*- coding: utf-8 -*-
"""Reader and writer of the portable volume file format.

Layout (all numbers little endian):

    magic      4 bytes  b"VSEG"
    version    u16      1
    dtype      u8       1 = f32, 2 = u8, 3 = i32
    ndim       u8
    dims       u32 x ndim
    spacing    f32 x 3  mm per spatial axis
    payload    raw C-order data, channel axis first

An image pair is stored as two files, one for the image and one for the label.
"""
import os
import struct

import numpy as np

from ..errors import BadMagicError, TruncatedPayloadError, UnknownDtypeError, InvalidHeaderError
from .phantom import VolumePair

MAGIC = b"VSEG"
VERSION = 1
DTYPE_CODES = {1: np.dtype("<f4"), 2: np.dtype("u1"), 3: np.dtype("<i4")}
_PREAMBLE = struct.Struct("<4sHBB")
_SPACING = struct.Struct("<3f")


def _dtype_code(array):
    for code, dtype in DTYPE_CODES.items():
        if array.dtype.kind == dtype.kind and array.dtype.itemsize == dtype.itemsize:
            return code
    raise UnknownDtypeError("cannot store arrays of dtype %s (supported: float32, uint8, int32)" % array.dtype)


def encode_array(array, spacing=(1., 1., 1.)):
    """Bytes of one array in the volume file format."""
    array = np.asarray(array)
    code = _dtype_code(array)
    if array.ndim < 1 or array.ndim > 255 or 0 in array.shape:
        raise InvalidHeaderError("cannot store an array of shape %s" % (array.shape,))
    header = _PREAMBLE.pack(MAGIC, VERSION, code, array.ndim)
    header += struct.pack("<%dI" % array.ndim, *array.shape)
    header += _SPACING.pack(*[float(s) for s in spacing])
    payload = np.ascontiguousarray(array, dtype=DTYPE_CODES[code]).tobytes(order="C")
    return header + payload


def decode_array(data, source="<bytes>"):
    """Decodes bytes written by encode_array.

    Returns:
    * (array, spacing)
    """
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError("%s is not a volume file (bad magic %r)" % (source, bytes(data[:4])))
    if len(data) < _PREAMBLE.size:
        raise TruncatedPayloadError("%s: header truncated" % source)
    _, version, code, ndim = _PREAMBLE.unpack_from(data, 0)
    if version != VERSION:
        raise InvalidHeaderError("%s: unsupported format version %d" % (source, version))
    if code not in DTYPE_CODES:
        raise UnknownDtypeError("%s: unknown dtype code %d" % (source, code))
    if ndim == 0:
        raise InvalidHeaderError("%s: zero dimensions" % source)
    offset = _PREAMBLE.size
    if len(data) < offset + 4*ndim + _SPACING.size:
        raise TruncatedPayloadError("%s: header truncated" % source)
    dims = struct.unpack_from("<%dI" % ndim, data, offset)
    offset += 4*ndim
    if 0 in dims:
        raise InvalidHeaderError("%s: header declares a zero-sized axis %s" % (source, dims))
    spacing = _SPACING.unpack_from(data, offset)
    offset += _SPACING.size
    if min(spacing) <= 0 or not np.all(np.isfinite(spacing)):
        raise InvalidHeaderError("%s: invalid spacing %s" % (source, spacing))
    dtype = DTYPE_CODES[code]
    expected = int(np.prod(dims, dtype=np.int64))*dtype.itemsize
    if len(data) - offset < expected:
        raise TruncatedPayloadError("%s: payload has %d bytes, header declares %d" % (source, len(data) - offset, expected))
    if len(data) - offset > expected:
        raise InvalidHeaderError("%s: %d trailing bytes after payload" % (source, len(data) - offset - expected))
    array = np.frombuffer(data, dtype=dtype, count=int(np.prod(dims)), offset=offset).reshape(dims).copy()
    return array, tuple(float(s) for s in spacing)


def write_array(array, path, spacing=(1., 1., 1.)):
    data = encode_array(array, spacing)
    with open(path, "wb") as open_file:
        open_file.write(data)


def read_array(path):
    with open(path, "rb") as open_file:
        data = open_file.read()
    return decode_array(data, source=os.fspath(path))


def write_volume(pair, image_path, label_path):
    """Writes the image and the label of a VolumePair to two files."""
    image = np.asarray(pair.image, dtype=np.float32)
    label = pair.label
    if label.dtype not in (np.uint8, np.int32):
        label = label.astype(np.uint8 if label.size == 0 or label.max() < 256 else np.int32)
    write_array(image, image_path, pair.spacing)
    write_array(label, label_path, pair.spacing)


def read_volume(image_path, label_path, num_classes=None):
    """Reads a VolumePair written by write_volume."""
    image, spacing = read_array(image_path)
    label, label_spacing = read_array(label_path)
    if label.dtype.kind == "f":
        raise InvalidHeaderError("%s: label volume must be integer typed" % label_path)
    if spacing != label_spacing:
        raise InvalidHeaderError("%s and %s disagree on spacing" % (image_path, label_path))
    if image.ndim == 3:
        image = image[None]
    return VolumePair(image, label, spacing, num_classes)
