"""File formats: ETLF linear rasters and binary PGM for quantized frames.

ETLF layout: magic b"ETLF", uint32-LE width, uint32-LE height, then
width*height float32-LE values row-major.
"""

from __future__ import annotations

import struct

import numpy as np

from .core import LinearImage, QuantizedImage
from .errors import ValidationError

_ETLF_MAGIC = b"ETLF"


def write_etlf(path, img: LinearImage) -> None:
    data = np.ascontiguousarray(img.values, dtype="<f4")
    with open(path, "wb") as f:
        f.write(_ETLF_MAGIC)
        f.write(struct.pack("<II", img.width, img.height))
        f.write(data.tobytes())


def read_etlf(path) -> LinearImage:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _ETLF_MAGIC:
            raise ValidationError(f"{path}: not an ETLF file (magic {magic!r})")
        header = f.read(8)
        if len(header) != 8:
            raise ValidationError(f"{path}: truncated ETLF header")
        width, height = struct.unpack("<II", header)
        raw = f.read(4 * width * height)
        if len(raw) != 4 * width * height:
            raise ValidationError(f"{path}: truncated ETLF payload")
    values = np.frombuffer(raw, dtype="<f4").reshape(height, width)
    return LinearImage(values.copy())


def write_pgm(path, img: QuantizedImage) -> None:
    """Binary PGM (P5), maxval 255."""
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (img.width, img.height))
        f.write(np.ascontiguousarray(img.values).tobytes())


def read_pgm(path) -> QuantizedImage:
    with open(path, "rb") as f:
        blob = f.read()
    # header: magic, width, height, maxval separated by whitespace (no comments
    # are ever written by this package; reject them rather than guess).
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValidationError(f"{path}: truncated PGM header")
        fields.append(blob[start:pos])
    pos += 1  # single whitespace after maxval
    if fields[0] != b"P5":
        raise ValidationError(f"{path}: not a binary PGM")
    if fields[0:1] and b"#" in blob[:pos]:
        raise ValidationError(f"{path}: PGM comments are not supported")
    width, height, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise ValidationError(f"{path}: expected maxval 255, got {maxval}")
    raw = blob[pos : pos + width * height]
    if len(raw) != width * height:
        raise ValidationError(f"{path}: truncated PGM payload")
    return QuantizedImage(np.frombuffer(raw, dtype=np.uint8).reshape(height, width).copy())
