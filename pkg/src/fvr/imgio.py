"""Image containers and file formats.

Images hold float32 intensities on the [0, 255] scale; files are either
binary PPM/PGM (8-bit, rounded half-up) or the lossless "FIM1" float dump
used for metric computations. Flame masks export as PBM (P4), flame bits
written black.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError

MAGIC_IMAGE = b"FIM1"


@dataclass
class Image:
    """Float intensity image; ``data`` has shape (height, width, channels)."""

    width: int
    height: int
    channels: int
    data: np.ndarray = None

    def __post_init__(self):
        if self.channels not in (1, 3):
            raise ValueError("channels must be 1 or 3")
        shape = (self.height, self.width, self.channels)
        if self.data is None:
            self.data = np.zeros(shape, dtype=np.float32)
        else:
            self.data = np.ascontiguousarray(self.data, dtype=np.float32).reshape(shape)
        if not np.all(np.isfinite(self.data)) or np.any(self.data < 0):
            raise ValueError("image data must be finite and non-negative")

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "Image":
        arr = np.asarray(arr)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        h, w, c = arr.shape
        return cls(w, h, c, arr)

    def channel(self, c: int) -> "Image":
        return Image(self.width, self.height, 1, self.data[:, :, c : c + 1].copy())

    def to_rgb(self) -> "Image":
        if self.channels == 3:
            return self
        return Image(self.width, self.height, 3, np.repeat(self.data, 3, axis=2))


def quantize_u8(data: np.ndarray) -> np.ndarray:
    """Clamp to [0, 255] and round half-up to uint8."""
    return np.floor(np.clip(data, 0.0, 255.0) + 0.5).astype(np.uint8)


def write_ppm(path, img: Image) -> None:
    """Binary PPM (P6) for 3-channel images, PGM (P5) for 1-channel."""
    magic = b"P6" if img.channels == 3 else b"P5"
    u8 = quantize_u8(img.data)
    if img.channels == 1:
        u8 = u8[:, :, 0]
    with open(path, "wb") as f:
        f.write(magic + b"\n%d %d\n255\n" % (img.width, img.height))
        f.write(u8.tobytes())


def _read_pnm_header(f, path):
    def token():
        tok = b""
        while True:
            ch = f.read(1)
            if not ch:
                raise FormatError(f"{path}: truncated header")
            if ch == b"#":
                while ch not in (b"\n", b""):
                    ch = f.read(1)
                continue
            if ch.isspace():
                if tok:
                    return tok
                continue
            tok += ch

    magic = token()
    width = int(token())
    height = int(token())
    if magic == b"P4":
        return magic, width, height, None
    maxval = int(token())
    return magic, width, height, maxval


def read_ppm(path) -> Image:
    """Read binary PPM (P6) or PGM (P5), max value 255."""
    with open(path, "rb") as f:
        magic, width, height, maxval = _read_pnm_header(f, path)
        if magic not in (b"P5", b"P6"):
            raise FormatError(f"{path}: unsupported magic {magic!r}")
        if maxval != 255:
            raise FormatError(f"{path}: only 8-bit images supported, maxval={maxval}")
        channels = 3 if magic == b"P6" else 1
        raw = f.read(width * height * channels)
        if len(raw) < width * height * channels:
            raise FormatError(f"{path}: truncated pixel data")
    data = np.frombuffer(raw, dtype=np.uint8).reshape(height, width, channels)
    return Image(width, height, channels, data.astype(np.float32))


def write_pbm(path, bits: np.ndarray) -> None:
    """PBM (P4); set bits are written as black per the format's convention."""
    bits = np.asarray(bits, dtype=bool)
    h, w = bits.shape
    packed = np.packbits(bits, axis=1)
    with open(path, "wb") as f:
        f.write(b"P4\n%d %d\n" % (w, h))
        f.write(packed.tobytes())


def read_pbm(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic, width, height, _ = _read_pnm_header(f, path)
        if magic != b"P4":
            raise FormatError(f"{path}: not a P4 PBM")
        row_bytes = (width + 7) // 8
        raw = f.read(row_bytes * height)
        if len(raw) < row_bytes * height:
            raise FormatError(f"{path}: truncated bitmap")
    rows = np.frombuffer(raw, dtype=np.uint8).reshape(height, row_bytes)
    bits = np.unpackbits(rows, axis=1)[:, :width]
    return bits.astype(bool)


# --- lossless float image (FIM1) -------------------------------------------
#
# Little-endian: magic "FIM1"; u32 version=1; u32 channels; u32 width,
# height; then one f32 plane per channel, row-major.

_IMG_HEADER = struct.Struct("<4sIIII")


def write_fim(path, img: Image) -> None:
    with open(path, "wb") as f:
        f.write(_IMG_HEADER.pack(MAGIC_IMAGE, 1, img.channels, img.width, img.height))
        for c in range(img.channels):
            f.write(np.ascontiguousarray(img.data[:, :, c], dtype="<f4").tobytes())


def read_fim(path) -> Image:
    with open(path, "rb") as f:
        head = f.read(_IMG_HEADER.size)
        if len(head) < _IMG_HEADER.size:
            raise FormatError(f"{path}: truncated header")
        magic, version, channels, width, height = _IMG_HEADER.unpack(head)
        if magic != MAGIC_IMAGE:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version != 1:
            raise FormatError(f"{path}: unsupported version {version}")
        planes = []
        for c in range(channels):
            raw = f.read(4 * width * height)
            if len(raw) < 4 * width * height:
                raise FormatError(f"{path}: truncated channel {c}")
            planes.append(np.frombuffer(raw, dtype="<f4").reshape(height, width))
    return Image(width, height, channels, np.stack(planes, axis=2))


def load_image(path) -> Image:
    """Dispatch on file content: FIM1 dump or PPM/PGM."""
    with open(path, "rb") as f:
        magic = f.read(4)
    if magic == MAGIC_IMAGE:
        return read_fim(path)
    return read_ppm(path)
