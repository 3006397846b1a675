"""Image file I/O and desk-scale dataset management.

PGM (P5) and PPM (P6) are parsed and written by hand, bit-exact per the
Netpbm conventions; PNG (8-bit gray/RGB) is delegated to Pillow. Loading
yields clean-role float buffers in [0, 255]; saving clips to [0, 255] and
rounds half to even.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .exceptions import ImageFormatError, SpecError
from .image import ROLE_CLEAN, ImageBuffer

_EXTENSIONS = (".pgm", ".ppm", ".png")


def _parse_netpbm(raw: bytes, path) -> np.ndarray:
    """Binary PGM/PPM: magic, whitespace/comment-separated header, raster."""
    if raw[:2] == b"P5":
        channels = 1
    elif raw[:2] == b"P6":
        channels = 3
    else:
        raise ImageFormatError("unknown-format", f"{path}: unrecognised magic {raw[:2]!r}")
    pos = 2
    fields = []
    while len(fields) < 3:
        if pos >= len(raw):
            raise ImageFormatError("truncated-file", f"{path}: header ended early")
        ch = raw[pos:pos + 1]
        if ch == b"#":
            nl = raw.find(b"\n", pos)
            pos = len(raw) if nl < 0 else nl + 1
        elif ch.isspace():
            pos += 1
        else:
            end = pos
            while end < len(raw) and not raw[end:end + 1].isspace() and raw[end:end + 1] != b"#":
                end += 1
            tok = raw[pos:end]
            if not tok.isdigit():
                raise ImageFormatError("unknown-format", f"{path}: bad header token {tok!r}")
            fields.append(int(tok))
            pos = end
    if pos >= len(raw) or not raw[pos:pos + 1].isspace():
        raise ImageFormatError("truncated-file", f"{path}: missing raster separator")
    pos += 1
    width, height, maxval = fields
    if maxval > 255:
        raise ImageFormatError("unsupported-bit-depth",
                               f"{path}: maxval {maxval} exceeds 8-bit range")
    if maxval < 1:
        raise ImageFormatError("unknown-format", f"{path}: invalid maxval {maxval}")
    need = width * height * channels
    raster = raw[pos:pos + need]
    if len(raster) < need:
        raise ImageFormatError("truncated-file",
                               f"{path}: raster has {len(raster)} of {need} bytes")
    arr = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, channels)
    return arr.astype(np.float64)


def _load_png(path) -> np.ndarray:
    with PILImage.open(path) as im:
        if im.mode in ("I", "I;16", "I;16B", "I;16L", "F"):
            raise ImageFormatError("unsupported-bit-depth",
                                   f"{path}: PNG mode {im.mode} is not 8-bit")
        if im.mode == "P":
            im = im.convert("RGB")
        if im.mode not in ("L", "RGB"):
            raise ImageFormatError("unknown-format",
                                   f"{path}: unsupported PNG mode {im.mode}")
        arr = np.asarray(im, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr


def load_image(path) -> ImageBuffer:
    """Read a PGM/PPM/PNG file as a clean-role buffer of floats in [0, 255]."""
    path = Path(path)
    if not path.exists():
        raise ImageFormatError("input-not-found", f"{path}: no such file")
    if path.suffix.lower() == ".png":
        arr = _load_png(path)
    else:
        raw = path.read_bytes()
        if raw[:8] == b"\x89PNG\r\n\x1a\n":
            arr = _load_png(path)
        else:
            arr = _parse_netpbm(raw, path)
    return ImageBuffer(arr, ROLE_CLEAN, {"source": str(path)})


def quantize(data: np.ndarray) -> np.ndarray:
    """Clip to [0, 255] and round half to even, as 8-bit samples."""
    return np.rint(np.clip(data, 0.0, 255.0)).astype(np.uint8)


def save_image(img: ImageBuffer, path) -> None:
    """Write as 8-bit PGM/PPM/PNG selected by extension.

    A gray buffer written as PPM is replicated to three channels; a color
    buffer written as PGM is converted with BT.601 luma weights.
    """
    path = Path(path)
    ext = path.suffix.lower()
    if ext not in _EXTENSIONS:
        raise ImageFormatError("unknown-format", f"{path}: unsupported extension {ext!r}")
    data = img.data
    if ext == ".pgm" and img.channels == 3:
        data = img.gray()[:, :, None]
    elif ext == ".ppm" and img.channels == 1:
        data = np.repeat(data, 3, axis=2)
    q = quantize(data)
    h, w, c = q.shape
    if ext == ".pgm":
        path.write_bytes(b"P5\n%d %d\n255\n" % (w, h) + q[:, :, 0].tobytes())
    elif ext == ".ppm":
        path.write_bytes(b"P6\n%d %d\n255\n" % (w, h) + q.tobytes())
    else:
        mode = "L" if c == 1 else "RGB"
        PILImage.fromarray(q[:, :, 0] if c == 1 else q, mode=mode).save(path)


def center_crop(img: ImageBuffer, size: int) -> ImageBuffer:
    """Centered square window; offsets are floor((dim - size) / 2)."""
    if size > img.height or size > img.width:
        raise SpecError(f"crop {size} exceeds image dimensions {img.height}x{img.width}")
    top = (img.height - size) // 2
    left = (img.width - size) // 2
    return ImageBuffer(img.data[top:top + size, left:left + size], img.role,
                       {**img.meta, "crop": [top, left, size]})


def to_grayscale(img: ImageBuffer) -> ImageBuffer:
    if img.channels == 1:
        return img
    return ImageBuffer(img.gray()[:, :, None], img.role, img.meta)


@dataclass
class Dataset:
    """Named, ordered list of image files with a channel mode and crop."""

    name: str
    entries: list[tuple[str, Path]]
    channel_mode: str = "gray"
    crop: int | None = None

    def __post_init__(self):
        ids = [i for i, _ in self.entries]
        if len(set(ids)) != len(ids):
            raise SpecError(f"dataset {self.name!r} has duplicate image ids")
        if self.channel_mode not in ("gray", "color"):
            raise SpecError(f"channel_mode must be gray or color, got {self.channel_mode!r}")

    def __len__(self) -> int:
        return len(self.entries)

    @classmethod
    def from_dir(cls, directory, channel_mode: str = "gray", crop: int | None = None) -> "Dataset":
        directory = Path(directory)
        if not directory.is_dir():
            raise ImageFormatError("input-not-found", f"{directory}: not a directory")
        paths = sorted(p for p in directory.iterdir() if p.suffix.lower() in _EXTENSIONS)
        if not paths:
            raise SpecError(f"{directory}: no {'/'.join(_EXTENSIONS)} images found")
        return cls(directory.name, [(p.stem, p) for p in paths], channel_mode, crop)

    def load(self, index: int) -> tuple[str, ImageBuffer]:
        image_id, path = self.entries[index]
        img = load_image(path)
        if self.channel_mode == "gray":
            img = to_grayscale(img)
        if self.crop:
            img = center_crop(img, self.crop)
        return image_id, img

    def load_all(self) -> list[tuple[str, ImageBuffer]]:
        return [self.load(i) for i in range(len(self))]


# -- synthetic desk images ---------------------------------------------------

def synthetic_image(index: int, size: int = 64, seed: int = 0) -> ImageBuffer:
    """Deterministic structured test image: smooth fields, shapes, texture.

    Content varies with ``index``. Values stay within roughly [25, 230] so
    that moderate noise neither clips nor dominates the signal.
    """
    from .rng import child_rng

    rng = child_rng(seed, "synthetic", index)
    yy, xx = np.mgrid[0:size, 0:size] / float(size)
    base = 110.0 + 60.0 * np.sin(2 * np.pi * ((0.7 + 0.3 * (index % 3)) * xx
                                              + 0.5 * yy * (1 + index % 2)))
    base += 35.0 * np.cos(2 * np.pi * (1.3 * yy - 0.4 * xx + 0.13 * index))
    for _ in range(3 + index % 3):
        cy, cx = rng.random(2)
        r = 0.08 + 0.18 * rng.random()
        lvl = -60.0 + 120.0 * rng.random()
        mask = (yy - cy) ** 2 + (xx - cx) ** 2 < r * r
        base[mask] += lvl
    # mild smoothed texture
    tex = rng.standard_normal((size, size))
    for axis in (0, 1):
        tex = (np.roll(tex, 1, axis) + tex + np.roll(tex, -1, axis)) / 3.0
    base += 6.0 * tex
    lo, hi = base.min(), base.max()
    base = 25.0 + (base - lo) * (205.0 / max(hi - lo, 1e-9))
    return ImageBuffer(base, ROLE_CLEAN, {"synthetic": index})


def write_desk_set(directory, count: int = 5, size: int = 64, seed: int = 0) -> Dataset:
    """Materialize a deterministic desk-scale dataset of PGM images."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i in range(count):
        save_image(synthetic_image(i, size, seed), directory / f"desk{i:02d}.pgm")
    return Dataset.from_dir(directory, "gray")
