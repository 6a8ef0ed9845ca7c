"""Frame decoding/encoding, label and flow serialization, Gaussian pre-smoothing."""

from __future__ import annotations

import colorsys
import math
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
from scipy import ndimage

if TYPE_CHECKING:
    from .fhseg import Segmentation
    from .temporal import FlowMap, SemanticMap

LABEL_MAGIC = b"SEGL"


class FormatError(ValueError):
    """Raised when a file is not in a supported raster format."""

    def __init__(self, message: str, fmt: str = "unknown"):
        super().__init__(f"{fmt}: {message}")
        self.format = fmt


@dataclass
class Frame:
    """A dense RGB raster, stored as a float64 array of shape (height, width, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"frame pixels must have shape (H, W, 3), got {px.shape}")
        if px.shape[0] < 2 or px.shape[1] < 2:
            raise ValueError(f"frame must be at least 2x2, got {px.shape[1]}x{px.shape[0]}")
        if not np.all(np.isfinite(px)) or px.min() < 0.0 or px.max() > 255.0:
            raise ValueError("frame channels must be finite and within [0, 255]")
        self.pixels = px

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape[:2]


# --- netpbm -----------------------------------------------------------------

def _read_netpbm_header(data: bytes, path) -> tuple[str, list[int], int]:
    """Parse magic + integer header fields; returns (magic, fields, payload offset)."""
    if len(data) < 2:
        raise FormatError(f"file too short: {path}", "netpbm")
    magic = data[:2].decode("latin-1")
    nfields = {"P5": 3, "P6": 3, "P2": 3, "P3": 3}.get(magic)
    if nfields is None:
        raise FormatError(f"unsupported magic {magic!r} in {path}", "netpbm")
    fields: list[int] = []
    pos = 2
    n = len(data)
    while len(fields) < nfields:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and data[pos : pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise FormatError(f"truncated or malformed header in {path}", magic)
        fields.append(int(data[start:pos]))
    if pos >= n or not data[pos : pos + 1].isspace():
        raise FormatError(f"truncated header in {path}", magic)
    return magic, fields, pos + 1


def _read_netpbm(path) -> tuple[str, np.ndarray, int]:
    data = Path(path).read_bytes()
    magic, (width, height, maxval), offset = _read_netpbm_header(data, path)
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise FormatError(f"invalid dimensions or maxval in {path}", magic)
    channels = 3 if magic in ("P6", "P3") else 1
    count = width * height * channels
    if magic in ("P2", "P3"):
        values = np.array(data[offset:].split(), dtype=np.int64)
        if values.size < count:
            raise FormatError(f"truncated pixel data in {path}", magic)
        arr = values[:count]
    else:
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
        nbytes = count * dtype.itemsize
        if len(data) - offset < nbytes:
            raise FormatError(f"truncated pixel data in {path}", magic)
        arr = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
    shape = (height, width, 3) if channels == 3 else (height, width)
    return magic, arr.reshape(shape), maxval


def load_frame(path) -> Frame:
    """Decode a PPM (P6/P3) or, when Pillow is available, a PNG file into a Frame.

    16-bit samples are rescaled to [0, 255]; 8-bit samples are kept exactly.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head.startswith(b"\x89PNG"):
        return _load_png(path)
    magic, arr, maxval = _read_netpbm(path)
    if magic not in ("P6", "P3"):
        raise FormatError(f"expected a color PPM, got {magic} in {path}", magic)
    pixels = arr.astype(np.float64)
    if maxval != 255:
        pixels *= 255.0 / maxval
    return Frame(pixels)


def _load_png(path: Path) -> Frame:
    try:
        from PIL import Image
    except ImportError as exc:  # pragma: no cover
        raise FormatError("PNG decoding requires Pillow", "PNG") from exc
    with Image.open(path) as im:
        if im.mode in ("I;16", "I;16B", "I"):
            arr = np.asarray(im, dtype=np.float64) * (255.0 / 65535.0)
            arr = np.repeat(arr[:, :, None], 3, axis=2)
        else:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return Frame(arr)


def save_ppm(path, pixels: np.ndarray) -> None:
    """Write an (H, W, 3) array as binary 8-bit PPM, rounding and clipping to [0, 255]."""
    arr = np.clip(np.rint(np.asarray(pixels, dtype=np.float64)), 0, 255).astype(np.uint8)
    h, w = arr.shape[:2]
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(np.ascontiguousarray(arr).tobytes())


def save_pgm(path, values: np.ndarray) -> None:
    arr = np.asarray(values)
    if arr.min(initial=0) < 0 or arr.max(initial=0) > 255:
        raise ValueError("PGM values must lie in [0, 255]")
    arr = arr.astype(np.uint8)
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(np.ascontiguousarray(arr).tobytes())


def load_pgm(path) -> np.ndarray:
    """Read an 8-bit (or 16-bit) grayscale PGM as an integer array of raw sample values."""
    magic, arr, _ = _read_netpbm(path)
    if magic not in ("P5", "P2"):
        raise FormatError(f"expected a grayscale PGM, got {magic} in {path}", magic)
    return arr.astype(np.int64)


# --- smoothing ----------------------------------------------------------------

def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_smooth(frame: Frame, sigma: float) -> Frame:
    """Separable per-channel Gaussian blur, radius ceil(3*sigma), clamp-to-edge borders.

    ``sigma < 0.01`` is treated as the identity.
    """
    if not math.isfinite(sigma) or sigma < 0:
        raise ValueError(f"sigma must be finite and >= 0, got {sigma}")
    if sigma < 0.01:
        return frame
    kernel = gaussian_kernel(sigma)
    out = ndimage.correlate1d(frame.pixels, kernel, axis=0, mode="nearest")
    out = ndimage.correlate1d(out, kernel, axis=1, mode="nearest")
    # rounding can push a constant 255 image a few ulps past the bound
    np.clip(out, 0.0, 255.0, out=out)
    return Frame(out)


# --- label maps ------------------------------------------------------------------

def encode_label_map(labels: np.ndarray) -> bytes:
    labels = np.asarray(labels)
    h, w = labels.shape
    if w > 0xFFFF or h > 0xFFFF:
        raise ValueError("label map dimensions must fit in 16 bits")
    if labels.size and (labels.min() < 0 or labels.max() > 0xFFFFFFFF):
        raise ValueError("labels must fit in unsigned 32 bits")
    header = LABEL_MAGIC + struct.pack("<HH", w, h)
    return header + labels.astype("<u4").tobytes()


def decode_label_map(data: bytes) -> np.ndarray:
    if len(data) < 8 or data[:4] != LABEL_MAGIC:
        raise FormatError("missing SEGL header", "SEGL")
    w, h = struct.unpack("<HH", data[4:8])
    if len(data) != 8 + 4 * w * h:
        raise FormatError(f"payload size mismatch for {w}x{h}", "SEGL")
    return np.frombuffer(data, dtype="<u4", offset=8).reshape(h, w).astype(np.int64)


def read_label_map(path) -> np.ndarray:
    return decode_label_map(Path(path).read_bytes())


def label_colors(labels: np.ndarray) -> np.ndarray:
    """Deterministic pseudo-random RGB color per label id (a pure function of the id)."""
    x = np.asarray(labels).astype(np.uint64)
    # splitmix64 finalizer
    with np.errstate(over="ignore"):
        x = x + np.uint64(0x9E3779B97F4A7C15)
        x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        x = x ^ (x >> np.uint64(31))
    rgb = np.stack(
        [(x >> np.uint64(s)) & np.uint64(0xFF) for s in (0, 8, 16)], axis=-1
    ).astype(np.uint8)
    return rgb


def colorize_labels(labels: np.ndarray) -> np.ndarray:
    uniq, inv = np.unique(labels, return_inverse=True)
    return label_colors(uniq)[inv.reshape(labels.shape)]


def write_label_map(seg: "Segmentation | np.ndarray", path, color_path=None) -> None:
    """Write the raw SEGL label file and, optionally, a colorized PPM/PNG next to it."""
    labels = seg.labels if hasattr(seg, "labels") else np.asarray(seg)
    Path(path).write_bytes(encode_label_map(labels))
    if color_path is not None:
        save_image(color_path, colorize_labels(labels))


def save_image(path, rgb: np.ndarray) -> None:
    """Save RGB as PPM, or PNG when the suffix asks for it."""
    path = Path(path)
    if path.suffix.lower() == ".png":
        _save_png(path, rgb)
    else:
        save_ppm(path, rgb)


def _save_png(path: Path, rgb: np.ndarray) -> None:
    # minimal deterministic encoder; avoids depending on Pillow for output
    arr = np.ascontiguousarray(np.clip(np.rint(rgb), 0, 255).astype(np.uint8))
    h, w = arr.shape[:2]
    raw = b"".join(b"\x00" + arr[y].tobytes() for y in range(h))

    def chunk(tag: bytes, body: bytes) -> bytes:
        return struct.pack(">I", len(body)) + tag + body + struct.pack(">I", zlib.crc32(tag + body))

    png = b"\x89PNG\r\n\x1a\n"
    png += chunk(b"IHDR", struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0))
    png += chunk(b"IDAT", zlib.compress(raw, 6))
    png += chunk(b"IEND", b"")
    path.write_bytes(png)


# --- flow ---------------------------------------------------------------------------

def format_flow(flow: "FlowMap") -> str:
    lines = ["label,dx,dy,valid"]
    for label, dx, dy, valid in flow.rows():
        lines.append(f"{label},{dx!r},{dy!r},{int(valid)}")
    return "\n".join(lines) + "\n"


def write_flow(flow: "FlowMap", path, viz_path=None, shape=None, labels=None) -> None:
    """Write flow as CSV ``label,dx,dy,valid``; optionally a color-wheel raster.

    The visualization needs the label map the flow was computed on.
    """
    Path(path).write_text(format_flow(flow))
    if viz_path is not None:
        if labels is None:
            raise ValueError("flow visualization needs the label map")
        save_image(viz_path, flow_to_color(flow, labels))


def read_flow(path) -> list[tuple[int, float, float, bool]]:
    rows = []
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != "label,dx,dy,valid":
        raise FormatError("missing flow CSV header", "flow-csv")
    for line in lines[1:]:
        label, dx, dy, valid = line.split(",")
        rows.append((int(label), float(dx), float(dy), valid == "1"))
    return rows


def flow_to_color(flow: "FlowMap", labels: np.ndarray, max_mag: float | None = None) -> np.ndarray:
    """Color-wheel rendering: hue from direction, saturation from magnitude, invalid = black."""
    table = {label: (dx, dy, valid) for label, dx, dy, valid in flow.rows()}
    uniq, inv = np.unique(labels, return_inverse=True)
    dx = np.array([table.get(int(u), (0.0, 0.0, False))[0] for u in uniq])
    dy = np.array([table.get(int(u), (0.0, 0.0, False))[1] for u in uniq])
    valid = np.array([table.get(int(u), (0.0, 0.0, False))[2] for u in uniq], dtype=bool)
    mag = np.hypot(dx, dy)
    if max_mag is None:
        max_mag = float(mag[valid].max()) if valid.any() else 1.0
    max_mag = max(max_mag, 1e-9)
    hue = (np.arctan2(dy, dx) / (2 * np.pi)) % 1.0
    sat = np.clip(mag / max_mag, 0.0, 1.0)
    rgb = np.array(
        [colorsys.hsv_to_rgb(h, s, 1.0 if v else 0.0) for h, s, v in zip(hue, sat, valid)]
    ).reshape(-1, 3) * 255.0
    return rgb[inv.reshape(labels.shape)]
