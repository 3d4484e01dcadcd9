"""8-bit rasters, PNM I/O, warping, histogram matching and difference scoring."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..errors import ParseError, ValidationError
from ..geom import rasterize_polygon


@dataclass(frozen=True, eq=False)
class Raster:
    pixels: np.ndarray  # (height, width, channels) uint8

    def __post_init__(self):
        p = np.asarray(self.pixels)
        if p.ndim == 2:
            p = p[:, :, None]
        if p.ndim != 3 or p.shape[2] not in (1, 3):
            raise ValidationError(f"raster must be HxW, HxWx1 or HxWx3, got shape {p.shape}")
        if p.dtype != np.uint8:
            if np.any(p < 0) or np.any(p > 255):
                raise ValidationError("raster samples must lie in [0, 255]")
            p = p.astype(np.uint8)
        p = np.ascontiguousarray(p)
        p.setflags(write=False)
        object.__setattr__(self, "pixels", p)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    def __eq__(self, other):
        return isinstance(other, Raster) and np.array_equal(self.pixels, other.pixels)


# -- PNM ---------------------------------------------------------------------

def _tokens(data: bytes, path):
    """Header tokens of a PNM file and the offset just past the last one."""
    toks = []
    i = 2
    n = len(data)
    while len(toks) < 3:
        while i < n and data[i:i + 1].isspace():
            i += 1
        if i < n and data[i:i + 1] == b"#":
            while i < n and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < n and not data[i:i + 1].isspace() and data[i:i + 1] != b"#":
            i += 1
        if start == i:
            raise ParseError("truncated PNM header", path)
        toks.append(data[start:i])
    return toks, i + 1


def read_pnm(path) -> Raster:
    """Read P2/P3 (ASCII) or P5/P6 (binary) 8-bit images."""
    path = Path(path)
    data = path.read_bytes()
    magic = data[:2]
    if magic not in (b"P2", b"P3", b"P5", b"P6"):
        raise ParseError(f"unsupported image magic {magic!r} (expected P2/P3/P5/P6)", path)
    try:
        (w, h, maxval), offset = _tokens(data, path)
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError:
        raise ParseError("malformed PNM header", path) from None
    if maxval < 1 or maxval > 255:
        raise ParseError(f"only 8-bit images are supported (maxval {maxval})", path)
    ch = 3 if magic in (b"P3", b"P6") else 1
    count = w * h * ch
    if magic in (b"P5", b"P6"):
        body = np.frombuffer(data, dtype=np.uint8, count=-1, offset=offset)
        if body.size < count:
            raise ParseError(f"image data truncated: {body.size} of {count} samples", path)
        arr = body[:count].copy()
    else:
        body = data[offset - 1:]
        text = b" ".join(line.split(b"#", 1)[0] for line in body.splitlines())
        vals = text.split()
        if len(vals) < count:
            raise ParseError(f"image data truncated: {len(vals)} of {count} samples", path)
        try:
            arr = np.array([int(v) for v in vals[:count]], dtype=np.int64)
        except ValueError:
            raise ParseError("non-integer sample in ASCII image", path) from None
    if maxval != 255:
        arr = np.round(arr.astype(np.float64) * 255.0 / maxval)
    if np.any(arr > 255) or np.any(arr < 0):
        raise ParseError("sample exceeds maxval", path)
    return Raster(arr.astype(np.uint8).reshape(h, w, ch))


def write_pnm(path, raster: Raster, binary: bool = True) -> None:
    ch = raster.channels
    magic = {(1, False): "P2", (3, False): "P3", (1, True): "P5", (3, True): "P6"}[(ch, binary)]
    header = f"{magic}\n{raster.width} {raster.height}\n255\n".encode()
    if binary:
        body = raster.pixels.tobytes()
    else:
        rows = raster.pixels.reshape(raster.height, -1)
        body = ("\n".join(" ".join(str(int(v)) for v in row) for row in rows) + "\n").encode()
    Path(path).write_bytes(header + body)


# -- sampling and warping ----------------------------------------------------

def bilinear_sample(image: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Sample (H, W, C) float image at pixel-centre coordinates; outside -> 0."""
    h, w, c = image.shape
    # pixel (i, j) has its centre at (j + 0.5, i + 0.5)
    fx = x - 0.5
    fy = y - 0.5
    inside = (fx >= -0.5) & (fx <= w - 0.5) & (fy >= -0.5) & (fy <= h - 0.5)
    fx = np.clip(fx, 0, w - 1)
    fy = np.clip(fy, 0, h - 1)
    x0 = np.floor(fx).astype(np.int64)
    y0 = np.floor(fy).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    ax = (fx - x0)[..., None]
    ay = (fy - y0)[..., None]
    top = image[y0, x0] * (1 - ax) + image[y0, x1] * ax
    bot = image[y1, x0] * (1 - ax) + image[y1, x1] * ax
    out = top * (1 - ay) + bot * ay
    out[~inside] = 0.0
    return out


def warp(image: Raster, mapping, out_size: tuple[int, int]) -> Raster:
    """Inverse-mapping warp: output pixel p takes the source value at ``mapping(p)``.

    ``mapping`` is anything with ``apply`` on (n, 2) arrays, e.g. a fitted
    ThinPlateSpline from output coordinates to source coordinates.
    """
    w, h = out_size
    gx, gy = np.meshgrid(np.arange(w) + 0.5, np.arange(h) + 0.5)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    src = mapping.apply(pts)
    vals = bilinear_sample(image.pixels.astype(np.float64), src[:, 0], src[:, 1])
    return Raster(np.clip(np.rint(vals), 0, 255).astype(np.uint8).reshape(h, w, image.channels))


tps_warp = warp


# -- photometry ----------------------------------------------------------------

def histogram_match(src: Raster, ref: Raster) -> Raster:
    """Per-channel monotone CDF matching of ``src`` onto ``ref``'s histogram.

    Every source level maps to the smallest reference level whose CDF reaches
    the source level's CDF.
    """
    if src.channels != ref.channels:
        raise ValidationError(f"channel mismatch: {src.channels} vs {ref.channels}")
    out = np.empty_like(src.pixels)
    for c in range(src.channels):
        s = src.pixels[:, :, c].ravel()
        r = ref.pixels[:, :, c].ravel()
        s_cdf = np.cumsum(np.bincount(s, minlength=256)) / s.size
        r_cdf = np.cumsum(np.bincount(r, minlength=256)) / r.size
        lut = np.searchsorted(r_cdf, s_cdf - 1e-12, side="left")
        lut = np.clip(lut, 0, 255).astype(np.uint8)
        out[:, :, c] = lut[src.pixels[:, :, c]]
    return Raster(out)


def difference_norm(a: Raster, b: Raster) -> np.ndarray:
    """Per-pixel Euclidean colour distance, rounded half down and clamped to 255."""
    if a.pixels.shape != b.pixels.shape:
        raise ValidationError(f"dimension mismatch: {a.pixels.shape} vs {b.pixels.shape}")
    d = a.pixels.astype(np.float64) - b.pixels.astype(np.float64)
    norm = np.sqrt((d * d).sum(axis=2))
    return np.minimum(np.ceil(norm - 0.5), 255.0).astype(np.uint8)


def photometric_difference(a: Raster, b: Raster, mask: Optional[Sequence] = None):
    """Difference image and j, the lower median of its values inside ``mask``.

    ``mask`` is a polygon in pixel coordinates or a boolean (H, W) array;
    None means the whole frame. An empty mask gives j = 255 (worst).
    """
    if a.channels != 3 or b.channels != 3:
        raise ValidationError("photometric difference needs 3-channel images")
    norm = difference_norm(a, b)
    if mask is None:
        sel = np.ones(norm.shape, dtype=bool)
    elif isinstance(mask, np.ndarray) and mask.dtype == bool:
        if mask.shape != norm.shape:
            raise ValidationError(f"mask shape {mask.shape} != image shape {norm.shape}")
        sel = mask
    else:
        sel = rasterize_polygon(mask, a.width, a.height)
    vals = np.sort(norm[sel])
    j = 255 if vals.size == 0 else int(vals[(vals.size - 1) // 2])
    return Raster(norm), j
