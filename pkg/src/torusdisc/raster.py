"""Log-scale density images of measures on 2-d grids.

Pixel grids use a y-up convention: row 0 of a value grid is the bottom of the
torus (smallest y). Image writers flip rows so files display with y up.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from ._io import atomic_write_bytes, atomic_write_text, comment_header
from .measures import DiscreteMeasure, _axis_counts

EMPTY = -np.inf

DEFAULT_STOPS = (
    (0, 0, 255),
    (0, 255, 255),
    (0, 255, 0),
    (255, 255, 0),
    (255, 0, 0),
)


@dataclass(frozen=True)
class RasterSpec:
    width: int = 128
    height: int = 128
    colormap: tuple = field(default=DEFAULT_STOPS)
    floor_decades: float = 6.0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("raster needs at least one pixel")
        if len(self.colormap) < 2:
            raise ValueError("colormap needs at least two stops")
        if not self.floor_decades > 0:
            raise ValueError("floor_decades must be positive")
        object.__setattr__(self, "colormap", tuple(tuple(int(v) for v in c) for c in self.colormap))

    @classmethod
    def from_dict(cls, d: dict | None) -> "RasterSpec":
        d = dict(d or {})
        if "colormap" in d:
            d["colormap"] = tuple(tuple(c) for c in d["colormap"])
        return cls(**d)


def pixel_masses(mu: DiscreteMeasure, spec: RasterSpec) -> np.ndarray:
    """Total weight per pixel, shape ``(height, width)``, row 0 at the bottom."""
    g = mu.grid
    if g.n != 2:
        raise ValueError(f"rasterize needs a 2-d measure, got n={g.n}")
    if mu.is_uniform:
        cx = _axis_counts(g.N, spec.width)
        cy = _axis_counts(g.N, spec.height)
        return np.array(
            [[int(a) * int(b) / g.size for a in cx] for b in cy], dtype=np.float64
        )
    idx = mu.indices()
    # exact integer floor(i * width / N) keeps pixel edges half-open
    col = (idx[:, 0] * spec.width) // g.N
    row = (idx[:, 1] * spec.height) // g.N
    flat = row * spec.width + col
    return np.bincount(flat, weights=mu.weights, minlength=spec.width * spec.height).reshape(
        spec.height, spec.width
    )


def rasterize(mu: DiscreteMeasure, spec: RasterSpec = RasterSpec()) -> np.ndarray:
    """log10 of pixel masses; empty pixels hold ``-inf``."""
    m = pixel_masses(mu, spec)
    out = np.full(m.shape, EMPTY)
    pos = m > 0
    out[pos] = np.log10(m[pos])
    return out


@dataclass(frozen=True)
class ScaleBar:
    vmin: float
    vmax: float
    stops: tuple

    def describe(self) -> str:
        return f"log10 scale [{self.vmin!r}, {self.vmax!r}] stops={len(self.stops)}"


def colorize(values: np.ndarray, spec: RasterSpec = RasterSpec()):
    """Map log10 values to RGB over ``[max - floor_decades, max]``.

    Returns ``(rgb, scale)`` where ``rgb`` has shape ``(h, w, 3)`` in the same
    row orientation as ``values``. Empty pixels take the lowest stop.
    """
    values = np.asarray(values, dtype=np.float64)
    finite = np.isfinite(values)
    vmax = float(values[finite].max()) if finite.any() else 0.0
    vmin = vmax - spec.floor_decades
    stops = np.array(spec.colormap, dtype=np.float64)
    t = np.zeros(values.shape)
    t[finite] = np.clip((values[finite] - vmin) / spec.floor_decades, 0.0, 1.0)
    pos = t * (len(stops) - 1)
    seg = np.minimum(pos.astype(np.int64), len(stops) - 2)
    frac = (pos - seg)[..., None]
    rgb = stops[seg] * (1.0 - frac) + stops[seg + 1] * frac
    rgb = np.clip(np.rint(rgb), 0, 255).astype(np.uint8)
    rgb[~finite] = np.array(spec.colormap[0], dtype=np.uint8)
    return rgb, ScaleBar(vmin, vmax, spec.colormap)


def ppm_bytes(rgb: np.ndarray, comments=()) -> bytes:
    """Binary P6 image; ``rgb`` is y-up and is flipped to top-down rows here."""
    h, w, _ = rgb.shape
    head = "P6\n" + "".join(f"# {c}\n" for c in comments) + f"{w} {h}\n255\n"
    return head.encode("ascii") + np.ascontiguousarray(rgb[::-1]).tobytes()


def write_ppm(path, rgb: np.ndarray, comments=()) -> None:
    atomic_write_bytes(path, ppm_bytes(rgb, comments))


def write_png(path, rgb: np.ndarray, comments=()) -> bool:
    """Write a PNG if Pillow is installed; returns False when it is not."""
    try:
        from PIL import Image, PngImagePlugin
    except ImportError:
        return False
    info = PngImagePlugin.PngInfo()
    for i, c in enumerate(comments):
        info.add_text(f"comment{i}", c)
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(rgb[::-1]), "RGB").save(buf, format="PNG", pnginfo=info)
    atomic_write_bytes(path, buf.getvalue())
    return True


def values_to_csv(values: np.ndarray, header=()) -> str:
    """Rows ``row,col,log10_mass`` (row 0 = bottom); empty pixels are omitted."""
    buf = io.StringIO()
    buf.write(comment_header(list(header) + ["row 0 is the bottom of the torus (y up)"]))
    buf.write("row,col,log10_mass\n")
    rows, cols = np.nonzero(np.isfinite(values))
    for r, c in zip(rows.tolist(), cols.tolist()):
        buf.write(f"{r},{c},{float(values[r, c])!r}\n")
    return buf.getvalue()


def write_values_csv(path, values: np.ndarray, header=()) -> None:
    atomic_write_text(path, values_to_csv(values, header))


def render_files(mu: DiscreteMeasure, spec: RasterSpec, stem, header=(), png: bool = True):
    """Write ``stem.ppm``, ``stem.png`` (optional) and ``stem_pixels.csv``; return the values."""
    stem = str(stem)
    values = rasterize(mu, spec)
    rgb, scale = colorize(values, spec)
    comments = list(header) + [scale.describe(), "y axis up: bottom image row is y = 0"]
    write_ppm(stem + ".ppm", rgb, comments)
    if png:
        write_png(stem + ".png", rgb, comments)
    write_values_csv(stem + "_pixels.csv", values, header)
    return values, scale


def log_sum(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pixelwise ``log10(10**a + 10**b)`` treating ``-inf`` as empty."""
    with np.errstate(divide="ignore"):
        return np.log10(np.power(10.0, a) + np.power(10.0, b))

