"""Tiled RGB slide container, tissue masking, patch sampling, downsampling.

Container layout (all integers little-endian):

    magic   4 bytes  b"PTHS"
    version u32      1
    width   u32      padded width, a multiple of tile_size
    height  u32      padded height, a multiple of tile_size
    tile    u32      tile side in pixels
    pixfmt  u8       0 = RGB8
    tiles   row-major, each tile_size*tile_size*3 bytes

Images whose sides are not multiples of the tile size are padded with
white (255), which the tissue mask classifies as background.
"""

from __future__ import annotations

import json
import re
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataFormatError, ShapeError

MAGIC = b"PTHS"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIB")


@dataclass
class SlideContainer:
    """A padded slide image plus its tiling geometry (in-memory form)."""

    image: np.ndarray  # (height, width, 3) uint8, sides multiples of tile_size
    tile_size: int
    slide_id: str = "slide"
    mag: str = "20x"

    @property
    def width(self) -> int:
        return self.image.shape[1]

    @property
    def height(self) -> int:
        return self.image.shape[0]

    @property
    def tiles_x(self) -> int:
        return self.width // self.tile_size

    @property
    def tiles_y(self) -> int:
        return self.height // self.tile_size

    def tile(self, ix: int, iy: int) -> np.ndarray:
        if not (0 <= ix < self.tiles_x and 0 <= iy < self.tiles_y):
            raise ShapeError(f"tile index ({ix}, {iy}) outside {self.tiles_x}x{self.tiles_y}")
        t = self.tile_size
        return self.image[iy * t : (iy + 1) * t, ix * t : (ix + 1) * t]


def _pad_to_tiles(image: np.ndarray, tile_size: int) -> np.ndarray:
    h, w = image.shape[:2]
    ph = (-h) % tile_size
    pw = (-w) % tile_size
    if ph == 0 and pw == 0:
        return image
    return np.pad(image, ((0, ph), (0, pw), (0, 0)), constant_values=255)


def write_container(image: np.ndarray, tile_size: int, path, slide_id: str | None = None) -> SlideContainer:
    """Pad ``image`` to tile multiples and write it; returns the container."""
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise DataFormatError(f"write_container: expected uint8 (H, W, 3), got {img.dtype} {img.shape}")
    if tile_size < 1:
        raise ConfigError("write_container: tile_size must be >= 1")
    img = _pad_to_tiles(img, tile_size)
    path = Path(path)
    sid = slide_id if slide_id is not None else path.stem
    c = SlideContainer(image=img, tile_size=tile_size, slide_id=sid)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, c.width, c.height, tile_size, 0))
        for iy in range(c.tiles_y):
            for ix in range(c.tiles_x):
                fh.write(c.tile(ix, iy).tobytes())
    return c


def read_container(path) -> SlideContainer:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise DataFormatError(f"{path}: truncated header")
    magic, version, width, height, tile, pixfmt = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DataFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise DataFormatError(f"{path}: unsupported version {version}")
    if pixfmt != 0:
        raise DataFormatError(f"{path}: unsupported pixel format {pixfmt}")
    if width % tile or height % tile:
        raise DataFormatError(f"{path}: dimensions {width}x{height} not multiples of tile {tile}")
    n_tiles = (width // tile) * (height // tile)
    expect = _HEADER.size + n_tiles * tile * tile * 3
    if len(raw) != expect:
        raise DataFormatError(f"{path}: length {len(raw)} != expected {expect}")
    tiles = np.frombuffer(raw, dtype=np.uint8, offset=_HEADER.size)
    tiles = tiles.reshape(height // tile, width // tile, tile, tile, 3)
    image = tiles.transpose(0, 2, 1, 3, 4).reshape(height, width, 3).copy()
    return SlideContainer(image=image, tile_size=tile, slide_id=path.stem)


@dataclass
class TissueMask:
    """Per-tile tissue flags plus the thresholds that produced them."""

    tissue: np.ndarray  # (tiles_y, tiles_x) bool
    saturation_min: float
    luminance_max: float
    fraction_min: float


def compute_tissue_mask(
    container: SlideContainer,
    saturation_min: float = 0.05,
    luminance_max: float = 0.9,
    fraction_min: float = 0.10,
) -> TissueMask:
    """Flag a tile as tissue when >= fraction_min of its pixels are colored.

    A pixel counts as colored when its HSV saturation is >= saturation_min
    and its luminance (channel mean / 255) is <= luminance_max, so white
    padding and glare never count.
    """
    img = container.image.astype(np.float64)
    cmax = img.max(axis=2)
    cmin = img.min(axis=2)
    sat = np.where(cmax > 0, (cmax - cmin) / np.where(cmax > 0, cmax, 1.0), 0.0)
    lum = img.mean(axis=2) / 255.0
    colored = (sat >= saturation_min) & (lum <= luminance_max)

    t = container.tile_size
    grid = colored.reshape(container.tiles_y, t, container.tiles_x, t)
    frac = grid.mean(axis=(1, 3))
    return TissueMask(
        tissue=frac >= fraction_min,
        saturation_min=saturation_min,
        luminance_max=luminance_max,
        fraction_min=fraction_min,
    )


@dataclass
class PatchRef:
    """One patch location within a slide; ``label`` rides along when known."""

    id: str
    slide: str
    x: int
    y: int
    side: int
    mag: str = "20x"
    label: str | None = None


def sample_patches(
    container: SlideContainer,
    mask: TissueMask,
    side: int = 256,
    cap: int = 500,
    seed: int = 0,
) -> list[PatchRef]:
    """Uniform sample (without replacement) of non-overlapping tissue patches.

    The slide is divided into a fixed grid of side x side cells; a cell is
    eligible only if every tile it overlaps is tissue. At most ``cap``
    cells are drawn. Patches from one call never overlap by construction.
    """
    t = container.tile_size
    if side < 1 or cap < 0:
        raise ConfigError("sample_patches: side >= 1 and cap >= 0 required")
    if side % t != 0 and t % side != 0:
        raise ConfigError(f"sample_patches: side {side} incompatible with tile {t}")
    if mask.tissue.shape != (container.tiles_y, container.tiles_x):
        raise ShapeError("sample_patches: mask grid does not match container tiling")

    nx = container.width // side
    ny = container.height // side
    eligible: list[tuple[int, int]] = []
    for cy in range(ny):
        for cx in range(nx):
            tx0 = (cx * side) // t
            tx1 = ((cx + 1) * side - 1) // t
            ty0 = (cy * side) // t
            ty1 = ((cy + 1) * side - 1) // t
            if mask.tissue[ty0 : ty1 + 1, tx0 : tx1 + 1].all():
                eligible.append((cx, cy))

    rng = np.random.default_rng(seed)
    count = min(cap, len(eligible))
    chosen = rng.choice(len(eligible), size=count, replace=False) if count else []
    refs = []
    for idx in chosen:
        cx, cy = eligible[int(idx)]
        x, y = cx * side, cy * side
        refs.append(
            PatchRef(
                id=f"{container.slide_id}_{x}_{y}",
                slide=container.slide_id,
                x=x,
                y=y,
                side=side,
                mag=container.mag,
            )
        )
    return refs


def read_patch(container: SlideContainer, ref: PatchRef) -> np.ndarray:
    if ref.x < 0 or ref.y < 0 or ref.x + ref.side > container.width or ref.y + ref.side > container.height:
        raise ShapeError(f"read_patch: patch {ref.id} outside slide bounds")
    return container.image[ref.y : ref.y + ref.side, ref.x : ref.x + ref.side]


_MAG_RE = re.compile(r"^(\d+)x$")


def downsample_2x(container: SlideContainer) -> SlideContainer:
    """Halve both sides by 2x2 box mean, rounding half up."""
    h, w = container.height, container.width
    if h % 2 or w % 2:
        raise ShapeError(f"downsample_2x: odd dimensions {w}x{h}")
    img = container.image.astype(np.uint32)
    quads = img.reshape(h // 2, 2, w // 2, 2, 3).sum(axis=(1, 3))
    down = ((quads + 2) // 4).astype(np.uint8)

    m = _MAG_RE.match(container.mag)
    mag = f"{int(m.group(1)) // 2}x" if m else container.mag
    if down.shape[0] % container.tile_size or down.shape[1] % container.tile_size:
        down = _pad_to_tiles(down, container.tile_size)
    return SlideContainer(
        image=down, tile_size=container.tile_size, slide_id=container.slide_id, mag=mag
    )


def write_manifest(path, refs: list[PatchRef]) -> None:
    """Patch manifest: one JSON object per line, keys sorted."""
    with open(path, "w", encoding="utf-8") as fh:
        for r in refs:
            rec = {"id": r.id, "slide": r.slide, "x": r.x, "y": r.y, "side": r.side, "mag": r.mag}
            if r.label is not None:
                rec["label"] = r.label
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


_REQUIRED = ("id", "slide", "x", "y", "side", "mag")


def read_manifest(path) -> list[PatchRef]:
    refs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataFormatError(f"{path}:{lineno}: invalid JSON: {e.msg}") from e
            missing = [k for k in _REQUIRED if k not in rec]
            if missing:
                raise DataFormatError(f"{path}:{lineno}: missing fields {missing}")
            refs.append(
                PatchRef(
                    id=str(rec["id"]),
                    slide=str(rec["slide"]),
                    x=int(rec["x"]),
                    y=int(rec["y"]),
                    side=int(rec["side"]),
                    mag=str(rec["mag"]),
                    label=str(rec["label"]) if "label" in rec else None,
                )
            )
    return refs
