"""Deterministic map exports: per-channel PNGs, a composite top-down render and a raw binary dump."""

from __future__ import annotations

import colorsys
import io
import json
import struct
import zlib
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from .perception import SemanticMap
from .world import WorldGrid

Cell = tuple[int, int]

MAGIC = b"EIFMAP01"
# header: magic, uint32 channels, uint32 height, uint32 width, float64 cell size,
# uint32 n_objects, uint32 name-blob length, then UTF-8 JSON list of channel names.
# Body: float32 little-endian, channel-major then row-major.
_HEADER = struct.Struct("<8sIIIdII")

UNEXPLORED = (32, 32, 32)
FREE = (235, 235, 235)
OBSTACLE = (90, 90, 90)
PATH = (220, 20, 60)
START = (20, 120, 220)


def category_color(name: str) -> tuple[int, int, int]:
    """Stable color derived from the category name alone."""
    h = zlib.crc32(name.encode("utf-8"))
    hue = (h % 360) / 360.0
    sat = 0.55 + ((h >> 9) % 40) / 100.0
    val = 0.65 + ((h >> 17) % 30) / 100.0
    r, g, b = colorsys.hsv_to_rgb(hue, sat, val)
    return (int(r * 255), int(g * 255), int(b * 255))


def png_bytes(arr: np.ndarray, scale: int = 4) -> bytes:
    """PNG encoding of a uint8 grayscale or RGB array, upscaled by pixel repetition."""
    if scale > 1:
        arr = np.repeat(np.repeat(arr, scale, axis=0), scale, axis=1)
    mode = "L" if arr.ndim == 2 else "RGB"
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(arr, dtype=np.uint8), mode=mode).save(buf, format="PNG", optimize=False)
    return buf.getvalue()


def _save_png(arr: np.ndarray, path: Path, scale: int) -> None:
    path.write_bytes(png_bytes(arr, scale))


def channel_image(semantic_map: SemanticMap, index: int) -> np.ndarray:
    """Grayscale uint8 image of one channel (row y, column x)."""
    ch = np.clip(semantic_map.grid[index], 0.0, 1.0)
    return np.round(ch * 255).astype(np.uint8)


def composite(semantic_map: SemanticMap, path: Sequence[Cell] = (), start: Cell | None = None) -> np.ndarray:
    """RGB top-down render; later channels paint over earlier ones, landmarks under objects."""
    h, w = semantic_map.shape
    img = np.empty((h, w, 3), dtype=np.uint8)
    img[:] = UNEXPLORED
    img[semantic_map.explored] = FREE
    img[semantic_map.obstacle > 0] = OBSTACLE
    n_obj = semantic_map.n_objects
    order = list(range(n_obj, len(semantic_map.channels) - 1)) + list(range(n_obj))
    for i in order:
        img[semantic_map.grid[i] > 0] = category_color(semantic_map.channels[i])
    for x, y in path:
        if 0 <= y < h and 0 <= x < w:
            img[y, x] = PATH
    if start is not None:
        img[start[1], start[0]] = START
    return img


def world_composite(world: WorldGrid, path: Sequence[Cell] = ()) -> np.ndarray:
    """Ground-truth top-down render of a world with an optional path overlay."""
    img = np.empty((world.height, world.width, 3), dtype=np.uint8)
    img[:] = FREE
    img[world.walls] = OBSTACLE
    for lm in world.landmarks:
        x0, y0, x1, y1 = lm.bbox
        img[y0:y1, x0:x1] = category_color(lm.type)
    for o in world.objects:
        if o.cell is not None:
            img[o.cell[1], o.cell[0]] = category_color(o.type)
    for x, y in path:
        img[y, x] = PATH
    img[world.start_cell[1], world.start_cell[0]] = START
    return img


def export_map(semantic_map: SemanticMap, out_dir: str | Path, path: Sequence[Cell] = (),
               start: Cell | None = None, scale: int = 4) -> list[Path]:
    """Write one PNG per channel, a composite PNG and the raw dump; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for i, name in enumerate(semantic_map.channels):
        p = out / f"channel_{i:02d}_{name}.png"
        _save_png(channel_image(semantic_map, i), p, scale)
        written.append(p)
    p = out / "composite.png"
    _save_png(composite(semantic_map, path, start), p, scale)
    written.append(p)
    p = out / "map.bin"
    p.write_bytes(dump_map(semantic_map))
    written.append(p)
    return written


def save_world_png(world: WorldGrid, path: str | Path, trail: Sequence[Cell] = (), scale: int = 4) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    _save_png(world_composite(world, trail), p, scale)
    return p


def dump_map(semantic_map: SemanticMap) -> bytes:
    names = json.dumps(semantic_map.channels, separators=(",", ":")).encode("utf-8")
    c, h, w = semantic_map.grid.shape
    head = _HEADER.pack(MAGIC, c, h, w, float(semantic_map.cell_size), semantic_map.n_objects, len(names))
    body = np.ascontiguousarray(semantic_map.grid, dtype="<f4").tobytes(order="C")
    return head + names + body


def load_map(data: bytes) -> SemanticMap:
    """Inverse of :func:`dump_map`; exploration masks are not stored and come back empty."""
    if len(data) < _HEADER.size:
        raise ValueError("truncated map dump")
    magic, c, h, w, cell_size, n_obj, n_names = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError("not an eifbench map dump")
    off = _HEADER.size
    names = json.loads(data[off:off + n_names].decode("utf-8"))
    off += n_names
    expected = c * h * w * 4
    if len(data) - off != expected or len(names) != c:
        raise ValueError("map dump size does not match its header")
    grid = np.frombuffer(data, dtype="<f4", count=c * h * w, offset=off).reshape(c, h, w).astype(np.float32)
    return SemanticMap(names, grid, np.zeros((h, w), bool), np.zeros((h, w), bool), cell_size, n_obj)
