from __future__ import annotations

import io

import numpy as np
from PIL import Image

from eifbench.perception import SemanticMap, observe, update_map
from eifbench.render import category_color, composite, dump_map, export_map, load_map, png_bytes
from eifbench.world import generate_world


def _scanned_map():
    w = generate_world(3)
    m = SemanticMap.for_world(w)
    p = w.start_pose()
    update_map(m, observe(w, p), p)
    return w, m


def test_colors_are_stable():
    assert category_color("Mug") == category_color("Mug")
    assert category_color("Mug") != category_color("Fridge")


def test_png_is_deterministic_and_scaled():
    w, m = _scanned_map()
    a = png_bytes(composite(m, [w.start_cell], w.start_cell), scale=2)
    assert a == png_bytes(composite(m, [w.start_cell], w.start_cell), scale=2)
    img = Image.open(io.BytesIO(a))
    assert img.size == (2 * w.width, 2 * w.height)


def test_map_dump_round_trip():
    _, m = _scanned_map()
    again = load_map(dump_map(m))
    assert again.channels == m.channels and again.n_objects == m.n_objects
    assert np.array_equal(again.grid, m.grid)


def test_export_writes_one_image_per_channel(tmp_path):
    _, m = _scanned_map()
    written = export_map(m, tmp_path)
    names = {p.name for p in written}
    assert "composite.png" in names and "map.bin" in names
    assert sum(n.startswith("channel_") for n in names) == len(m.channels)
