"""Basis-grid rendering."""

from __future__ import annotations

import math

import numpy as np
from PIL import Image

from .types import as_columns


def basis_grid_array(phi, patch_side: int) -> np.ndarray:
    """Tile every basis function into one 8-bit grayscale grid.

    Each column is reshaped to patch_side x patch_side, min-max normalized
    on its own (constant tiles map to mid-gray 128), and placed in a
    ceil(sqrt(n))-wide grid with 1-pixel black separators.
    """
    cols = as_columns(phi)
    m, n = cols.shape
    if m != patch_side**2:
        raise ValueError(f"input dim {m} != patch_side^2 = {patch_side ** 2}")
    grid_w = math.ceil(math.sqrt(n))
    grid_h = math.ceil(n / grid_w)
    height = grid_h * patch_side + (grid_h - 1)
    width = grid_w * patch_side + (grid_w - 1)
    canvas = np.zeros((height, width), dtype=np.uint8)
    for k in range(n):
        tile = cols[:, k].reshape(patch_side, patch_side)
        lo, hi = tile.min(), tile.max()
        if hi == lo:
            scaled = np.full(tile.shape, 128, dtype=np.uint8)
        else:
            scaled = np.round((tile - lo) / (hi - lo) * 255.0).astype(np.uint8)
        r = (k // grid_w) * (patch_side + 1)
        c = (k % grid_w) * (patch_side + 1)
        canvas[r : r + patch_side, c : c + patch_side] = scaled
    return canvas


def render_basis_grid(phi, patch_side: int, out_path) -> np.ndarray:
    """Write the basis grid as an 8-bit grayscale PNG; returns the pixels."""
    canvas = basis_grid_array(phi, patch_side)
    Image.fromarray(canvas, mode="L").save(out_path, format="PNG")
    return canvas
