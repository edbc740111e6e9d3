import numpy as np
import pytest
from PIL import Image

from orthosc.types import Dictionary
from orthosc.viz import basis_grid_array, render_basis_grid


def test_constant_column_renders_mid_gray():
    cols = np.full((4, 1), 0.5)
    grid = basis_grid_array(cols, 2)
    assert grid.shape == (2, 2)
    assert np.all(grid == 128)


def test_grid_layout_dimensions():
    rng = np.random.default_rng(120)
    grid = basis_grid_array(rng.standard_normal((4, 4)), 2)
    assert grid.shape == (5, 5)  # 2 + separator + 2
    assert np.all(grid[2, :] == 0) and np.all(grid[:, 2] == 0)


def test_identity_dictionary_white_pixel_on_black():
    grid = basis_grid_array(np.eye(4), 2)
    assert grid.shape == (5, 5)
    tiles = [grid[0:2, 0:2], grid[0:2, 3:5], grid[3:5, 0:2], grid[3:5, 3:5]]
    for k, tile in enumerate(tiles):
        assert np.sum(tile == 255) == 1
        assert np.sum(tile == 0) == 3
        assert tile.ravel()[k] == 255  # the hot pixel follows the basis index


def test_partial_last_row_left_black():
    rng = np.random.default_rng(121)
    grid = basis_grid_array(rng.standard_normal((4, 3)), 2)
    assert grid.shape == (5, 5)
    assert np.all(grid[3:5, 3:5] == 0)  # unused cell stays black


def test_rejects_mismatched_patch_side():
    with pytest.raises(ValueError):
        basis_grid_array(np.eye(4), 3)


def test_png_round_trip(tmp_path):
    rng = np.random.default_rng(122)
    phi = Dictionary(np.linalg.qr(rng.standard_normal((9, 4)))[0], is_orthogonalized=True)
    out = tmp_path / "grid.png"
    pixels = render_basis_grid(phi, 3, out)
    with Image.open(out) as im:
        assert im.mode == "L"
        assert im.size == (pixels.shape[1], pixels.shape[0])
        assert np.array_equal(np.asarray(im), pixels)
