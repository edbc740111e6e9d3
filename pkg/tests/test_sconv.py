import numpy as np
import pytest

from orthosc.inference import per_unit_forward
from orthosc.sconv import Solver, gather_windows, output_grid_side, sconv_forward
from orthosc.types import Dictionary, FeatureMap, RegCoeffs, Sample, SignPolicy


def random_orthonormal(rng, m, n):
    q, _ = np.linalg.qr(rng.standard_normal((m, n)))
    return Dictionary(q, is_orthogonalized=True)


def indexed_map(n, b):
    """data[i, j, c] = 100 i + 10 j + c, handy for asserting gather order."""
    data = np.zeros((n, n, b))
    for i in range(n):
        for j in range(n):
            for c in range(b):
                data[i, j, c] = 100 * i + 10 * j + c
    return FeatureMap(data)


def brute_force_gather(fmap, window, stride):
    """Independent nested-loop gatherer."""
    grid = (fmap.side - window) // stride + 1
    rows = []
    for i in range(grid):
        for j in range(grid):
            parts = []
            for u in range(window):
                for v in range(window):
                    for c in range(fmap.channels):
                        parts.append(fmap.data[i * stride + u, j * stride + v, c])
            rows.append(parts)
    return np.array(rows), grid


# ---------------------------------------------------------------------------
# gather
# ---------------------------------------------------------------------------


def test_gather_indexing_definition():
    fmap = indexed_map(3, 2)
    windows, grid = gather_windows(fmap, 2, 1)
    assert grid == 2 and windows.shape == (4, 8)
    # window (0,0) concatenates blocks (0,0), (0,1), (1,0), (1,1)
    assert np.array_equal(windows[0], [0, 1, 10, 11, 100, 101, 110, 111])
    # window (0,1) starts one column over
    assert np.array_equal(windows[1], [10, 11, 20, 21, 110, 111, 120, 121])


def test_gather_full_window_is_flatten():
    rng = np.random.default_rng(90)
    fmap = FeatureMap(rng.standard_normal((4, 4, 3)))
    windows, grid = gather_windows(fmap, 4, 1)
    assert grid == 1
    assert np.array_equal(windows[0], fmap.data.reshape(-1))


def test_gather_matches_brute_force():
    rng = np.random.default_rng(91)
    for _ in range(25):
        n = int(rng.integers(1, 9))
        window = int(rng.integers(1, n + 1))
        stride = int(rng.integers(1, 3))
        b = int(rng.integers(1, 4))
        fmap = FeatureMap(rng.standard_normal((n, n, b)))
        got, grid = gather_windows(fmap, window, stride)
        ref, ref_grid = brute_force_gather(fmap, window, stride)
        assert grid == ref_grid
        assert np.array_equal(got, ref)


def test_grid_side_formula():
    rng = np.random.default_rng(92)
    for n in range(1, 17):
        for window in range(1, n + 1):
            for stride in (1, 2, 3, 4):
                fmap = FeatureMap(rng.standard_normal((n, n, 1)))
                windows, grid = gather_windows(fmap, window, stride)
                assert grid == (n - window) // stride + 1
                assert grid == output_grid_side(n, window, stride)
                assert windows.shape == (grid * grid, window * window)


def test_gather_rejects_bad_geometry():
    fmap = FeatureMap(np.zeros((3, 3, 1)))
    with pytest.raises(ValueError):
        gather_windows(fmap, 4, 1)
    with pytest.raises(ValueError):
        gather_windows(fmap, 2, 0)


# ---------------------------------------------------------------------------
# sconv forward
# ---------------------------------------------------------------------------


def reference_relu_conv(fmap, phi, lams, window, stride):
    kernels = phi.columns.T.reshape(phi.n_basis, window, window, fmap.channels)
    grid = (fmap.side - window) // stride + 1
    out = np.zeros((grid, grid, phi.n_basis))
    for i in range(grid):
        for j in range(grid):
            patch = fmap.data[i * stride:i * stride + window, j * stride:j * stride + window, :]
            for c in range(phi.n_basis):
                out[i, j, c] = max(0.0, float(np.sum(kernels[c] * patch)) - lams[c])
    return out


def test_sconv_equals_reference_convolution():
    rng = np.random.default_rng(93)
    for _ in range(15):
        n = int(rng.integers(2, 7))
        window = int(rng.integers(1, n + 1))
        stride = int(rng.integers(1, 3))
        b = int(rng.integers(1, 4))
        fmap = FeatureMap(rng.standard_normal((n, n, b)))
        in_dim = window * window * b
        phi = random_orthonormal(rng, in_dim, int(rng.integers(1, in_dim + 1)))
        lams = rng.uniform(0, 0.4, phi.n_basis)
        out = sconv_forward(fmap, phi, RegCoeffs.per_unit_coeffs(lams), window, stride)
        ref = reference_relu_conv(fmap, phi, lams, window, stride)
        assert np.max(np.abs(out.data - ref)) <= 1e-12


def test_sconv_single_position_equals_plain_inference():
    rng = np.random.default_rng(94)
    fmap = FeatureMap(rng.standard_normal((1, 1, 6)))
    phi = random_orthonormal(rng, 6, 4)
    reg = RegCoeffs.per_unit_coeffs(rng.uniform(0, 0.3, 4))
    out = sconv_forward(fmap, phi, reg, 1, 1)
    direct = per_unit_forward(phi, Sample(fmap.data[0, 0]), reg)
    assert np.array_equal(out.data[0, 0], direct.values)


def test_sconv_iterative_agrees_with_closed_form():
    rng = np.random.default_rng(95)
    fmap = FeatureMap(rng.standard_normal((4, 4, 2)))
    phi = random_orthonormal(rng, 2 * 2 * 2, 5)
    reg = RegCoeffs.shared_coeff(0.2, SignPolicy.NON_NEGATIVE_ONLY)
    closed = sconv_forward(fmap, phi, reg, 2, 1, Solver.ORTH_CLOSED_FORM)
    iterative = sconv_forward(fmap, phi, reg, 2, 1, Solver.GENERAL_ITERATIVE)
    assert np.max(np.abs(closed.data - iterative.data)) <= 1e-6


def test_sconv_rejects_mismatches():
    rng = np.random.default_rng(96)
    fmap = FeatureMap(rng.standard_normal((3, 3, 2)))
    phi = random_orthonormal(rng, 8, 3)
    reg = RegCoeffs.per_unit_coeffs(np.zeros(3))
    with pytest.raises(ValueError, match="input dim"):
        sconv_forward(fmap, phi, reg, 1, 1)

    cols = rng.standard_normal((8, 3))
    plain = Dictionary(cols / np.linalg.norm(cols, axis=0))
    with pytest.raises(ValueError, match="orthogonalized"):
        sconv_forward(fmap, plain, reg, 2, 1, Solver.ORTH_CLOSED_FORM)

    orth = random_orthonormal(rng, 8, 3)
    with pytest.raises(ValueError, match="shared non-negative"):
        sconv_forward(fmap, orth, reg, 2, 1, Solver.GENERAL_ITERATIVE)


def test_sconv_translation_covariance():
    rng = np.random.default_rng(97)
    stride = 1
    base = rng.standard_normal((6, 6, 2))
    shifted = np.roll(base, stride, axis=0)  # wraps, so compare the interior
    phi = random_orthonormal(rng, 2 * 2 * 2, 4)
    reg = RegCoeffs.per_unit_coeffs(rng.uniform(0, 0.3, 4))
    out_base = sconv_forward(FeatureMap(base), phi, reg, 2, stride)
    out_shift = sconv_forward(FeatureMap(shifted), phi, reg, 2, stride)
    # row i of the shifted output equals row i-1 of the base output away from the wrap
    assert np.allclose(out_shift.data[1:, :, :], out_base.data[:-1, :, :], atol=1e-12)
