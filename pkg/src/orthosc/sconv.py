"""Sliding-window sparse coding over feature maps.

Instead of filtering the map and applying a pointwise nonlinearity, each
window's contents are gathered into one vector and handed to a sparse
inference solver. With an orthogonalized dictionary and the closed-form
solver this is exactly a valid-mode ReLU cross-correlation whose kernels
are the basis columns and whose biases are the negated lambdas.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .inference import nonneg_lasso_iterative, per_unit_forward
from .types import Dictionary, FeatureMap, RegCoeffs, RegMode, Sample, SignPolicy


class Solver(Enum):
    ORTH_CLOSED_FORM = "closed"
    GENERAL_ITERATIVE = "iterative"


def output_grid_side(n: int, m: int, stride: int) -> int:
    return (n - m) // stride + 1


def gather_windows(fmap: FeatureMap, window: int, stride: int = 1) -> tuple[np.ndarray, int]:
    """All window contents as rows, plus the output grid side.

    Window (i, j) covers input rows i*stride .. i*stride+window-1 and the
    matching columns; its vector concatenates the per-position channel
    blocks in row-major window order. Rows are ordered row-major over
    (i, j).
    """
    n = fmap.side
    if not (1 <= window <= n):
        raise ValueError(f"window {window} does not fit map side {n}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    grid = output_grid_side(n, window, stride)
    b = fmap.channels
    out = np.empty((grid * grid, window * window * b))
    for i in range(grid):
        for j in range(grid):
            block = fmap.data[
                i * stride : i * stride + window, j * stride : j * stride + window, :
            ]
            out[i * grid + j] = block.reshape(-1)
    return out, grid


def _per_unit_reg(reg: RegCoeffs, n: int) -> RegCoeffs:
    if reg.mode is RegMode.PER_UNIT:
        return reg
    return RegCoeffs.per_unit_coeffs(np.full(n, reg.shared), reg.sign_policy)


def sconv_forward(
    fmap: FeatureMap,
    phi: Dictionary,
    reg: RegCoeffs,
    window: int,
    stride: int = 1,
    solver: Solver = Solver.ORTH_CLOSED_FORM,
) -> FeatureMap:
    """Run sparse inference in every window and arrange the coefficient
    vectors on the output grid.

    The closed-form solver needs an orthogonalized dictionary and uses the
    per-unit clamp form; the iterative solver handles any dictionary but
    takes a shared non-negative coefficient.
    """
    if phi.input_dim != window * window * fmap.channels:
        raise ValueError(
            f"dictionary input dim {phi.input_dim} != window size "
            f"{window * window * fmap.channels}"
        )
    windows, grid = gather_windows(fmap, window, stride)
    n = phi.n_basis
    out = np.empty((grid, grid, n))
    if solver is Solver.ORTH_CLOSED_FORM:
        preg = _per_unit_reg(reg, n)
        for i in range(grid):
            for j in range(grid):
                coeffs = per_unit_forward(phi, Sample(windows[i * grid + j]), preg)
                out[i, j] = coeffs.values
    elif solver is Solver.GENERAL_ITERATIVE:
        if reg.mode is not RegMode.SHARED_SCALAR or reg.sign_policy is not SignPolicy.NON_NEGATIVE_ONLY:
            raise ValueError("the iterative path takes a shared non-negative coefficient")
        for i in range(grid):
            for j in range(grid):
                coeffs, _ = nonneg_lasso_iterative(phi, Sample(windows[i * grid + j]), reg.shared)
                out[i, j] = coeffs.values
    else:
        raise ValueError(f"unknown solver {solver}")
    return FeatureMap(out)
