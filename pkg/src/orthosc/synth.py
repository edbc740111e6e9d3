"""Synthetic grayscale imagery with natural-image-like statistics.

Occluding disks with power-law radii give roughly scale-invariant spectra
and strong edge content, which is what patch-based basis learning needs.
Everything is deterministic given the seed.
"""

from __future__ import annotations

import numpy as np


def _gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur via the frequency domain (periodic edges)."""
    side = img.shape[0]
    f = np.fft.fftfreq(side)
    kernel1d = np.exp(-2.0 * (np.pi * f * sigma) ** 2)
    return np.real(np.fft.ifft2(np.fft.fft2(img) * np.outer(kernel1d, kernel1d)))


def dead_leaves_image(
    side: int = 256,
    n_shapes: int = 400,
    seed: int = 0,
    r_min: float = 2.0,
    r_max: float | None = None,
    blur_sigma: float = 1.0,
) -> np.ndarray:
    """Occluding random disks on a mid-gray background, values in [0, 1].

    A light blur band-limits the hard disk edges the way optics would.
    """
    if side < 4:
        raise ValueError("side must be >= 4")
    rng = np.random.default_rng(seed)
    if r_max is None:
        r_max = side / 4.0
    img = np.full((side, side), 0.5)
    yy, xx = np.mgrid[0:side, 0:side]
    # inverse-cube radius law sampled by inverse transform
    u = rng.random(n_shapes)
    radii = 1.0 / np.sqrt(u / r_min**2 + (1 - u) / r_max**2)
    cy = rng.uniform(0, side, n_shapes)
    cx = rng.uniform(0, side, n_shapes)
    shade = rng.random(n_shapes)
    for k in range(n_shapes):
        mask = (yy - cy[k]) ** 2 + (xx - cx[k]) ** 2 <= radii[k] ** 2
        img[mask] = shade[k]
    if blur_sigma > 0:
        img = np.clip(_gaussian_blur(img, blur_sigma), 0.0, 1.0)
    return img


def blob_dataset(
    n_per_class: int = 100,
    separation: float = 3.0,
    spread: float = 0.7,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Two seeded 2-D Gaussian blobs; returns (points, one-hot targets)."""
    rng = np.random.default_rng(seed)
    offset = np.array([separation / 2.0, 0.0])
    pts = np.concatenate(
        [
            rng.normal(-offset, spread, size=(n_per_class, 2)),
            rng.normal(offset, spread, size=(n_per_class, 2)),
        ]
    )
    targets = np.zeros((2 * n_per_class, 2))
    targets[:n_per_class, 0] = 1.0
    targets[n_per_class:, 1] = 1.0
    return pts, targets
