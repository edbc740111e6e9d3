"""Dictionary learning on the closed-form inference transform.

The training objective reconstructs each input from its thresholded
projections, with the penalty matching the inference transform in use.
Gradients flow through the piecewise-linear transform using its
almost-everywhere derivative (0 exactly at threshold points), and a
central-difference oracle is provided to check them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .types import Dictionary, RegCoeffs, RegMode, Sample, SignPolicy, as_columns

RANK_TOL = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-2
    batch_size: int = 100
    epochs: int = 20
    lam: RegCoeffs = None
    orthogonalize_each_step: bool = True
    rng_seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")
        if self.lam is None:
            object.__setattr__(
                self, "lam", RegCoeffs.shared_coeff(0.1, SignPolicy.FREE)
            )


def _as_batch_matrix(batch) -> np.ndarray:
    """Batch of inputs as an (N, m) matrix; accepts a PatchSet, an array,
    or a sequence of Samples."""
    if hasattr(batch, "patches"):
        return np.asarray(batch.patches, dtype=np.float64)
    if isinstance(batch, np.ndarray):
        if batch.ndim != 2:
            raise ValueError(f"batch array must be 2-D, got shape {batch.shape}")
        return np.asarray(batch, dtype=np.float64)
    rows = [s.values if isinstance(s, Sample) else np.asarray(s, float) for s in batch]
    return np.stack(rows, axis=0)


def _transform(P: np.ndarray, reg: RegCoeffs):
    """Apply the inference transform selected by reg to a projection matrix.

    Returns (coefficients, active mask, penalty per sample).
    """
    lams = reg.as_vector(P.shape[1])
    if reg.mode is RegMode.SHARED_SCALAR and reg.sign_policy is SignPolicy.FREE:
        A = np.sign(P) * np.maximum(np.abs(P) - lams, 0.0)
        active = np.abs(P) > lams
        penalty = np.sum(lams * np.abs(A), axis=1)
    else:
        A = np.maximum(0.0, P - lams)
        active = P > lams
        penalty = np.sum(lams * A, axis=1)
    return A, active, penalty


def recon_loss(phi, batch, reg: RegCoeffs) -> float:
    """Mean over the batch of 0.5 ||x - phi s(phi^T x)||^2 + penalty."""
    cols = as_columns(phi)
    X = _as_batch_matrix(batch)
    if X.shape[1] != cols.shape[0]:
        raise ValueError(f"batch dim {X.shape[1]} != dictionary input dim {cols.shape[0]}")
    P = X @ cols
    A, _, penalty = _transform(P, reg)
    R = X - A @ cols.T
    return float(np.mean(0.5 * np.sum(R * R, axis=1) + penalty))


def dict_gradient(phi, batch, reg: RegCoeffs) -> np.ndarray:
    """Gradient of recon_loss with respect to the basis matrix.

    Differentiates through the thresholding transform with its a.e.
    derivative: the indicator of the active region.
    """
    cols = as_columns(phi)
    X = _as_batch_matrix(batch)
    if X.shape[1] != cols.shape[0]:
        raise ValueError(f"batch dim {X.shape[1]} != dictionary input dim {cols.shape[0]}")
    N = X.shape[0]
    lams = reg.as_vector(cols.shape[1])
    P = X @ cols
    A, active, _ = _transform(P, reg)
    R = X - A @ cols.T
    if reg.mode is RegMode.SHARED_SCALAR and reg.sign_policy is SignPolicy.FREE:
        pen_grad = lams * np.sign(A)
    else:
        pen_grad = np.broadcast_to(lams, A.shape)
    D = active * (-(R @ cols) + pen_grad)
    return (-(R.T @ A) + X.T @ D) / N


def finite_diff_gradient(phi, batch, reg: RegCoeffs, h: float = 1e-6) -> np.ndarray:
    """Central differences of recon_loss, entry by entry. The oracle for
    dict_gradient."""
    if h <= 0:
        raise ValueError("h must be > 0")
    cols = np.array(as_columns(phi), dtype=float)
    X = _as_batch_matrix(batch)
    grad = np.zeros_like(cols)
    for u in range(cols.shape[0]):
        for v in range(cols.shape[1]):
            orig = cols[u, v]
            cols[u, v] = orig + h
            fp = recon_loss(cols, X, reg)
            cols[u, v] = orig - h
            fm = recon_loss(cols, X, reg)
            cols[u, v] = orig
            grad[u, v] = (fp - fm) / (2.0 * h)
    return grad


def _fix_column_signs(Q: np.ndarray) -> np.ndarray:
    """Flip columns so each column's largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(Q), axis=0)
    signs = np.sign(Q[idx, np.arange(Q.shape[1])])
    signs[signs == 0] = 1.0
    return Q * signs


def svd_orthogonalize(phi) -> Dictionary:
    """Project a full-column-rank matrix onto the nearest orthonormal basis.

    Computed from the SVD as the polar factor, i.e. the matrix times the
    inverse square root of its gram matrix, then sign-normalized so the
    result is deterministic. Rank-deficient input is rejected.
    """
    cols = as_columns(phi)
    U, S, Vt = np.linalg.svd(cols, full_matrices=False)
    if np.any(S <= RANK_TOL):
        bad = S[S <= RANK_TOL]
        raise ValueError(
            f"matrix is rank-deficient; near-zero singular values: {bad.tolist()}"
        )
    Q = _fix_column_signs(U @ Vt)
    return Dictionary(Q, is_orthogonalized=True)


def normalize_columns(phi) -> Dictionary:
    """Rescale every column to unit Euclidean norm."""
    cols = as_columns(phi)
    norms = np.linalg.norm(cols, axis=0)
    if np.any(norms < 1e-12):
        raise ValueError("cannot normalize a zero column")
    return Dictionary(cols / norms, is_orthogonalized=False)


def random_orthogonal_dictionary(m: int, n: int, seed: int = 0) -> Dictionary:
    """Seeded Gaussian init projected onto the orthonormal constraint."""
    if n > m:
        raise ValueError(f"cannot fit {n} orthonormal columns in dimension {m}")
    rng = np.random.default_rng(seed)
    return svd_orthogonalize(rng.standard_normal((m, n)))


def train_dictionary(init: Dictionary, data, cfg: TrainConfig) -> tuple[Dictionary, list[float]]:
    """Minibatch gradient descent with a re-projection after every step.

    The projection is the SVD orthogonalization when
    cfg.orthogonalize_each_step is set, plain column normalization
    otherwise. Returns the final dictionary and the loss curve, whose first
    entry is the pre-training loss followed by one mean loss per epoch.

    Raises if the loss diverges to a non-finite value.
    """
    X = _as_batch_matrix(data)
    if X.shape[1] != init.input_dim:
        raise ValueError("data dim does not match dictionary input dim")
    reg = cfg.lam
    rng = np.random.default_rng(cfg.rng_seed)
    cols = np.array(init.columns)
    curve = [recon_loss(cols, X, reg)]
    count = X.shape[0]
    for epoch in range(cfg.epochs):
        order = rng.permutation(count)
        for start in range(0, count, cfg.batch_size):
            batch = X[order[start : start + cfg.batch_size]]
            cols = cols - cfg.learning_rate * dict_gradient(cols, batch, reg)
            if not np.all(np.isfinite(cols)):
                raise FloatingPointError(
                    f"dictionary diverged at epoch {epoch}: non-finite entries "
                    f"(learning rate {cfg.learning_rate} too large?)"
                )
            if cfg.orthogonalize_each_step:
                cols = svd_orthogonalize(cols).columns
            else:
                cols = normalize_columns(cols).columns
        loss = recon_loss(cols, X, reg)
        if not np.isfinite(loss):
            raise FloatingPointError(f"loss diverged to {loss} at epoch {epoch}")
        curve.append(loss)
    final = Dictionary(cols, is_orthogonalized=cfg.orthogonalize_each_step)
    return final, curve


def spectral_centroid(column: np.ndarray, patch_side: int) -> float:
    """Radial centroid of the 2-D power spectrum, as a fraction of Nyquist.

    Ranges over [0, sqrt(2)]; a flat (DC) patch scores 0.
    """
    w = np.asarray(column, dtype=float).reshape(patch_side, patch_side)
    power = np.abs(np.fft.fft2(w)) ** 2
    f = np.fft.fftfreq(patch_side)
    fy, fx = np.meshgrid(f, f, indexing="ij")
    radius = np.hypot(fx, fy)
    total = power.sum()
    if total == 0.0:
        return 0.0
    return float((power * radius).sum() / total / 0.5)


def count_high_frequency(phi, patch_side: int, threshold: float = 0.35) -> int:
    """Number of basis functions whose spectral centroid exceeds the given
    fraction of Nyquist. Reporting diagnostic only."""
    cols = as_columns(phi)
    return int(
        sum(spectral_centroid(cols[:, j], patch_side) > threshold for j in range(cols.shape[1]))
    )
