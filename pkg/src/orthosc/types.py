"""Shared value types for the sparse coding toolkit.

Every type here is an immutable container with its invariants enforced at
construction time. The underlying numpy arrays are copied to float64 and
marked read-only, so instances are safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

ORTH_TOL = 1e-8
UNIT_NORM_TOL = 1e-10
SYMMETRY_TOL = 1e-8


def _frozen_array(values, ndim: int, name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


class RegMode(Enum):
    """Whether one regularization coefficient is shared or one exists per unit."""

    SHARED_SCALAR = "shared_scalar"
    PER_UNIT = "per_unit"


class SignPolicy(Enum):
    """Sign regime for regularization coefficients.

    FREE permits negative per-unit coefficients (the unconstrained network
    bias regime, where the probabilistic reading of the coefficients as
    exponential prior parameters no longer holds). NON_NEGATIVE_ONLY keeps
    every coefficient in the prior-preserving regime.
    """

    FREE = "free"
    NON_NEGATIVE_ONLY = "non_negative_only"


@dataclass(frozen=True)
class Sample:
    """A single input vector (pixels or features)."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_array(self.values, 1, "Sample.values"))

    @property
    def dim(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class Dictionary:
    """Basis-function matrix; each column is one basis function.

    A dictionary is either orthogonalized (columns mutually orthonormal,
    checked to ORTH_TOL) or plain unit-norm (each column unit Euclidean
    length to UNIT_NORM_TOL).
    """

    columns: np.ndarray
    is_orthogonalized: bool = False

    def __post_init__(self):
        cols = _frozen_array(self.columns, 2, "Dictionary.columns")
        m, n = cols.shape
        if m < 1 or n < 1:
            raise ValueError(f"Dictionary must be at least 1x1, got {m}x{n}")
        if self.is_orthogonalized:
            gram_err = np.max(np.abs(cols.T @ cols - np.eye(n)))
            if gram_err > ORTH_TOL:
                raise ValueError(
                    f"is_orthogonalized set but max |gram - I| = {gram_err:.3e} "
                    f"exceeds {ORTH_TOL:.0e}"
                )
        else:
            norms = np.linalg.norm(cols, axis=0)
            worst = np.max(np.abs(norms - 1.0))
            if worst > UNIT_NORM_TOL:
                raise ValueError(
                    f"non-orthogonalized dictionary columns must be unit-norm; "
                    f"worst deviation {worst:.3e}"
                )
        object.__setattr__(self, "columns", cols)

    @property
    def input_dim(self) -> int:
        return self.columns.shape[0]

    @property
    def n_basis(self) -> int:
        return self.columns.shape[1]


@dataclass(frozen=True)
class RegCoeffs:
    """Regularization coefficient(s) plus their sign policy.

    Use the ``shared()`` / ``per_unit_coeffs()`` constructors. The sign rules:

    * shared + NON_NEGATIVE_ONLY: strictly positive (the noise variance and
      prior parameter are both positive, so their ratio is too);
    * shared + FREE: non-negative (zero recovers plain least squares);
    * per-unit + NON_NEGATIVE_ONLY: every coefficient non-negative;
    * per-unit + FREE: any sign (network bias regime).
    """

    mode: RegMode
    sign_policy: SignPolicy
    shared: float | None = None
    per_unit: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if self.mode is RegMode.SHARED_SCALAR:
            if self.shared is None or self.per_unit is not None:
                raise ValueError("shared-scalar RegCoeffs needs `shared` only")
            lam = float(self.shared)
            if not np.isfinite(lam):
                raise ValueError("shared lambda must be finite")
            if self.sign_policy is SignPolicy.NON_NEGATIVE_ONLY and lam <= 0:
                raise ValueError("shared lambda must be > 0 under NON_NEGATIVE_ONLY")
            if self.sign_policy is SignPolicy.FREE and lam < 0:
                raise ValueError("shared lambda must be >= 0")
            object.__setattr__(self, "shared", lam)
        elif self.mode is RegMode.PER_UNIT:
            if self.per_unit is None or self.shared is not None:
                raise ValueError("per-unit RegCoeffs needs `per_unit` only")
            lams = _frozen_array(self.per_unit, 1, "RegCoeffs.per_unit")
            if self.sign_policy is SignPolicy.NON_NEGATIVE_ONLY and np.any(lams < 0):
                raise ValueError("per-unit lambdas must be >= 0 under NON_NEGATIVE_ONLY")
            object.__setattr__(self, "per_unit", lams)
        else:
            raise ValueError(f"unknown mode {self.mode}")

    @classmethod
    def shared_coeff(cls, lam: float, sign_policy: SignPolicy = SignPolicy.FREE) -> "RegCoeffs":
        return cls(mode=RegMode.SHARED_SCALAR, sign_policy=sign_policy, shared=lam)

    @classmethod
    def per_unit_coeffs(
        cls, lams, sign_policy: SignPolicy = SignPolicy.NON_NEGATIVE_ONLY
    ) -> "RegCoeffs":
        return cls(mode=RegMode.PER_UNIT, sign_policy=sign_policy, per_unit=np.asarray(lams))

    def as_vector(self, n: int) -> np.ndarray:
        """Coefficients broadcast to length n."""
        if self.mode is RegMode.SHARED_SCALAR:
            return np.full(n, self.shared)
        if self.per_unit.shape[0] != n:
            raise ValueError(
                f"per-unit lambda length {self.per_unit.shape[0]} does not match n={n}"
            )
        return np.asarray(self.per_unit)


@dataclass(frozen=True)
class CoeffVector:
    """Coefficient vector produced by an inference solver."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_array(self.values, 1, "CoeffVector.values"))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def support(self) -> np.ndarray:
        return np.flatnonzero(self.values)


@dataclass(frozen=True)
class LayerStack:
    """Ordered sparse-coding layers plus a logistic-regression head (W, b)."""

    layers: tuple[tuple[Dictionary, RegCoeffs], ...]
    head_weights: np.ndarray
    head_bias: np.ndarray

    def __post_init__(self):
        layers = tuple((phi, reg) for phi, reg in self.layers)
        if not layers:
            raise ValueError("LayerStack needs at least one layer")
        for k, (phi, reg) in enumerate(layers):
            if not isinstance(phi, Dictionary) or not isinstance(reg, RegCoeffs):
                raise ValueError(f"layer {k} must be a (Dictionary, RegCoeffs) pair")
            reg.as_vector(phi.n_basis)  # raises on length mismatch
            if k > 0 and layers[k - 1][0].n_basis != phi.input_dim:
                raise ValueError(
                    f"layer {k - 1} outputs {layers[k - 1][0].n_basis} units but "
                    f"layer {k} expects {phi.input_dim}"
                )
        W = _frozen_array(self.head_weights, 2, "LayerStack.head_weights")
        b = _frozen_array(self.head_bias, 1, "LayerStack.head_bias")
        if W.shape[1] != layers[-1][0].n_basis:
            raise ValueError(
                f"head expects {W.shape[1]} inputs but last layer outputs "
                f"{layers[-1][0].n_basis}"
            )
        if b.shape[0] != W.shape[0]:
            raise ValueError("head bias length must match head weight rows")
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "head_weights", W)
        object.__setattr__(self, "head_bias", b)

    @property
    def n_classes(self) -> int:
        return self.head_weights.shape[0]

    @property
    def input_dim(self) -> int:
        return self.layers[0][0].input_dim


@dataclass(frozen=True)
class FeatureMap:
    """Square spatial grid of coefficient vectors, shape (N, N, B)."""

    data: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.data, 3, "FeatureMap.data")
        if arr.shape[0] != arr.shape[1]:
            raise ValueError(f"FeatureMap must be square, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[2] < 1:
            raise ValueError("FeatureMap dims must be >= 1")
        object.__setattr__(self, "data", arr)

    @property
    def side(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class WhiteningTransform:
    """Affine whitening map: x -> matrix @ (x - mean)."""

    mean: np.ndarray
    matrix: np.ndarray

    def __post_init__(self):
        mean = _frozen_array(self.mean, 1, "WhiteningTransform.mean")
        mat = _frozen_array(self.matrix, 2, "WhiteningTransform.matrix")
        m = mean.shape[0]
        if mat.shape != (m, m):
            raise ValueError(f"whitening matrix must be {m}x{m}, got {mat.shape}")
        asym = np.max(np.abs(mat - mat.T))
        if asym > SYMMETRY_TOL:
            raise ValueError(f"whitening matrix must be symmetric; asymmetry {asym:.3e}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "matrix", mat)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def as_columns(phi) -> np.ndarray:
    """Accept a Dictionary or a raw matrix and return the column matrix."""
    if isinstance(phi, Dictionary):
        return phi.columns
    arr = np.asarray(phi, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a matrix of basis columns, got shape {arr.shape}")
    return arr
