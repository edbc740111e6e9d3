"""Coefficient solvers: closed forms for orthogonal dictionaries plus the
iterative solvers that serve as their independent oracles.

The closed forms only hold when the dictionary columns are mutually
orthonormal, so every closed-form entry point insists on
``Dictionary.is_orthogonalized``. The proximal-gradient solvers accept any
valid dictionary and double as the general-purpose (non-orthogonal) path.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .types import CoeffVector, Dictionary, RegCoeffs, RegMode, Sample, SignPolicy

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10_000
_POWER_ITER_STEPS = 100


@dataclass(frozen=True)
class SolverReport:
    iterations: int
    final_loss: float
    converged: bool


def soft_threshold(x, lam):
    """Shrink toward zero by lam, zeroing the band [-lam, lam].

    Works elementwise on arrays; scalars in, scalar out.
    """
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    out = np.sign(x) * np.maximum(np.abs(x) - lam, 0.0)
    if np.isscalar(x) or np.ndim(x) == 0:
        return float(out)
    return out


def _require_orthogonalized(phi: Dictionary, op: str) -> None:
    if not phi.is_orthogonalized:
        raise ValueError(
            f"{op} requires an orthogonalized dictionary; "
            "use the iterative solver for general dictionaries"
        )


def _projections(phi: Dictionary, sample: Sample) -> np.ndarray:
    if sample.dim != phi.input_dim:
        raise ValueError(f"sample length {sample.dim} != dictionary input dim {phi.input_dim}")
    return phi.columns.T @ sample.values


def orth_lasso_infer(phi: Dictionary, sample: Sample, reg: RegCoeffs) -> CoeffVector:
    """Exact L1 solution for an orthogonal dictionary: soft-threshold the
    basis projections."""
    _require_orthogonalized(phi, "orth_lasso_infer")
    if reg.mode is not RegMode.SHARED_SCALAR or reg.sign_policy is not SignPolicy.FREE:
        raise ValueError("orth_lasso_infer takes a shared free-sign coefficient")
    p = _projections(phi, sample)
    return CoeffVector(soft_threshold(p, reg.shared))


def orth_nonneg_infer(phi: Dictionary, sample: Sample, reg: RegCoeffs) -> CoeffVector:
    """Exact non-negative solution for an orthogonal dictionary:
    max(0, projection - lambda)."""
    _require_orthogonalized(phi, "orth_nonneg_infer")
    if reg.mode is not RegMode.SHARED_SCALAR or reg.sign_policy is not SignPolicy.NON_NEGATIVE_ONLY:
        raise ValueError("orth_nonneg_infer takes a shared non-negative coefficient")
    p = _projections(phi, sample)
    return CoeffVector(np.maximum(0.0, p - reg.shared))


def per_unit_forward(phi: Dictionary, sample: Sample, reg: RegCoeffs) -> CoeffVector:
    """Non-negative solution with one coefficient per unit; identical to a
    dense layer with weights phi.T, bias -lambda, and ReLU activation."""
    _require_orthogonalized(phi, "per_unit_forward")
    if reg.mode is not RegMode.PER_UNIT:
        raise ValueError("per_unit_forward takes per-unit coefficients")
    lams = reg.as_vector(phi.n_basis)
    if np.any(lams < 0):
        # Negative entries are only reachable under the FREE policy; the
        # probabilistic reading of lambda as a prior parameter breaks there.
        warnings.warn(
            "per_unit_forward with negative lambda entries: prior interpretation lost",
            stacklevel=2,
        )
    p = _projections(phi, sample)
    return CoeffVector(np.maximum(0.0, p - lams))


def lipschitz_constant(columns: np.ndarray, steps: int = _POWER_ITER_STEPS) -> float:
    """Largest eigenvalue of gram(columns) by fixed-step power iteration."""
    gram = columns.T @ columns
    rng = np.random.default_rng(0)
    v = rng.standard_normal(gram.shape[0])
    v /= np.linalg.norm(v)
    lam = 1.0
    for _ in range(steps):
        w = gram @ v
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 1.0
        v = w / nrm
        lam = float(v @ (gram @ v))
    return max(lam, 1e-12)


def lasso_objective(columns: np.ndarray, x: np.ndarray, a: np.ndarray, lam) -> float:
    """0.5 ||x - columns @ a||^2 + sum(lam * |a|), lam scalar or vector."""
    r = x - columns @ a
    return float(0.5 * (r @ r) + np.sum(np.asarray(lam) * np.abs(a)))


def lasso_iterative(
    phi: Dictionary,
    sample: Sample,
    lam: float,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> tuple[CoeffVector, SolverReport]:
    """Proximal-gradient (ISTA) solver for the L1 problem on any dictionary.

    Fixed step 1/L with L the top gram eigenvalue. Convergence is declared
    on the fixed-point residual ||a - prox(a - grad/L)||_inf <= tol, which
    certifies optimality for this operator.
    """
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    if tol <= 0:
        raise ValueError("tol must be > 0")
    cols = phi.columns
    x = sample.values
    if x.shape[0] != cols.shape[0]:
        raise ValueError("sample length does not match dictionary input dim")
    L = lipschitz_constant(cols)
    a = np.zeros(cols.shape[1])
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        grad = cols.T @ (cols @ a - x)
        nxt = soft_threshold(a - grad / L, lam / L)
        residual = np.max(np.abs(a - nxt)) if a.size else 0.0
        a = nxt
        if residual <= tol:
            converged = True
            break
    report = SolverReport(iterations, lasso_objective(cols, x, a, lam), converged)
    return CoeffVector(a), report


def nonneg_lasso_iterative(
    phi: Dictionary,
    sample: Sample,
    lam: float,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> tuple[CoeffVector, SolverReport]:
    """Projected proximal-gradient solver for the non-negative L1 problem."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    if tol <= 0:
        raise ValueError("tol must be > 0")
    cols = phi.columns
    x = sample.values
    if x.shape[0] != cols.shape[0]:
        raise ValueError("sample length does not match dictionary input dim")
    L = lipschitz_constant(cols)
    a = np.zeros(cols.shape[1])
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        grad = cols.T @ (cols @ a - x)
        nxt = np.maximum(0.0, a - grad / L - lam / L)
        residual = np.max(np.abs(a - nxt)) if a.size else 0.0
        a = nxt
        if residual <= tol:
            converged = True
            break
    r = x - cols @ a
    loss = float(0.5 * (r @ r) + lam * np.sum(a))
    report = SolverReport(iterations, loss, converged)
    return CoeffVector(a), report


def ridge_closed_form(phi: Dictionary, sample: Sample, lam: float) -> CoeffVector:
    """(gram + lam I)^-1 projections; the L2-penalized solution for any
    dictionary."""
    if lam <= 0:
        raise ValueError("ridge_closed_form requires lambda > 0")
    cols = phi.columns
    if sample.dim != cols.shape[0]:
        raise ValueError("sample length does not match dictionary input dim")
    n = cols.shape[1]
    a = np.linalg.solve(cols.T @ cols + lam * np.eye(n), cols.T @ sample.values)
    return CoeffVector(a)


def ridge_orthogonal(phi: Dictionary, sample: Sample, lam: float) -> CoeffVector:
    """Orthogonal ridge: projections scaled by 1/(1 + lambda).

    lambda = 0 is allowed here (plain orthonormal least squares); negative
    values are rejected.
    """
    if lam < 0:
        raise ValueError("ridge_orthogonal requires lambda >= 0")
    _require_orthogonalized(phi, "ridge_orthogonal")
    p = _projections(phi, sample)
    return CoeffVector(p / (1.0 + lam))


def l0_orthogonal_infer(
    phi: Dictionary,
    sample: Sample,
    k: int | None = None,
    *,
    penalty: float | None = None,
) -> CoeffVector:
    """Cardinality-constrained solution for an orthogonal dictionary.

    Default rule: keep the k projections of largest magnitude (ties broken
    by lowest index), zero the rest. Passing ``penalty`` instead of ``k``
    switches to the conventional penalized form, hard-thresholding at
    sqrt(2 * penalty).
    """
    _require_orthogonalized(phi, "l0_orthogonal_infer")
    p = _projections(phi, sample)
    if (k is None) == (penalty is None):
        raise ValueError("give exactly one of k or penalty")
    if penalty is not None:
        if penalty < 0:
            raise ValueError("penalty must be >= 0")
        out = np.where(np.abs(p) > np.sqrt(2.0 * penalty), p, 0.0)
        return CoeffVector(out)
    if k < 0 or k > phi.n_basis:
        raise ValueError(f"k must be in [0, {phi.n_basis}], got {k}")
    out = np.zeros_like(p)
    if k > 0:
        order = np.argsort(-np.abs(p), kind="stable")  # stable => lowest index wins ties
        keep = order[:k]
        out[keep] = p[keep]
    return CoeffVector(out)


def _penalized_objective(cols: np.ndarray, x: np.ndarray, a: np.ndarray, reg: RegCoeffs) -> float:
    """Objective value for the solver family selected by reg.

    FREE shared coefficients give the L1 objective; both non-negative
    regimes use the linear penalty on the (feasible, >= 0) coefficients.
    """
    r = x - cols @ a
    fit = 0.5 * float(r @ r)
    lams = reg.as_vector(cols.shape[1])
    if reg.mode is RegMode.SHARED_SCALAR and reg.sign_policy is SignPolicy.FREE:
        return fit + float(np.sum(lams * np.abs(a)))
    return fit + float(np.sum(lams * a))


def check_subdifferential_optimality(
    phi: Dictionary,
    sample: Sample,
    reg: RegCoeffs,
    a: CoeffVector,
    eps: float = 1e-4,
) -> bool:
    """True iff no single-coordinate perturbation of size eps lowers the
    objective by more than 1e-12.

    For the non-negative solver family the perturbed point is clamped to
    the feasible orthant; a perturbation that clamps back onto the current
    point is skipped. By convexity this certifies that zero belongs to the
    subdifferential at the tested point (up to the stated slack).
    """
    if eps <= 0:
        raise ValueError("eps must be > 0")
    cols = phi.columns
    x = sample.values
    base = np.asarray(a.values, dtype=float)
    nonneg_domain = not (
        reg.mode is RegMode.SHARED_SCALAR and reg.sign_policy is SignPolicy.FREE
    )
    f0 = _penalized_objective(cols, x, base, reg)
    for j in range(base.shape[0]):
        for delta in (eps, -eps):
            trial = base.copy()
            trial[j] = base[j] + delta
            if nonneg_domain:
                trial[j] = max(0.0, trial[j])
                if trial[j] == base[j]:
                    continue
            if _penalized_objective(cols, x, trial, reg) < f0 - 1e-12:
                return False
    return True
