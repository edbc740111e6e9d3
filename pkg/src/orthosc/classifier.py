"""Stacked sparse-coding layers with a logistic-regression head.

The stack forward pass is the clamp form a = max(0, phi^T x - lambda) per
layer, which makes the whole model a dense ReLU network whose weights are
the basis columns and whose biases are the negated regularization
coefficients. The head is multinomial logistic regression trained by
cross-entropy; the per-layer lambdas are trainable under a configurable
sign regime.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .learning import normalize_columns, svd_orthogonalize
from .types import (
    CoeffVector,
    Dictionary,
    LayerStack,
    RegCoeffs,
    RegMode,
    Sample,
    SignPolicy,
)

PROB_FLOOR = 1e-300


@dataclass(frozen=True)
class BiasMode:
    """Sign regime for the trainable per-layer lambdas.

    * free: any sign (plain network biases)
    * negative: lambdas clamped to >= lambda_min > 0, keeping every bias
      weight negative and the sparse prior intact
    * fixed: one frozen shared lambda per layer
    """

    kind: str
    lambda_min: float = 0.05
    fixed_lambdas: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("free", "negative", "fixed"):
            raise ValueError(f"unknown bias mode {self.kind!r}")
        if self.kind == "negative" and self.lambda_min <= 0:
            raise ValueError("negative bias mode needs lambda_min > 0")
        if self.kind == "fixed":
            if not self.fixed_lambdas:
                raise ValueError("fixed bias mode needs one lambda per layer")
            object.__setattr__(
                self, "fixed_lambdas", tuple(float(v) for v in self.fixed_lambdas)
            )

    @classmethod
    def free_cnn(cls) -> "BiasMode":
        return cls("free")

    @classmethod
    def negative_only(cls, lambda_min: float = 0.05) -> "BiasMode":
        return cls("negative", lambda_min=lambda_min)

    @classmethod
    def shared_scalar_fixed(cls, lambdas) -> "BiasMode":
        return cls("fixed", fixed_lambdas=tuple(lambdas))


@dataclass(frozen=True)
class LabeledSample:
    input: Sample
    target: np.ndarray

    def __post_init__(self):
        t = np.array(self.target, dtype=np.float64)
        if t.ndim != 1:
            raise ValueError("target must be a vector")
        ones = np.flatnonzero(t == 1.0)
        if len(ones) != 1 or not np.all((t == 0.0) | (t == 1.0)):
            raise ValueError("target must be one-hot")
        t.setflags(write=False)
        object.__setattr__(self, "target", t)

    @property
    def label(self) -> int:
        return int(np.argmax(self.target))


@dataclass(frozen=True)
class ClassifierConfig:
    learning_rate: float = 0.1
    batch_size: int = 32
    epochs: int = 100
    orthogonalize_each_step: bool = False
    rng_seed: int = 0
    recon_weight: float = 0.0  # gamma on the combined reconstruction term
    recon_mix: tuple[float, float] = (1.0, 1.0)  # (a, b) weights in that term

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 1:
            raise ValueError("learning_rate, batch_size, epochs must be positive")
        if self.recon_weight < 0:
            raise ValueError("recon_weight must be >= 0")


@dataclass
class StackGrads:
    phi: list[np.ndarray]
    lam: list[np.ndarray]
    head_weights: np.ndarray
    head_bias: np.ndarray


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def _model_arrays(model: LayerStack):
    cols = [np.asarray(phi.columns) for phi, _ in model.layers]
    lams = [reg.as_vector(phi.n_basis) for phi, reg in model.layers]
    return cols, lams, np.asarray(model.head_weights), np.asarray(model.head_bias)


def _forward_batch(cols, lams, W, b, X):
    """Forward the whole batch; returns (pre-activations, activations, probs)."""
    pres, acts = [], []
    H = X
    for C, lam in zip(cols, lams):
        P = H @ C - lam
        H = np.maximum(0.0, P)
        pres.append(P)
        acts.append(H)
    Y = softmax(acts[-1] @ W.T + b)
    return pres, acts, Y


def stack_forward(model: LayerStack, x: Sample) -> tuple[list[CoeffVector], np.ndarray]:
    """Activations of every layer plus the head's probability vector."""
    if x.dim != model.input_dim:
        raise ValueError(f"input length {x.dim} != model input dim {model.input_dim}")
    cols, lams, W, b = _model_arrays(model)
    _, acts, Y = _forward_batch(cols, lams, W, b, x.values[None, :])
    return [CoeffVector(a[0]) for a in acts], Y[0]


def _batch_to_arrays(batch) -> tuple[np.ndarray, np.ndarray]:
    X = np.stack([s.input.values for s in batch])
    T = np.stack([s.target for s in batch])
    return X, T


def cross_entropy(batch, model: LayerStack) -> float:
    """Mean negative log-probability of the true labels."""
    X, T = _batch_to_arrays(batch)
    cols, lams, W, b = _model_arrays(model)
    _, _, Y = _forward_batch(cols, lams, W, b, X)
    return float(-np.sum(T * np.log(np.maximum(Y, PROB_FLOOR))) / X.shape[0])


def combined_recon_loss(
    phi1: Dictionary,
    phi2: Dictionary,
    a1: CoeffVector,
    a2: CoeffVector,
    sample: Sample,
    a: float,
    b: float,
) -> float:
    """0.5 || x - a phi1 a1 - b phi1 phi2 a2 ||^2, the two-layer joint
    reconstruction with mixing weights a and b."""
    if phi1.input_dim != sample.dim:
        raise ValueError("sample length does not match first-layer input dim")
    if phi2.input_dim != phi1.n_basis:
        raise ValueError("layer dictionaries do not chain")
    if a1.n != phi1.n_basis or a2.n != phi2.n_basis:
        raise ValueError("coefficient lengths do not match dictionaries")
    r = (
        sample.values
        - a * (phi1.columns @ a1.values)
        - b * (phi1.columns @ (phi2.columns @ a2.values))
    )
    return float(0.5 * (r @ r))


def _grads_batch(cols, lams, W, b, X, T, bias_mode: BiasMode, cfg: ClassifierConfig):
    """Mean-loss gradients for all parameters; a.e. derivative through the
    clamps (0 exactly at the threshold)."""
    N = X.shape[0]
    L = len(cols)
    pres, acts, Y = _forward_batch(cols, lams, W, b, X)
    dZ = (Y - T) / N
    dW = dZ.T @ acts[-1]
    db = dZ.sum(axis=0)
    dA = [np.zeros_like(a) for a in acts]
    dA[-1] = dZ @ W
    dC = [None] * L
    dlam = [None] * L

    gamma = cfg.recon_weight
    dC_direct = [np.zeros_like(C) for C in cols]
    if gamma != 0.0:
        if L != 2:
            raise ValueError("the combined reconstruction term needs exactly 2 layers")
        wa, wb = cfg.recon_mix
        A1, A2 = acts[0], acts[1]
        C1, C2 = cols[0], cols[1]
        R = X - wa * (A1 @ C1.T) - wb * (A2 @ (C1 @ C2).T)
        scale = gamma / N
        dC_direct[0] = -scale * (R.T @ (wa * A1 + wb * (A2 @ C2.T)))
        dC_direct[1] = -scale * wb * (C1.T @ (R.T @ A2))
        dA[1] = dA[1] - scale * wb * (R @ (C1 @ C2))
        dA[0] = dA[0] - scale * wa * (R @ C1)

    grad_down = dA[-1]
    for k in range(L - 1, -1, -1):
        dP = grad_down * (pres[k] > 0)
        below = X if k == 0 else acts[k - 1]
        dC[k] = below.T @ dP + dC_direct[k]
        dlam[k] = -dP.sum(axis=0)
        if k > 0:
            grad_down = dP @ cols[k].T + dA[k - 1]

    if bias_mode.kind == "fixed":
        dlam = [np.zeros_like(g) for g in dlam]
    elif bias_mode.kind == "negative":
        for k in range(L):
            at_floor = lams[k] <= bias_mode.lambda_min
            dlam[k] = np.where(at_floor & (dlam[k] > 0), 0.0, dlam[k])
    return StackGrads(dC, dlam, dW, db), Y


def backprop_grads(batch, model: LayerStack, bias_mode: BiasMode) -> StackGrads:
    """Exact a.e. gradients of the mean cross-entropy for every parameter."""
    X, T = _batch_to_arrays(batch)
    cols, lams, W, b = _model_arrays(model)
    grads, _ = _grads_batch(cols, lams, W, b, X, T, bias_mode, ClassifierConfig())
    return grads


def _rebuild_stack(cols, lams, W, b, model: LayerStack, orthogonalized: bool) -> LayerStack:
    layers = []
    for (old_phi, old_reg), C, lam in zip(model.layers, cols, lams):
        phi = Dictionary(C, is_orthogonalized=orthogonalized)
        if old_reg.mode is RegMode.SHARED_SCALAR:
            reg = RegCoeffs.shared_coeff(float(lam[0]), old_reg.sign_policy)
        else:
            reg = RegCoeffs.per_unit_coeffs(lam, old_reg.sign_policy)
        layers.append((phi, reg))
    return LayerStack(tuple(layers), W, b)


def train_classifier(
    data, model_init: LayerStack, bias_mode: BiasMode, cfg: ClassifierConfig
) -> tuple[LayerStack, list[float]]:
    """Minibatch gradient descent on cross-entropy (plus the optional
    weighted reconstruction term). Returns the trained stack and per-epoch
    training accuracy.

    Every step re-projects each dictionary: SVD orthogonalization when
    cfg.orthogonalize_each_step, column normalization otherwise. Under the
    negative-only bias mode the lambdas are clamped to lambda_min after
    every update.
    """
    X, T = _batch_to_arrays(data)
    cols, lams, W, b = _model_arrays(model_init)
    cols = [np.array(C) for C in cols]
    lams = [np.array(l) for l in lams]
    W = np.array(W)
    b = np.array(b)
    if bias_mode.kind == "fixed" and len(bias_mode.fixed_lambdas) != len(cols):
        raise ValueError("fixed bias mode needs one lambda per layer")
    if bias_mode.kind == "fixed":
        lams = [np.full_like(l, v) for l, v in zip(lams, bias_mode.fixed_lambdas)]
    rng = np.random.default_rng(cfg.rng_seed)
    lr = cfg.learning_rate
    accuracy = []
    for _ in range(cfg.epochs):
        order = rng.permutation(X.shape[0])
        for start in range(0, X.shape[0], cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            grads, _ = _grads_batch(cols, lams, W, b, X[idx], T[idx], bias_mode, cfg)
            W -= lr * grads.head_weights
            b -= lr * grads.head_bias
            for k in range(len(cols)):
                cols[k] -= lr * grads.phi[k]
                if cfg.orthogonalize_each_step:
                    cols[k] = np.array(svd_orthogonalize(cols[k]).columns)
                else:
                    cols[k] = np.array(normalize_columns(cols[k]).columns)
                if bias_mode.kind != "fixed":
                    lams[k] -= lr * grads.lam[k]
                if bias_mode.kind == "negative":
                    np.maximum(lams[k], bias_mode.lambda_min, out=lams[k])
        _, _, Y = _forward_batch(cols, lams, W, b, X)
        accuracy.append(float(np.mean(np.argmax(Y, axis=1) == np.argmax(T, axis=1))))
    model = _rebuild_stack(cols, lams, W, b, model_init, cfg.orthogonalize_each_step)
    return model, accuracy


def evaluate_accuracy(data, model: LayerStack) -> float:
    """Fraction of samples whose predicted class matches the target; argmax
    ties resolve to the lowest index."""
    X, T = _batch_to_arrays(data)
    cols, lams, W, b = _model_arrays(model)
    _, _, Y = _forward_batch(cols, lams, W, b, X)
    return float(np.mean(np.argmax(Y, axis=1) == np.argmax(T, axis=1)))


def init_classifier(
    input_dim: int,
    layer_widths,
    n_classes: int,
    bias_mode: BiasMode,
    lambda_init: float = 0.1,
    seed: int = 0,
) -> LayerStack:
    """Random unit-norm layers with constant initial lambdas and a small
    Gaussian head."""
    rng = np.random.default_rng(seed)
    widths = list(layer_widths)
    fixed = None
    if bias_mode.kind == "fixed":
        fixed = bias_mode.fixed_lambdas
        if len(fixed) == 1:
            fixed = fixed * len(widths)
        if len(fixed) != len(widths):
            raise ValueError("fixed bias mode needs one lambda per layer")
    layers = []
    below = input_dim
    for k, width in enumerate(widths):
        phi = normalize_columns(rng.standard_normal((below, width)))
        if bias_mode.kind == "fixed":
            reg = RegCoeffs.shared_coeff(fixed[k], SignPolicy.NON_NEGATIVE_ONLY)
        elif bias_mode.kind == "negative":
            lam0 = max(lambda_init, bias_mode.lambda_min)
            reg = RegCoeffs.per_unit_coeffs(
                np.full(width, lam0), SignPolicy.NON_NEGATIVE_ONLY
            )
        else:
            reg = RegCoeffs.per_unit_coeffs(
                np.full(width, lambda_init), SignPolicy.FREE
            )
        layers.append((phi, reg))
        below = width
    W = 0.1 * rng.standard_normal((n_classes, below))
    b = np.zeros(n_classes)
    return LayerStack(tuple(layers), W, b)
