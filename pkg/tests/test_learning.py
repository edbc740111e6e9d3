import numpy as np
import pytest

from orthosc.learning import (
    TrainConfig,
    count_high_frequency,
    dict_gradient,
    finite_diff_gradient,
    normalize_columns,
    random_orthogonal_dictionary,
    recon_loss,
    spectral_centroid,
    svd_orthogonalize,
    train_dictionary,
)
from orthosc.types import Dictionary, RegCoeffs, Sample, SignPolicy

FREE = SignPolicy.FREE
NONNEG = SignPolicy.NON_NEGATIVE_ONLY


def reference_loss(cols, batch, reg):
    """Term-by-term re-evaluation of the objective, one sample at a time."""
    lams = reg.as_vector(cols.shape[1])
    total = 0.0
    for x in np.atleast_2d(batch):
        p = cols.T @ x
        if reg.sign_policy is FREE and reg.shared is not None:
            a = np.array([np.sign(v) * max(abs(v) - l, 0.0) for v, l in zip(p, lams)])
            penalty = float(np.sum(lams * np.abs(a)))
        else:
            a = np.array([max(0.0, v - l) for v, l in zip(p, lams)])
            penalty = float(np.sum(lams * a))
        r = x - cols @ a
        total += 0.5 * float(r @ r) + penalty
    return total / np.atleast_2d(batch).shape[0]


# ---------------------------------------------------------------------------
# recon loss
# ---------------------------------------------------------------------------


def test_recon_loss_huge_lambda_leaves_input_energy():
    rng = np.random.default_rng(40)
    phi = random_orthogonal_dictionary(6, 4, seed=1)
    batch = rng.standard_normal((5, 6))
    loss = recon_loss(phi, batch, RegCoeffs.shared_coeff(1e6, FREE))
    assert loss == pytest.approx(np.mean(0.5 * np.sum(batch**2, axis=1)), rel=1e-12)


def test_recon_loss_zero_lambda_square_orthonormal_is_zero():
    rng = np.random.default_rng(41)
    phi = random_orthogonal_dictionary(5, 5, seed=2)
    batch = rng.standard_normal((4, 5))
    assert recon_loss(phi, batch, RegCoeffs.shared_coeff(0.0, FREE)) < 1e-15


@pytest.mark.parametrize(
    "reg",
    [
        RegCoeffs.shared_coeff(0.2, FREE),
        RegCoeffs.shared_coeff(0.2, NONNEG),
        RegCoeffs.per_unit_coeffs([0.1, 0.0, 0.3, 0.2]),
    ],
)
def test_recon_loss_matches_reference_evaluation(reg):
    rng = np.random.default_rng(42)
    phi = random_orthogonal_dictionary(6, 4, seed=3)
    batch = rng.standard_normal((7, 6))
    assert recon_loss(phi, batch, reg) == pytest.approx(
        reference_loss(phi.columns, batch, reg), rel=1e-12
    )


def test_recon_loss_accepts_samples_and_rejects_mismatch():
    phi = random_orthogonal_dictionary(4, 3, seed=4)
    samples = [Sample(np.ones(4)), Sample(np.zeros(4))]
    reg = RegCoeffs.shared_coeff(0.1, FREE)
    assert recon_loss(phi, samples, reg) >= 0
    with pytest.raises(ValueError):
        recon_loss(phi, np.ones((2, 5)), reg)


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------


def test_dict_gradient_zero_when_everything_thresholded():
    rng = np.random.default_rng(43)
    phi = random_orthogonal_dictionary(5, 3, seed=5)
    batch = rng.standard_normal((6, 5))
    g = dict_gradient(phi, batch, RegCoeffs.shared_coeff(1e6, FREE))
    assert np.array_equal(g, np.zeros((5, 3)))


@pytest.mark.parametrize("flavor", ["free", "nonneg", "perunit"])
def test_dict_gradient_matches_finite_differences(flavor):
    rng = np.random.default_rng(44)
    done = 0
    while done < 5:
        m = int(rng.integers(3, 9))
        n = int(rng.integers(2, m + 1))
        phi = Dictionary(np.linalg.qr(rng.standard_normal((m, n)))[0], is_orthogonalized=True)
        batch = rng.standard_normal((int(rng.integers(2, 6)), m))
        if flavor == "free":
            reg = RegCoeffs.shared_coeff(rng.uniform(0.05, 0.4), FREE)
        elif flavor == "nonneg":
            reg = RegCoeffs.shared_coeff(rng.uniform(0.05, 0.4), NONNEG)
        else:
            reg = RegCoeffs.per_unit_coeffs(rng.uniform(0, 0.4, n))
        lams = reg.as_vector(n)
        if np.any(np.abs(np.abs(batch @ phi.columns) - lams) < 1e-3):
            continue  # stay away from the clamp boundary
        g = dict_gradient(phi, batch, reg)
        fd = finite_diff_gradient(phi, batch, reg, h=1e-6)
        scale = np.maximum(np.maximum(np.abs(g), np.abs(fd)), 1e-8)
        assert np.max(np.abs(g - fd) / scale) <= 1e-4
        done += 1


def test_single_basis_zero_lambda_gradient():
    rng = np.random.default_rng(45)
    col = rng.standard_normal(4)
    phi = Dictionary((col / np.linalg.norm(col))[:, None])
    batch = rng.standard_normal((1, 4))
    reg = RegCoeffs.shared_coeff(0.0, FREE)
    g = dict_gradient(phi, batch, reg)
    fd = finite_diff_gradient(phi, batch, reg, h=1e-6)
    assert np.max(np.abs(g - fd)) < 1e-7


def test_finite_diff_zero_regime_and_h_validation():
    phi = random_orthogonal_dictionary(4, 3, seed=6)
    batch = np.random.default_rng(46).standard_normal((3, 4))
    fd = finite_diff_gradient(phi, batch, RegCoeffs.shared_coeff(1e6, FREE), h=1e-6)
    assert np.array_equal(fd, np.zeros((4, 3)))
    with pytest.raises(ValueError):
        finite_diff_gradient(phi, batch, RegCoeffs.shared_coeff(0.1, FREE), h=0)


def test_finite_diff_error_shrinks_quadratically():
    rng = np.random.default_rng(47)
    phi = random_orthogonal_dictionary(6, 4, seed=5)
    batch = rng.standard_normal((5, 6))
    reg = RegCoeffs.shared_coeff(0.15, FREE)
    g = dict_gradient(phi, batch, reg)
    err_h = np.max(np.abs(finite_diff_gradient(phi, batch, reg, h=1e-3) - g))
    err_half = np.max(np.abs(finite_diff_gradient(phi, batch, reg, h=5e-4) - g))
    assert 2.0 < err_h / err_half < 8.0  # ~4x for a second-order scheme


# ---------------------------------------------------------------------------
# orthogonalization and normalization
# ---------------------------------------------------------------------------


def test_svd_orthogonalize_fixed_point_on_orthonormal_input():
    rng = np.random.default_rng(48)
    q = svd_orthogonalize(rng.standard_normal((9, 5))).columns  # sign convention applied
    again = svd_orthogonalize(q).columns
    assert np.max(np.abs(again - q)) < 1e-10


def test_svd_orthogonalize_removes_diagonal_scaling():
    out = svd_orthogonalize(np.array([[2.0, 0.0], [0.0, 3.0]]))
    assert np.allclose(out.columns, np.eye(2), atol=1e-12)
    assert out.is_orthogonalized


def test_svd_orthogonalize_matches_inverse_sqrt_oracle():
    rng = np.random.default_rng(49)
    A = rng.standard_normal((12, 8))
    ours = svd_orthogonalize(A).columns
    # independent route: symmetric eigendecomposition inverse square root
    d, E = np.linalg.eigh(A.T @ A)
    oracle = A @ (E * d**-0.5) @ E.T
    idx = np.argmax(np.abs(oracle), axis=0)
    signs = np.sign(oracle[idx, np.arange(8)])
    assert np.max(np.abs(ours - oracle * signs)) < 1e-10


def test_svd_orthogonalize_idempotent():
    rng = np.random.default_rng(50)
    for _ in range(10):
        A = rng.standard_normal((int(rng.integers(3, 12)), int(rng.integers(2, 4))))
        once = svd_orthogonalize(A).columns
        twice = svd_orthogonalize(once).columns
        assert np.max(np.abs(once - twice)) <= 1e-8


def test_svd_orthogonalize_rejects_rank_deficiency():
    col = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])  # rank 1
    with pytest.raises(ValueError, match="rank-deficient"):
        svd_orthogonalize(col)


def test_normalize_columns_basic():
    out = normalize_columns(np.array([[3.0], [4.0]]))
    assert np.allclose(out.columns[:, 0], [0.6, 0.8], atol=1e-15)


def test_normalize_columns_idempotent():
    rng = np.random.default_rng(51)
    once = normalize_columns(rng.standard_normal((5, 3)))
    twice = normalize_columns(once)
    assert np.max(np.abs(once.columns - twice.columns)) < 1e-15


def test_normalize_columns_rejects_zero_column():
    with pytest.raises(ValueError, match="zero column"):
        normalize_columns(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_random_orthogonal_dictionary_shape_guard():
    with pytest.raises(ValueError):
        random_orthogonal_dictionary(3, 5, seed=0)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)


def test_train_dictionary_deterministic_given_seed():
    rng = np.random.default_rng(52)
    X = rng.standard_normal((200, 8))
    init = random_orthogonal_dictionary(8, 5, seed=7)
    cfg = TrainConfig(
        learning_rate=1e-2,
        batch_size=50,
        epochs=3,
        lam=RegCoeffs.shared_coeff(0.15, FREE),
        rng_seed=9,
    )
    d1, c1 = train_dictionary(init, X, cfg)
    d2, c2 = train_dictionary(init, X, cfg)
    assert np.array_equal(d1.columns, d2.columns)
    assert c1 == c2


def test_training_steps_lower_the_loss_on_a_fixed_batch():
    rng = np.random.default_rng(53)
    batch = rng.standard_normal((40, 12))
    reg = RegCoeffs.shared_coeff(0.15, FREE)
    cols = np.array(random_orthogonal_dictionary(12, 8, seed=2).columns)
    decreases = 0
    prev = recon_loss(cols, batch, reg)
    for _ in range(100):
        cols = cols - 1e-3 * dict_gradient(cols, batch, reg)
        cols = np.array(svd_orthogonalize(cols).columns)
        cur = recon_loss(cols, batch, reg)
        decreases += cur < prev
        prev = cur
    assert decreases >= 95


def test_gram_stays_orthonormal_during_training():
    rng = np.random.default_rng(54)
    X = rng.standard_normal((120, 10))
    init = random_orthogonal_dictionary(10, 6, seed=3)
    cfg = TrainConfig(
        learning_rate=1e-2,
        batch_size=40,
        epochs=2,
        lam=RegCoeffs.shared_coeff(0.1, FREE),
        rng_seed=1,
    )
    final, curve = train_dictionary(init, X, cfg)
    gram = final.columns.T @ final.columns
    assert np.max(np.abs(gram - np.eye(6))) <= 1e-8
    assert len(curve) == 3  # initial + per-epoch
    assert final.is_orthogonalized


def test_normalize_mode_returns_unit_columns():
    rng = np.random.default_rng(55)
    X = rng.standard_normal((100, 6))
    init = random_orthogonal_dictionary(6, 4, seed=8)
    cfg = TrainConfig(
        learning_rate=1e-2,
        batch_size=25,
        epochs=2,
        lam=RegCoeffs.shared_coeff(0.1, FREE),
        orthogonalize_each_step=False,
        rng_seed=2,
    )
    final, _ = train_dictionary(init, X, cfg)
    assert not final.is_orthogonalized
    assert np.allclose(np.linalg.norm(final.columns, axis=0), 1.0, atol=1e-10)


def test_train_dictionary_aborts_on_divergence():
    rng = np.random.default_rng(56)
    X = 1e10 * rng.standard_normal((100, 6))
    init = random_orthogonal_dictionary(6, 4, seed=7)
    cfg = TrainConfig(
        learning_rate=1e300,
        batch_size=50,
        epochs=1,
        lam=RegCoeffs.shared_coeff(0.15, FREE),
        rng_seed=9,
    )
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(FloatingPointError, match="diverged"):
            train_dictionary(init, X, cfg)


# ---------------------------------------------------------------------------
# spectral diagnostic
# ---------------------------------------------------------------------------


def test_spectral_centroid_orders_frequencies():
    side = 8
    flat = np.ones(side * side)
    checker = np.indices((side, side)).sum(axis=0) % 2 * 2.0 - 1.0
    smooth = np.cos(2 * np.pi * np.arange(side) / side)[None, :] * np.ones((side, 1))
    assert spectral_centroid(flat, side) == 0.0
    assert spectral_centroid(checker.ravel(), side) > 0.9
    assert spectral_centroid(smooth.ravel(), side) < spectral_centroid(checker.ravel(), side)


def test_count_high_frequency():
    side = 8
    checker = (np.indices((side, side)).sum(axis=0) % 2 * 2.0 - 1.0).ravel()
    smooth = (np.cos(2 * np.pi * np.arange(side) / side)[None, :] * np.ones((side, 1))).ravel()
    cols = np.stack([checker / np.linalg.norm(checker), smooth / np.linalg.norm(smooth)], axis=1)
    assert count_high_frequency(cols, side, threshold=0.35) == 1
