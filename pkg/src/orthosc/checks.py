"""Oracle and equivalence checks gating the toolkit.

Each check pits an implementation against an independent route: closed
forms against iterative solvers, analytic gradients against central
differences, window inference against a naive convolution, top-k selection
against exhaustive support enumeration. ``run_all`` drives every check and
is the engine behind the ``check`` CLI subcommand and the acceptance test
suite.
"""

from __future__ import annotations

import os
import tempfile
import time
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from . import data, synth, viz
from .classifier import (
    BiasMode,
    ClassifierConfig,
    LabeledSample,
    backprop_grads,
    init_classifier,
    train_classifier,
)
from .inference import (
    check_subdifferential_optimality,
    l0_orthogonal_infer,
    lasso_iterative,
    nonneg_lasso_iterative,
    orth_lasso_infer,
    orth_nonneg_infer,
    per_unit_forward,
    ridge_closed_form,
    ridge_orthogonal,
)
from .learning import (
    TrainConfig,
    count_high_frequency,
    dict_gradient,
    finite_diff_gradient,
    random_orthogonal_dictionary,
    svd_orthogonalize,
    train_dictionary,
)
from .sconv import Solver, sconv_forward
from .types import (
    Dictionary,
    FeatureMap,
    RegCoeffs,
    Sample,
    SignPolicy,
)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def _random_orthonormal(rng, m: int, n: int) -> Dictionary:
    q, _ = np.linalg.qr(rng.standard_normal((m, n)))
    return Dictionary(q, is_orthogonalized=True)


def check_closed_form_vs_oracle(instances: int = 100, m: int = 64, n: int = 32) -> CheckResult:
    """L1 and non-negative closed forms against the proximal solvers."""
    rng = np.random.default_rng(101)
    started = time.time()
    worst = 0.0
    for _ in range(instances):
        phi = _random_orthonormal(rng, m, n)
        x = Sample(rng.standard_normal(m))
        lam = rng.uniform(0.05, 0.5)
        closed = orth_lasso_infer(phi, x, RegCoeffs.shared_coeff(lam, SignPolicy.FREE))
        iterative, rep = lasso_iterative(phi, x, lam)
        worst = max(worst, np.max(np.abs(closed.values - iterative.values)))
        closed_nn = orth_nonneg_infer(
            phi, x, RegCoeffs.shared_coeff(lam, SignPolicy.NON_NEGATIVE_ONLY)
        )
        iterative_nn, _ = nonneg_lasso_iterative(phi, x, lam)
        worst = max(worst, np.max(np.abs(closed_nn.values - iterative_nn.values)))
        if not rep.converged:
            return CheckResult("closed-form-vs-oracle", False, "iterative solver stalled")
    elapsed = time.time() - started
    ok = worst <= 1e-6 and elapsed < 10.0
    return CheckResult(
        "closed-form-vs-oracle",
        ok,
        f"{instances} instances ({m}x{n}), max gap {worst:.2e}, {elapsed:.2f}s",
    )


def check_relu_equivalence(instances: int = 100) -> CheckResult:
    """Per-unit closed form against a plain dense ReLU layer."""
    rng = np.random.default_rng(102)
    worst = 0.0
    for _ in range(instances):
        m = int(rng.integers(3, 24))
        n = int(rng.integers(1, m + 1))
        phi = _random_orthonormal(rng, m, n)
        lams = rng.uniform(0.0, 0.6, n)
        x = Sample(rng.standard_normal(m))
        ours = per_unit_forward(phi, x, RegCoeffs.per_unit_coeffs(lams))
        W, b = phi.columns.T, -lams
        reference = np.maximum(0.0, W @ x.values + b)
        worst = max(worst, np.max(np.abs(ours.values - reference)))
    ok = worst <= 1e-12
    return CheckResult("relu-equivalence", ok, f"{instances} models, max gap {worst:.2e}")


def _reference_relu_conv(fmap: FeatureMap, phi: Dictionary, lams, window: int, stride: int):
    """Naive valid-mode ReLU cross-correlation; the independent oracle."""
    n = phi.n_basis
    b = fmap.channels
    kernels = phi.columns.T.reshape(n, window, window, b)
    grid = (fmap.side - window) // stride + 1
    out = np.zeros((grid, grid, n))
    for i in range(grid):
        for j in range(grid):
            patch = fmap.data[
                i * stride : i * stride + window, j * stride : j * stride + window, :
            ]
            for c in range(n):
                acc = 0.0
                for u in range(window):
                    for v in range(window):
                        for ch in range(b):
                            acc += kernels[c, u, v, ch] * patch[u, v, ch]
                out[i, j, c] = max(0.0, acc - lams[c])
    return out


def check_sconv_equivalence(max_side: int = 8, max_channels: int = 4) -> CheckResult:
    """Window inference against the naive convolution for every geometry."""
    rng = np.random.default_rng(103)
    worst = 0.0
    cases = 0
    for n_side in range(1, max_side + 1):
        for window in range(1, n_side + 1):
            for channels in range(1, max_channels + 1):
                for stride in (1, 2):
                    fmap = FeatureMap(rng.standard_normal((n_side, n_side, channels)))
                    in_dim = window * window * channels
                    n_basis = int(rng.integers(1, min(in_dim, 12) + 1))
                    phi = _random_orthonormal(rng, in_dim, n_basis)
                    lams = rng.uniform(0.0, 0.4, n_basis)
                    reg = RegCoeffs.per_unit_coeffs(lams)
                    ours = sconv_forward(fmap, phi, reg, window, stride, Solver.ORTH_CLOSED_FORM)
                    ref = _reference_relu_conv(fmap, phi, lams, window, stride)
                    worst = max(worst, np.max(np.abs(ours.data - ref)))
                    cases += 1
    ok = worst <= 1e-12
    return CheckResult("sconv-equivalence", ok, f"{cases} geometries, max gap {worst:.2e}")


def _ridge_minimizer(cols: np.ndarray, x: np.ndarray, lam: float) -> np.ndarray:
    """Gradient descent on the L2-penalized objective to tiny gradient norm."""
    n = cols.shape[1]
    gram = cols.T @ cols
    step = 1.0 / (np.linalg.eigvalsh(gram)[-1] + lam)
    a = np.zeros(n)
    for _ in range(100_000):
        grad = gram @ a - cols.T @ x + lam * a
        if np.linalg.norm(grad, np.inf) <= 1e-10:
            break
        a -= step * grad
    return a


def check_ridge(instances: int = 20) -> CheckResult:
    """Closed form against the numeric minimizer; orthogonal reduction."""
    rng = np.random.default_rng(104)
    worst_gd = 0.0
    worst_orth = 0.0
    for _ in range(instances):
        m, n = int(rng.integers(4, 10)), int(rng.integers(2, 5))
        cols = rng.standard_normal((m, n))
        cols /= np.linalg.norm(cols, axis=0)
        phi = Dictionary(cols)
        x = Sample(rng.standard_normal(m))
        lam = rng.uniform(0.2, 1.5)
        closed = ridge_closed_form(phi, x, lam)
        numeric = _ridge_minimizer(cols, x.values, lam)
        worst_gd = max(worst_gd, np.max(np.abs(closed.values - numeric)))
        qphi = _random_orthonormal(rng, m, n)
        c1 = ridge_closed_form(qphi, x, lam)
        c2 = ridge_orthogonal(qphi, x, lam)
        worst_orth = max(worst_orth, np.max(np.abs(c1.values - c2.values)))
    ok = worst_gd <= 1e-6 and worst_orth <= 1e-12
    return CheckResult(
        "ridge-closed-forms",
        ok,
        f"vs minimizer {worst_gd:.2e}, orthogonal reduction {worst_orth:.2e}",
    )


def _best_support_error(cols: np.ndarray, x: np.ndarray, k: int) -> float:
    """Exhaustive least-squares search over every support of size <= k."""
    n = cols.shape[1]
    best = 0.5 * float(x @ x)  # empty support
    for size in range(1, k + 1):
        for support in combinations(range(n), size):
            sub = cols[:, support]
            coef, *_ = np.linalg.lstsq(sub, x, rcond=None)
            r = x - sub @ coef
            best = min(best, 0.5 * float(r @ r))
    return best


def check_l0_exhaustive(instances: int = 200, max_n: int = 12) -> CheckResult:
    rng = np.random.default_rng(105)
    worst = 0.0
    for _ in range(instances):
        n = int(rng.integers(2, max_n + 1))
        m = int(rng.integers(n, 2 * n + 4))
        phi = _random_orthonormal(rng, m, n)
        x = Sample(rng.standard_normal(m))
        k = int(rng.integers(0, n + 1))
        a = l0_orthogonal_infer(phi, x, k)
        r = x.values - phi.columns @ a.values
        ours = 0.5 * float(r @ r)
        best = _best_support_error(phi.columns, x.values, k)
        worst = max(worst, ours - best)
    ok = worst <= 1e-9
    return CheckResult(
        "l0-vs-exhaustive", ok, f"{instances} instances, worst excess error {worst:.2e}"
    )


def check_optimality(instances: int = 100) -> CheckResult:
    """Subdifferential certificate on the outputs of every solver family."""
    rng = np.random.default_rng(106)
    for i in range(instances):
        m = int(rng.integers(4, 16))
        n = int(rng.integers(2, m + 1))
        phi = _random_orthonormal(rng, m, n)
        x = Sample(rng.standard_normal(m))
        lam = rng.uniform(0.05, 0.6)
        free = RegCoeffs.shared_coeff(lam, SignPolicy.FREE)
        nn = RegCoeffs.shared_coeff(lam, SignPolicy.NON_NEGATIVE_ONLY)
        per = RegCoeffs.per_unit_coeffs(rng.uniform(0.0, 0.6, n))
        outputs = [
            (free, orth_lasso_infer(phi, x, free)),
            (nn, orth_nonneg_infer(phi, x, nn)),
            (per, per_unit_forward(phi, x, per)),
            (free, lasso_iterative(phi, x, lam)[0]),
            (nn, nonneg_lasso_iterative(phi, x, lam)[0]),
        ]
        for reg, a in outputs:
            if not check_subdifferential_optimality(phi, x, reg, a, eps=1e-4):
                return CheckResult(
                    "subdifferential-optimality", False, f"violated at instance {i}"
                )
    return CheckResult(
        "subdifferential-optimality", True, f"{instances} instances x 5 solver outputs"
    )


def _boundary_free(P: np.ndarray, lams: np.ndarray, margin: float = 1e-3) -> bool:
    return bool(np.all(np.abs(np.abs(P) - lams) > margin))


def check_dict_gradient(configs: int = 50) -> CheckResult:
    rng = np.random.default_rng(107)
    worst = 0.0
    done = 0
    while done < configs:
        m = int(rng.integers(3, 10))
        n = int(rng.integers(2, m + 1))
        phi = _random_orthonormal(rng, m, n)
        batch = rng.standard_normal((int(rng.integers(2, 7)), m))
        flavor = done % 3
        if flavor == 0:
            reg = RegCoeffs.shared_coeff(rng.uniform(0.05, 0.4), SignPolicy.FREE)
        elif flavor == 1:
            reg = RegCoeffs.shared_coeff(rng.uniform(0.05, 0.4), SignPolicy.NON_NEGATIVE_ONLY)
        else:
            reg = RegCoeffs.per_unit_coeffs(rng.uniform(0.0, 0.4, n))
        lams = reg.as_vector(n)
        if not _boundary_free(batch @ phi.columns, lams):
            continue
        g = dict_gradient(phi, batch, reg)
        fd = finite_diff_gradient(phi, batch, reg, h=1e-6)
        scale = np.maximum(np.maximum(np.abs(g), np.abs(fd)), 1e-8)
        worst = max(worst, float(np.max(np.abs(g - fd) / scale)))
        done += 1
    ok = worst <= 1e-4
    return CheckResult("dict-gradient-vs-fd", ok, f"{configs} configs, worst rel err {worst:.2e}")


def check_backprop_gradient(configs: int = 50) -> CheckResult:
    from .classifier import PROB_FLOOR, _forward_batch

    rng = np.random.default_rng(108)
    worst = 0.0
    done = 0
    attempts = 0
    while done < configs and attempts < configs * 50:
        attempts += 1
        model = init_classifier(
            4, [5, 4], 3, BiasMode.free_cnn(), lambda_init=0.05, seed=int(rng.integers(1 << 30))
        )
        batch = []
        for _ in range(5):
            t = np.zeros(3)
            t[int(rng.integers(3))] = 1.0
            batch.append(LabeledSample(Sample(rng.standard_normal(4)), t))
        X = np.stack([s.input.values for s in batch])
        T = np.stack([s.target for s in batch])
        cols = [np.array(phi.columns) for phi, _ in model.layers]
        lams = [np.array(reg.as_vector(phi.n_basis)) for phi, reg in model.layers]
        W = np.array(model.head_weights)
        b = np.array(model.head_bias)

        pres, _, _ = _forward_batch(cols, lams, W, b, X)
        if any(np.any(np.abs(p) < 1e-3) for p in pres):
            continue  # skip configurations near a clamp boundary
        grads = backprop_grads(batch, model, BiasMode.free_cnn())

        def loss() -> float:
            _, _, Y = _forward_batch(cols, lams, W, b, X)
            return float(-np.sum(T * np.log(np.maximum(Y, PROB_FLOOR))) / X.shape[0])

        for arr, g in (
            *zip(cols, grads.phi),
            *zip(lams, grads.lam),
            (W, grads.head_weights),
            (b, grads.head_bias),
        ):
            flat = arr.ravel()
            gflat = np.asarray(g).ravel()
            for idx in range(flat.size):
                orig = flat[idx]
                flat[idx] = orig + 1e-6
                fp = loss()
                flat[idx] = orig - 1e-6
                fm = loss()
                flat[idx] = orig
                num = (fp - fm) / 2e-6
                scale = max(abs(num), abs(gflat[idx]), 1e-8)
                worst = max(worst, abs(num - gflat[idx]) / scale)
        done += 1
    ok = done == configs and worst <= 1e-4
    return CheckResult(
        "backprop-vs-fd", ok, f"{done} configs, worst rel err {worst:.2e}"
    )


def check_orthogonalization(steps: int = 40) -> CheckResult:
    """Gram deviation after every projected step; idempotence of the map."""
    rng = np.random.default_rng(109)
    batch = rng.standard_normal((60, 16))
    reg = RegCoeffs.shared_coeff(0.1, SignPolicy.FREE)
    cols = np.array(random_orthogonal_dictionary(16, 10, seed=4).columns)
    worst_gram = 0.0
    for _ in range(steps):
        cols = cols - 1e-2 * dict_gradient(cols, batch, reg)
        cols = np.array(svd_orthogonalize(cols).columns)
        worst_gram = max(
            worst_gram, float(np.max(np.abs(cols.T @ cols - np.eye(cols.shape[1]))))
        )
    worst_idem = 0.0
    for _ in range(20):
        a = rng.standard_normal((int(rng.integers(4, 14)), int(rng.integers(2, 5))))
        once = svd_orthogonalize(a).columns
        twice = svd_orthogonalize(once).columns
        worst_idem = max(worst_idem, float(np.max(np.abs(once - twice))))
    ok = worst_gram <= 1e-8 and worst_idem <= 1e-8
    return CheckResult(
        "svd-orthogonalization",
        ok,
        f"{steps} training steps max gram dev {worst_gram:.2e}, idempotence {worst_idem:.2e}",
    )


def fig2_training(
    n_basis: int = 100,
    n_images: int = 8,
    patches_per_image: int = 6250,
    epochs: int = 20,
    eps: float = 1e-4,
    lam: float = 0.1,
    seed: int = 0,
):
    """The whitened-patch basis-learning regime at desk scale.

    Returns (dictionary, loss curve, whitened patch set).
    """
    patch_side = 12
    sets = []
    for k in range(n_images):
        img = synth.dead_leaves_image(256, 400, seed=seed + k)
        sets.append(data.extract_patches(img, patch_side, patches_per_image, rng_seed=1000 + k))
    raw = data.PatchSet(np.concatenate([p.patches for p in sets]), patch_side)
    wt = data.fit_whitening(raw, eps=eps)
    white = data.apply_whitening(wt, raw)
    init = random_orthogonal_dictionary(patch_side**2, n_basis, seed=seed)
    cfg = TrainConfig(
        learning_rate=1e-2,
        batch_size=100,
        epochs=epochs,
        lam=RegCoeffs.shared_coeff(lam, SignPolicy.FREE),
        orthogonalize_each_step=True,
        rng_seed=seed,
    )
    final, curve = train_dictionary(init, white, cfg)
    return final, curve, white


def check_fig2_regime(
    artifacts_dir=None,
    patches_per_image: int = 6250,
    epochs: int = 20,
    sweep: bool = True,
    sweep_epochs: int = 5,
) -> CheckResult:
    """Loss halving in the 12x12/100-basis regime, grid render, and the
    basis-count sweep diagnostic (reported, not gated)."""
    started = time.time()
    outdir = artifacts_dir or tempfile.mkdtemp(prefix="orthosc-")
    final, curve, white = fig2_training(
        patches_per_image=patches_per_image, epochs=epochs
    )
    ratio = curve[-1] / curve[0]
    png = os.path.join(outdir, "basis_grid.png")
    pixels = viz.render_basis_grid(final, 12, png)
    detail = [f"loss {curve[0]:.3f}->{curve[-1]:.3f} (ratio {ratio:.3f})"]
    detail.append(f"grid {pixels.shape[0]}x{pixels.shape[1]} at {png}")
    if sweep:
        counts = []
        for n_basis in (49, 64, 81, 100, 121, 144):
            swept, _, _ = fig2_training(
                n_basis=n_basis,
                patches_per_image=max(2500, patches_per_image // 2),
                epochs=sweep_epochs,
            )
            counts.append((n_basis, count_high_frequency(swept, 12)))
        detail.append("high-frequency counts " + str(counts))
    elapsed = time.time() - started
    detail.append(f"{elapsed:.0f}s")
    ok = ratio < 0.5 and os.path.exists(png) and elapsed < 1800
    return CheckResult("basis-learning-regime", ok, "; ".join(detail))


def check_classifier_blobs(epochs: int = 200) -> CheckResult:
    started = time.time()
    pts, targets = synth.blob_dataset(n_per_class=100, separation=3.0, spread=0.7, seed=42)
    batch = [LabeledSample(Sample(p), t) for p, t in zip(pts, targets)]
    results = {}
    for name, mode in (
        ("free", BiasMode.free_cnn()),
        ("negative", BiasMode.negative_only(0.05)),
    ):
        model = init_classifier(2, [8], 2, mode, lambda_init=0.1, seed=0)
        cfg = ClassifierConfig(learning_rate=0.1, batch_size=32, epochs=epochs, rng_seed=0)
        trained, acc = train_classifier(batch, model, mode, cfg)
        results[name] = acc[-1]
        if name == "negative":
            lam = trained.layers[0][1].per_unit
            if np.any(lam < 0.05 - 1e-12):
                return CheckResult("classifier-blobs", False, "lambda floor violated")
    elapsed = time.time() - started
    ok = results["free"] >= 0.95 and results["negative"] >= 0.90 and elapsed <= 60
    return CheckResult(
        "classifier-blobs",
        ok,
        f"free {results['free']:.3f}, negative {results['negative']:.3f}, {elapsed:.1f}s",
    )


def check_serialization(fuzz_cases: int = 400) -> CheckResult:
    rng = np.random.default_rng(110)
    with tempfile.TemporaryDirectory(prefix="orthosc-io-") as tmp:
        path = os.path.join(tmp, "blob.bin")

        phi = _random_orthonormal(rng, 9, 5)
        data.save_dictionary(path, phi)
        if not np.array_equal(data.load_dictionary(path).columns, phi.columns):
            return CheckResult("serialization", False, "dictionary round trip not bit-exact")

        raw = rng.standard_normal((7, 16))
        patches = data.PatchSet(raw, 4)
        data.save_patches(path, patches)
        if not np.array_equal(data.load_patches(path).patches, raw):
            return CheckResult("serialization", False, "patch round trip not bit-exact")

        wt = data.fit_whitening(patches, eps=1e-4)
        data.save_whitening(path, wt)
        back = data.load_whitening(path)
        if not (np.array_equal(back.mean, wt.mean) and np.array_equal(back.matrix, wt.matrix)):
            return CheckResult("serialization", False, "whitening round trip not bit-exact")

        fmap = FeatureMap(rng.standard_normal((3, 3, 2)))
        data.save_feature_map(path, fmap)
        if not np.array_equal(data.load_feature_map(path).data, fmap.data):
            return CheckResult("serialization", False, "feature map round trip not bit-exact")

        model = init_classifier(6, [5, 4], 3, BiasMode.free_cnn(), seed=3)
        data.save_model(path, model)
        loaded = data.load_model(path)
        same = (
            np.array_equal(loaded.head_weights, model.head_weights)
            and np.array_equal(loaded.head_bias, model.head_bias)
            and all(
                np.array_equal(l1[0].columns, l2[0].columns)
                and np.array_equal(l1[1].as_vector(l1[0].n_basis), l2[1].as_vector(l2[0].n_basis))
                for l1, l2 in zip(loaded.layers, model.layers)
            )
        )
        if not same:
            return CheckResult("serialization", False, "model round trip not bit-exact")

        # fuzzed headers must fail cleanly, never crash
        loaders = (
            data.load_dictionary,
            data.load_whitening,
            data.load_patches,
            data.load_feature_map,
            data.load_model,
        )
        magics = (b"OSC1", b"OSW1", b"OSP1", b"OSF1", b"OSM1", b"????")
        for case in range(fuzz_cases):
            magic = magics[case % len(magics)]
            body = rng.integers(0, 256, size=int(rng.integers(0, 64)), dtype=np.uint8).tobytes()
            blob = magic + body if case % 3 else body
            with open(path, "wb") as fh:
                fh.write(blob)
            for loader in loaders:
                try:
                    loader(path)
                except ValueError:
                    pass
                except Exception as exc:  # noqa: BLE001 - the check itself
                    return CheckResult(
                        "serialization",
                        False,
                        f"fuzz case {case}: {type(exc).__name__} escaped from {loader.__name__}",
                    )
    return CheckResult("serialization", True, f"round trips bit-exact, {fuzz_cases} fuzz cases clean")


def run_all(quick: bool = False, artifacts_dir=None) -> list[CheckResult]:
    """Every check, full scale by default; quick mode shrinks the instance
    counts and the training regime for a fast smoke run."""
    if quick:
        return [
            check_closed_form_vs_oracle(instances=10),
            check_relu_equivalence(instances=10),
            check_sconv_equivalence(max_side=5, max_channels=3),
            check_ridge(instances=5),
            check_l0_exhaustive(instances=25, max_n=8),
            check_optimality(instances=10),
            check_dict_gradient(configs=8),
            check_backprop_gradient(configs=3),
            check_orthogonalization(steps=10),
            check_fig2_regime(
                artifacts_dir, patches_per_image=1500, epochs=4, sweep=False
            ),
            check_classifier_blobs(epochs=60),
            check_serialization(fuzz_cases=60),
        ]
    return [
        check_closed_form_vs_oracle(),
        check_relu_equivalence(),
        check_sconv_equivalence(),
        check_ridge(),
        check_l0_exhaustive(),
        check_optimality(),
        check_dict_gradient(),
        check_backprop_gradient(),
        check_orthogonalization(),
        check_fig2_regime(artifacts_dir),
        check_classifier_blobs(),
        check_serialization(),
    ]
