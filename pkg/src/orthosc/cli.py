"""Command-line entry point wiring the pipeline end to end.

Subcommands: whiten, train-dict, viz, infer, train-classifier, eval,
check. Every command is deterministic given its --seed and exits nonzero
with a one-line diagnostic on failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import checks, data
from .classifier import (
    BiasMode,
    ClassifierConfig,
    LabeledSample,
    evaluate_accuracy,
    init_classifier,
    train_classifier,
)
from .inference import (
    l0_orthogonal_infer,
    lasso_iterative,
    nonneg_lasso_iterative,
    orth_lasso_infer,
    orth_nonneg_infer,
    per_unit_forward,
    ridge_closed_form,
    ridge_orthogonal,
)
from .learning import TrainConfig, random_orthogonal_dictionary, train_dictionary
from .types import RegCoeffs, Sample, SignPolicy
from .viz import render_basis_grid


def _cmd_whiten(args) -> int:
    per_image = [args.count // len(args.images)] * len(args.images)
    for k in range(args.count % len(args.images)):
        per_image[k] += 1
    sets = []
    for k, path in enumerate(args.images):
        img = data.load_image_pgm(path)
        if per_image[k] > 0:
            sets.append(data.extract_patches(img, args.patch_side, per_image[k], args.seed + k))
    raw = data.PatchSet(np.concatenate([p.patches for p in sets]), args.patch_side)
    wt = data.fit_whitening(raw, eps=args.eps)
    white = data.apply_whitening(wt, raw)
    data.save_patches(args.out, white)
    data.save_whitening(args.wt, wt)
    print(f"wrote {white.count} whitened {args.patch_side}x{args.patch_side} patches")
    return 0


def _cmd_train_dict(args) -> int:
    patches = data.load_patches(args.patches)
    reg = RegCoeffs.shared_coeff(args.lam, SignPolicy.FREE)
    init = random_orthogonal_dictionary(patches.dim, args.n, seed=args.seed)
    cfg = TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch_size,
        epochs=args.epochs,
        lam=reg,
        orthogonalize_each_step=args.orthogonalize,
        rng_seed=args.seed,
    )
    final, curve = train_dictionary(init, patches, cfg)
    data.save_dictionary(args.out, final)
    if args.loss_csv:
        with open(args.loss_csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "mean_loss"])
            for epoch, loss in enumerate(curve):
                writer.writerow([epoch, repr(loss)])
    print(f"trained {patches.dim}x{args.n} dictionary; loss {curve[0]:.4f} -> {curve[-1]:.4f}")
    return 0


def _cmd_viz(args) -> int:
    phi = data.load_dictionary(args.dict)
    pixels = render_basis_grid(phi, args.patch_side, args.out)
    print(f"wrote {pixels.shape[1]}x{pixels.shape[0]} basis grid to {args.out}")
    return 0


def _parse_lambdas(text: str) -> np.ndarray:
    return np.array([float(v) for v in text.split(",")])


def _cmd_infer(args) -> int:
    phi = data.load_dictionary(args.dict)
    x = Sample(np.loadtxt(args.sample).ravel())
    mode, solver = args.mode, args.solver
    if mode == "lasso":
        if args.lam is None:
            raise ValueError("--lambda required for lasso")
        if solver == "closed":
            out = orth_lasso_infer(phi, x, RegCoeffs.shared_coeff(args.lam, SignPolicy.FREE))
        else:
            out, _ = lasso_iterative(phi, x, args.lam)
    elif mode == "nonneg":
        if args.lam is None:
            raise ValueError("--lambda required for nonneg")
        if solver == "closed":
            out = orth_nonneg_infer(
                phi, x, RegCoeffs.shared_coeff(args.lam, SignPolicy.NON_NEGATIVE_ONLY)
            )
        else:
            out, _ = nonneg_lasso_iterative(phi, x, args.lam)
    elif mode == "perunit":
        if args.lambdas is None:
            raise ValueError("--lambdas required for perunit")
        lams = _parse_lambdas(args.lambdas)
        policy = SignPolicy.FREE if np.any(lams < 0) else SignPolicy.NON_NEGATIVE_ONLY
        out = per_unit_forward(phi, x, RegCoeffs.per_unit_coeffs(lams, policy))
    elif mode == "ridge":
        if args.lam is None:
            raise ValueError("--lambda required for ridge")
        if phi.is_orthogonalized:
            out = ridge_orthogonal(phi, x, args.lam)
        else:
            out = ridge_closed_form(phi, x, args.lam)
    elif mode == "l0":
        if args.k is None:
            raise ValueError("--k required for l0")
        out = l0_orthogonal_infer(phi, x, args.k)
    else:  # pragma: no cover - argparse restricts choices
        raise ValueError(f"unknown mode {mode}")
    for v in out.values:
        print(f"{v:.17g}")
    return 0


def _load_labeled_dir(root: Path) -> tuple[list[LabeledSample], list[str]]:
    classes = sorted(p.name for p in root.iterdir() if p.is_dir())
    if len(classes) < 2:
        raise ValueError(f"{root}: need at least 2 class subdirectories")
    samples = []
    for idx, name in enumerate(classes):
        for f in sorted((root / name).glob("*.txt")):
            vec = np.loadtxt(f).ravel()
            target = np.zeros(len(classes))
            target[idx] = 1.0
            samples.append(LabeledSample(Sample(vec), target))
    if not samples:
        raise ValueError(f"{root}: no .txt sample files found")
    return samples, classes


def _parse_bias_mode(text: str) -> BiasMode:
    if text == "free":
        return BiasMode.free_cnn()
    if text == "negative":
        return BiasMode.negative_only()
    if text.startswith("fixed:"):
        return BiasMode.shared_scalar_fixed(_parse_lambdas(text[len("fixed:"):]))
    raise ValueError(f"unknown bias mode {text!r} (use free, negative, or fixed:<lambda,...>)")


def _cmd_train_classifier(args) -> int:
    samples, classes = _load_labeled_dir(Path(args.data))
    bias_mode = _parse_bias_mode(args.bias_mode)
    widths = [int(v) for v in args.layers.split(",")]
    if bias_mode.kind == "fixed" and len(bias_mode.fixed_lambdas) == 1:
        bias_mode = BiasMode.shared_scalar_fixed(bias_mode.fixed_lambdas * len(widths))
    model = init_classifier(
        samples[0].input.dim,
        widths,
        len(classes),
        bias_mode,
        lambda_init=args.lambda_init,
        seed=args.seed,
    )
    cfg = ClassifierConfig(
        learning_rate=args.lr,
        batch_size=args.batch_size,
        epochs=args.epochs,
        orthogonalize_each_step=args.orthogonalize,
        rng_seed=args.seed,
    )
    trained, accuracy = train_classifier(samples, model, bias_mode, cfg)
    data.save_model(args.out, trained)
    if args.accuracy_csv:
        with open(args.accuracy_csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_accuracy"])
            for epoch, acc in enumerate(accuracy, start=1):
                writer.writerow([epoch, repr(acc)])
    print(f"trained on {len(samples)} samples, {len(classes)} classes; "
          f"final train accuracy {accuracy[-1]:.4f}")
    return 0


def _cmd_eval(args) -> int:
    samples, _ = _load_labeled_dir(Path(args.data))
    model = data.load_model(args.model)
    print(f"accuracy {evaluate_accuracy(samples, model):.6f}")
    return 0


def _cmd_check(args) -> int:
    results = checks.run_all(quick=args.quick, artifacts_dir=args.artifacts)
    for res in results:
        print(res.line())
    failed = [r for r in results if not r.passed]
    if failed:
        print(f"error: {len(failed)} of {len(results)} checks failed", file=sys.stderr)
        return 1
    print(f"all {len(results)} checks passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="orthosc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("whiten", help="extract and whiten image patches")
    p.add_argument("--in", dest="images", nargs="+", required=True, metavar="PGM")
    p.add_argument("--patch-side", type=int, default=12)
    p.add_argument("--count", type=int, default=50_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=1e-8)
    p.add_argument("--out", required=True, help="whitened patches (.osp)")
    p.add_argument("--wt", required=True, help="whitening transform (.osw)")
    p.set_defaults(func=_cmd_whiten)

    p = sub.add_parser("train-dict", help="learn an orthogonal dictionary")
    p.add_argument("--patches", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=0.1)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--orthogonalize", action="store_true",
                   help="re-orthogonalize after every step (else normalize columns)")
    p.add_argument("--out", required=True)
    p.add_argument("--loss-csv", default=None)
    p.set_defaults(func=_cmd_train_dict)

    p = sub.add_parser("viz", help="render the basis grid as a PNG")
    p.add_argument("--dict", required=True)
    p.add_argument("--patch-side", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_viz)

    p = sub.add_parser("infer", help="run one sparse inference solve")
    p.add_argument("--dict", required=True)
    p.add_argument("--sample", required=True, help="text file of input values")
    p.add_argument("--mode", choices=("lasso", "nonneg", "perunit", "ridge", "l0"),
                   required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--lambdas", default=None, help="comma-separated per-unit values")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--solver", choices=("closed", "iterative"), default="closed")
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("train-classifier", help="train a stacked classifier")
    p.add_argument("--layers", required=True, help="comma-separated layer widths")
    p.add_argument("--bias-mode", required=True,
                   help="free, negative, or fixed:<lambda[,lambda...]>")
    p.add_argument("--data", required=True, help="directory with one subdirectory per class")
    p.add_argument("--out", required=True)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lambda-init", type=float, default=0.1)
    p.add_argument("--orthogonalize", action="store_true")
    p.add_argument("--accuracy-csv", default=None)
    p.set_defaults(func=_cmd_train_classifier)

    p = sub.add_parser("eval", help="evaluate a saved model on a labeled directory")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("check", help="run the oracle/equivalence suite")
    p.add_argument("--quick", action="store_true", help="reduced-scale smoke run")
    p.add_argument("--artifacts", default=None, help="directory for emitted artifacts")
    p.set_defaults(func=_cmd_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - single diagnostic line by contract
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
