"""Sparse coding with orthogonal dictionaries: closed-form inference,
basis learning, stacked classifiers, and sliding-window inference."""

from .types import (
    CoeffVector,
    Dictionary,
    FeatureMap,
    LayerStack,
    RegCoeffs,
    RegMode,
    Sample,
    SignPolicy,
    WhiteningTransform,
)
from .inference import (
    SolverReport,
    check_subdifferential_optimality,
    l0_orthogonal_infer,
    lasso_iterative,
    nonneg_lasso_iterative,
    orth_lasso_infer,
    orth_nonneg_infer,
    per_unit_forward,
    ridge_closed_form,
    ridge_orthogonal,
    soft_threshold,
)
from .learning import (
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
from .classifier import (
    BiasMode,
    ClassifierConfig,
    LabeledSample,
    backprop_grads,
    combined_recon_loss,
    cross_entropy,
    evaluate_accuracy,
    init_classifier,
    stack_forward,
    train_classifier,
)
from .data import (
    PatchSet,
    apply_whitening,
    extract_patches,
    fit_whitening,
    load_dictionary,
    load_feature_map,
    load_image_pgm,
    load_model,
    load_patches,
    load_whitening,
    save_dictionary,
    save_feature_map,
    save_image_pgm,
    save_model,
    save_patches,
    save_whitening,
)
from .sconv import Solver, gather_windows, sconv_forward
from .viz import basis_grid_array, render_basis_grid

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
