"""The forward transforms hiding inside sparse inference.

Constraining the coefficients to be non-negative turns the soft threshold
into a shifted ReLU; giving every unit its own coefficient makes the
transform literally a dense network layer with weights phi^T, bias
-lambda, and ReLU activation. Ridge regression swaps the rectification
for a 1/(1+lambda) scaling, and L0 regularization keeps the k largest
projections.
"""

import numpy as np

from orthosc import (
    RegCoeffs,
    Sample,
    SignPolicy,
    l0_orthogonal_infer,
    orth_nonneg_infer,
    per_unit_forward,
    random_orthogonal_dictionary,
    ridge_closed_form,
    ridge_orthogonal,
)

rng = np.random.default_rng(3)
phi = random_orthogonal_dictionary(12, 6, seed=2)
x = Sample(rng.standard_normal(12))

print("=== non-negative inference is a shifted ReLU ===")
lam = 0.25
nn = orth_nonneg_infer(phi, x, RegCoeffs.shared_coeff(lam, SignPolicy.NON_NEGATIVE_ONLY))
projections = phi.columns.T @ x.values
relu_shifted = np.maximum(0.0, projections - lam)
print(f"  max |solution - ReLU(projections - lam)| = "
      f"{np.max(np.abs(nn.values - relu_shifted)):.2e}\n")

print("=== per-unit coefficients give exactly a network layer ===")
lams = rng.uniform(0.0, 0.5, 6)
ours = per_unit_forward(phi, x, RegCoeffs.per_unit_coeffs(lams))
W, b = phi.columns.T, -lams  # the equivalent layer
layer = np.maximum(0.0, W @ x.values + b)
print(f"  weights = basis columns transposed, bias = -lambda")
print(f"  max |per-unit solution - layer output| = {np.max(np.abs(ours.values - layer)):.2e}\n")

print("=== ridge replaces rectification with scaling ===")
for lam in (0.0, 0.5, 2.0):
    r = ridge_orthogonal(phi, x, lam)
    print(f"  lam={lam:3.1f}: solution = projections / {1 + lam:.1f}  "
          f"(max err {np.max(np.abs(r.values - projections / (1 + lam))):.2e})")
general = ridge_closed_form(phi, x, 0.5)
orth = ridge_orthogonal(phi, x, 0.5)
print(f"  orthogonal shortcut matches the general (gram + lam I)^-1 form: "
      f"{np.max(np.abs(general.values - orth.values)):.2e}\n")

print("=== L0 keeps the k largest projections ===")
for k in (0, 2, 4, 6):
    a = l0_orthogonal_infer(phi, x, k)
    print(f"  k={k}: support {a.support().tolist()}")
print("\n=== penalized variant hard-thresholds instead ===")
a = l0_orthogonal_infer(phi, x, penalty=0.08)  # threshold sqrt(2 * 0.08) = 0.4
print(f"  |projection| > 0.4 kept: support {a.support().tolist()}")
print(f"  projections: {np.round(projections, 3)}")
