"""Sparse inference in a sliding window over a feature map.

Each window of the map is flattened into one vector and solved as its own
sparse inference problem. With an orthogonal dictionary and the
closed-form solver, the whole arrangement is exactly a valid-mode ReLU
cross-correlation; the general iterative solver drops the orthogonality
requirement at the cost of iteration.
"""

import numpy as np

from orthosc import (
    FeatureMap,
    RegCoeffs,
    SignPolicy,
    Solver,
    gather_windows,
    random_orthogonal_dictionary,
    sconv_forward,
)

rng = np.random.default_rng(4)

print("=== window gathering ===")
fmap = FeatureMap(rng.standard_normal((6, 6, 3)))
for window, stride in ((2, 1), (2, 2), (3, 1)):
    rows, grid = gather_windows(fmap, window, stride)
    print(f"  6x6x3 map, {window}x{window} window, stride {stride}: "
          f"{grid}x{grid} grid of vectors, each length {rows.shape[1]}")
print()

print("=== closed form equals a ReLU convolution ===")
window, stride = 2, 1
phi = random_orthogonal_dictionary(window * window * 3, 8, seed=5)
lams = rng.uniform(0.0, 0.3, 8)
out = sconv_forward(fmap, phi, RegCoeffs.per_unit_coeffs(lams), window, stride)
print(f"  output feature map: {out.side}x{out.side}x{out.channels}")

kernels = phi.columns.T.reshape(8, window, window, 3)
ref = np.zeros(out.data.shape)
for i in range(out.side):
    for j in range(out.side):
        patch = fmap.data[i:i + window, j:j + window, :]
        for c in range(8):
            ref[i, j, c] = max(0.0, float(np.sum(kernels[c] * patch)) - lams[c])
print(f"  max |sconv - reference convolution| = {np.max(np.abs(out.data - ref)):.2e}\n")

print("=== iterative solver agrees on orthogonal dictionaries ===")
reg = RegCoeffs.shared_coeff(0.2, SignPolicy.NON_NEGATIVE_ONLY)
closed = sconv_forward(fmap, phi, reg, window, stride, Solver.ORTH_CLOSED_FORM)
iterative = sconv_forward(fmap, phi, reg, window, stride, Solver.GENERAL_ITERATIVE)
print(f"  max |closed - iterative| = {np.max(np.abs(closed.data - iterative.data)):.2e}\n")

print("=== sparsity per window ===")
occupancy = np.mean(closed.data > 0, axis=2)
print("fraction of active units at each output position:")
print(np.round(occupancy, 2))
