"""
Fock densities and the binned response matrix
=============================================

Each Fock state |n> has quadrature density psi_n(q)^2.  Detector loss
replaces it by a binomial mixture of lower Fock densities, and binning
turns the mixture into one column of the response matrix A.
"""

# %%
# Quadrature densities on a fine grid. The n-th density has n nodes.
import numpy as np
from scipy.integrate import trapezoid

from photonem import (
    STANDARD_GRID,
    bernoulli_loss_matrix,
    fock_density,
    fock_loss_density,
    response_matrix,
    response_matrix_convolution_oracle,
)

q = np.linspace(-5, 5, 2001)
for n in range(4):
    dens = fock_density(n, q)
    print(f"n={n}  integral={trapezoid(dens, q):.6f}  peak={dens.max():.4f}")

# %%
# Loss at eta = 0.85 mixes lower states in: |1> keeps its weight at
# q = 0 only through the 15% chance of losing the photon.
eta = 0.85
print(bernoulli_loss_matrix(3, eta).round(4))
print("ideal |1> at q=0:", fock_density(1, 0.0))
print("lossy |1> at q=0:", fock_loss_density(1, eta, 0.0))

# %%
# The standard grid: 100 bins on [-5, 5] plus two overflow rows.
a = response_matrix(STANDARD_GRID, 20, eta)
print("shape", a.entries.shape)
print("column sums", a.column_sums.min(), a.column_sums.max())

# %%
# Cross-check against an independent construction: the lossy density is
# built by convolving an ideally detected density with Gaussian noise and
# then integrated numerically.
oracle = response_matrix_convolution_oracle(STANDARD_GRID, 20, eta)
print("largest entry difference", np.abs(a.entries - oracle.entries).max())

# %%
# Singular values tell how hard the inversion is: the smallest one sets
# how much the unconstrained inverse amplifies counting noise.
s = np.linalg.svd(a.entries, compute_uv=False)
print("singular values, largest and smallest:", s[0], s[-1])
