"""
Linear inversion baseline and bootstrap errors
==============================================

The unconstrained least-squares inverse of the response matrix is unbiased
but ignores positivity.  On realistic data it oscillates wildly at large n,
while at small n it agrees with EM within its own standard error.
"""

# %%
import numpy as np

from photonem import (
    STANDARD_GRID,
    EMConfig,
    bin_events,
    bootstrap_errors,
    em_reconstruct,
    linear_baseline,
    response_matrix,
    sample_gaussian_route,
)

eta = 0.85
a = response_matrix(STANDARD_GRID, 20, eta)
hist = bin_events(sample_gaussian_route("coherent", 1.0, eta, 100_000, seed=3), STANDARD_GRID)

em = np.asarray(em_reconstruct(hist, a).estimate)
bl = linear_baseline(hist, a)
print("smallest singular value:", bl.smallest_singular_value)
print("baseline inside [0, 1]:", bl.valid)

# %%
# Side by side. The stderr column is the exact sampling spread of the
# least-squares estimator under multinomial counts.
print(" n     EM      baseline   stderr")
for n in range(21):
    print(f"{n:2d}  {em[n]:8.4f}  {bl.values[n]:9.4f}  {bl.stderr[n]:8.4f}")

# %%
# Bootstrap: refit EM on multinomial resamples of the histogram. Fewer
# iterations keep the demo quick; the spread is dominated by counting noise.
boot = bootstrap_errors(hist, a, EMConfig(n_max=20, max_iterations=1000),
                        n_resamples=20, seed=4)
print("bootstrap std, n = 0..5:", boot.std[:6].round(4))
print("baseline stderr, n = 0..5:", bl.stderr[:6].round(4))
