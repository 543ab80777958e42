"""Small EM instances and reference solvers shared by the test modules."""

import numpy as np

from photonem.estimation import EMConfig, em_reconstruct
from photonem.states import PhotonDistribution


def random_instance(rng, n_bins, n_states, n_events=500):
    a = rng.dirichlet(np.ones(n_bins), size=n_states).T
    rho = rng.dirichlet(np.ones(n_states))
    k = rng.multinomial(n_events, a @ rho).astype(float)
    return a, k, rho


def grid_search_2state(a, k, step=1e-4):
    """Argmax of the log-likelihood over the 1-simplex by dense enumeration."""
    w = np.linspace(0.0, 1.0, int(round(1 / step)) + 1)
    p = np.outer(a[:, 0], w) + np.outer(a[:, 1], 1 - w)
    occ = k > 0
    with np.errstate(divide="ignore"):
        ll = k[occ] @ np.log(p[occ])
    return w[np.argmax(ll)]


def em_limit(k, a, chunk=20_000, max_total=2_000_000):
    """Run EM until the stationarity residual vanishes."""
    rho = None
    total = 0
    while total < max_total:
        init = "uniform" if rho is None else PhotonDistribution(rho / rho.sum())
        res = em_reconstruct(k, a, EMConfig(a.shape[1] - 1, chunk, init, record_trace=False))
        rho = np.asarray(res.estimate)
        total += chunk
        if res.kkt_residual < 1e-12:
            break
    return rho
