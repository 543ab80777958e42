"""
Maximum-likelihood reconstruction of photon statistics from binned counts.

The histogram counts ``k`` are modelled as draws from ``p = A @ rho`` where
``A`` is the response matrix and ``rho`` a point of the probability simplex.
The expectation-maximization update

    rho_m <- rho_m * sum_v (k_v / N) * A[v, m] / p_v

keeps ``rho`` nonnegative and normalized (the new entries sum to
``sum_v k_v / N = 1``) while never decreasing the log-likelihood

    L(rho) = sum_v k_v log p_v - N * sum_m rho_m.

All functions accept either the package's container types or plain arrays,
so they also serve as a generic solver for positive linear inverse problems.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, InfeasibleError, NumericalError, ValidationError
from .quadrature import ResponseMatrix
from .simulate import Histogram
from .states import PhotonDistribution

__all__ = [
    "EMConfig",
    "ReconstructionResult",
    "BaselineResult",
    "BootstrapResult",
    "forward_probabilities",
    "log_likelihood",
    "likelihood_gradient",
    "em_step",
    "em_reconstruct",
    "kkt_residual",
    "linear_baseline",
    "bootstrap_errors",
    "check_compatible",
]

RESULT_FORMAT = "photonem.result/1"
MONOTONE_SLACK = 1e-9
STALL_WINDOW = 10


@dataclass
class EMConfig:
    """Settings of an EM run.

    ``init`` is ``"uniform"`` or a :class:`PhotonDistribution`.  With
    ``stop_tol == 0`` exactly ``max_iterations`` steps are taken.
    """

    n_max: int = 20
    max_iterations: int = 8000
    init: object = "uniform"
    stop_tol: float = 0.0
    record_trace: bool = True

    def __post_init__(self):
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise DomainError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if not self.stop_tol >= 0:
            raise DomainError(f"stop_tol must be nonnegative, got {self.stop_tol}")
        if isinstance(self.init, str):
            if self.init != "uniform":
                raise DomainError(f"unknown init {self.init!r}")
        elif isinstance(self.init, PhotonDistribution):
            if self.init.n_max != self.n_max:
                raise DomainError(
                    f"initial distribution has n_max={self.init.n_max}, config has {self.n_max}"
                )
        else:
            raise DomainError("init must be 'uniform' or a PhotonDistribution")

    def initial(self) -> np.ndarray:
        if isinstance(self.init, PhotonDistribution):
            return np.array(self.init.probs)
        return np.full(self.n_max + 1, 1.0 / (self.n_max + 1))

    def to_dict(self) -> dict:
        init = "uniform" if isinstance(self.init, str) else np.asarray(self.init).tolist()
        return {"n_max": self.n_max, "max_iterations": self.max_iterations,
                "init": init, "stop_tol": self.stop_tol, "record_trace": self.record_trace}


@dataclass
class ReconstructionResult:
    estimate: PhotonDistribution
    loglik_trace: np.ndarray | None
    iterations_run: int
    kkt_residual: float
    loglik_final: float
    config: EMConfig
    renormalization: float = 1.0

    def to_dict(self, baseline=None, errors=None) -> dict:
        d = {
            "format": RESULT_FORMAT,
            "rho": np.asarray(self.estimate).tolist(),
            "iterations": self.iterations_run,
            "kkt_residual": self.kkt_residual,
            "loglik_final": self.loglik_final,
            "config": self.config.to_dict(),
        }
        if self.loglik_trace is not None:
            d["loglik_trace"] = np.asarray(self.loglik_trace).tolist()
        if baseline is not None:
            d["baseline"] = np.asarray(baseline).tolist()
        if errors is not None:
            d["errors"] = np.asarray(errors).tolist()
        return d


@dataclass
class BaselineResult:
    """Unconstrained least-squares solution; ``values`` may leave the simplex."""

    values: np.ndarray
    stderr: np.ndarray
    valid: bool
    smallest_singular_value: float


@dataclass
class BootstrapResult:
    std: np.ndarray
    n_resamples: int
    n_failed: int = 0
    failures: list = field(default_factory=list)


def _counts(hist):
    if isinstance(hist, Histogram):
        return hist.counts.astype(float)
    k = np.asarray(hist, dtype=float)
    if k.ndim != 1 or np.any(k < 0):
        raise ValidationError("counts must be a nonnegative vector")
    return k


def _matrix(a):
    return a.entries if isinstance(a, ResponseMatrix) else np.asarray(a, dtype=float)


def check_compatible(hist, a) -> None:
    """Raise unless the histogram and response matrix describe the same binning."""
    if isinstance(hist, Histogram) and isinstance(a, ResponseMatrix):
        if hist.grid != a.grid:
            raise ValidationError(
                f"histogram grid {hist.grid.to_dict()} differs from response grid "
                f"{a.grid.to_dict()}"
            )
        eta = hist.meta.get("eta")
        if eta is not None and not np.isclose(float(eta), a.eta, rtol=0, atol=1e-12):
            raise ValidationError(
                f"histogram was simulated at eta={eta} but the response matrix uses eta={a.eta}"
            )
    rows = _matrix(a).shape[0]
    k = _counts(hist)
    if k.size != rows:
        raise ValidationError(f"histogram has {k.size} slots, response matrix has {rows} rows")


def _prepare(hist, a, rho):
    k = _counts(hist)
    A = _matrix(a)
    r = np.asarray(rho, dtype=float)
    if A.ndim != 2 or A.shape[0] != k.size:
        raise ValidationError(
            f"response matrix of shape {A.shape} does not match {k.size} histogram slots"
        )
    if r.shape != (A.shape[1],):
        raise ValidationError(
            f"distribution has {r.size} entries, response matrix has {A.shape[1]} columns"
        )
    return k, A, r


def _occupied_probabilities(k, A, r):
    p = A @ r
    occupied = k > 0
    bad = occupied & ~(p > 0)
    if np.any(bad):
        v = int(np.flatnonzero(bad)[0])
        raise InfeasibleError(
            f"bin {v} holds {int(k[v])} counts but the model gives it probability {p[v]!r}; "
            "the response matrix or grid does not cover the data (overflow bins in "
            "'include' mode absorb out-of-range events)",
            bin_index=v,
        )
    return p, occupied


def forward_probabilities(a, rho) -> np.ndarray:
    """Per-bin event probabilities ``A @ rho``."""
    A = _matrix(a)
    r = np.asarray(rho, dtype=float)
    if r.shape != (A.shape[1],):
        raise ValidationError(
            f"distribution has {r.size} entries, response matrix has {A.shape[1]} columns"
        )
    return A @ r


def log_likelihood(hist, a, rho) -> float:
    """``sum_v k_v log p_v - N sum_m rho_m``; empty bins contribute nothing."""
    k, A, r = _prepare(hist, a, rho)
    p, occ = _occupied_probabilities(k, A, r)
    return float(np.dot(k[occ], np.log(p[occ])) - k.sum() * r.sum())


def _ratio(k, p, occ):
    out = np.zeros_like(p)
    out[occ] = k[occ] / p[occ]
    return out


def likelihood_gradient(hist, a, rho) -> np.ndarray:
    """Partial derivatives ``sum_v k_v A[v, m] / p_v - N``."""
    k, A, r = _prepare(hist, a, rho)
    p, occ = _occupied_probabilities(k, A, r)
    return A.T @ _ratio(k, p, occ) - k.sum()


def kkt_residual(hist, a, rho) -> float:
    """Largest ``|rho_m * dL/drho_m| / N``; zero exactly at a constrained stationary point."""
    k, A, r = _prepare(hist, a, rho)
    n = k.sum()
    if n == 0:
        return 0.0
    p, occ = _occupied_probabilities(k, A, r)
    g = A.T @ _ratio(k, p, occ) - n
    return float(np.max(np.abs(r * g)) / n)


def _em_update(k, A, r, n, renormalize):
    p, occ = _occupied_probabilities(k, A, r)
    loglik = float(np.dot(k[occ], np.log(p[occ])) - n * r.sum())
    new = r * (A.T @ _ratio(k, p, occ)) / n
    factor = 1.0
    if renormalize:
        s = new.sum()
        factor = 1.0 / s
        new *= factor
    return new, loglik, factor


def _needs_renormalization(a):
    if isinstance(a, ResponseMatrix):
        return not a.grid.include_overflow
    return False


def em_step(hist, a, rho, renormalize=None, return_factor=False):
    """One multiplicative EM update.

    Zero components stay zero and the output sums to one up to rounding.
    For ``discard``-mode responses (or when ``renormalize`` is set) that
    rounding is removed by an explicit rescaling whose factor can be
    returned alongside.  The result is a :class:`PhotonDistribution` when
    ``rho`` is one, otherwise an array.
    """
    k, A, r = _prepare(hist, a, rho)
    n = k.sum()
    if n == 0:
        raise ValidationError("cannot run EM on an empty histogram")
    if renormalize is None:
        renormalize = _needs_renormalization(a)
    new, _, factor = _em_update(k, A, r, n, renormalize)
    if isinstance(rho, PhotonDistribution):
        new = PhotonDistribution(new)
    return (new, factor) if return_factor else new


def em_reconstruct(hist, a, config: EMConfig | None = None,
                   renormalize=None) -> ReconstructionResult:
    """Iterate :func:`em_step` from ``config.init``.

    Stops after ``config.max_iterations`` steps, or earlier once the relative
    log-likelihood change stays below ``config.stop_tol`` for ten consecutive
    steps.  A log-likelihood decrease beyond relative 1e-9 raises
    :class:`NumericalError`.
    """
    config = config or EMConfig(n_max=_matrix(a).shape[1] - 1)
    k, A, r = _prepare(hist, a, config.initial())
    n = k.sum()
    if n == 0:
        raise ValidationError("cannot run EM on an empty histogram")
    if renormalize is None:
        renormalize = _needs_renormalization(a)

    trace = []
    prev = None
    stall = 0
    factor = 1.0
    it = 0
    while it < config.max_iterations:
        new, loglik, factor = _em_update(k, A, r, n, renormalize)
        if prev is not None:
            _check_monotone(prev, loglik, it)
            if config.stop_tol > 0:
                rel = abs(loglik - prev) / max(abs(prev), np.finfo(float).tiny)
                stall = stall + 1 if rel < config.stop_tol else 0
        if config.record_trace:
            trace.append(loglik)
        if stall >= STALL_WINDOW:
            break
        prev = loglik
        r = new
        it += 1

    final = log_likelihood(k, A, r)
    if prev is not None:
        _check_monotone(prev, final, it)
    if config.record_trace and stall < STALL_WINDOW:
        trace.append(final)
    estimate = PhotonDistribution(r / r.sum()) if renormalize else PhotonDistribution(r)
    return ReconstructionResult(
        estimate=estimate,
        loglik_trace=np.array(trace) if config.record_trace else None,
        iterations_run=it,
        kkt_residual=kkt_residual(k, A, r),
        loglik_final=final,
        config=config,
        renormalization=factor,
    )


def _check_monotone(prev, cur, it):
    if cur < prev - MONOTONE_SLACK * abs(prev):
        raise NumericalError(
            f"log-likelihood decreased from {prev!r} to {cur!r} at iteration {it}"
        )


def linear_baseline(hist, a, rank_tol=1e-8) -> BaselineResult:
    """Unconstrained least-squares inversion of ``A @ rho = k / N``.

    Uses the same binned model as EM but no positivity or normalization
    constraint, so sampling noise shows up as negative or oversized entries.
    ``stderr`` is the exact standard error of this linear estimator under
    multinomial sampling of the observed frequencies.
    """
    k = _counts(hist)
    A = _matrix(a)
    if A.shape[0] != k.size:
        raise ValidationError(
            f"response matrix of shape {A.shape} does not match {k.size} histogram slots"
        )
    n = k.sum()
    if n == 0:
        raise ValidationError("cannot invert an empty histogram")
    u, s, vt = np.linalg.svd(A, full_matrices=False)
    if s[-1] <= rank_tol:
        raise DomainError(
            f"response matrix is rank deficient: smallest singular value {s[-1]:.3g} "
            f"<= {rank_tol:g}"
        )
    pinv = (vt.T / s) @ u.T
    f = k / n
    values = pinv @ f
    cov_f = (np.diag(f) - np.outer(f, f)) / n
    stderr = np.sqrt(np.clip(np.einsum("ij,jk,ik->i", pinv, cov_f, pinv), 0.0, None))
    valid = bool(np.all(values >= 0) and np.all(values <= 1)
                 and abs(values.sum() - 1.0) <= 1e-6)
    return BaselineResult(values, stderr, valid, float(s[-1]))


def bootstrap_errors(hist, a, config: EMConfig, n_resamples, seed,
                     renormalize=None) -> BootstrapResult:
    """Per-component standard deviation of EM estimates over multinomial resamples.

    Each replica redraws N events from the observed bin frequencies with its
    own generator spawned from ``seed`` and is reconstructed with ``config``.
    """
    if int(n_resamples) != n_resamples or n_resamples < 10:
        raise DomainError(f"need at least 10 bootstrap resamples, got {n_resamples}")
    k = _counts(hist)
    n = int(round(k.sum()))
    if n == 0:
        raise ValidationError("cannot bootstrap an empty histogram")
    freq = k / k.sum()
    estimates = []
    failures = []
    children = np.random.SeedSequence(seed).spawn(int(n_resamples))
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        replica = rng.multinomial(n, freq).astype(float)
        try:
            res = em_reconstruct(replica, _matrix(a), config,
                                 renormalize=_needs_renormalization(a)
                                 if renormalize is None else renormalize)
        except (InfeasibleError, NumericalError) as exc:
            failures.append(f"replica {i}: {exc}")
            continue
        estimates.append(np.asarray(res.estimate))
    if len(estimates) < 2:
        raise NumericalError(f"only {len(estimates)} bootstrap replicas succeeded")
    std = np.std(np.array(estimates), axis=0, ddof=1)
    return BootstrapResult(std, int(n_resamples), len(failures), failures)


def save_result(path, result: ReconstructionResult, baseline=None, errors=None) -> None:
    Path(path).write_text(json.dumps(result.to_dict(baseline, errors)) + "\n")


def load_result(path) -> dict:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from None
    if d.get("format") != RESULT_FORMAT:
        raise ValidationError(
            f"{path}: unsupported result format {d.get('format')!r}, expected {RESULT_FORMAT!r}"
        )
    return d
