"""
Fock-state quadrature densities and the binned homodyne response matrix.

Quadratures use the convention in which the vacuum has variance 1/2, so the
ground-state wavefunction is ``pi**-0.25 * exp(-q**2 / 2)``.  Detector
inefficiency is modelled as Bernoulli photon loss ahead of an ideal homodyne
detector, which turns each Fock density into a binomial mixture of lower
Fock densities.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.signal import fftconvolve
from scipy.special import comb

from .errors import DomainError, NumericalError, ValidationError

__all__ = [
    "BinGrid",
    "ResponseMatrix",
    "STANDARD_GRID",
    "fock_wavefunction",
    "fock_wavefunctions",
    "fock_density",
    "bernoulli_loss_matrix",
    "fock_loss_density",
    "response_matrix",
    "response_matrix_convolution_oracle",
]

RESPONSE_FORMAT = "photonem.response/1"
OVERFLOW_MODES = ("include", "discard")
GAUSS_ORDER = 16

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(GAUSS_ORDER)


@dataclass(frozen=True)
class BinGrid:
    """Uniform binning of the quadrature axis.

    Interior bin ``j`` (0-based) is the half-open interval
    ``[edges[j], edges[j + 1])``.  In ``include`` mode two overflow bins are
    added, so row 0 collects ``q < q_min`` and the last row ``q >= q_max``;
    in ``discard`` mode out-of-range values have no row.
    """

    q_min: float
    q_max: float
    n_bins: int
    overflow_mode: str = "include"

    def __post_init__(self):
        object.__setattr__(self, "q_min", float(self.q_min))
        object.__setattr__(self, "q_max", float(self.q_max))
        if not (np.isfinite(self.q_min) and np.isfinite(self.q_max)):
            raise DomainError("grid bounds must be finite")
        if not self.q_min < self.q_max:
            raise DomainError(f"need q_min < q_max, got {self.q_min} >= {self.q_max}")
        if int(self.n_bins) != self.n_bins or self.n_bins < 1:
            raise DomainError(f"n_bins must be a positive integer, got {self.n_bins}")
        object.__setattr__(self, "n_bins", int(self.n_bins))
        if self.overflow_mode not in OVERFLOW_MODES:
            raise DomainError(
                f"overflow_mode must be one of {OVERFLOW_MODES}, got {self.overflow_mode!r}"
            )

    @property
    def width(self) -> float:
        return (self.q_max - self.q_min) / self.n_bins

    @property
    def edges(self) -> np.ndarray:
        e = self.q_min + self.width * np.arange(self.n_bins + 1)
        e[-1] = self.q_max
        return e

    @property
    def centers(self) -> np.ndarray:
        e = self.edges
        return 0.5 * (e[:-1] + e[1:])

    @property
    def include_overflow(self) -> bool:
        return self.overflow_mode == "include"

    @property
    def n_rows(self) -> int:
        """Number of histogram slots, overflow bins included."""
        return self.n_bins + 2 if self.include_overflow else self.n_bins

    @property
    def is_symmetric(self) -> bool:
        scale = max(abs(self.q_min), abs(self.q_max))
        return abs(self.q_min + self.q_max) <= 1e-12 * scale

    def interior_index(self, q) -> np.ndarray:
        """Interior bin of each value: -1 below the range, ``n_bins`` at or above it."""
        q = np.asarray(q, dtype=float)
        return np.searchsorted(self.edges, q, side="right") - 1

    def to_dict(self) -> dict:
        return {
            "q_min": self.q_min,
            "q_max": self.q_max,
            "n_bins": self.n_bins,
            "overflow_mode": self.overflow_mode,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BinGrid":
        try:
            return cls(d["q_min"], d["q_max"], d["n_bins"], d["overflow_mode"])
        except KeyError as exc:
            raise ValidationError(f"grid description lacks field {exc}") from None


STANDARD_GRID = BinGrid(-5.0, 5.0, 100, "include")


@dataclass(frozen=True)
class ResponseMatrix:
    """Probabilities ``entries[row, n]`` of an event in a histogram row given Fock state n."""

    entries: np.ndarray = field(repr=False)
    eta: float
    n_max: int
    grid: BinGrid

    def __post_init__(self):
        a = np.array(self.entries, dtype=float)
        if a.shape != (self.grid.n_rows, self.n_max + 1):
            raise ValidationError(
                f"response entries have shape {a.shape}, expected "
                f"{(self.grid.n_rows, self.n_max + 1)}"
            )
        if np.any(a < 0) or np.any(a > 1) or not np.all(np.isfinite(a)):
            raise ValidationError("response entries must lie in [0, 1]")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)
        object.__setattr__(self, "eta", float(self.eta))
        object.__setattr__(self, "n_max", int(self.n_max))

    @property
    def column_sums(self) -> np.ndarray:
        return self.entries.sum(axis=0)

    def to_dict(self) -> dict:
        return {
            "format": RESPONSE_FORMAT,
            "eta": self.eta,
            "n_max": self.n_max,
            "grid": self.grid.to_dict(),
            "entries": self.entries.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ResponseMatrix":
        fmt = d.get("format")
        if fmt != RESPONSE_FORMAT:
            raise ValidationError(
                f"unsupported response file format {fmt!r}, expected {RESPONSE_FORMAT!r}"
            )
        return cls(np.asarray(d["entries"], dtype=float), d["eta"], d["n_max"],
                   BinGrid.from_dict(d["grid"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path) -> "ResponseMatrix":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: not valid JSON ({exc})") from None
        return cls.from_dict(d)


def _check_n(n):
    if int(n) != n or n < 0:
        raise DomainError(f"Fock index must be a nonnegative integer, got {n}")
    return int(n)


def _check_eta(eta):
    eta = float(eta)
    if not 0.0 < eta <= 1.0:
        raise DomainError(f"efficiency must lie in (0, 1], got {eta}")
    return eta


def fock_wavefunctions(n_max, q):
    """Oscillator eigenfunctions ``psi_0 .. psi_{n_max}`` evaluated at ``q``.

    Uses the normalized three-term recurrence, which stays finite for
    ``n_max <= 200`` and ``|q| <= 30`` where raw Hermite polynomials overflow.

    Returns
    -------
    ndarray of shape ``(n_max + 1,) + q.shape``
    """
    n_max = _check_n(n_max)
    q = np.asarray(q, dtype=float)
    psi = np.empty((n_max + 1,) + q.shape)
    psi[0] = np.pi ** -0.25 * np.exp(-0.5 * q * q)
    if n_max >= 1:
        psi[1] = np.sqrt(2.0) * q * psi[0]
    for n in range(1, n_max):
        psi[n + 1] = (np.sqrt(2.0 / (n + 1)) * q * psi[n]
                      - np.sqrt(n / (n + 1.0)) * psi[n - 1])
    return psi


def fock_wavefunction(n, q):
    """Real amplitude ``psi_n(q)`` of the n-th Fock state."""
    return fock_wavefunctions(n, q)[_check_n(n)]


def fock_density(n, q):
    """Quadrature probability density ``psi_n(q)**2`` of Fock state n."""
    return fock_wavefunction(n, q) ** 2


def bernoulli_loss_matrix(n_max, eta):
    """Binomial loss kernel ``B[n, k] = C(n, k) eta**k (1 - eta)**(n - k)``.

    Row n is the distribution of surviving photons when each of n photons is
    kept independently with probability ``eta``.
    """
    n_max = _check_n(n_max)
    eta = _check_eta(eta)
    n = np.arange(n_max + 1)[:, None]
    k = np.arange(n_max + 1)[None, :]
    with np.errstate(invalid="ignore"):
        b = comb(n, k) * eta ** k * (1.0 - eta) ** np.maximum(n - k, 0)
    return np.where(k <= n, b, 0.0)


def fock_loss_density(n, eta, q):
    """Quadrature density of Fock state n seen by a detector of efficiency ``eta``."""
    n = _check_n(n)
    weights = bernoulli_loss_matrix(n, eta)[n]
    psi2 = fock_wavefunctions(n, q) ** 2
    return np.tensordot(weights, psi2, axes=1)


def _binned_fock_masses(edges, n_max):
    """Integral of each ``psi_k**2`` over each interval of ``edges`` (Gauss-Legendre)."""
    lo, hi = edges[:-1], edges[1:]
    half = 0.5 * (hi - lo)
    nodes = 0.5 * (hi + lo)[:, None] + half[:, None] * _GL_NODES[None, :]
    psi2 = fock_wavefunctions(n_max, nodes) ** 2          # (k, bin, node)
    return np.einsum("kbj,j,b->bk", psi2, _GL_WEIGHTS, half)


def _tail_edges(a, b, step=0.1):
    if b <= a:
        return None
    m = int(np.ceil((b - a) / step))
    return np.linspace(a, b, m + 1)


def response_matrix(grid: BinGrid, n_max, eta) -> ResponseMatrix:
    """Binned homodyne response of Fock states 0..n_max at efficiency ``eta``.

    Each interior entry integrates the loss-blurred Fock density over its bin
    with 16-point Gauss-Legendre quadrature.  In ``include`` mode the mass
    outside the grid goes to the two overflow rows: split in half for grids
    symmetric about zero, otherwise the lower tail is integrated explicitly
    and the upper row takes the remainder.
    """
    n_max = _check_n(n_max)
    eta = _check_eta(eta)
    loss = bernoulli_loss_matrix(n_max, eta)
    ideal = _binned_fock_masses(grid.edges, n_max)        # (bin, k)
    interior = ideal @ loss.T                              # (bin, n)
    sums = interior.sum(axis=0)
    if np.any(sums > 1.0 + 1e-8):
        bad = int(np.argmax(sums))
        raise NumericalError(
            f"interior mass {sums[bad]!r} of column {bad} exceeds one; quadrature failed"
        )
    if not grid.include_overflow:
        return ResponseMatrix(np.clip(interior, 0.0, 1.0), eta, n_max, grid)

    outside = np.clip(1.0 - sums, 0.0, None)
    if grid.is_symmetric:
        lower = 0.5 * outside
    else:
        reach = np.sqrt(2.0 * n_max + 1.0) + 6.0
        tail = _tail_edges(-reach, grid.q_min)
        if tail is None:
            lower = np.zeros(n_max + 1)
        else:
            lower = _binned_fock_masses(tail, n_max).sum(axis=0) @ loss.T
        lower = np.minimum(lower, outside)
    upper = outside - lower
    a = np.vstack([lower, interior, upper])
    return ResponseMatrix(np.clip(a, 0.0, 1.0), eta, n_max, grid)


def response_matrix_convolution_oracle(grid: BinGrid, n_max, eta, step=1e-3,
                                       reach=12.0) -> ResponseMatrix:
    """Independent response matrix built from the beam-splitter picture.

    A detector of efficiency ``eta`` records ``sqrt(eta) q_n + sqrt(1 - eta) q_vac``
    with ``q_vac`` vacuum noise.  The scaled Fock density is convolved with a
    Gaussian of variance ``(1 - eta) / 2`` on a fine uniform grid and the result
    integrated over the bins.
    """
    n_max = _check_n(n_max)
    eta = float(eta)
    if not 0.0 < eta < 1.0:
        raise DomainError(
            f"convolution oracle needs 0 < eta < 1, got {eta}; use response_matrix"
        )
    if step > 1e-3:
        raise DomainError("oracle step must not exceed 1e-3")

    # grid nodes land exactly on every bin edge
    h = grid.width / np.ceil(grid.width / step)
    lo = grid.q_min - h * np.ceil((grid.q_min + reach) / h)
    hi = grid.q_max + h * np.ceil((reach - grid.q_max) / h)
    m = int(round((hi - lo) / h))
    x = lo + h * np.arange(m + 1)

    s = np.sqrt(eta)
    scaled = fock_wavefunctions(n_max, x / s) ** 2 / s    # (n, x)
    half_width = int(np.ceil(reach / h))
    offsets = h * np.arange(-half_width, half_width + 1)
    var = 0.5 * (1.0 - eta)
    kernel = np.exp(-offsets ** 2 / (2.0 * var)) / np.sqrt(2.0 * np.pi * var) * h
    dens = fftconvolve(scaled, kernel[None, :], mode="same", axes=1)

    cdf = cumulative_simpson(dens, dx=h, axis=1, initial=0.0)
    edge_idx = np.rint((grid.edges - lo) / h).astype(int)
    at_edges = cdf[:, edge_idx]                            # (n, edge)
    interior = np.diff(at_edges, axis=1).T
    if grid.include_overflow:
        lower = at_edges[:, 0]
        upper = cdf[:, -1] - at_edges[:, -1]
        interior = np.vstack([lower, interior, upper])
    return ResponseMatrix(np.clip(interior, 0.0, 1.0), eta, n_max, grid)
