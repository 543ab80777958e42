"""Photon-number distributions: benchmark states and file I/O."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.special import gammaln
from scipy.stats import poisson

from .errors import DomainError, ValidationError

__all__ = [
    "PhotonDistribution",
    "coherent_distribution",
    "squeezed_vacuum_distribution",
    "squeezing_parameter",
    "distribution_from_file",
    "write_distribution",
    "mean_photon_number",
]

SIMPLEX_TOL = 1e-12


@dataclass(frozen=True)
class PhotonDistribution:
    """Occupation probabilities of Fock states ``0..n_max``.

    ``tail_mass`` is the probability beyond the cutoff.  It is recorded, never
    folded back into ``probs``, so ``probs.sum() + tail_mass == 1``.
    ``extend``, when set, rebuilds the same state at another cutoff; the
    benchmark constructors supply it so a too-short support can be diagnosed.
    """

    probs: np.ndarray = field(repr=False)
    tail_mass: float = 0.0
    extend: Callable[[int], "PhotonDistribution"] | None = field(
        default=None, repr=False, compare=False)

    def __post_init__(self):
        p = np.array(self.probs, dtype=float).ravel()
        if p.size == 0:
            raise ValidationError("a photon distribution needs at least one entry")
        if not np.all(np.isfinite(p)):
            raise ValidationError("photon probabilities must be finite")
        if np.any(p < 0):
            n = int(np.argmin(p))
            raise ValidationError(f"negative probability {p[n]!r} at n={n}")
        tail = float(self.tail_mass)
        if tail < 0:
            raise ValidationError(f"tail mass must be nonnegative, got {tail!r}")
        total = p.sum() + tail
        if abs(total - 1.0) > SIMPLEX_TOL:
            raise ValidationError(f"probabilities sum to {total!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "tail_mass", tail)

    @property
    def n_max(self) -> int:
        return self.probs.size - 1

    def __len__(self):
        return self.probs.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.probs, dtype=dtype)

    @classmethod
    def uniform(cls, n_max) -> "PhotonDistribution":
        return cls(np.full(n_max + 1, 1.0 / (n_max + 1)))

    @classmethod
    def fock(cls, n, n_max=None) -> "PhotonDistribution":
        n_max = n if n_max is None else n_max
        p = np.zeros(n_max + 1)
        p[n] = 1.0
        return cls(p)


def _check_mean(mean_photon):
    mean_photon = float(mean_photon)
    if not mean_photon >= 0 or not math.isfinite(mean_photon):
        raise DomainError(f"mean photon number must be nonnegative, got {mean_photon}")
    return mean_photon


def _check_cutoff(n_max):
    if int(n_max) != n_max or n_max < 0:
        raise DomainError(f"Fock cutoff must be a nonnegative integer, got {n_max}")
    return int(n_max)


def coherent_distribution(mean_photon, n_max) -> PhotonDistribution:
    """Poissonian photon statistics of a coherent state."""
    mu = _check_mean(mean_photon)
    n_max = _check_cutoff(n_max)
    n = np.arange(n_max + 1)
    return PhotonDistribution(poisson.pmf(n, mu), float(poisson.sf(n_max, mu)),
                              partial(coherent_distribution, mu))


def squeezing_parameter(mean_photon) -> float:
    """Squeezing parameter r with ``sinh(r)**2 == mean_photon``."""
    return float(np.arcsinh(np.sqrt(_check_mean(mean_photon))))


def _squeezed_log_even(m, r):
    t = np.tanh(r)
    return (gammaln(2 * m + 1) - 2 * gammaln(m + 1) - m * math.log(4.0)
            + 2 * m * math.log(t) - math.log(math.cosh(r)))


def squeezed_vacuum_distribution(mean_photon, n_max) -> PhotonDistribution:
    """Photon statistics of a squeezed vacuum: only even n are occupied.

    ``rho_2m = (2m)! / (2**m m!)**2 * tanh(r)**(2m) / cosh(r)``.
    """
    mu = _check_mean(mean_photon)
    n_max = _check_cutoff(n_max)
    p = np.zeros(n_max + 1)
    if mu == 0.0:
        p[0] = 1.0
        return PhotonDistribution(p, extend=partial(squeezed_vacuum_distribution, mu))
    r = squeezing_parameter(mu)
    m = np.arange(n_max // 2 + 1)
    p[0::2] = np.exp(_squeezed_log_even(m, r))
    # tail from the series itself; 1 - sum would lose everything below 1e-16
    tail = 0.0
    start = n_max // 2 + 1
    while True:
        block = np.exp(_squeezed_log_even(np.arange(start, start + 512), r))
        tail += block.sum()
        if block[-1] <= 1e-30 * max(tail, 1e-300) or block[-1] == 0.0:
            break
        start += 512
    return PhotonDistribution(p, tail, partial(squeezed_vacuum_distribution, mu))


def mean_photon_number(d) -> float:
    """``sum(n * rho_n)`` over the retained entries; the tail is ignored."""
    p = np.asarray(d, dtype=float)
    return float(np.dot(np.arange(p.size), p))


def distribution_from_file(path) -> PhotonDistribution:
    """Read a distribution written one probability per line (``#`` starts a comment).

    Sums off by less than 1e-6 are renormalized; larger deviations are rejected.
    """
    values = []
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        for tok in line.split():
            try:
                values.append(float(tok))
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: not a number: {tok!r}") from None
    if not values:
        raise ValidationError(f"{path}: no probabilities found")
    p = np.array(values)
    if not np.all(np.isfinite(p)):
        raise ValidationError(f"{path}: non-finite probability")
    if np.any(p < 0):
        n = int(np.argmin(p))
        raise ValidationError(f"{path}: negative probability {p[n]!r} at n={n}")
    total = p.sum()
    if abs(total - 1.0) >= 1e-6:
        raise ValidationError(f"{path}: probabilities sum to {total!r}, not 1")
    if abs(total - 1.0) > SIMPLEX_TOL:
        p = p / total
    return PhotonDistribution(p)


def write_distribution(path, d: PhotonDistribution, header=None) -> None:
    lines = [f"# {h}" for h in (header or [])]
    lines += [f"{x:.17g}" for x in np.asarray(d)]
    Path(path).write_text("\n".join(lines) + "\n")
