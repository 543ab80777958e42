"""
Monte Carlo random-phase homodyne events and their histograms.

Two independent samplers are provided.  The Gaussian route draws from the
exact conditional law at a random local-oscillator phase and works for the
coherent and squeezed-vacuum benchmarks.  The Fock route handles any
Fock-diagonal state by drawing a photon number, thinning it binomially and
inverting a tabulated cumulative of the surviving Fock density.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import DomainError, ValidationError
from .quadrature import BinGrid, fock_wavefunction
from .states import PhotonDistribution, squeezing_parameter

__all__ = [
    "EventBatch",
    "Histogram",
    "sample_gaussian_route",
    "sample_fock_route",
    "bin_events",
    "required_cutoff",
    "read_events",
    "write_events",
]

EVENTS_FORMAT = "photonem.events/1"
HISTOGRAM_FORMAT = "photonem.histogram/1"
STATE_KINDS = ("coherent", "squeezed_vacuum")
TABLE_POINTS = 20_000
MAX_TAIL = 1e-6


@dataclass(frozen=True)
class EventBatch:
    """Quadrature outcomes with the seed and metadata that produced them."""

    values: np.ndarray = field(repr=False)
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if not np.all(np.isfinite(v)):
            raise ValidationError("event values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class Histogram:
    """Event counts per histogram row of ``grid``.

    ``counts`` has ``grid.n_rows`` slots, overflow rows included in
    ``include`` mode.  ``total`` is the number of events presented to the
    binning; in ``discard`` mode ``discarded`` of them have no slot.
    """

    grid: BinGrid
    counts: np.ndarray = field(repr=False)
    total: int
    underflow: int = 0
    overflow: int = 0
    discarded: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        c = np.array(self.counts, dtype=np.int64)
        if c.shape != (self.grid.n_rows,):
            raise ValidationError(
                f"histogram has {c.size} slots, grid needs {self.grid.n_rows}"
            )
        if np.any(c < 0):
            raise ValidationError("histogram counts must be nonnegative")
        if c.sum() + self.discarded != self.total:
            raise ValidationError(
                f"counts ({c.sum()}) plus discarded ({self.discarded}) "
                f"do not match total ({self.total})"
            )
        if self.grid.include_overflow and (c[0], c[-1]) != (self.underflow, self.overflow):
            raise ValidationError(
                f"overflow slots hold ({c[0]}, {c[-1]}) but underflow/overflow "
                f"are ({self.underflow}, {self.overflow})"
            )
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def n_counted(self) -> int:
        """Events that landed in a slot; the N of the likelihood."""
        return int(self.counts.sum())

    @property
    def interior(self) -> np.ndarray:
        return self.counts[1:-1] if self.grid.include_overflow else self.counts

    def to_dict(self) -> dict:
        return {
            "format": HISTOGRAM_FORMAT,
            "grid": self.grid.to_dict(),
            "counts": self.interior.tolist(),
            "underflow": int(self.underflow),
            "overflow": int(self.overflow),
            "discarded": int(self.discarded),
            "total": int(self.total),
            "meta": dict(self.meta),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Histogram":
        fmt = d.get("format")
        if fmt != HISTOGRAM_FORMAT:
            raise ValidationError(
                f"unsupported histogram format {fmt!r}, expected {HISTOGRAM_FORMAT!r}"
            )
        grid = BinGrid.from_dict(d["grid"])
        counts = np.asarray(d["counts"], dtype=np.int64)
        if grid.include_overflow:
            counts = np.concatenate([[d["underflow"]], counts, [d["overflow"]]])
        return cls(grid, counts, d["total"], d["underflow"], d["overflow"],
                   d["discarded"], d.get("meta", {}))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path) -> "Histogram":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: not valid JSON ({exc})") from None
        return cls.from_dict(d)


def _check_sampling(eta, n_events):
    eta = float(eta)
    if not 0.0 < eta <= 1.0:
        raise DomainError(f"efficiency must lie in (0, 1], got {eta}")
    if int(n_events) != n_events or n_events < 1:
        raise DomainError(f"number of events must be a positive integer, got {n_events}")
    return eta, int(n_events)


def sample_gaussian_route(state_kind, mean_photon, eta, n_events, seed) -> EventBatch:
    """Random-phase homodyne events of a coherent or squeezed-vacuum state.

    At a fixed local-oscillator phase both states are Gaussian, so each event
    draws a uniform phase and then a normal variate with the matching mean and
    variance (loss adds ``(1 - eta) / 2`` of vacuum noise).
    """
    if state_kind not in STATE_KINDS:
        raise DomainError(f"state kind must be one of {STATE_KINDS}, got {state_kind!r}")
    mu = float(mean_photon)
    if not mu >= 0:
        raise DomainError(f"mean photon number must be nonnegative, got {mu}")
    eta, n_events = _check_sampling(eta, n_events)

    rng = np.random.default_rng(seed)
    theta = rng.uniform(0.0, 2.0 * np.pi, n_events)
    z = rng.standard_normal(n_events)
    if state_kind == "coherent":
        q = np.sqrt(2.0 * eta * mu) * np.cos(theta) + np.sqrt(0.5) * z
    else:
        r = squeezing_parameter(mu)
        var = (0.5 * eta * (np.exp(2 * r) * np.cos(theta) ** 2
                            + np.exp(-2 * r) * np.sin(theta) ** 2)
               + 0.5 * (1.0 - eta))
        q = np.sqrt(var) * z
    meta = {"state": state_kind, "mean_photon": mu, "eta": eta, "route": "gaussian"}
    return EventBatch(q, seed, meta)


@lru_cache(maxsize=256)
def _inverse_cdf_table(k):
    """Quadrature grid and normalized cumulative of ``psi_k**2`` on it."""
    reach = np.sqrt(2 * k + 1) + 5.0
    q = np.linspace(-reach, reach, TABLE_POINTS)
    cdf = cumulative_trapezoid(fock_wavefunction(k, q) ** 2, q, initial=0.0)
    cdf /= cdf[-1]
    q.setflags(write=False)
    cdf.setflags(write=False)
    return q, cdf


def required_cutoff(d_tail_fn, max_tail=MAX_TAIL, limit=400):
    """Smallest cutoff whose tail, as returned by ``d_tail_fn(n_max)``, is at most ``max_tail``."""
    for n_max in range(limit + 1):
        if d_tail_fn(n_max) <= max_tail:
            return n_max
    raise DomainError(f"no cutoff up to {limit} brings the tail below {max_tail}")


def sample_fock_route(d: PhotonDistribution, eta, n_events, seed) -> EventBatch:
    """Random-phase homodyne events of an arbitrary Fock-diagonal state.

    Each event draws n from the distribution, keeps ``k ~ Binomial(n, eta)``
    photons and samples q from ``psi_k**2`` by inverse-CDF table lookup.
    """
    eta, n_events = _check_sampling(eta, n_events)
    if d.tail_mass > MAX_TAIL:
        if d.extend is not None:
            needed = required_cutoff(lambda n: d.extend(n).tail_mass)
            advice = f"use n_max >= {needed}"
        else:
            advice = "raise n_max until the tail is below it"
        raise DomainError(
            f"distribution truncated at n_max={d.n_max} leaves tail mass "
            f"{d.tail_mass:.3g} > {MAX_TAIL:g}; {advice}"
        )
    p = np.asarray(d, dtype=float)
    p = p / p.sum()

    rng = np.random.default_rng(seed)
    n = rng.choice(p.size, size=n_events, p=p)
    k = rng.binomial(n, eta)
    u = rng.uniform(0.0, 1.0, n_events)
    q = np.empty(n_events)
    for kk in np.unique(k):
        sel = k == kk
        grid, cdf = _inverse_cdf_table(int(kk))
        q[sel] = np.interp(u[sel], cdf, grid)
    meta = {"state": "fock_diagonal", "n_max": d.n_max, "eta": eta, "route": "fock"}
    return EventBatch(q, seed, meta)


def bin_events(batch, grid: BinGrid) -> Histogram:
    """Count events per half-open bin; out-of-range events follow ``grid.overflow_mode``."""
    values = batch.values if isinstance(batch, EventBatch) else np.asarray(batch, float)
    meta = dict(batch.meta) if isinstance(batch, EventBatch) else {}
    if isinstance(batch, EventBatch) and batch.seed is not None:
        meta["seed"] = batch.seed
    idx = grid.interior_index(values)
    under = int(np.count_nonzero(idx < 0))
    over = int(np.count_nonzero(idx >= grid.n_bins))
    inside = idx[(idx >= 0) & (idx < grid.n_bins)]
    interior = np.bincount(inside, minlength=grid.n_bins)
    if grid.include_overflow:
        counts = np.concatenate([[under], interior, [over]])
        discarded = 0
    else:
        counts = interior
        discarded = under + over
    return Histogram(grid, counts, int(values.size), under, over, discarded, meta)


def write_events(path, batch: EventBatch) -> None:
    """Plain text, one value per line, ``# key: value`` header lines first."""
    header = {"format": EVENTS_FORMAT, **batch.meta, "seed": batch.seed,
              "events": len(batch)}
    lines = [f"# {key}: {value}" for key, value in header.items()]
    lines.extend(f"{x:.17g}" for x in batch.values)
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_header_value(text):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return None if text == "None" else text


def read_events(path) -> EventBatch:
    """Read an event file; malformed value lines raise naming the line number."""
    meta = {}
    values = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, sep, val = line[1:].partition(":")
                if sep:
                    meta[key.strip()] = _parse_header_value(val.strip())
                continue
            try:
                x = float(line)
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: malformed event value {line!r}") from None
            if not np.isfinite(x):
                raise ValidationError(f"{path}:{lineno}: non-finite event value")
            values.append(x)
    fmt = meta.pop("format", EVENTS_FORMAT)
    if fmt != EVENTS_FORMAT:
        raise ValidationError(f"{path}: unsupported event format {fmt!r}")
    seed = meta.pop("seed", None)
    expected = meta.pop("events", None)
    if expected is not None and expected != len(values):
        warnings.warn(f"{path}: header announces {expected} events, found {len(values)}")
    return EventBatch(np.array(values), seed, meta)
