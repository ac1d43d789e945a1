"""Signal container, prefix energies and the marginal changepoint posterior.

A single-changepoint model with zero-mean Gaussian segments and Jeffreys
priors on both standard deviations integrates to

    log P(t | y) = -(t/2) log S1 - ((N-t)/2) log S2
                   + lgamma(t/2) + lgamma((N-t)/2)

with ``S1``/``S2`` the energies left and right of ``t``. A uniform prior over
admissible ``t`` is implied. Everything here works from the cumulative sum of
squares, so a segment energy is one subtraction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from . import _kernels
from .errors import DegenerateSegmentError, InvalidInputError, NoCandidateError


@dataclass(frozen=True)
class Signal:
    """A real-valued amplitude sequence, optionally with a sample rate."""

    samples: np.ndarray
    sample_rate_hz: float | None = None

    def __post_init__(self):
        y = np.array(self.samples, dtype=np.float64, copy=True)
        if y.ndim != 1:
            raise InvalidInputError("signal must be one-dimensional")
        if y.shape[0] < 2:
            raise InvalidInputError(f"signal needs at least 2 samples, got {y.shape[0]}")
        if not np.all(np.isfinite(y)):
            raise InvalidInputError("signal contains NaN or infinite samples")
        if self.sample_rate_hz is not None and not self.sample_rate_hz > 0:
            raise InvalidInputError("sample_rate_hz must be positive")
        y.setflags(write=False)
        object.__setattr__(self, "samples", y)

    def __len__(self) -> int:
        return self.samples.shape[0]


@dataclass(frozen=True)
class EnergyPrefix:
    """``cum[k]`` is the energy of the first ``k`` samples; ``cum[0] == 0``."""

    cum: np.ndarray

    @property
    def n(self) -> int:
        return self.cum.shape[0] - 1

    @property
    def total(self) -> float:
        return float(self.cum[-1])

    def energy(self, a: int, b: int) -> float:
        """Energy of samples ``a..b-1`` (the half-open interval (a, b] in 1-based terms)."""
        return float(self.cum[b] - self.cum[a])

    def segment(self, a: int, b: int) -> "EnergyPrefix":
        """Prefix restricted to samples ``[a, b)``, re-based to start at zero."""
        if not 0 <= a < b <= self.n:
            raise InvalidInputError(f"invalid segment [{a}, {b}) for n={self.n}")
        sub = self.cum[a:b + 1] - self.cum[a]
        sub.setflags(write=False)
        return EnergyPrefix(sub)


@dataclass(frozen=True)
class CandidateGrid:
    """Admissible changepoints ``lo, lo + step, ...`` not exceeding ``hi``."""

    lo: int
    hi: int
    step: int = 1
    min_margin: int = 2

    def validate(self, n: int) -> None:
        if self.step < 1:
            raise InvalidInputError("grid step must be >= 1")
        if self.min_margin < 1:
            raise InvalidInputError("min_margin must be >= 1")
        if self.lo < self.min_margin or self.hi > n - self.min_margin or self.lo > self.hi:
            raise NoCandidateError(
                f"empty grid: lo={self.lo}, hi={self.hi}, margin={self.min_margin}, n={n}")

    def indices(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1, self.step, dtype=np.int64)

    @classmethod
    def full(cls, n: int, step: int = 1, min_margin: int = 2) -> "CandidateGrid":
        return cls(lo=min_margin, hi=n - min_margin, step=step, min_margin=min_margin)


def build_prefix(signal: Signal | np.ndarray) -> EnergyPrefix:
    """Cumulative energy with compensated summation."""
    if not isinstance(signal, Signal):
        signal = Signal(np.asarray(signal, dtype=np.float64))
    cum = _kernels.cumsum_squares(signal.samples)
    # compensation can leave a last-bit wobble; keep the sequence monotone
    np.maximum.accumulate(cum, out=cum)
    cum.setflags(write=False)
    return EnergyPrefix(cum)


def log_marginal_posterior(prefix: EnergyPrefix, t: int) -> float:
    """Unnormalized log posterior of a single changepoint after sample ``t``."""
    n = prefix.n
    if not 1 <= t <= n - 1:
        raise InvalidInputError(f"changepoint {t} outside [1, {n - 1}]")
    s1 = prefix.energy(0, t)
    s2 = prefix.energy(t, n)
    if s1 <= 0.0 or s2 <= 0.0:
        raise DegenerateSegmentError(f"zero-energy segment at t={t}")
    return float(_logpost(np.float64(t), n, np.float64(s1), np.float64(s2)))


def log_marginal_posterior_grid(prefix: EnergyPrefix, ts: np.ndarray) -> np.ndarray:
    """Vectorized :func:`log_marginal_posterior`; degenerate candidates give -inf."""
    n = prefix.n
    ts = np.asarray(ts, dtype=np.int64)
    s1 = prefix.cum[ts]
    s2 = prefix.cum[n] - s1
    out = np.full(ts.shape, -np.inf)
    ok = (s1 > 0.0) & (s2 > 0.0)
    out[ok] = _logpost(ts[ok].astype(np.float64), n, s1[ok], s2[ok])
    return out


def _logpost(t, n, s1, s2):
    u = n - t
    return -0.5 * t * np.log(s1) - 0.5 * u * np.log(s2) + gammaln(0.5 * t) + gammaln(0.5 * u)


def argmax_changepoint(prefix: EnergyPrefix, grid: CandidateGrid) -> tuple[int, float]:
    """Posterior mode over the grid, smallest index on ties."""
    grid.validate(prefix.n)
    ts = grid.indices()
    lp = log_marginal_posterior_grid(prefix, ts)
    if not np.any(np.isfinite(lp)):
        raise NoCandidateError("every candidate has a zero-energy side")
    i = int(np.argmax(lp))  # first occurrence of the max
    return int(ts[i]), float(lp[i])
