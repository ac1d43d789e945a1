"""Penalized-cost baselines: PELT, greedy binary segmentation, optimal partitioning.

The segment cost is the negative log Jeffreys-marginal likelihood of a
zero-mean Gaussian segment, up to terms linear in its length:

    C(a, b] = (L/2) log S - lgamma(L/2),    L = b - a,  S = energy of (a, b]

MBIC adds ``(3/2) log N`` per changepoint and ``(1/2) log(L/N)`` per segment
(Zhang & Siegmund). The segment-length term is folded into the cost so the
dynamic program stays segment-additive.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from . import _kernels
from .energy import EnergyPrefix
from .errors import DegenerateSegmentError, InvalidInputError

MBIC = "mbic"
BIC = "bic"
MANUAL = "manual"

BRUTEFORCE_MAX_N = 5_000


@dataclass(frozen=True)
class PenaltySpec:
    kind: str = MBIC
    value: float | None = None

    def __post_init__(self):
        k = self.kind.lower()
        object.__setattr__(self, "kind", k)
        if k == MANUAL:
            if self.value is None or not self.value >= 0:
                raise InvalidInputError("a manual penalty needs a value >= 0")
        elif k in (MBIC, BIC):
            if self.value is not None:
                raise InvalidInputError(f"{k} penalty takes no value")
        else:
            raise InvalidInputError(f"unknown penalty kind {self.kind!r}")

    @classmethod
    def manual(cls, value: float) -> "PenaltySpec":
        return cls(MANUAL, float(value))

    def per_changepoint(self, n: int) -> float:
        if self.kind == MBIC:
            return 1.5 * math.log(n)
        if self.kind == BIC:
            # one location and one variance per changepoint, on the half -2 log L scale
            return math.log(n)
        return float(self.value)

    @property
    def length_term(self) -> bool:
        return self.kind == MBIC


class CostModel:
    """Variance cost bound to a prefix; ``cost(a, b)`` is the cost of samples ``[a, b)``."""

    def __init__(self, prefix: EnergyPrefix, length_term: bool = False):
        self.prefix = prefix
        self.length_term = length_term

    def cost(self, a: int, b: int) -> float:
        c = segment_cost(self.prefix, a, b)
        if self.length_term:
            c += 0.5 * math.log((b - a) / self.prefix.n)
        return c

    def costs_to(self, a: int, ts: np.ndarray) -> np.ndarray:
        """Vectorized ``cost(a, t)``; zero-energy segments give +inf."""
        L = (ts - a).astype(np.float64)
        s = self.prefix.cum[ts] - self.prefix.cum[a]
        return self._vector(L, s)

    def costs_from(self, ts: np.ndarray, b: int) -> np.ndarray:
        L = (b - ts).astype(np.float64)
        s = self.prefix.cum[b] - self.prefix.cum[ts]
        return self._vector(L, s)

    def _vector(self, L, s):
        out = np.full(L.shape, np.inf)
        ok = s > 0.0
        out[ok] = 0.5 * L[ok] * np.log(s[ok]) - gammaln(0.5 * L[ok])
        if self.length_term:
            out += 0.5 * np.log(L / self.prefix.n)
        return out


def segment_cost(prefix: EnergyPrefix, a: int, b: int) -> float:
    """``(L/2) log S - lgamma(L/2)`` for samples ``[a, b)``."""
    if not 0 <= a < b <= prefix.n:
        raise InvalidInputError(f"invalid segment [{a}, {b})")
    s = prefix.energy(a, b)
    if not s > 0.0:
        raise DegenerateSegmentError(f"zero-energy segment [{a}, {b})")
    half = 0.5 * (b - a)
    return half * math.log(s) - math.lgamma(half)


def penalized_objective(prefix: EnergyPrefix, changepoints, penalty: PenaltySpec) -> float:
    """Total cost of a segmentation plus its penalty."""
    model = CostModel(prefix, penalty.length_term)
    edges = [0, *changepoints, prefix.n]
    total = penalty.per_changepoint(prefix.n) * len(changepoints)
    for a, b in zip(edges, edges[1:]):
        total += model.cost(a, b)
    return total


def pruning_bound(n: int) -> float:
    """Constant K with ``C(a,s] + C(s,b] <= C(a,b] + K`` for every split.

    From Stirling's series the split gain of this cost is at most
    ``0.5 log(L1 L2 / (4 pi L)) + 1/(6L)``; with ``L1 L2 / L <= N / 4`` that
    gives the bound below. The MBIC length terms only lower the gain.
    """
    return max(0.0, 0.5 * math.log(n / (16.0 * math.pi)) + 1.0 / 12.0)


def _check(prefix: EnergyPrefix, min_seg_len: int) -> None:
    if min_seg_len < 1:
        raise InvalidInputError("min_seg_len must be >= 1")
    if prefix.n < 2 * min_seg_len:
        raise InvalidInputError(f"n={prefix.n} is shorter than 2 * min_seg_len")


def _backtrack(last: np.ndarray, n: int) -> list[int]:
    cps = []
    t = int(last[n])
    while t > 0:
        cps.append(t)
        t = int(last[t])
    return cps[::-1]


def pelt(prefix: EnergyPrefix, penalty: PenaltySpec = PenaltySpec(),
         min_seg_len: int = 2) -> list[int]:
    """Exact minimizer of the penalized cost with PELT pruning."""
    _check(prefix, min_seg_len)
    n = prefix.n
    last, _ = _kernels.pelt_kernel(np.asarray(prefix.cum), penalty.per_changepoint(n),
                                   min_seg_len, penalty.length_term, pruning_bound(n))
    return _backtrack(last, n)


def optimal_partition_bruteforce(prefix: EnergyPrefix, penalty: PenaltySpec = PenaltySpec(),
                                 min_seg_len: int = 2) -> list[int]:
    """Unpruned O(N^2) dynamic program; the exactness reference for :func:`pelt`."""
    _check(prefix, min_seg_len)
    n = prefix.n
    if n > BRUTEFORCE_MAX_N:
        raise InvalidInputError(
            f"n={n} exceeds {BRUTEFORCE_MAX_N}; use pelt() for long signals")
    last, _ = _kernels.optimal_partition_kernel(np.asarray(prefix.cum),
                                                penalty.per_changepoint(n),
                                                min_seg_len, penalty.length_term)
    return _backtrack(last, n)


def _best_split(model: CostModel, a: int, b: int, min_seg_len: int):
    ts = np.arange(a + min_seg_len, b - min_seg_len + 1, dtype=np.int64)
    if len(ts) == 0:
        return -math.inf, -1
    whole = model.costs_to(a, np.array([b]))[0]
    split = model.costs_to(a, ts) + model.costs_from(ts, b)
    i = int(np.argmin(split))
    if not np.isfinite(split[i]):
        return -math.inf, -1
    return float(whole - split[i]), int(ts[i])


def binseg(prefix: EnergyPrefix, penalty: PenaltySpec = PenaltySpec(),
           min_seg_len: int = 2, max_changepoints: int | None = None) -> list[int]:
    """Greedy binary segmentation.

    Repeatedly applies the single split with the largest cost reduction, as
    long as that reduction exceeds the per-changepoint penalty.
    """
    _check(prefix, min_seg_len)
    n = prefix.n
    model = CostModel(prefix, penalty.length_term)
    pen = penalty.per_changepoint(n)
    heap = []

    def push(a, b):
        gain, t = _best_split(model, a, b, min_seg_len)
        if t >= 0:
            heapq.heappush(heap, (-gain, t, a, b))

    push(0, n)
    cps = []
    while heap and (max_changepoints is None or len(cps) < max_changepoints):
        neg_gain, t, a, b = heapq.heappop(heap)
        if -neg_gain <= pen:
            break
        cps.append(t)
        push(a, t)
        push(t, b)
    return sorted(cps)
