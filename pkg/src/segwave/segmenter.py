"""Binary segmentation driven by the marginal posterior and the e-value test.

Each pending segment is split at its posterior-mode changepoint if the
equal-variance hypothesis is rejected there; accepted splits enqueue both
halves. Segments are processed in waves (all segments of one depth, then the
next), so serial and threaded runs produce the same result.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .energy import CandidateGrid, EnergyPrefix, Signal, argmax_changepoint, build_prefix
from .errors import InvalidInputError, SegwaveError
from .evalue import EmpiricalCalibration, EvalueReport, McmcConfig, PriorSpec, test_changepoint

log = logging.getLogger(__name__)

THREADS_ENV = "SEGWAVE_THREADS"


@dataclass(frozen=True)
class SegConfig:
    alpha: float = 0.05
    prior: PriorSpec = field(default_factory=PriorSpec.jeffreys)
    base_resolution: int = 1000
    min_seg_len: int = 1000
    max_changepoints: int | None = None
    mcmc: McmcConfig = field(default_factory=McmcConfig)
    seed: int = 0
    calibration: EmpiricalCalibration | None = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise InvalidInputError("alpha must lie in (0, 1)")
        if self.min_seg_len < 2:
            raise InvalidInputError("min_seg_len must be >= 2")
        if self.base_resolution < 1:
            raise InvalidInputError("base_resolution must be >= 1")
        if self.max_changepoints is not None and self.max_changepoints < 0:
            raise InvalidInputError("max_changepoints must be >= 0")

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "prior": self.prior.to_dict(),
            "base_resolution": self.base_resolution,
            "min_seg_len": self.min_seg_len,
            "max_changepoints": self.max_changepoints,
            "mcmc": self.mcmc.to_dict(),
            "seed": self.seed,
            "calibration": None if self.calibration is None else {
                "mode": "empirical",
                "replicates": self.calibration.replicates,
                "seed": self.calibration.seed,
            },
        }


@dataclass(frozen=True)
class SegmentStats:
    start: int
    end: int
    variance: float
    rms_db: float


@dataclass
class SegmentationResult:
    n: int
    changepoints: list[int]
    reports: list[EvalueReport]
    rejected_candidates: list[tuple[int, EvalueReport]]
    segments: list[SegmentStats]
    errors: list[tuple[int, int, str]] = field(default_factory=list)
    manifest: object | None = None


def worker_count(threads: int | None = None) -> int:
    """Requested threads, capped by ``SEGWAVE_THREADS`` when it is set."""
    n = threads if threads is not None else (os.cpu_count() or 1)
    cap = os.environ.get(THREADS_ENV)
    if cap:
        try:
            n = min(n, int(cap))
        except ValueError:
            log.warning("ignoring non-integer %s=%r", THREADS_ENV, cap)
    return max(1, n)


def child_seed(seed: int, start: int, end: int) -> int:
    """Seed for the test of segment ``[start, end)``, independent of traversal order."""
    return int(np.random.SeedSequence([seed, start, end]).generate_state(1, np.uint64)[0])


def segment_grid(length: int, step: int, min_seg_len: int) -> CandidateGrid | None:
    """Multiples of ``step`` keeping ``min_seg_len`` samples on both sides."""
    lo = -(-min_seg_len // step) * step
    hi = length - min_seg_len
    if lo > hi:
        return None
    hi = lo + ((hi - lo) // step) * step
    return CandidateGrid(lo=lo, hi=hi, step=step, min_margin=min_seg_len)


@dataclass
class _Outcome:
    start: int
    end: int
    t: int | None = None
    accepted: bool = False
    report: EvalueReport | None = None
    error: str | None = None


def _process(prefix: EnergyPrefix, start: int, end: int, ratio: float,
             config: SegConfig) -> _Outcome:
    out = _Outcome(start, end)
    length = end - start
    step = max(1, int(round(length * ratio)))
    grid = segment_grid(length, step, config.min_seg_len)
    if grid is None:
        return out
    try:
        local = prefix.segment(start, end)
        t, _ = argmax_changepoint(local, grid)
        mcmc = config.mcmc.with_seed(child_seed(config.seed, start, end))
        accepted, report = test_changepoint(local, t, config.prior, mcmc, config.alpha,
                                            calibration=config.calibration, grid=grid)
    except SegwaveError as exc:
        out.error = str(exc)
        return out
    out.t = start + t
    out.accepted = accepted
    out.report = report
    return out


def segment(signal: Signal | np.ndarray, config: SegConfig = SegConfig(), *,
            threads: int | None = 1) -> SegmentationResult:
    """Segment ``signal`` by changes in variance.

    Parameters
    ----------
    signal : Signal or array
        Zero-mean amplitudes.
    config : SegConfig
        Test level, prior, resolution, minimum segment length and seeds.
    threads : int, optional
        Worker threads for independent segments of the same depth; capped by
        the ``SEGWAVE_THREADS`` environment variable. ``None`` uses all cores.

    Returns
    -------
    SegmentationResult
    """
    if not isinstance(signal, Signal):
        signal = Signal(signal)
    n = len(signal)
    if n < 2 * config.min_seg_len:
        raise InvalidInputError(
            f"signal of length {n} is shorter than 2 * min_seg_len = {2 * config.min_seg_len}")
    prefix = build_prefix(signal)
    ratio = config.base_resolution / n
    cap = config.max_changepoints

    changepoints: list[int] = []
    reports: dict[int, EvalueReport] = {}
    rejected: list[tuple[int, EvalueReport]] = []
    errors: list[tuple[int, int, str]] = []
    wave = [(0, n)]
    workers = worker_count(threads)
    pool = ThreadPoolExecutor(workers) if workers > 1 else None
    try:
        while wave and (cap is None or len(changepoints) < cap):
            jobs = [w for w in wave if w[1] - w[0] >= 2 * config.min_seg_len]
            if pool is None:
                outcomes = [_process(prefix, a, b, ratio, config) for a, b in jobs]
            else:
                outcomes = list(pool.map(lambda ab: _process(prefix, ab[0], ab[1], ratio, config),
                                         jobs))
            accepted = []
            for o in outcomes:
                if o.error is not None:
                    errors.append((o.start, o.end, o.error))
                    log.warning("segment [%d, %d) closed: %s", o.start, o.end, o.error)
                elif o.report is not None:
                    if o.accepted:
                        accepted.append(o)
                    else:
                        rejected.append((o.t, o.report))
            if cap is not None:
                accepted.sort(key=lambda o: (o.report.sev, o.t))
                room = cap - len(changepoints)
                for o in accepted[room:]:
                    rejected.append((o.t, o.report))
                accepted = accepted[:room]
            wave = []
            for o in sorted(accepted, key=lambda o: o.t):
                changepoints.append(o.t)
                reports[o.t] = o.report
                wave.append((o.start, o.t))
                wave.append((o.t, o.end))
    finally:
        if pool is not None:
            pool.shutdown()

    changepoints.sort()
    rejected.sort(key=lambda item: item[0])
    return SegmentationResult(
        n=n,
        changepoints=changepoints,
        reports=[reports[t] for t in changepoints],
        rejected_candidates=rejected,
        segments=_stats_from_prefix(prefix, changepoints),
        errors=errors,
    )


def _stats_from_prefix(prefix: EnergyPrefix, changepoints: list[int]) -> list[SegmentStats]:
    edges = [0, *changepoints, prefix.n]
    out = []
    for a, b in zip(edges, edges[1:]):
        var = prefix.energy(a, b) / (b - a)
        db = 10.0 * math.log10(var) if var > 0 else -math.inf
        out.append(SegmentStats(a, b, var, db))
    return out


def estimate_segment_stats(signal: Signal | np.ndarray,
                           changepoints: list[int]) -> list[SegmentStats]:
    """Per-segment ML variance ``sum(y**2) / L`` and ``10 log10`` of it.

    A zero-energy segment reports ``rms_db = -inf``.
    """
    if not isinstance(signal, Signal):
        signal = Signal(signal)
    n = len(signal)
    cps = list(changepoints)
    if any(b <= a for a, b in zip(cps, cps[1:])) or (cps and (cps[0] <= 0 or cps[-1] >= n)):
        raise InvalidInputError("changepoints must be strictly increasing inside (0, n)")
    return _stats_from_prefix(build_prefix(signal), cps)
