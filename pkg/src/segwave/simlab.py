"""Synthetic changepoint processes, detection scoring and the benchmark harness.

Gaps between changepoints are geometric with success probability
``expected_k / n``; segments alternate between two variances. Detections
are scored by one-to-one matching within a tolerance, and the Bayesian
segmenter's hyperparameters are chosen by BIC.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .baselines import PenaltySpec, binseg, pelt
from .energy import EnergyPrefix, Signal, build_prefix
from .errors import DegenerateSegmentError, InvalidInputError, SegwaveError
from .evalue import PriorSpec
from .segmenter import SegConfig, segment

log = logging.getLogger(__name__)

ALGORITHMS = ("bayes-jeffreys", "bayes-laplace", "pelt", "binseg")
LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class SimSpec:
    n: int
    expected_k: float = 50
    var_low: float = 1.0
    var_high: float = 2.0
    seed: int = 0
    replicates: int = 10

    def __post_init__(self):
        if self.n < 100:
            raise InvalidInputError("n must be >= 100")
        if not self.expected_k >= 1:
            raise InvalidInputError("expected_k must be >= 1")
        if not (self.var_low > 0 and self.var_high > 0):
            raise InvalidInputError("variances must be positive")
        if self.replicates < 1:
            raise InvalidInputError("replicates must be >= 1")

    @property
    def p(self) -> float:
        return min(1.0, self.expected_k / self.n)


@dataclass
class EvalRecord:
    algorithm: str
    n: int
    time_s: float
    true_k: float
    est_k: float
    precision: float
    recall: float
    f1_standard: float
    f1_paper: float
    runs: int = 0
    failures: list[str] = field(default_factory=list)


def draw_changepoints(spec: SimSpec, rng: np.random.Generator) -> list[int]:
    """Cumulative geometric gaps, keeping those that land inside the signal."""
    cps = []
    t = 0
    block = max(16, int(2 * spec.n * spec.p))
    while True:
        for g in rng.geometric(spec.p, size=block):
            t += int(g)
            if t >= spec.n:
                return cps
            cps.append(t)


def simulate(spec: SimSpec, replicate: int = 0) -> tuple[Signal, list[int]]:
    """One realization of the alternating-variance changepoint process."""
    rng = np.random.default_rng([spec.seed, replicate])
    cps = draw_changepoints(spec, rng)
    sd = np.empty(spec.n)
    edges = [0, *cps, spec.n]
    levels = (math.sqrt(spec.var_low), math.sqrt(spec.var_high))
    for i, (a, b) in enumerate(zip(edges, edges[1:])):
        sd[a:b] = levels[i % 2]
    y = rng.standard_normal(spec.n) * sd
    return Signal(y), cps


def _check_sorted(xs, name):
    if any(b < a for a, b in zip(xs, xs[1:])):
        raise InvalidInputError(f"{name} changepoints must be sorted")


def match_score(true_cps, est_cps, tol: int) -> tuple[float, float, float, float]:
    """Precision, recall and both F1 variants under one-to-one matching.

    Pairs within ``tol`` are matched greedily, closest first (ties broken by
    the smaller indices). ``f1_paper`` is ``P R / (P + R)`` and
    ``f1_standard`` is ``2 P R / (P + R)``.
    """
    if tol < 0:
        raise InvalidInputError("tol must be >= 0")
    true_cps = [int(x) for x in true_cps]
    est_cps = [int(x) for x in est_cps]
    _check_sorted(true_cps, "true")
    _check_sorted(est_cps, "estimated")

    pairs = []
    for i, t in enumerate(true_cps):
        lo = np.searchsorted(est_cps, t - tol, side="left")
        hi = np.searchsorted(est_cps, t + tol, side="right")
        for j in range(lo, hi):
            pairs.append((abs(est_cps[j] - t), i, j))
    pairs.sort()
    used_t, used_e = set(), set()
    for _, i, j in pairs:
        if i not in used_t and j not in used_e:
            used_t.add(i)
            used_e.add(j)
    tp = len(used_t)

    if est_cps:
        precision = tp / len(est_cps)
    else:
        precision = 1.0 if not true_cps else 0.0
    if true_cps:
        recall = tp / len(true_cps)
    else:
        recall = 1.0 if not est_cps else 0.0
    return (precision, recall, *f1_pair(precision, recall))


def f1_pair(precision: float, recall: float) -> tuple[float, float]:
    """``(2 P R / (P + R), P R / (P + R))``; both zero when undefined."""
    s = precision + recall
    if s == 0.0:
        return 0.0, 0.0
    half = precision * recall / s
    return 2.0 * half, half


def bic(prefix: EnergyPrefix, changepoints) -> float:
    """``-2 log L_max + (2m + 1) log N`` for per-segment ML variances.

    The parameter count covers m changepoint locations and m + 1 variances.
    """
    n = prefix.n
    cps = list(changepoints)
    edges = [0, *cps, n]
    if any(b <= a for a, b in zip(edges, edges[1:])):
        raise InvalidInputError("changepoints must be strictly increasing inside (0, n)")
    m2ll = 0.0
    for a, b in zip(edges, edges[1:]):
        s = prefix.energy(a, b)
        if not s > 0.0:
            raise DegenerateSegmentError(f"zero-energy segment [{a}, {b})")
        L = b - a
        m2ll += L * (LOG_2PI + 1.0 + math.log(s / L))
    return m2ll + (2 * len(cps) + 1) * math.log(n)


# -- beta selection ----------------------------------------------------------

class NoSelectionError(SegwaveError):
    """No grid point produced a usable BIC value."""

    def __init__(self, message: str, curve):
        super().__init__(message)
        self.curve = curve


@dataclass
class BetaSelection:
    beta_star: float
    curve: list[tuple[float, float]]
    changepoints: dict[float, list[int]]
    flat: bool = False


def knee_index(x, y) -> int | None:
    """Interior point of maximum positive (convex) curvature on the normalized curve.

    Returns ``None`` when the curve is flat or never bends upward.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) < 3:
        return None
    xr = np.ptp(x)
    yr = np.ptp(y)
    if xr == 0 or yr == 0:
        return None
    xn = (x - x.min()) / xr
    yn = (y - y.min()) / yr
    best, arg = 0.0, None
    for i in range(1, len(x) - 1):
        ax, ay = xn[i] - xn[i - 1], yn[i] - yn[i - 1]
        bx, by = xn[i + 1] - xn[i], yn[i + 1] - yn[i]
        cx, cy = xn[i + 1] - xn[i - 1], yn[i + 1] - yn[i - 1]
        denom = math.hypot(ax, ay) * math.hypot(bx, by) * math.hypot(cx, cy)
        if denom == 0:
            continue
        # signed Menger curvature, positive where the curve turns upward
        k = 2.0 * (ax * by - ay * bx) / denom
        if k > best + 1e-12:
            best, arg = k, i
    return arg


def select_beta(signal: Signal | np.ndarray, beta_grid, config: SegConfig = SegConfig(),
                *, threads: int | None = 1) -> BetaSelection:
    """Pick the Laplace scale at the knee of the BIC-versus-log(beta) curve.

    Runs :func:`segment` once per grid value. When no knee exists the
    smallest beta is returned with ``flat=True``.
    """
    betas = [float(b) for b in beta_grid]
    if len(betas) < 3:
        raise InvalidInputError("beta_grid needs at least 3 points")
    if any(b <= 0 for b in betas) or any(b2 <= b1 for b1, b2 in zip(betas, betas[1:])):
        raise InvalidInputError("beta_grid must be positive and strictly increasing")
    if not isinstance(signal, Signal):
        signal = Signal(signal)
    prefix = build_prefix(signal)

    curve, cps_by_beta = [], {}
    for b in betas:
        try:
            res = segment(signal, replace(config, prior=PriorSpec.laplace(b)), threads=threads)
            value = bic(prefix, res.changepoints)
            cps_by_beta[b] = res.changepoints
        except SegwaveError as exc:
            log.warning("beta=%g: %s", b, exc)
            value = math.nan
        curve.append((b, value))

    ok = [(b, v) for b, v in curve if math.isfinite(v)]
    if not ok:
        raise NoSelectionError("no beta produced a finite BIC", curve)
    k = knee_index([math.log(b) for b, _ in ok], [v for _, v in ok]) if len(ok) >= 3 else None
    if k is None:
        log.warning("BIC curve has no knee; returning the smallest beta")
        return BetaSelection(ok[0][0], curve, cps_by_beta, flat=True)
    return BetaSelection(ok[k][0], curve, cps_by_beta)


# -- benchmark ----------------------------------------------------------------

@dataclass(frozen=True)
class BenchConfig:
    """Settings for the Bayesian segmenter inside the benchmark.

    ``min_seg_frac`` and ``resolution_frac`` scale with the signal length.
    The hyperparameters are chosen per replicate by minimum BIC.
    """

    alpha_grid: tuple[float, ...] = (1e-2, 1e-3, 1e-4)
    beta_grid: tuple[float, ...] = (1e-3, 3e-3, 1e-2, 3e-2)
    min_seg_frac: float = 1e-3
    resolution_frac: float = 1e-3
    baseline_min_seg: int = 2
    seed: int = 0
    threads: int | None = 1

    def seg_config(self, n: int, prior: PriorSpec, alpha: float, seed: int) -> SegConfig:
        return SegConfig(alpha=alpha, prior=prior,
                         base_resolution=max(1, round(n * self.resolution_frac)),
                         min_seg_len=max(2, round(n * self.min_seg_frac)),
                         seed=seed)


def _bayes_by_bic(signal, prefix, priors, bench: BenchConfig, seed: int) -> list[int]:
    best = (math.inf, None)
    for prior in priors:
        for alpha in bench.alpha_grid:
            cfg = bench.seg_config(prefix.n, prior, alpha, seed)
            cps = segment(signal, cfg, threads=bench.threads).changepoints
            value = bic(prefix, cps)
            if value < best[0]:
                best = (value, cps)
    return best[1]


def run_algorithm(name: str, signal: Signal, bench: BenchConfig = BenchConfig(),
                  seed: int = 0) -> list[int]:
    prefix = build_prefix(signal)
    if name == "bayes-jeffreys":
        return _bayes_by_bic(signal, prefix, [PriorSpec.jeffreys()], bench, seed)
    if name == "bayes-laplace":
        priors = [PriorSpec.laplace(b) for b in bench.beta_grid]
        return _bayes_by_bic(signal, prefix, priors, bench, seed)
    if name == "pelt":
        return pelt(prefix, PenaltySpec(), bench.baseline_min_seg)
    if name == "binseg":
        return binseg(prefix, PenaltySpec(), bench.baseline_min_seg)
    raise InvalidInputError(f"unknown algorithm {name!r}")


def run_benchmark(specs, algorithms=ALGORITHMS,
                  bench: BenchConfig = BenchConfig()) -> list[EvalRecord]:
    """Average scores over replicates for every (spec, algorithm) cell.

    A failing run is recorded in the cell's ``failures`` and left out of the
    averages; it never stops the sweep.
    """
    algorithms = list(algorithms)
    for a in algorithms:
        if a not in ALGORITHMS:
            raise InvalidInputError(f"unknown algorithm {a!r}")
    records = []
    for spec in specs:
        tol = spec.n // 100
        sims = [simulate(spec, r) for r in range(spec.replicates)]
        for name in algorithms:
            rows, failures = [], []
            for r, (signal, truth) in enumerate(sims):
                seed = int(np.random.SeedSequence([bench.seed, spec.seed, r])
                           .generate_state(1, np.uint64)[0])
                t0 = time.perf_counter()
                try:
                    est = run_algorithm(name, signal, bench, seed)
                except Exception as exc:  # noqa: BLE001 - a cell failure must not abort the sweep
                    failures.append(f"replicate {r}: {type(exc).__name__}: {exc}")
                    log.warning("%s n=%d replicate %d failed: %s", name, spec.n, r, exc)
                    continue
                elapsed = time.perf_counter() - t0
                rows.append((elapsed, len(truth), len(est), *match_score(truth, est, tol)))
            if rows:
                m = np.mean(np.array(rows, dtype=np.float64), axis=0)
                vals = [float(v) for v in m]
            else:
                vals = [math.nan] * 7
            records.append(EvalRecord(name, spec.n, *vals, runs=len(rows), failures=failures))
    return records


COLUMNS = ("n", "algorithm", "time_s", "true_k", "est_k", "precision", "recall",
           "f1_standard", "f1_paper", "runs", "failures")


def records_to_csv(records, include_time: bool = True) -> str:
    cols = [c for c in COLUMNS if include_time or c != "time_s"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for rec in records:
        d = asdict(rec)
        d["failures"] = len(rec.failures)
        w.writerow([_fmt(d[c]) for c in cols])
    return buf.getvalue()


def records_to_json(records, include_time: bool = True) -> str:
    out = []
    for rec in records:
        d = {k: (None if isinstance(v, float) and math.isnan(v) else v)
             for k, v in asdict(rec).items()}
        if not include_time:
            d.pop("time_s")
        out.append(d)
    return json.dumps(out, indent=2, sort_keys=True) + "\n"


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6f}"
    return v
