"""Variance-change segmentation of acoustic signals.

A Bayesian binary segmenter (marginal posterior for the split location, FBST
e-value for the equal-variance test), PELT and binary-segmentation
baselines, a synthetic benchmark harness and a command-line interface.
"""

__version__ = "0.1.0"

from .energy import (  # noqa: E402
    CandidateGrid,
    EnergyPrefix,
    Signal,
    argmax_changepoint,
    build_prefix,
    log_marginal_posterior,
    log_marginal_posterior_grid,
)
from .errors import (  # noqa: E402
    ChainFailure,
    DegenerateSegmentError,
    InvalidInputError,
    NoCandidateError,
    SegwaveError,
    WavFormatError,
)
from .evalue import (  # noqa: E402
    EmpiricalCalibration,
    EvalueReport,
    McmcConfig,
    PriorSpec,
    ThetaPoint,
    adaptive_chain,
    evalue,
    h0_max,
    log_full_posterior,
    sev,
    test_changepoint,
)
from .segmenter import SegConfig, SegmentationResult, estimate_segment_stats, segment  # noqa: E402
from .baselines import (  # noqa: E402
    CostModel,
    PenaltySpec,
    binseg,
    optimal_partition_bruteforce,
    pelt,
    segment_cost,
)
from .simlab import (  # noqa: E402
    EvalRecord,
    SimSpec,
    bic,
    match_score,
    run_benchmark,
    select_beta,
    simulate,
)

__all__ = [
    "CandidateGrid", "EnergyPrefix", "Signal", "argmax_changepoint", "build_prefix",
    "log_marginal_posterior", "log_marginal_posterior_grid",
    "ChainFailure", "DegenerateSegmentError", "InvalidInputError", "NoCandidateError",
    "SegwaveError", "WavFormatError",
    "EmpiricalCalibration", "EvalueReport", "McmcConfig", "PriorSpec", "ThetaPoint",
    "adaptive_chain", "evalue", "h0_max", "log_full_posterior", "sev", "test_changepoint",
    "SegConfig", "SegmentationResult", "estimate_segment_stats", "segment",
    "CostModel", "PenaltySpec", "binseg", "optimal_partition_bruteforce", "pelt",
    "segment_cost",
    "EvalRecord", "SimSpec", "bic", "match_score", "run_benchmark", "select_beta", "simulate",
]
