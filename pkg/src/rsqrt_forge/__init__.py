"""Reciprocal square root kernels with FMA compensation, an exact
integer correct-rounding oracle, and a ULP-accuracy experiment harness."""

from .fp import (
    BINARY32,
    BINARY64,
    FloatParts,
    Precision,
    decompose,
    next_down,
    next_up,
    recompose,
    round_int_scaled,
    ulp_distance,
    ulp_of,
)
from .algos import (
    AlgorithmId,
    DomainError,
    NewtonTerms,
    evaluate,
    fma,
    fma_sanity_check,
    newton_terms,
    rcp_sqrt_331d,
    rcp_sqrt_331d_halley,
    rsqrt_full_range,
    rsqrt_halley,
    rsqrt_naive,
    rsqrt_newton,
    safe_window,
)
from .oracle import (
    DyadicRational,
    MidpointTieError,
    RelativeErrorBound,
    RoundingVerdict,
    VerdictKind,
    classify,
    compare_to_rsqrt,
    exact_relative_error,
    oracle_rsqrt,
)
from .harness import (
    InvariantReport,
    SamplePlan,
    ScanRow,
    UlpHistogram,
    run_benchmark,
    run_exhaustive_b32,
    run_invariant_suite,
    run_sampled,
    scan_counterexample_family,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # fp
    "Precision", "BINARY32", "BINARY64", "FloatParts",
    "decompose", "recompose", "ulp_of", "ulp_distance",
    "next_up", "next_down", "round_int_scaled",
    # algos
    "AlgorithmId", "DomainError", "NewtonTerms", "evaluate",
    "fma", "fma_sanity_check", "newton_terms",
    "rsqrt_naive", "rsqrt_newton", "rsqrt_halley",
    "rcp_sqrt_331d", "rcp_sqrt_331d_halley", "rsqrt_full_range", "safe_window",
    # oracle
    "DyadicRational", "MidpointTieError", "RelativeErrorBound",
    "RoundingVerdict", "VerdictKind",
    "classify", "compare_to_rsqrt", "exact_relative_error", "oracle_rsqrt",
    # harness
    "SamplePlan", "UlpHistogram", "ScanRow", "InvariantReport",
    "run_sampled", "run_exhaustive_b32", "scan_counterexample_family",
    "run_invariant_suite", "run_benchmark",
]
