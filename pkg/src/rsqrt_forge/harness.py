"""Experiment engine: seeded sampling runs, exhaustive binary32 sweeps,
counterexample-family scans, exact-arithmetic invariant suites, and
informational benchmarks.

Work is split into fixed-size chunks indexed from zero. Chunk c of a
sampled run draws its values from a Philox generator keyed by
SeedSequence((seed, c)), so the sample stream is a pure function of the
plan and results are bit-identical regardless of how many worker
processes execute the chunks. Histograms merge by addition; the "worst
input" record uses an order-independent tie-break.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import algos, oracle
from .algos import AlgorithmId, DomainError, fma_sanity_check
from .fp import BINARY32, BINARY64, Precision, next_up, ulp_distance, _rank, _unrank
from .oracle import DyadicRational, VerdictKind

__all__ = [
    "PRNG_ID",
    "CHUNK_SIZE",
    "SamplePlan",
    "UlpHistogram",
    "ScanRow",
    "FamilyResult",
    "InvariantReport",
    "BenchRow",
    "run_sampled",
    "run_exhaustive_b32",
    "scan_counterexample_family",
    "run_invariant_suite",
    "run_benchmark",
]

CHUNK_SIZE = 1 << 15
PRNG_ID = f"philox4x64/seedseq(seed,chunk)/chunk={CHUNK_SIZE}"

_PRECISIONS = {"binary32": BINARY32, "binary64": BINARY64}


def resolve_threads(threads: int | None) -> int:
    """0 or None means auto (all CPUs); otherwise the explicit count."""
    if threads is None or threads == 0:
        return os.cpu_count() or 1
    if threads < 0:
        raise ValueError("thread count cannot be negative")
    return threads


@dataclass(frozen=True)
class SamplePlan:
    """A reproducible sampling experiment: interval, size, seed, format, kernels."""

    lo: float
    hi: float
    count: int
    seed: int
    precision: Precision = BINARY64
    algorithms: tuple[AlgorithmId, ...] = (AlgorithmId.NAIVE, AlgorithmId.NEWTON)

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ValueError("interval endpoints must be finite")
        if self.lo <= 0.0:
            raise ValueError("interval must be positive")
        if not self.lo < self.hi:
            raise ValueError("interval is empty")
        if self.count < 1:
            raise ValueError("count must be at least 1")
        if not self.algorithms:
            raise ValueError("no algorithms selected")
        if len(set(self.algorithms)) != len(self.algorithms):
            raise ValueError("duplicate algorithm in plan")
        for a in self.algorithms:
            if not a.supports(self.precision):
                raise ValueError(f"{a.value} is defined for binary64 only")
        if self.precision.p == 24:
            for end in (self.lo, self.hi):
                if algos._round_b32(end) != end:
                    raise ValueError(f"{end!r} is not representable in binary32")

    @property
    def is_single_binade(self) -> bool:
        fm, _ = math.frexp(self.lo)
        return fm == 0.5 and self.hi == 2.0 * self.lo


@dataclass
class UlpHistogram:
    """ULP-distance buckets of one algorithm against the oracle."""

    algorithm: AlgorithmId
    zero_ulp: int = 0
    one_ulp: int = 0
    two_plus_ulp: int = 0
    unfaithful: int = 0
    total: int = 0
    worst_x: float | None = None
    worst_ulp: int = 0
    witnesses: list[tuple[float, int]] = field(default_factory=list)
    keep_witnesses: bool = False

    def record(self, x: float, dist: int, faithful: bool) -> None:
        self.total += 1
        if dist == 0:
            self.zero_ulp += 1
        elif dist == 1:
            self.one_ulp += 1
        else:
            self.two_plus_ulp += 1
        if not faithful:
            self.unfaithful += 1
        if dist > 0 and self.keep_witnesses:
            self.witnesses.append((x, dist))
        self._consider_worst(x, dist)

    def _consider_worst(self, x: float, dist: int) -> None:
        if self.worst_x is None or dist > self.worst_ulp or (
            dist == self.worst_ulp and x < self.worst_x
        ):
            self.worst_x = x
            self.worst_ulp = dist

    def merge(self, other: "UlpHistogram") -> None:
        assert self.algorithm is other.algorithm
        self.zero_ulp += other.zero_ulp
        self.one_ulp += other.one_ulp
        self.two_plus_ulp += other.two_plus_ulp
        self.unfaithful += other.unfaithful
        self.total += other.total
        if other.worst_x is not None:
            self._consider_worst(other.worst_x, other.worst_ulp)
        if self.keep_witnesses:
            self.witnesses.extend(other.witnesses)

    def pct(self, count: int) -> float:
        return 100.0 * count / self.total if self.total else 0.0

    @property
    def zero_pct(self) -> float:
        return self.pct(self.zero_ulp)

    @property
    def one_pct(self) -> float:
        return self.pct(self.one_ulp)

    @property
    def two_plus_pct(self) -> float:
        return self.pct(self.two_plus_ulp)


def _chunk_values(plan: SamplePlan, chunk_idx: int, n: int) -> list[float]:
    """The n values of chunk `chunk_idx` of the plan's sample stream."""
    bitgen = np.random.Philox(seed=np.random.SeedSequence(entropy=(plan.seed, chunk_idx)))
    raws = bitgen.random_raw(n)
    p = plan.precision.p
    if plan.is_single_binade:
        # Uniform over the 2**(p-1) equally spaced floats of the binade.
        _, e2 = math.frexp(plan.lo)  # lo = 2**(e2-1)
        step_exp = (e2 - 1) - (p - 1)
        hidden = 1 << (p - 1)
        mants = (raws & np.uint64(hidden - 1)).tolist()
        return [math.ldexp(hidden | m, step_exp) for m in mants]
    # General interval: uniform reals mapped affinely, then rounded to the
    # format; edge hits on hi are pulled back inside.
    span = plan.hi - plan.lo
    out = []
    for r in raws.tolist():
        x = plan.lo + span * (r * 2.0**-64)
        if plan.precision.p == 24:
            x = algos._round_b32(x)
        if x >= plan.hi:
            x = _unrank(_rank(plan.hi, plan.precision) - 1, plan.precision)
        if x < plan.lo:
            x = plan.lo
        out.append(x)
    return out


def _chunk_counts(total: int) -> list[int]:
    full, rem = divmod(total, CHUNK_SIZE)
    counts = [CHUNK_SIZE] * full
    if rem:
        counts.append(rem)
    return counts


def _fresh_hists(algorithms, keep_witnesses_for=()) -> dict[AlgorithmId, UlpHistogram]:
    return {
        a: UlpHistogram(a, keep_witnesses=a in keep_witnesses_for) for a in algorithms
    }


def _classify_outputs(x: float, outputs: dict[AlgorithmId, float],
                      hists: dict[AlgorithmId, UlpHistogram], prec: Precision) -> None:
    hint = outputs.get(AlgorithmId.NEWTON)
    correct = oracle.oracle_rsqrt(x, prec, hint=hint)
    for a, y in outputs.items():
        v = oracle._verdict_against(y, correct, x, prec)
        hists[a].record(x, v.ulp_distance, v.is_faithful)


def _sampled_chunk(args) -> dict[AlgorithmId, UlpHistogram]:
    plan, chunk_idx, n = args
    hists = _fresh_hists(plan.algorithms)
    prec = plan.precision
    for x in _chunk_values(plan, chunk_idx, n):
        outputs = {a: algos.rsqrt_full_range(x, a, prec) for a in plan.algorithms}
        _classify_outputs(x, outputs, hists, prec)
    return hists


def _map_chunks(worker, jobs, threads: int):
    """Run jobs (in order) inline or across processes; results keep order."""
    if threads <= 1 or len(jobs) <= 1:
        return [worker(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(threads, len(jobs))) as pool:
        return list(pool.map(worker, jobs, chunksize=1))


def _merge_hist_lists(parts) -> dict[AlgorithmId, UlpHistogram]:
    merged = None
    for part in parts:
        if merged is None:
            merged = part
        else:
            for a, h in part.items():
                merged[a].merge(h)
    return merged or {}


def _require_fma(prec: Precision) -> None:
    if not fma_sanity_check(prec):
        raise RuntimeError(
            "fused multiply-add backend failed the fusion check; "
            "refusing to run accuracy experiments"
        )


def run_sampled(plan: SamplePlan, threads: int = 1) -> dict[AlgorithmId, UlpHistogram]:
    """Classify each selected kernel against the oracle over the sample stream."""
    _require_fma(plan.precision)
    threads = resolve_threads(threads)
    jobs = [(plan, i, n) for i, n in enumerate(_chunk_counts(plan.count))]
    return _merge_hist_lists(_map_chunks(_sampled_chunk, jobs, threads))


def _exhaustive_chunk(args) -> dict[AlgorithmId, UlpHistogram]:
    start_rank, n, algorithms, keep = args
    hists = _fresh_hists(algorithms, keep_witnesses_for=keep)
    for rank in range(start_rank, start_rank + n):
        x = _unrank(rank, BINARY32)
        outputs = {a: algos.rsqrt_full_range(x, a, BINARY32) for a in algorithms}
        _classify_outputs(x, outputs, hists, BINARY32)
    return hists


def run_exhaustive_b32(lo: float, hi: float, algorithms,
                       threads: int = 1,
                       witness_algorithms=(AlgorithmId.NEWTON, AlgorithmId.HALLEY),
                       ) -> dict[AlgorithmId, UlpHistogram]:
    """Test every binary32 value in [lo, hi) against the oracle.

    The interval may span at most two binades (2**24 values). For the
    algorithms named in `witness_algorithms` every non-zero-ulp input is
    kept, x by x; the others only track the worst case.
    """
    algorithms = tuple(algorithms)
    for end in (lo, hi):
        if algos._round_b32(end) != end:
            raise ValueError(f"{end!r} is not representable in binary32")
    if lo <= 0.0 or not lo < hi or math.isinf(hi):
        raise ValueError("need a positive non-empty interval")
    for a in algorithms:
        if not a.supports(BINARY32):
            raise ValueError(f"{a.value} is defined for binary64 only")
    r0, r1 = _rank(lo, BINARY32), _rank(hi, BINARY32)
    if r1 - r0 > (1 << 24):
        raise ValueError("interval too large: spans more than two binades")
    _require_fma(BINARY32)
    threads = resolve_threads(threads)
    keep = tuple(a for a in witness_algorithms if a in algorithms)
    jobs = []
    start = r0
    while start < r1:
        n = min(CHUNK_SIZE, r1 - start)
        jobs.append((start, n, algorithms, keep))
        start += n
    return _merge_hist_lists(_map_chunks(_exhaustive_chunk, jobs, threads))


@dataclass(frozen=True)
class ScanRow:
    k: int
    x: float
    algorithm: AlgorithmId
    output: float
    verdict: oracle.RoundingVerdict


def scan_counterexample_family(kmin: int, kmax: int, algorithms,
                               prec: Precision = BINARY64) -> list[ScanRow]:
    """Evaluate each kernel at x = (1 - 2u) * 4**k for k in [kmin, kmax].

    These are the only binary64 inputs known to defeat the Newton
    compensation (it lands one ulp low); the Halley compensation is
    expected to round correctly at every one of them.
    """
    algorithms = tuple(algorithms)
    if kmin > kmax:
        raise ValueError("empty k range")
    base = 1.0 - 2.0 * prec.unit_roundoff
    rows = []
    for k in range(kmin, kmax + 1):
        x = math.ldexp(base, 2 * k)
        correct = oracle.oracle_rsqrt(x, prec)
        for a in algorithms:
            y = algos.evaluate(a, x, prec)  # direct: the window is part of the pre
            rows.append(ScanRow(k, x, a, y, oracle._verdict_against(y, correct, x, prec)))
    return rows


@dataclass
class FamilyResult:
    """Outcome of one invariant family over a sample stream."""

    name: str
    checked: int = 0
    skipped: int = 0
    failed: int = 0
    witnesses: list[tuple[float, str]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.failed == 0

    def merge(self, other: "FamilyResult", max_witnesses: int) -> None:
        self.checked += other.checked
        self.skipped += other.skipped
        self.failed += other.failed
        room = max_witnesses - len(self.witnesses)
        if room > 0:
            self.witnesses.extend(other.witnesses[:room])


FAMILY_NAMES = (
    "sigma_exact",
    "tau_exact",
    "nubar_correctly_rounded",
    "undercompensation",
    "naive_error_bound",
    "monotone_improvement",
)


@dataclass
class InvariantReport:
    plan: SamplePlan
    families: dict[str, FamilyResult]

    @property
    def all_passed(self) -> bool:
        return all(f.passed for f in self.families.values())


def _naive_bound_dyadic(prec: Precision) -> DyadicRational:
    # 1.5 * u * (1 + 2**-20) = 3 * (2**20 + 1) * 2**-(p + 21)
    return DyadicRational(3 * ((1 << 20) + 1), -(prec.p + 21))


def _check_invariants_one(x: float, prec: Precision,
                          fams: dict[str, FamilyResult],
                          corrupt_nubar: bool) -> None:
    """Run all invariant families at one input; record into `fams`."""
    _, e2 = math.frexp(x)
    k = (e2 - 1) >> 1
    xr = math.ldexp(x, -2 * k)  # the kernels commute with 4**k scaling
    t = algos._newton_terms_unchecked(xr, prec)
    D = DyadicRational.from_float
    dxr = D(xr)
    dr = D(t.r)
    dy0 = D(t.y0)
    half = DyadicRational(1, -1)

    sig_exact = (DyadicRational(1) - dxr * dr) * half
    fams["sigma_exact"].checked += 1
    if D(t.sigma) != sig_exact:
        fams["sigma_exact"].failed += 1
        fams["sigma_exact"].witnesses.append((x, f"sigma={t.sigma.hex()}"))

    tau_exact = dy0 * dy0 - dr
    fams["tau_exact"].checked += 1
    if D(t.tau) != tau_exact:
        fams["tau_exact"].failed += 1
        fams["tau_exact"].witnesses.append((x, f"tau={t.tau.hex()}"))

    nubar = t.nu_bar
    if corrupt_nubar:
        nubar = next_up(nubar, prec)
    acc = D(t.sigma) + D(t.mxhalf) * D(t.tau)
    fams["nubar_correctly_rounded"].checked += 1
    if acc.round_to(prec) != nubar:
        fams["nubar_correctly_rounded"].failed += 1
        fams["nubar_correctly_rounded"].witnesses.append((x, f"nu_bar={nubar.hex()}"))

    nubar_exact = (DyadicRational(1) - dxr * dy0 * dy0) * half
    if nubar_exact.sign == 0:
        fams["undercompensation"].checked += 1
        fams["undercompensation"].skipped += 1
    else:
        q = (DyadicRational(1) + nubar_exact) * dy0
        fams["undercompensation"].checked += 1
        if oracle._cmp_rsqrt_ints(q.mantissa, q.exp2,
                                  *oracle._float_to_int_exp(xr)) != -1:
            fams["undercompensation"].failed += 1
            fams["undercompensation"].witnesses.append((x, "compensated value not below true rsqrt"))

    naive_y = algos.rsqrt_naive(xr, prec)
    bound = _naive_bound_dyadic(prec)
    s = -oracle.compare_to_rsqrt(naive_y, xr)
    mx, ex = oracle._float_to_int_exp(xr)
    within = s == 0 or oracle._abs_nu_below(D(naive_y), s, bound, mx, ex)
    fams["naive_error_bound"].checked += 1
    if not within:
        fams["naive_error_bound"].failed += 1
        fams["naive_error_bound"].witnesses.append((x, f"naive={naive_y.hex()}"))

    correct = oracle.oracle_rsqrt(xr, prec, hint=t.y)
    d_new = ulp_distance(t.y, correct, prec)
    d_naive = ulp_distance(naive_y, correct, prec)
    fams["monotone_improvement"].checked += 1
    if d_new > d_naive:
        fams["monotone_improvement"].failed += 1
        fams["monotone_improvement"].witnesses.append(
            (x, f"newton {d_new} ulp vs naive {d_naive} ulp"))


def _invariant_chunk(args) -> dict[str, FamilyResult]:
    plan, chunk_idx, n, corrupt = args
    fams = {name: FamilyResult(name) for name in FAMILY_NAMES}
    for x in _chunk_values(plan, chunk_idx, n):
        _check_invariants_one(x, plan.precision, fams, corrupt)
    return fams


def run_invariant_suite(plan: SamplePlan, threads: int = 1, max_witnesses: int = 10,
                        _corrupt_nubar: bool = False) -> InvariantReport:
    """Exact-arithmetic verification of the compensated step over a plan.

    Families: sigma/tau residual exactness, correct rounding of the
    correction term, strict undercompensation, the naive 1.5u error
    bound, and Newton-never-worse-than-naive. Failures are reported as
    data with witnesses, not raised. `_corrupt_nubar` is a test fixture
    that injects a one-ulp fault into the correction term.
    """
    _require_fma(plan.precision)
    threads = resolve_threads(threads)
    jobs = [(plan, i, n, _corrupt_nubar) for i, n in enumerate(_chunk_counts(plan.count))]
    parts = _map_chunks(_invariant_chunk, jobs, threads)
    merged: dict[str, FamilyResult] = {name: FamilyResult(name) for name in FAMILY_NAMES}
    for part in parts:
        for name, fam in part.items():
            merged[name].merge(fam, max_witnesses)
    return InvariantReport(plan, merged)


@dataclass(frozen=True)
class BenchRow:
    algorithm: AlgorithmId
    ns_per_op: float  # median over reps
    ns_spread: tuple[float, float]  # (min, max) over reps
    n: int
    reps: int
    checksum: float


def run_benchmark(algorithms, n: int, reps: int = 5, seed: int = 12345,
                  precision: Precision = BINARY64) -> list[BenchRow]:
    """Median wall time per call over a pregenerated input array.

    Purely informational: this is interpreted Python timing dominated by
    call overhead, not a statement about the kernels on hardware. The
    checksum accumulation keeps the loop honest.
    """
    if n < 1 or reps < 1:
        raise ValueError("n and reps must be at least 1")
    algorithms = tuple(algorithms)
    plan = SamplePlan(1.0, 2.0, n, seed, precision, algorithms)
    values: list[float] = []
    for i, cnt in enumerate(_chunk_counts(n)):
        values.extend(_chunk_values(plan, i, cnt))
    rows = []
    for a in algorithms:
        fn = algos._DISPATCH[a]
        prec = precision
        fn(values[0], prec)  # warm up
        times = []
        checksum = 0.0
        for _ in range(reps):
            acc = 0.0
            t0 = time.perf_counter_ns()
            for x in values:
                acc += fn(x, prec)
            t1 = time.perf_counter_ns()
            times.append((t1 - t0) / n)
            checksum = acc
        times.sort()
        median = times[len(times) // 2] if reps % 2 else 0.5 * (
            times[reps // 2 - 1] + times[reps // 2])
        rows.append(BenchRow(a, median, (times[0], times[-1]), n, reps, checksum))
    return rows
