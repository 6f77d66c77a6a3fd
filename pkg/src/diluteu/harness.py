"""Replication engine, distribution tests, and report emission.

A run is described by an ExperimentConfig; everything downstream is a
pure function of (config, master seed), so identical configs give
byte-identical reports. Replications run concurrently when asked, each
with a derived per-index seed, and are reduced in index order, so the
thread count never changes the output.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from scipy.special import erf, ndtr

from .conditions import (
    CONDITION_IDS,
    DEFAULT_EPS_GRID,
    DEFAULT_N_GRID,
    ConditionReport,
    sweep_condition,
)
from .decomposition import compute_ustat
from .errors import (
    ConfigurationError,
    DegenerateNormalizationError,
    ResourceBudgetError,
)
from .kernels import KernelSpec, kernel_by_name
from .moments import MomentSet, moments_closed_form, moments_mc
from .sampling import (
    DistributionSpec,
    SeedPolicy,
    dilution_regime,
    sample_dilution,
    sample_row,
)

__all__ = [
    "ExperimentConfig",
    "DistTestResult",
    "replicate_standardized",
    "ks_distance",
    "normal_cdf",
    "chi1_shifted_cdf",
    "run_clt_experiment",
    "run_counterexample",
    "run_condition_sweep",
    "emit_report",
    "DEFAULT_KS_THRESHOLD",
    "DEFAULT_MAX_PAIR_EVALS",
]

DEFAULT_KS_THRESHOLD = 0.05
DEFAULT_MAX_PAIR_EVALS = 2_000_000_000


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run needs; hashable to a short config fingerprint.

    Dilution comes either as a fixed p or as an exponent a with
    p = n^-a; exactly one of the two must be set. standardization picks
    the variance used to scale the statistic: "exact" (closed-form
    finite-n variance), "mc" (estimated moments), or "asymptotic"
    (the 2 theta^2 / binom(n,2) large-n form).
    """

    kernel_name: str = "sign"
    dist: DistributionSpec = None
    n_grid: Tuple[int, ...] = DEFAULT_N_GRID
    p: Optional[float] = None
    a: Optional[float] = None
    R: int = 2000
    master_seed: int = 6
    standardization: str = "exact"
    eps_grid: Tuple[float, ...] = DEFAULT_EPS_GRID
    conditions: Tuple[str, ...] = ()
    m: Optional[int] = None
    ks_threshold: float = DEFAULT_KS_THRESHOLD
    threads: int = 1
    max_pair_evals: int = DEFAULT_MAX_PAIR_EVALS
    out_path: Optional[str] = None
    out_format: str = "csv"
    expected_verdicts: Dict[str, str] = field(default_factory=dict)
    dist_schedule: Optional[Callable] = None

    def __post_init__(self):
        if self.dist is None:
            object.__setattr__(self, "dist", _default_dist())
        if self.R < 1:
            raise ConfigurationError("replication count must be >= 1")
        grid = tuple(int(v) for v in self.n_grid)
        if not grid or any(b <= a_ for a_, b in zip(grid, grid[1:])):
            raise ConfigurationError("n grid must be nonempty and strictly increasing")
        object.__setattr__(self, "n_grid", grid)
        if (self.p is None) == (self.a is None):
            raise ConfigurationError("set exactly one of fixed p or exponent a")
        if self.standardization not in ("exact", "mc", "asymptotic"):
            raise ConfigurationError(
                "standardization must be exact, mc or asymptotic; got %r"
                % self.standardization
            )
        if self.out_format not in ("csv", "json"):
            raise ConfigurationError("format must be csv or json")
        for cid in self.conditions:
            if cid not in CONDITION_IDS:
                raise ConfigurationError("unknown condition id %r" % cid)
        for n in grid:
            p = self.p_at(n)
            if not 0.0 < p <= 1.0:
                raise ConfigurationError("dilution p=%r out of range at n=%d" % (p, n))
            if n * p < 1.0:
                raise ConfigurationError(
                    "n*p = %.3f < 1 at n=%d; the sparse regime needs np >= 1"
                    % (n * p, n)
                )
            if n * p < 10.0:
                import warnings

                warnings.warn(
                    "n*p = %.2f < 10 at n=%d: slow regime, expect weak normality"
                    % (n * p, n),
                    stacklevel=2,
                )

    def p_at(self, n: int) -> float:
        if self.p is not None:
            return float(self.p)
        return dilution_regime(n, self.a)

    def dist_at(self, n: int) -> DistributionSpec:
        if self.dist_schedule is not None:
            return self.dist_schedule(n)
        return self.dist

    def policy(self) -> SeedPolicy:
        return SeedPolicy(master_seed=self.master_seed)

    def canonical_json(self) -> str:
        payload = {
            "kernel": self.kernel_name,
            "dist": self.dist.describe(),
            "n_grid": list(self.n_grid),
            "p": None if self.p is None else repr(float(self.p)),
            "a": None if self.a is None else repr(float(self.a)),
            "R": self.R,
            "master_seed": self.master_seed,
            "standardization": self.standardization,
            "eps_grid": [repr(float(e)) for e in self.eps_grid],
            "conditions": list(self.conditions),
            "m": self.m,
            "ks_threshold": repr(float(self.ks_threshold)),
            "expected_verdicts": dict(sorted(self.expected_verdicts.items())),
        }
        if self.dist_schedule is not None:
            payload["dist_schedule"] = [
                [n, self.dist_at(n).describe()] for n in self.n_grid
            ]
        return json.dumps(payload, sort_keys=True)

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf8")).hexdigest()[:12]


def _default_dist() -> DistributionSpec:
    from .sampling import rademacher

    return rademacher()


@dataclass(frozen=True)
class DistTestResult:
    """Standardized samples against one target law, with the KS readout.

    decision is the literal threshold comparison (pass iff ks below the
    threshold); callers that expect a failure, like the normal leg of the
    counterexample, interpret it themselves. runtime_seconds is carried
    in memory only and never serialized, to keep reports byte-stable.
    """

    samples: np.ndarray
    target: str
    ks_statistic: float
    threshold: float
    decision: str
    n: int
    R: int
    eval_count: int
    standardization: str
    note: str = ""
    runtime_seconds: float = 0.0

    def to_json(self) -> str:
        payload = {
            "target": self.target,
            "ks_statistic": repr(float(self.ks_statistic)),
            "threshold": repr(float(self.threshold)),
            "decision": self.decision,
            "n": self.n,
            "R": self.R,
            "eval_count": self.eval_count,
            "standardization": self.standardization,
            "note": self.note,
        }
        return json.dumps(payload, sort_keys=True)


# --------------------------------------------------------------------------
# target CDFs and the KS statistic


def normal_cdf(t):
    """Standard normal CDF via the library erf path (ndtr); abs error
    well under 1e-10 across the real line."""
    return ndtr(np.asarray(t, dtype=np.float64))


def chi1_shifted_cdf(t):
    """CDF of Z^2 - 1 for standard normal Z:
    F(t) = P(Z^2 <= t + 1) = erf(sqrt((t+1)/2)) for t >= -1, else 0."""
    t = np.asarray(t, dtype=np.float64)
    shifted = np.clip(t + 1.0, 0.0, None)
    return np.where(t >= -1.0, erf(np.sqrt(shifted / 2.0)), 0.0)


_TARGET_CDFS = {"normal": normal_cdf, "chi1_shifted": chi1_shifted_cdf}


def ks_distance(samples, target_cdf) -> float:
    """Sup distance between the empirical CDF and a target CDF.

    Uses the sorted-sample form max_i max(F(x_(i)) - (i-1)/R,
    i/R - F(x_(i))); target_cdf may be a callable or a named target.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 0:
        raise ConfigurationError("ks_distance needs a nonempty sample")
    if isinstance(target_cdf, str):
        try:
            target_cdf = _TARGET_CDFS[target_cdf]
        except KeyError:
            raise ConfigurationError(
                "unknown target %r (normal, chi1_shifted)" % target_cdf
            ) from None
    r = samples.size
    xs = np.sort(samples)
    fv = np.asarray(target_cdf(xs), dtype=np.float64)
    grid = np.arange(1, r + 1, dtype=np.float64) / r
    return float(np.max(np.maximum(fv - (grid - 1.0 / r), grid - fv)))


# --------------------------------------------------------------------------
# replication


def _standardizer(config: ExperimentConfig, kernel: KernelSpec, dist, n: int, p: float) -> Tuple[float, str]:
    """The divisor applied to U, and the provenance string recorded."""
    if config.standardization == "mc":
        moments = moments_mc(
            kernel, dist, n, p, m=100_000, seed=config.policy().child("standardize-mc", 0)
        )
        var = moments.var_u_exact
        prov = "mc"
    else:
        moments = moments_closed_form(kernel, dist, n, p)
        if config.standardization == "asymptotic":
            var = 2.0 * moments.theta2 / math.comb(n, 2)
            prov = "asymptotic"
        else:
            var = moments.var_u_exact
            prov = "exact"
    if not var > 0.0:
        raise DegenerateNormalizationError(
            "standardizing variance is %r; the statistic is degenerate" % var
        )
    return math.sqrt(var), prov


def _run_replicates(
    config: ExperimentConfig,
    kernel: KernelSpec,
    dist,
    n: int,
    p: float,
    label: str,
    statistic: Callable,
) -> Tuple[np.ndarray, int]:
    """R independent statistic values plus the summed kernel-eval count.

    Each replicate draws a fresh (row, graph) pair from its own derived
    seed; results land in replication-index slots, so any thread
    schedule reduces identically.
    """
    R = config.R
    expected = R * math.comb(n, 2) * p
    if expected > config.max_pair_evals:
        raise ResourceBudgetError(
            "about %.3g kernel evaluations expected (R=%d, n=%d, p=%.3g), "
            "over the %d budget" % (expected, R, n, p, config.max_pair_evals)
        )
    policy = config.policy()
    out = np.empty(R)
    evals = np.zeros(R, dtype=np.int64)

    def run_range(lo: int, hi: int) -> None:
        for r in range(lo, hi):
            seq = policy.child(label, r)
            sx, sz = seq.spawn(2)
            x = sample_row(n, dist, sx)
            graph = sample_dilution(n, p, sz)
            out[r] = statistic(x, graph)
            evals[r] = graph.edge_count()

    workers = config.threads if config.threads > 0 else (os.cpu_count() or 1)
    if workers <= 1 or R < 2 * workers:
        run_range(0, R)
    else:
        step = -(-R // workers)
        spans = [(lo, min(lo + step, R)) for lo in range(0, R, step)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda s: run_range(*s), spans))
    return out, int(evals.sum())


def replicate_standardized(config: ExperimentConfig, n: Optional[int] = None) -> np.ndarray:
    """R draws of U / sqrt(Var U) at one grid point (default: the largest)."""
    n = int(n) if n is not None else config.n_grid[-1]
    p = config.p_at(n)
    dist = config.dist_at(n)
    kernel = kernel_by_name(config.kernel_name, dist)
    denom, _ = _standardizer(config, kernel, dist, n, p)
    samples, _ = _run_replicates(
        config,
        kernel,
        dist,
        n,
        p,
        "replicate/n%d" % n,
        lambda x, graph: compute_ustat(x, graph, kernel) / denom,
    )
    return samples


def run_clt_experiment(config: ExperimentConfig, n: Optional[int] = None) -> DistTestResult:
    """Standardized samples at the chosen n, KS-tested against the normal."""
    n = int(n) if n is not None else config.n_grid[-1]
    p = config.p_at(n)
    dist = config.dist_at(n)
    kernel = kernel_by_name(config.kernel_name, dist)
    t0 = time.perf_counter()
    denom, prov = _standardizer(config, kernel, dist, n, p)
    samples, evals = _run_replicates(
        config,
        kernel,
        dist,
        n,
        p,
        "replicate/n%d" % n,
        lambda x, graph: compute_ustat(x, graph, kernel) / denom,
    )
    ks = ks_distance(samples, normal_cdf)
    return DistTestResult(
        samples=samples,
        target="normal",
        ks_statistic=ks,
        threshold=config.ks_threshold,
        decision="pass" if ks < config.ks_threshold else "fail",
        n=n,
        R=config.R,
        eval_count=evals,
        standardization=prov,
        runtime_seconds=time.perf_counter() - t0,
    )


_COUNTEREXAMPLE_NOTE = (
    "undiluted product statistic: n*U equals (S_n^2 - sum X_i^2)/(n-1), "
    "whose limit is the square of a standard normal shifted to mean zero; "
    "the centered statistic is therefore tested against Z^2 - 1"
)


def run_counterexample(config: ExperimentConfig, n: Optional[int] = None) -> Tuple[DistTestResult, DistTestResult]:
    """The no-CLT witness: undiluted product kernel on standard normal rows.

    Returns the n*U sample tested against the normal law (expected to
    fail) and against the shifted square law Z^2 - 1 (the actual limit).
    The kernel, row law, and p are pinned here regardless of the config,
    which contributes only n, R, seed, threads, and the threshold.
    """
    from .sampling import standard_normal

    n = int(n) if n is not None else config.n_grid[-1]
    dist = standard_normal()
    kernel = kernel_by_name("product", dist)
    t0 = time.perf_counter()
    samples, evals = _run_replicates(
        config,
        kernel,
        dist,
        n,
        1.0,
        "counterexample/n%d" % n,
        lambda x, graph: n * compute_ustat(x, graph, kernel),
    )
    runtime = time.perf_counter() - t0
    ks_norm = ks_distance(samples, normal_cdf)
    ks_chi = ks_distance(samples, chi1_shifted_cdf)
    common = dict(
        samples=samples,
        threshold=config.ks_threshold,
        n=n,
        R=config.R,
        eval_count=evals,
        standardization="none (raw n*U)",
        note=_COUNTEREXAMPLE_NOTE,
        runtime_seconds=runtime,
    )
    vs_normal = DistTestResult(
        target="normal",
        ks_statistic=ks_norm,
        decision="pass" if ks_norm < config.ks_threshold else "fail",
        **common,
    )
    vs_chi = DistTestResult(
        target="chi1_shifted",
        ks_statistic=ks_chi,
        decision="pass" if ks_chi < config.ks_threshold else "fail",
        **common,
    )
    return vs_normal, vs_chi


def run_condition_sweep(config: ExperimentConfig):
    """ConditionReports for the configured condition subset."""
    ids = config.conditions or ("C1", "C2", "C3", "C4")
    dist = config.dist
    kernel = kernel_by_name(config.kernel_name, dist)
    policy = config.policy()
    reports = []
    for cid in ids:
        reports.append(
            sweep_condition(
                cid,
                kernel,
                dist,
                policy,
                n_grid=config.n_grid,
                eps_grid=config.eps_grid,
                a=config.a if config.a is not None else 0.0,
                m=config.m,
                p_fixed=config.p,
            )
        )
    return reports


# --------------------------------------------------------------------------
# report emission


def _csv_text(results, config_hash: str, seed) -> str:
    buf = io.StringIO()
    buf.write("# config_hash=%s seed=%s\n" % (config_hash, seed))
    writer = csv.writer(buf, lineterminator="\n")
    flat = results if isinstance(results, (list, tuple)) else [results]
    if all(isinstance(r, ConditionReport) for r in flat):
        writer.writerow(["condition_id", "n", "eps", "estimate", "se", "verdict"])
        for rep in flat:
            for row in rep.csv_rows():
                writer.writerow(row)
    elif all(isinstance(r, DistTestResult) for r in flat):
        writer.writerow(
            ["target", "n", "R", "ks_statistic", "threshold", "decision", "eval_count"]
        )
        for r in flat:
            writer.writerow(
                [
                    r.target,
                    r.n,
                    r.R,
                    repr(float(r.ks_statistic)),
                    repr(float(r.threshold)),
                    r.decision,
                    r.eval_count,
                ]
            )
    elif all(isinstance(r, MomentSet) for r in flat):
        writer.writerow(
            ["n", "p", "beta2", "gamma2", "theta2", "var_u_exact", "provenance"]
        )
        for r in flat:
            writer.writerow(
                [
                    r.n,
                    repr(float(r.p)),
                    repr(float(r.beta2)),
                    repr(float(r.gamma2)),
                    repr(float(r.theta2)),
                    repr(float(r.var_u_exact)),
                    r.provenance,
                ]
            )
    elif len(flat) == 1 and isinstance(flat[0], np.ndarray):
        writer.writerow(["sample"])
        for v in flat[0]:
            writer.writerow([repr(float(v))])
    else:
        raise ConfigurationError(
            "cannot emit a CSV for mixed or unsupported result types"
        )
    return buf.getvalue()


def _json_text(results, config_hash: str, seed) -> str:
    flat = results if isinstance(results, (list, tuple)) else [results]
    body = []
    for r in flat:
        if isinstance(r, np.ndarray):
            body.append({"samples": [repr(float(v)) for v in r]})
        elif hasattr(r, "to_json"):
            body.append(json.loads(r.to_json()))
        else:
            raise ConfigurationError("cannot serialize result %r" % type(r))
    return json.dumps(
        {"config_hash": config_hash, "seed": seed, "reports": body},
        sort_keys=True,
        indent=1,
    )


def emit_report(results, out_format: str, path, config_hash: str = "", seed=None) -> str:
    """Write results as CSV or JSON; returns the emitted text.

    Output is a pure function of the inputs (floats via repr, keys
    sorted), so identical runs give byte-identical files. path None
    skips writing and just returns the text.
    """
    if out_format == "csv":
        text = _csv_text(results, config_hash, seed)
    elif out_format == "json":
        text = _json_text(results, config_hash, seed)
    else:
        raise ConfigurationError("format must be csv or json; got %r" % out_format)
    if path is not None:
        with open(path, "w", encoding="utf8", newline="") as fh:
            fh.write(text)
    return text
