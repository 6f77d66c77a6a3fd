"""Estimators for the normal-approximation condition quantities.

Notation (all with the kernel's scale folded in and theta2 from the
moment set):

    Phi(i,j)  = Z_ij h(X_i, X_j)      Psi_j(i) = Z_ij g(X_i)
    PhiT(i,j) = Z_ij h~(X_i, X_j)
    G_k(i,j)  = Z_ik Z_jk H(X_i, X_j)     (and G~ with H~)

The estimated quantities, each Monte Carlo over m replicates:

    C1   (1/(n theta^2)) E[ S^2 1{|S| >= eps theta n} ],
         S = sum_{j>=2} Psi_j(1)         (fresh row-1 dilution bits)
    C2   theta^-2 E[ PhiT(1,2)^2 1{|PhiT| >= eps theta n} ]
    C3   p theta^-2 E[ H~(1,1) 1{|H~(1,1)| >= eps theta^2 n / p} ]
    C4   theta^-4 E[ G_1(2,3)^2 ]      C4'  the same with G~
    C1'' n^2 theta^-2 E[ Psi_2(1)^2 1{|Psi_2(1)| >= eps theta} ]
    C2'' theta^-2 E[ Phi(1,2)^2 1{|Phi| >= eps theta n} ]
    C3'' p theta^-2 E[ H(1,1) 1{|H(1,1)| >= eps theta^2 n / p} ]

eta2 is the summed conditional second moment of the martingale
differences given the past; for kernels with closed-form g, H, H~ it
reduces to four explicit terms per realization (degree counts, diagonal
and off-diagonal pair conditionals, and a mixed cross term). eta1's mean
is bounded above by the S1 + T1 truncation split; the estimator reports
that bound and flags it as one.

Dilution bits are always sampled, never folded into p analytically, so
each estimator is a plain mean of the defining integrand.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    ConfigurationError,
    DegenerateNormalizationError,
    ResourceBudgetError,
    UnsupportedKernelError,
)
from .kernels import DEFAULT_M_INNER, KernelSpec, centered_view
from .moments import MomentSet, moments_closed_form, moments_mc
from .sampling import DistributionSpec, SeedPolicy, dilution_regime, sample_row

__all__ = [
    "Estimate",
    "PairConditionalSample",
    "sample_pair_conditional",
    "estimate_C1",
    "estimate_C2",
    "estimate_C3",
    "estimate_C4",
    "estimate_C4prime",
    "estimate_Cdoubleprime",
    "estimate_eta2",
    "estimate_eta1_mean",
    "verify_c4_implies_c4prime",
    "C4ComparisonReport",
    "trend_verdict",
    "eta2_verdict",
    "ConditionReport",
    "sweep_condition",
    "CONDITION_IDS",
    "DEFAULT_EPS_GRID",
    "DEFAULT_N_GRID",
    "DEFAULT_M",
    "ETA2_MAX_N",
]

DEFAULT_EPS_GRID = (0.01, 0.05, 0.1, 0.5)
DEFAULT_N_GRID = (50, 100, 200, 400, 800)
ETA2_MAX_N = 400
ABSOLUTE_FLOOR = 1e-3

CONDITION_IDS = (
    "C1",
    "C2",
    "C3",
    "C4",
    "C4'",
    "C1''",
    "C2''",
    "C3''",
    "ETA1",
    "ETA2",
)

DEFAULT_M = {
    "C1": 4096,
    "C2": 4096,
    "C3": 4096,
    "C4": 16384,
    "C4'": 16384,
    "C1''": 4096,
    "C2''": 4096,
    "C3''": 4096,
    "ETA1": 256,
    "ETA2": 64,
}


@dataclass(frozen=True)
class Estimate:
    """Monte Carlo estimate with its standard error."""

    value: float
    se: float
    upper_bound: bool = False


@dataclass(frozen=True)
class PairConditionalSample:
    """One draw of G_k(i,j) and its centered companion.

    Both vanish whenever either dilution bit is 0, since the bits
    multiply the pair conditionals directly.
    """

    g_k_value: float
    g_tilde_value: float


def _seq(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def _theta2_of(moments: MomentSet) -> float:
    t2 = moments.theta2
    if not t2 > 0.0:
        raise DegenerateNormalizationError(
            "condition estimators need theta^2 > 0; got %r" % t2
        )
    return t2


def _gvals(kernel: KernelSpec, x: np.ndarray) -> np.ndarray:
    if kernel.conditional_mean is not None:
        return np.asarray(kernel.conditional_mean(x), dtype=np.float64)
    view = centered_view(kernel)
    hxx = kernel.pair_values(x, x)
    return 0.5 * (hxx - np.asarray(view.evaluate_tilde(x, x)))


def _tilde_pair(kernel: KernelSpec, xa: np.ndarray, xb: np.ndarray) -> np.ndarray:
    hv = kernel.pair_values(xa, xb)
    if kernel.conditional_mean is not None:
        g = kernel.conditional_mean
        return hv - np.asarray(g(xa)) - np.asarray(g(xb))
    view = centered_view(kernel)
    return np.asarray(view.evaluate_tilde(xa, xb))


def _pair_H(kernel: KernelSpec, xa: np.ndarray, xb: np.ndarray, dist, seed) -> np.ndarray:
    """H(a, b) = E[h(Y, a) h(Y, b)]: closed form, or inner MC fallback."""
    if kernel.pair_conditional is not None:
        return np.asarray(kernel.pair_conditional(xa, xb), dtype=np.float64)
    draws = sample_row(DEFAULT_M_INNER, dist, seed)
    out = np.empty(xa.size)
    for k in range(xa.size):
        va = kernel.pair_values(draws, np.full(draws.size, xa[k]))
        vb = kernel.pair_values(draws, np.full(draws.size, xb[k]))
        out[k] = float((va * vb).mean())
    return out


def _pair_Ht(kernel: KernelSpec, xa: np.ndarray, xb: np.ndarray, dist, seed) -> np.ndarray:
    """H~(a, b) = E[h~(Y, a) h~(Y, b)]: closed form, or inner MC fallback."""
    if kernel.centered_pair_conditional is not None:
        return np.asarray(kernel.centered_pair_conditional(xa, xb), dtype=np.float64)
    view = centered_view(kernel)
    draws = sample_row(DEFAULT_M_INNER, dist, seed)
    out = np.empty(xa.size)
    for k in range(xa.size):
        va = np.asarray(view.evaluate_tilde(draws, np.full(draws.size, xa[k])))
        vb = np.asarray(view.evaluate_tilde(draws, np.full(draws.size, xb[k])))
        out[k] = float((va * vb).mean())
    return out


def _mean_se(vals: np.ndarray, factor: float = 1.0) -> Estimate:
    m = vals.size
    mean = float(vals.mean()) * factor
    se = float(vals.std(ddof=1)) / math.sqrt(m) * factor if m > 1 else 0.0
    return Estimate(value=mean, se=se)


def _resolve_moments(kernel, dist, n, p, seed=None) -> MomentSet:
    try:
        return moments_closed_form(kernel, dist, n, p)
    except UnsupportedKernelError:
        return moments_mc(kernel, dist, n, p, m=100_000, seed=_seq(seed).spawn(1)[0] if seed is not None else 20_000_000)


def _check_m(m: int) -> int:
    m = int(m)
    if m < 100:
        raise ConfigurationError("condition estimators need m >= 100; got %d" % m)
    return m


def sample_pair_conditional(kernel: KernelSpec, dist: DistributionSpec, p: float, seed) -> PairConditionalSample:
    """One G_1(2,3) / G~_1(2,3) draw: two rows, two bits, the conditionals."""
    seq = _seq(seed)
    sx, sz, sh = seq.spawn(3)
    x = sample_row(2, dist, sx)
    rng = np.random.Generator(np.random.PCG64(sz))
    bits = (rng.random(2) < p).astype(np.float64)
    s = 1.0 if kernel.scale is None else kernel.scale_at(3)
    hv = float(_pair_H(kernel, x[:1], x[1:], dist, sh)[0]) * s * s
    htv = float(_pair_Ht(kernel, x[:1], x[1:], dist, sh)[0]) * s * s
    both = float(bits[0] * bits[1])
    return PairConditionalSample(g_k_value=both * hv, g_tilde_value=both * htv)


# --------------------------------------------------------------------------
# Truncated-moment condition estimators


def estimate_C1(kernel, dist, n, p, eps, m, seed) -> Estimate:
    """Truncated second moment of the summed projection column."""
    m = _check_m(m)
    moments = _resolve_moments(kernel, dist, n, p)
    t2 = _theta2_of(moments)
    theta = math.sqrt(t2)
    seq = _seq(seed)
    sx, sz = seq.spawn(2)
    x = sample_row(m, dist, sx)
    rng = np.random.Generator(np.random.PCG64(sz))
    counts = rng.binomial(n - 1, p, size=m).astype(np.float64)
    s = kernel.scale_at(n)
    big_s = _gvals(kernel, x) * s * counts
    keep = np.abs(big_s) >= eps * theta * n
    vals = big_s * big_s * keep
    return _mean_se(vals, factor=1.0 / (n * t2))


def estimate_C2(kernel, dist, n, p, eps, m, seed) -> Estimate:
    """Truncated second moment of a single centered pair."""
    m = _check_m(m)
    moments = _resolve_moments(kernel, dist, n, p)
    t2 = _theta2_of(moments)
    theta = math.sqrt(t2)
    seq = _seq(seed)
    sx, sy, sz = seq.spawn(3)
    xa = sample_row(m, dist, sx)
    xb = sample_row(m, dist, sy)
    rng = np.random.Generator(np.random.PCG64(sz))
    bits = (rng.random(m) < p).astype(np.float64)
    s = kernel.scale_at(n)
    phit = bits * _tilde_pair(kernel, xa, xb) * s
    keep = np.abs(phit) >= eps * theta * n
    vals = phit * phit * keep
    return _mean_se(vals, factor=1.0 / t2)


def estimate_C3(kernel, dist, n, p, eps, m, seed) -> Estimate:
    """Truncated first moment of the centered diagonal conditional."""
    m = _check_m(m)
    moments = _resolve_moments(kernel, dist, n, p)
    t2 = _theta2_of(moments)
    seq = _seq(seed)
    sx, sh = seq.spawn(2)
    x = sample_row(m, dist, sx)
    s2 = kernel.scale_at(n) ** 2
    diag = _pair_Ht(kernel, x, x, dist, sh) * s2
    keep = np.abs(diag) >= eps * t2 * n / p
    vals = diag * keep
    return _mean_se(vals, factor=p / t2)


def _estimate_G2(kernel, dist, n, p, m, seed, centered: bool) -> Estimate:
    m = _check_m(m)
    moments = _resolve_moments(kernel, dist, n, p)
    t2 = _theta2_of(moments)
    seq = _seq(seed)
    sx, sy, sz, sh = seq.spawn(4)
    xa = sample_row(m, dist, sx)
    xb = sample_row(m, dist, sy)
    rng = np.random.Generator(np.random.PCG64(sz))
    both = (rng.random(m) < p) & (rng.random(m) < p)
    s2 = kernel.scale_at(n) ** 2
    fn = _pair_Ht if centered else _pair_H
    cond = fn(kernel, xa, xb, dist, sh) * s2
    g = both.astype(np.float64) * cond
    return _mean_se(g * g, factor=1.0 / (t2 * t2))


def estimate_C4(kernel, dist, n, p, m, seed) -> Estimate:
    """Second moment of the double-diluted pair conditional G_1(2,3)."""
    return _estimate_G2(kernel, dist, n, p, m, seed, centered=False)


def estimate_C4prime(kernel, dist, n, p, m, seed) -> Estimate:
    """As estimate_C4 with the centered conditional G~_1(2,3)."""
    return _estimate_G2(kernel, dist, n, p, m, seed, centered=True)


def estimate_Cdoubleprime(condition, kernel, dist, n, p, eps, m, seed) -> Estimate:
    """The un-tilded single-object conditions C1'', C2'', C3''."""
    m = _check_m(m)
    moments = _resolve_moments(kernel, dist, n, p)
    t2 = _theta2_of(moments)
    theta = math.sqrt(t2)
    seq = _seq(seed)
    s = kernel.scale_at(n)
    if condition == "C1''":
        sx, sz = seq.spawn(2)
        x = sample_row(m, dist, sx)
        rng = np.random.Generator(np.random.PCG64(sz))
        bits = (rng.random(m) < p).astype(np.float64)
        psi = bits * _gvals(kernel, x) * s
        keep = np.abs(psi) >= eps * theta
        return _mean_se(psi * psi * keep, factor=n * n / t2)
    if condition == "C2''":
        sx, sy, sz = seq.spawn(3)
        xa = sample_row(m, dist, sx)
        xb = sample_row(m, dist, sy)
        rng = np.random.Generator(np.random.PCG64(sz))
        bits = (rng.random(m) < p).astype(np.float64)
        phi = bits * kernel.pair_values(xa, xb) * s
        keep = np.abs(phi) >= eps * theta * n
        return _mean_se(phi * phi * keep, factor=1.0 / t2)
    if condition == "C3''":
        sx, sh = seq.spawn(2)
        x = sample_row(m, dist, sx)
        diag = _pair_H(kernel, x, x, dist, sh) * s * s
        keep = np.abs(diag) >= eps * t2 * n / p
        return _mean_se(diag * keep, factor=p / t2)
    raise ConfigurationError(
        "condition must be C1'', C2'' or C3''; got %r" % (condition,)
    )


# --------------------------------------------------------------------------
# eta quantities of the martingale CLT


def _require_closed_forms(kernel: KernelSpec) -> None:
    missing = [
        nm
        for nm, v in (
            ("g", kernel.conditional_mean),
            ("H", kernel.pair_conditional),
            ("H~", kernel.centered_pair_conditional),
            ("E[g^2]", kernel.g_second_moment),
        )
        if v is None
    ]
    if missing:
        raise UnsupportedKernelError(
            "eta estimators need closed-form conditional structure; kernel %r "
            "lacks %s (nested Monte Carlo conditioning is out of scope)"
            % (kernel.name, ", ".join(missing))
        )


def estimate_eta2(kernel, dist, n, p, m, seed) -> np.ndarray:
    """m draws of the summed conditional variance of the differences.

    Each replicate samples one (row, dilution) realization and evaluates
    the conditional expectations in closed form:

      term 1: projection part. Given the past, the row-i projection sum
        has c_i known bits and Bin(f_i, p) unknown ones (f_i future
        vertices), so its conditional second moment is E[g^2] times
        c_i^2 + 2 c_i f_i p + f_i p (1 - p + f_i p).
      term 2: diagonal pair part, sum of H~(x_j, x_j) over known bits.
      term 3: off-diagonal pair part, <H~ matrix, L^T L> minus its
        diagonal, with L the strictly-lower dilution matrix.
      term 4: cross part, 2 (c + f p) . L (K(x) - E[g^2]) with
        K(x) = E[g(Y) h(Y, x)] recovered from the registered structure.

    The index sums cost O(n^3) per replicate at worst, so n is capped at
    ETA2_MAX_N; larger n raises a resource error rather than silently
    thinning.
    """
    m = int(m)
    if m < 2:
        raise ConfigurationError("estimate_eta2 needs m >= 2 replicates")
    n = int(n)
    if n > ETA2_MAX_N:
        raise ResourceBudgetError(
            "eta2 replicates cost O(n^3); n = %d exceeds the %d cap"
            % (n, ETA2_MAX_N)
        )
    _require_closed_forms(kernel)
    moments = _resolve_moments(kernel, dist, n, p)
    t2 = _theta2_of(moments)
    s = kernel.scale_at(n)
    s2 = s * s
    eg2 = float(kernel.g_second_moment) * s2
    from .sampling import sample_dilution

    seq = _seq(seed)
    children = seq.spawn(m)
    out = np.empty(m)
    fut = (n - 1) - np.arange(n, dtype=np.float64)  # vertices after i
    for r, child in enumerate(children):
        sx, sz = child.spawn(2)
        x = sample_row(n, dist, sx)
        graph = sample_dilution(n, p, sz)
        low = graph.lower()
        c = low.sum(axis=1)
        colc = low.sum(axis=0)
        # term 1: conditional second moment of the projection sums
        t1_counts = c * c + 2.0 * c * fut * p + fut * p * (1.0 - p + fut * p)
        eta21 = eg2 * float(t1_counts.sum()) / (n * n * t2)
        # terms 2 and 3: pair-conditional sums over known bits
        htm = np.asarray(
            kernel.centered_pair_conditional(x[:, None], x[None, :]), np.float64
        ) * s2
        gram = low.T @ low
        diag_ht = np.diagonal(htm)
        eta22 = float(diag_ht @ colc) / (n * n * t2)
        eta23 = (float((htm * gram).sum()) - float(diag_ht @ np.diagonal(gram))) / (
            n * n * t2
        )
        # term 4: cross term between projection and pair parts
        kx = np.asarray(kernel.cross_conditional(x), np.float64) * s2
        eta24 = 2.0 * float((c + fut * p) @ (low @ (kx - eg2))) / (n * n * t2)
        out[r] = eta21 + eta22 + eta23 + eta24
    return out


def estimate_eta1_mean(kernel, dist, n, p, eps, m, seed) -> Estimate:
    """Upper bound on E[eta1] via the S1 + T1 truncation split.

    S1 = (4/(n theta^2)) E[S^2 1{|S| >= eps theta n / 2}] reuses the C1
    integrand at eps/2; T1 averages the per-row truncated second moments
    of the centered-pair partial sums over full sampled realizations.
    The result is an upper bound on the target, and is flagged as such.
    """
    m = int(m)
    if m < 2:
        raise ConfigurationError("estimate_eta1_mean needs m >= 2 replicates")
    moments = _resolve_moments(kernel, dist, n, p)
    t2 = _theta2_of(moments)
    theta = math.sqrt(t2)
    seq = _seq(seed)
    s_seed, t_seed = seq.spawn(2)

    # S1 part: vectorized, cheap, so use a larger replicate count
    ms = max(m, 4096)
    sx, sz = _seq(s_seed).spawn(2)
    x = sample_row(ms, dist, sx)
    rng = np.random.Generator(np.random.PCG64(sz))
    counts = rng.binomial(n - 1, p, size=ms).astype(np.float64)
    s = kernel.scale_at(n)
    big_s = _gvals(kernel, x) * s * counts
    keep = np.abs(big_s) >= 0.5 * eps * theta * n
    s1 = _mean_se(big_s * big_s * keep, factor=4.0 / (n * t2))

    # T1 part: per-replicate realizations
    from .sampling import sample_dilution

    children = _seq(t_seed).spawn(m)
    t_vals = np.empty(m)
    cut = 0.5 * eps * theta * n
    for r, child in enumerate(children):
        cx, cz = child.spawn(2)
        x = sample_row(n, dist, cx)
        graph = sample_dilution(n, p, cz)
        ii, jj = graph.edges()
        rows = np.zeros(n)
        if ii.size:
            np.add.at(rows, jj, _tilde_pair(kernel, x[ii], x[jj]) * s)
        kept = np.abs(rows) >= cut
        t_vals[r] = float((rows * rows * kept).sum())
    t1 = _mean_se(t_vals, factor=4.0 / (n * n * t2))
    return Estimate(
        value=s1.value + t1.value,
        se=math.hypot(s1.se, t1.se),
        upper_bound=True,
    )


@dataclass(frozen=True)
class C4ComparisonReport:
    """Checks the estimated C4' against its bound in terms of C4."""

    satisfied: bool
    lhs: float
    rhs: float
    slack: float
    n: int
    p: float


def verify_c4_implies_c4prime(
    c4: Estimate, c4prime: Estimate, n: int, p: float
) -> C4ComparisonReport:
    """Assert C4' <= 25 C4 + 50/(np)^2 + 50/(np), with 5x combined SE slack."""
    npv = n * p
    if npv <= 0:
        raise ConfigurationError("need n p > 0")
    combined_se = math.hypot(25.0 * c4.se, c4prime.se)
    rhs = 25.0 * c4.value + 50.0 / (npv * npv) + 50.0 / npv + 5.0 * combined_se
    return C4ComparisonReport(
        satisfied=c4prime.value <= rhs,
        lhs=c4prime.value,
        rhs=rhs,
        slack=rhs - c4prime.value,
        n=int(n),
        p=float(p),
    )


# --------------------------------------------------------------------------
# trend verdicts and grid sweeps


def trend_verdict(estimates: Sequence[float], ses: Sequence[float]) -> str:
    """Classify a condition series along the n-grid.

    decreasing-toward-0 needs the last point inside its noise-or-floor
    band (4 SE, absolute floor 1e-3) and either a fourfold drop from the
    first point or the whole series already inside its bands (a bounded
    integrand cut off to exactly 0 everywhere never drops "fourfold"
    from 0, yet is the strongest possible convergence evidence).
    increasing needs a rise beyond the joint 2 SE slack; anything else
    is stagnant.
    """
    est = np.asarray(estimates, dtype=np.float64)
    ses_ = np.asarray(ses, dtype=np.float64)
    if est.size == 0:
        raise ConfigurationError("empty estimate series")
    if est.size == 1:
        only = est[0] <= max(4.0 * ses_[0], ABSOLUTE_FLOOR)
        return "decreasing-toward-0" if only else "stagnant"
    first, last = est[0], est[-1]
    band = np.maximum(4.0 * ses_, ABSOLUTE_FLOOR)
    last_small = last <= band[-1]
    all_small = bool(np.all(est <= band))
    if last_small and (last < first / 4.0 or all_small):
        return "decreasing-toward-0"
    if last - first > 2.0 * (ses_[0] + ses_[-1]):
        return "increasing"
    return "stagnant"


def eta2_verdict(means: Sequence[float], ses: Sequence[float], sds: Sequence[float]) -> str:
    """converging-to-1 needs the last mean within 4 SE of 1 and the
    replicate spread visibly shrinking along the grid; otherwise the
    series is classified by its distance trend from 1."""
    means = np.asarray(means, dtype=np.float64)
    ses_ = np.asarray(ses, dtype=np.float64)
    sds = np.asarray(sds, dtype=np.float64)
    near_one = abs(means[-1] - 1.0) <= 4.0 * ses_[-1]
    shrinking = sds.size < 2 or sds[-1] <= 0.8 * sds[0]
    if near_one and shrinking:
        return "converging-to-1"
    dist_first = abs(means[0] - 1.0)
    dist_last = abs(means[-1] - 1.0)
    if dist_last - dist_first > 2.0 * (ses_[0] + ses_[-1]):
        return "increasing"
    return "stagnant"


@dataclass(frozen=True)
class ConditionReport:
    """Estimates of one condition over (n, eps) with per-eps verdicts.

    eps_grid is empty for the eps-free quantities (C4, C4', ETA2); the
    estimate matrix then has a single column. spread holds the replicate
    standard deviation per n for ETA2, where the concentration of the
    sample (not just its mean) is the object of interest. upper_bound
    marks series that bound their target from above rather than estimate
    it (ETA1).
    """

    condition_id: str
    n_grid: Tuple[int, ...]
    eps_grid: Tuple[float, ...]
    estimates: np.ndarray
    ses: np.ndarray
    verdicts: Tuple[str, ...]
    upper_bound: bool = False
    spread: Optional[np.ndarray] = None
    theta_provenance: str = "closed_form"

    def csv_rows(self):
        """Rows (condition_id, n, eps, estimate, se, verdict); eps blank
        for eps-free conditions."""
        cols = self.eps_grid if self.eps_grid else (None,)
        for r, n in enumerate(self.n_grid):
            for c, eps in enumerate(cols):
                yield (
                    self.condition_id,
                    n,
                    "" if eps is None else repr(float(eps)),
                    repr(float(self.estimates[r, c])),
                    repr(float(self.ses[r, c])),
                    self.verdicts[c],
                )

    def to_json(self) -> str:
        payload = {
            "condition_id": self.condition_id,
            "n_grid": list(self.n_grid),
            "eps_grid": [repr(float(e)) for e in self.eps_grid],
            "estimates": [[repr(float(v)) for v in row] for row in self.estimates],
            "ses": [[repr(float(v)) for v in row] for row in self.ses],
            "verdicts": list(self.verdicts),
            "upper_bound": self.upper_bound,
            "spread": None
            if self.spread is None
            else [repr(float(v)) for v in self.spread],
            "theta_provenance": self.theta_provenance,
        }
        return json.dumps(payload, sort_keys=True)


def _cell_m(condition_id: str, m: Optional[int]) -> int:
    return DEFAULT_M[condition_id] if m is None else int(m)


def sweep_condition(
    condition_id: str,
    kernel: KernelSpec,
    dist: DistributionSpec,
    policy: SeedPolicy,
    n_grid: Sequence[int] = DEFAULT_N_GRID,
    eps_grid: Sequence[float] = DEFAULT_EPS_GRID,
    a: float = 0.0,
    m: Optional[int] = None,
    p_fixed: Optional[float] = None,
) -> ConditionReport:
    """Estimate one condition over the (n, eps) grid.

    The dilution is p = n^-a per grid point, or the constant p_fixed
    when given. Every cell gets its own derived seed, so cells can be
    recomputed in isolation and the grid is deterministic regardless of
    evaluation order.
    """
    if condition_id not in CONDITION_IDS:
        raise ConfigurationError(
            "unknown condition %r (choose from %s)"
            % (condition_id, ", ".join(CONDITION_IDS))
        )
    n_grid = tuple(int(v) for v in n_grid)
    if any(b <= a_ for a_, b in zip(n_grid, n_grid[1:])):
        raise ConfigurationError("n grid must be strictly increasing")
    eps_free = condition_id in ("C4", "C4'", "ETA2")
    eps_cols = () if eps_free else tuple(float(e) for e in eps_grid)
    if not eps_free and not eps_cols:
        raise ConfigurationError("condition %s needs a nonempty eps grid" % condition_id)
    ncol = max(1, len(eps_cols))
    mm = _cell_m(condition_id, m)
    est = np.zeros((len(n_grid), ncol))
    ses = np.zeros((len(n_grid), ncol))
    spread = np.zeros(len(n_grid)) if condition_id == "ETA2" else None
    def p_at(n: int) -> float:
        return float(p_fixed) if p_fixed is not None else dilution_regime(n, a)

    provenance = "closed_form"
    try:
        moments_closed_form(kernel, dist, n_grid[0], p_at(n_grid[0]))
    except UnsupportedKernelError:
        provenance = "mc"

    for r, n in enumerate(n_grid):
        p = p_at(n)
        for c in range(ncol):
            eps = None if eps_free else eps_cols[c]
            label = "cond/%s/n%d/eps%r" % (condition_id, n, eps)
            seed = policy.child(label, 0)
            if condition_id == "C1":
                e = estimate_C1(kernel, dist, n, p, eps, mm, seed)
            elif condition_id == "C2":
                e = estimate_C2(kernel, dist, n, p, eps, mm, seed)
            elif condition_id == "C3":
                e = estimate_C3(kernel, dist, n, p, eps, mm, seed)
            elif condition_id == "C4":
                e = estimate_C4(kernel, dist, n, p, mm, seed)
            elif condition_id == "C4'":
                e = estimate_C4prime(kernel, dist, n, p, mm, seed)
            elif condition_id in ("C1''", "C2''", "C3''"):
                e = estimate_Cdoubleprime(condition_id, kernel, dist, n, p, eps, mm, seed)
            elif condition_id == "ETA1":
                e = estimate_eta1_mean(kernel, dist, n, p, eps, mm, seed)
            else:  # ETA2
                sample = estimate_eta2(kernel, dist, n, p, mm, seed)
                sd = float(sample.std(ddof=1)) if sample.size > 1 else 0.0
                e = Estimate(value=float(sample.mean()), se=sd / math.sqrt(sample.size))
                spread[r] = sd
            est[r, c] = e.value
            ses[r, c] = e.se
    if condition_id == "ETA2":
        verdicts = (eta2_verdict(est[:, 0], ses[:, 0], spread),)
    else:
        verdicts = tuple(trend_verdict(est[:, c], ses[:, c]) for c in range(ncol))
    return ConditionReport(
        condition_id=condition_id,
        n_grid=n_grid,
        eps_grid=eps_cols,
        estimates=est,
        ses=ses,
        verdicts=verdicts,
        upper_bound=(condition_id == "ETA1"),
        spread=spread,
        theta_provenance=provenance,
    )
