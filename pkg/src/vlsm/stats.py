"""Voxel-wise mass-univariate statistics.

Implements the pooled-variance two-sample t statistic per voxel (lesioned vs
intact subjects), t-distribution tail probabilities via the regularized
incomplete beta function, voxel-wise p thresholding, and the
Benjamini-Hochberg step-up FDR procedure.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import lgamma
from typing import Optional

import numpy as np

from .errors import DataError
from .volume import BinaryMask, Cohort, VolumeGeometry

TAILS = ("greater", "two-sided")

# Continued-fraction evaluation of the incomplete beta: convergence tolerance
# and iteration cap give well under the 1e-10 accuracy contract for the
# degrees of freedom this package sees.
_CF_EPS = 1e-12
_CF_MAX_ITER = 300
_CF_TINY = 1e-300


def _check_tail(tail: str) -> str:
    if tail not in TAILS:
        raise ValueError(f"tail must be one of {TAILS}, got {tail!r}")
    return tail


# ---------------------------------------------------------------------------
# Student t tail probabilities
# ---------------------------------------------------------------------------

def _betacf(a: float, b: float, x: np.ndarray) -> np.ndarray:
    """Continued fraction for the incomplete beta (modified Lentz method).

    Vectorized over ``x``; elements stop updating once their term converges,
    so late iterations cannot drift finished entries.
    """
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = np.ones_like(x)
    d = 1.0 - qab * x / qap
    np.copyto(d, _CF_TINY, where=np.abs(d) < _CF_TINY)
    d = 1.0 / d
    h = d.copy()
    active = np.ones(x.shape, dtype=bool)
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        np.copyto(d, _CF_TINY, where=np.abs(d) < _CF_TINY)
        d = 1.0 / d
        c = 1.0 + aa / c
        np.copyto(c, _CF_TINY, where=np.abs(c) < _CF_TINY)
        h = np.where(active, h * d * c, h)
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        np.copyto(d, _CF_TINY, where=np.abs(d) < _CF_TINY)
        d = 1.0 / d
        c = 1.0 + aa / c
        np.copyto(c, _CF_TINY, where=np.abs(c) < _CF_TINY)
        delta = d * c
        h = np.where(active, h * delta, h)
        active &= np.abs(delta - 1.0) >= _CF_EPS
        if not active.any():
            break
    return h


def _reg_inc_beta(a: float, b: float, x: np.ndarray) -> np.ndarray:
    """Regularized incomplete beta I_x(a, b), elementwise over x in [0, 1]."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    out[x <= 0.0] = 0.0
    out[x >= 1.0] = 1.0
    mid = (x > 0.0) & (x < 1.0)
    if not mid.any():
        return out
    xm = x[mid]
    res = np.empty_like(xm)
    ln_beta = lgamma(a) + lgamma(b) - lgamma(a + b)
    direct = xm < (a + 1.0) / (a + b + 2.0)
    if direct.any():
        xd = xm[direct]
        front = np.exp(a * np.log(xd) + b * np.log1p(-xd) - ln_beta) / a
        res[direct] = front * _betacf(a, b, xd)
    if (~direct).any():
        # symmetry I_x(a,b) = 1 - I_{1-x}(b,a) keeps the fraction converging
        xs = xm[~direct]
        front = np.exp(b * np.log1p(-xs) + a * np.log(xs) - ln_beta) / b
        res[~direct] = 1.0 - front * _betacf(b, a, 1.0 - xs)
    out[mid] = res
    return out


def p_values(t, df: int, tail: str = "greater") -> np.ndarray:
    """Tail probabilities of the t distribution, elementwise.

    ``greater`` gives P(T_df > t); ``two-sided`` gives P(|T_df| > |t|).
    Results are clamped into (0, 1] so downstream strict comparisons stay
    well-defined even when the tail underflows.
    """
    _check_tail(tail)
    if df < 1:
        raise ValueError(f"df must be >= 1, got {df}")
    t = np.asarray(t, dtype=float)
    with np.errstate(over="ignore"):
        tt = t * t
    # P(|T| > |t|) = I_z(df/2, 1/2) with z = df/(df+t^2).  Near t = 0 that z
    # rounds to 1 and loses the t information, so the complementary form in
    # w = t^2/(df+t^2) is used whenever t^2 < df.
    both = np.empty_like(tt)
    small = tt < df
    if small.any():
        w = tt[small] / (df + tt[small])
        both[small] = 1.0 - _reg_inc_beta(0.5, df / 2.0, w)
    if (~small).any():
        z = df / (df + tt[~small])
        both[~small] = _reg_inc_beta(df / 2.0, 0.5, z)
    if tail == "two-sided":
        p = both
    else:
        half = 0.5 * both
        p = np.where(t >= 0.0, half, 1.0 - half)
    return np.maximum(p, 5e-324)


def t_to_p(t: float, df: int, tail: str = "greater") -> float:
    """Scalar tail probability for one t value."""
    if not np.isfinite(t):
        raise ValueError(f"t must be finite, got {t}")
    return float(p_values(np.asarray([t]), df, tail)[0])


# ---------------------------------------------------------------------------
# Voxel-wise pooled-variance t
# ---------------------------------------------------------------------------

class TTestDesign:
    """Fixed lesion design for repeated t evaluation with varying scores.

    The lesion matrix never changes between permutations, so group counts,
    the eligible-voxel selection, and the float design matrix are computed
    once; :meth:`t_values` then costs two matrix-vector products per score
    vector.
    """

    def __init__(self, lesion_matrix: np.ndarray, min_lesion: int = 2):
        if min_lesion < 1:
            raise ValueError(f"min_lesion must be >= 1, got {min_lesion}")
        lesion_matrix = np.asarray(lesion_matrix, dtype=bool)
        self.n_subjects = lesion_matrix.shape[0]
        if self.n_subjects < 4:
            raise DataError(
                f"need at least 4 subjects for a pooled t-test, got {self.n_subjects}"
            )
        self.df = self.n_subjects - 2
        counts = lesion_matrix.sum(axis=0)
        self.eligible = (counts >= min_lesion) & (counts <= self.n_subjects - min_lesion)
        self.n1 = counts[self.eligible].astype(float)
        self.n0 = self.n_subjects - self.n1
        self._design = lesion_matrix[:, self.eligible].astype(float)
        self._inv_n = 1.0 / self.n1 + 1.0 / self.n0

    @property
    def n_eligible(self) -> int:
        return int(self.eligible.sum())

    def t_values(self, scores: np.ndarray):
        """Pooled-variance t per eligible voxel for one score vector.

        Returns ``(t, degenerate)``.  Voxels whose pooled variance vanishes
        get t = 0 when the group means agree; when the means differ the
        statistic is undefined and the voxel is flagged degenerate (t = NaN).
        """
        y = np.asarray(scores, dtype=float)
        yc = y - y.mean()
        sq = yc * yc
        s1 = yc @ self._design
        q1 = sq @ self._design
        q_total = sq.sum()
        # centring makes the intact-group sum equal -s1
        ss1 = np.maximum(q1 - s1 * s1 / self.n1, 0.0)
        ss0 = np.maximum((q_total - q1) - s1 * s1 / self.n0, 0.0)
        pooled = (ss1 + ss0) / self.df
        mean_diff = s1 * self._inv_n
        # relative floors: fp cancellation can leave ~1e-16 residue where the
        # variance or mean difference is exactly zero
        var_floor = 1e-13 * q_total / self.df + _CF_TINY
        scale = max(1.0, float(np.max(np.abs(yc), initial=0.0)))
        zero_var = pooled <= var_floor
        degenerate = zero_var & (np.abs(mean_diff) > 1e-12 * scale)
        t = np.zeros_like(mean_diff)
        ok = ~zero_var
        t[ok] = mean_diff[ok] / np.sqrt(pooled[ok] * self._inv_n[ok])
        t[degenerate] = np.nan
        return t, degenerate


@dataclass(frozen=True)
class StatMap:
    """Per-voxel t values with their degrees of freedom and analyzable mask.

    ``t`` is NaN outside the analyzable mask; inside it is always finite.
    ``n_degenerate`` counts voxels that met the lesion-count criterion but
    had zero pooled variance with unequal group means.
    """

    geometry: VolumeGeometry
    t: np.ndarray
    df: int
    analyzable: BinaryMask
    n_degenerate: int = 0

    def analyzable_t(self) -> np.ndarray:
        """t values at analyzable voxels, in x-fastest voxel order."""
        return self.t.ravel(order="F")[self.analyzable.linear()]


@dataclass(frozen=True)
class SuprathresholdMask:
    """Voxels whose p fell below a pre-set threshold."""

    mask: BinaryMask
    p_threshold: float
    tail: str


def voxelwise_t(cohort: Cohort, min_lesion: int = 2) -> StatMap:
    """Mass-univariate pooled-variance t-map over the cohort.

    A voxel is analyzable when at least ``min_lesion`` subjects are lesioned
    there and at least ``min_lesion`` are intact.  Positive t means lesioned
    subjects score higher.
    """
    if not np.isfinite(cohort.scores).all():
        raise DataError("cohort scores contain non-finite values")
    design = TTestDesign(cohort.lesion_matrix(), min_lesion)
    t_eligible, degenerate = design.t_values(cohort.scores)

    n_voxels = cohort.geometry.n_voxels
    t_flat = np.full(n_voxels, np.nan)
    analyzable_flat = np.zeros(n_voxels, dtype=bool)
    idx = np.flatnonzero(design.eligible)
    t_flat[idx] = t_eligible
    analyzable_flat[idx] = ~degenerate
    dims = cohort.geometry.dims
    return StatMap(
        geometry=cohort.geometry,
        t=t_flat.reshape(dims, order="F"),
        df=design.df,
        analyzable=BinaryMask(cohort.geometry, analyzable_flat),
        n_degenerate=int(degenerate.sum()),
    )


def apply_p_threshold(
    stat_map: StatMap, p_threshold: float, tail: str = "greater"
) -> SuprathresholdMask:
    """Mask of analyzable voxels with p strictly below the threshold."""
    if not 0.0 < p_threshold < 1.0:
        raise ValueError(f"p_threshold must lie in (0, 1), got {p_threshold}")
    analyzable = stat_map.analyzable.linear()
    p = p_values(stat_map.analyzable_t(), stat_map.df, tail)
    flat = np.zeros(stat_map.geometry.n_voxels, dtype=bool)
    flat[np.flatnonzero(analyzable)] = p < p_threshold
    return SuprathresholdMask(
        mask=BinaryMask(stat_map.geometry, flat),
        p_threshold=p_threshold,
        tail=tail,
    )


# ---------------------------------------------------------------------------
# FDR
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FdrResult:
    """Benjamini-Hochberg outcome: the p cutoff (None if nothing rejected)
    and a per-input rejection flag."""

    cutoff: Optional[float]
    reject: np.ndarray


def fdr_bh(p_list, q: float) -> FdrResult:
    """Benjamini-Hochberg step-up procedure at level ``q``.

    Sort the m p-values ascending, find the largest k with
    p(k) <= k*q/m, and reject every hypothesis with p <= p(k).
    """
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must lie in (0, 1), got {q}")
    p = np.asarray(p_list, dtype=float)
    if p.size == 0:
        raise ValueError("fdr_bh needs at least one p-value")
    m = p.size
    order = np.sort(p)
    passed = np.flatnonzero(order <= (np.arange(1, m + 1) * q) / m)
    if passed.size == 0:
        return FdrResult(cutoff=None, reject=np.zeros(m, dtype=bool))
    cutoff = float(order[passed[-1]])
    return FdrResult(cutoff=cutoff, reject=p <= cutoff)
