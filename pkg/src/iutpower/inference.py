"""IUT, UIT and all-in-the-alternative UIT decisions from a joint inference."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import mvdist
from .models import JointInference

__all__ = [
    "ALTERNATIVES",
    "JTooLargeError",
    "PartitionMismatchError",
    "TestOutcome",
    "SimultaneousCI",
    "normalize_alternative",
    "raw_p",
    "maxt_adjusted_p",
    "marginal_p",
    "maxt_reject",
    "decide",
    "simultaneous_ci",
    "enumerate_alternative_patterns",
    "format_pattern",
]

ALTERNATIVES = ("greater", "less", "two_sided")
MAX_PATTERN_J = 20


class JTooLargeError(ValueError):
    pass


class PartitionMismatchError(ValueError):
    pass


def normalize_alternative(alternative: str) -> str:
    alt = str(alternative).replace("-", "_").lower()
    if alt not in ALTERNATIVES:
        raise ValueError(f"alternative must be one of {ALTERNATIVES}, got {alternative!r}")
    return alt


def _univariate_p(t, df, alt):
    t = np.asarray(t, dtype=float)
    if alt == "greater":
        p = mvdist.t_sf(t, df)
    elif alt == "less":
        p = mvdist.t_cdf(t, df)
    else:
        p = 2.0 * mvdist.t_sf(np.abs(t), df)
    return np.clip(p, 0.0, 1.0)


def raw_p(ji: JointInference, alternative: str = "greater") -> np.ndarray:
    """Unadjusted univariate t p-values."""
    return _univariate_p(ji.t_stats, ji.df, normalize_alternative(alternative))


def _maxt(t, corr, df, alt, **kw):
    t = np.asarray(t, dtype=float)
    if t.size == 1:
        return _univariate_p(t, df, alt)
    if alt == "greater":
        c, two = t, False
    elif alt == "less":
        c, two = -t, False
    else:
        c, two = np.abs(t), True
    vals, _ = mvdist.equicoordinate_sf(c, corr, df, two_sided=two, **kw)
    return np.clip(vals, 0.0, 1.0)


def maxt_adjusted_p(ji: JointInference, alternative: str = "greater", **kw) -> np.ndarray:
    """Single-step max-T adjusted p-values over all hypotheses of ``ji``.

    For ``greater`` the adjusted p-value of hypothesis i is
    ``P(max_j T_j >= t_i)`` under the joint multivariate t with ``ji.corr``
    and ``ji.df``.  Keyword arguments go to
    :func:`iutpower.mvdist.equicoordinate_sf`.
    """
    alt = normalize_alternative(alternative)
    return _maxt(ji.t_stats, ji.corr, ji.df, alt, **kw)


def _check_partition(partition, size):
    flat = sorted(i for block in partition for i in block)
    if flat != list(range(size)):
        raise PartitionMismatchError(
            f"partition must cover hypotheses 0..{size - 1} exactly once")


def marginal_p(ji: JointInference, alternative: str = "greater",
               partition: Sequence[Sequence[int]] | None = None, **kw) -> np.ndarray:
    """Per-endpoint p-values used by the classical IUT.

    Hypotheses are grouped by ``partition`` (default: every hypothesis on
    its own).  Singleton blocks get plain univariate t p-values; larger
    blocks are max-T adjusted within the block only, using the matching
    sub-matrix of ``ji.corr``.
    """
    alt = normalize_alternative(alternative)
    if partition is None:
        partition = [[i] for i in range(ji.size)]
    _check_partition(partition, ji.size)
    out = np.empty(ji.size)
    for block in partition:
        idx = np.asarray(block, dtype=int)
        sub = ji.corr[np.ix_(idx, idx)]
        out[idx] = _maxt(ji.t_stats[idx], sub, ji.df, alt, **kw)
    return out


def maxt_reject(ji: JointInference, alpha: float, alternative: str = "greater",
                partition: Sequence[Sequence[int]] | None = None, **kw) -> np.ndarray:
    """Boolean ``max-T adjusted p < alpha`` per hypothesis, within blocks.

    Equivalent to thresholding :func:`marginal_p` (or
    :func:`maxt_adjusted_p` when ``partition`` is one block), but settles
    every hypothesis it can from ``raw <= adjusted <= m * raw`` and only
    integrates the rest.
    """
    alt = normalize_alternative(alternative)
    if partition is None:
        partition = [list(range(ji.size))]
    _check_partition(partition, ji.size)
    raw = _univariate_p(ji.t_stats, ji.df, alt)
    out = np.zeros(ji.size, dtype=bool)
    for block in partition:
        idx = np.asarray(block, dtype=int)
        p = raw[idx]
        rej = p * idx.size < alpha
        open_ = ~rej & (p < alpha)
        if open_.any():
            sub = ji.corr[np.ix_(idx, idx)]
            t = ji.t_stats[idx[open_]]
            c = np.abs(t) if alt == "two_sided" else (t if alt == "greater" else -t)
            vals, _ = mvdist.equicoordinate_sf(c, sub, ji.df, two_sided=alt == "two_sided", **kw)
            rej[open_] = vals < alpha
        out[idx] = rej
    return out


@dataclass(frozen=True)
class TestOutcome:
    raw_p: np.ndarray
    adjusted_p: np.ndarray
    alpha: float
    alternative: str
    iut_reject: bool
    uit_reject: bool
    aia_reject: bool
    p_iut_max: float
    p_aia_max: float

    __test__ = False  # keep pytest from collecting this class


def decide(raw_p, adjusted_p, alpha: float = 0.05, alternative: str = "greater") -> TestOutcome:
    """Global decisions.

    IUT rejects when every marginal p-value is below alpha, UIT when any
    adjusted p-value is, and the aiaUIT when every adjusted p-value is.
    """
    raw = np.asarray(raw_p, dtype=float)
    adj = np.asarray(adjusted_p, dtype=float)
    if raw.shape != adj.shape or raw.ndim != 1 or raw.size == 0:
        raise ValueError("raw and adjusted p-values must be equal-length vectors")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie strictly between 0 and 1")
    return TestOutcome(
        raw_p=raw,
        adjusted_p=adj,
        alpha=float(alpha),
        alternative=normalize_alternative(alternative),
        iut_reject=bool(np.all(raw < alpha)),
        uit_reject=bool(np.any(adj < alpha)),
        aia_reject=bool(np.all(adj < alpha)),
        p_iut_max=float(raw.max()),
        p_aia_max=float(adj.max()),
    )


@dataclass(frozen=True)
class SimultaneousCI:
    lower: np.ndarray
    upper: np.ndarray
    level: float
    quantile: float


def simultaneous_ci(ji: JointInference, level: float = 0.95, alternative: str = "greater",
                    **kw) -> SimultaneousCI:
    """Single-step simultaneous confidence limits dual to the max-T test."""
    alt = normalize_alternative(alternative)
    if not 0 < level < 1:
        raise ValueError("level must lie strictly between 0 and 1")
    q = mvdist.equicoordinate_quantile(level, ji.corr, ji.df, two_sided=alt == "two_sided", **kw)
    half = q * ji.std_errors
    lower = ji.estimates - half
    upper = ji.estimates + half
    if alt == "greater":
        upper = np.full_like(upper, np.inf)
    elif alt == "less":
        lower = np.full_like(lower, -np.inf)
    return SimultaneousCI(lower=lower, upper=upper, level=float(level), quantile=float(q))


def enumerate_alternative_patterns(J: int) -> list:
    """All nonempty subsets of J hypotheses that can lie under the alternative.

    Pattern number ``b = 1 .. 2**J - 1`` marks hypothesis ``j`` (1-based) as
    alternative when bit ``j - 1`` of ``b`` is set.  Each pattern is a tuple
    of J booleans.
    """
    if int(J) != J or J < 1:
        raise ValueError(f"J must be a positive integer, got {J}")
    if J > MAX_PATTERN_J:
        raise JTooLargeError(f"J={J} exceeds {MAX_PATTERN_J}; 2**J patterns is too many")
    J = int(J)
    return [tuple(bool(b >> j & 1) for j in range(J)) for b in range(1, 2 ** J)]


def format_pattern(pattern) -> str:
    return "[" + ", ".join(f"H_{'A' if alt else '0'}{j + 1}" for j, alt in enumerate(pattern)) + "]"
