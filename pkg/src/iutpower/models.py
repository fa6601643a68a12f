"""One-way fits per endpoint, Dunnett contrasts and their joint covariance.

The joint covariance of contrast estimates from several marginal models is
built from stacked per-observation influence functions.  In the cell-means
parametrization of a one-way layout the influence of observation ``i`` on
contrast ``c`` of endpoint ``j`` is ``c[g(i)] * e_ij / n[g(i)]``, so the
heteroscedasticity-consistent (HC0) covariance is simply the cross-product
of the stacked influence matrix.
"""
from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .mvdist import validate_correlation

__all__ = [
    "DegenerateGroupError",
    "InvalidKError",
    "MixedDesignError",
    "SingularDesignError",
    "Dataset",
    "OneWayFit",
    "ContrastSet",
    "JointInference",
    "fit_oneway",
    "dunnett_contrasts",
    "influence_functions",
    "joint_inference",
    "natural_key",
]

COVARIANCE_KINDS = ("model_based", "sandwich")


class DegenerateGroupError(ValueError):
    """A group has fewer than two observations."""


class InvalidKError(ValueError):
    pass


class MixedDesignError(ValueError):
    """Fits passed together were not computed on the same grouping."""


class SingularDesignError(ValueError):
    """A contrast has zero estimated variance, e.g. a constant endpoint."""

    def __init__(self, message, endpoint=None):
        super().__init__(message)
        self.endpoint = endpoint


def natural_key(label):
    """Sort key placing numeric labels first, in numeric order."""
    try:
        return (0, float(label), "")
    except ValueError:
        parts = re.split(r"(\d+)", str(label))
        return (1, 0.0, tuple((0, int(p)) if p.isdigit() else (1, p) for p in parts))


@dataclass(frozen=True)
class Dataset:
    """Group-labelled ``n x J`` response matrix.

    The control group is ``control`` when given, otherwise the first label
    in natural sort order.  Remaining levels follow in natural order.
    """

    groups: np.ndarray
    responses: np.ndarray
    endpoint_names: tuple = ()
    control: str | None = None

    def __post_init__(self):
        groups = np.asarray([str(g) for g in np.asarray(self.groups).ravel()], dtype=object)
        y = np.asarray(self.responses, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        if y.ndim != 2 or y.shape[0] != groups.size:
            raise ValueError("responses must be an n x J matrix matching the group labels")
        if not np.all(np.isfinite(y)):
            raise ValueError("responses contain missing or non-finite values")
        names = tuple(self.endpoint_names) or tuple(f"EP{j + 1}" for j in range(y.shape[1]))
        if len(names) != y.shape[1]:
            raise ValueError("one endpoint name per response column is required")
        if self.control is not None and str(self.control) not in set(groups):
            raise ValueError(f"control label {self.control!r} does not occur in the data")
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "responses", y)
        object.__setattr__(self, "endpoint_names", names)

    @property
    def levels(self) -> tuple:
        levels = sorted(set(self.groups), key=natural_key)
        if self.control is not None:
            levels.remove(str(self.control))
            levels.insert(0, str(self.control))
        return tuple(levels)

    @property
    def group_index(self) -> np.ndarray:
        pos = {lev: i for i, lev in enumerate(self.levels)}
        return np.array([pos[g] for g in self.groups], dtype=int)

    @property
    def group_sizes(self) -> np.ndarray:
        return np.bincount(self.group_index, minlength=len(self.levels))

    @property
    def n_endpoints(self) -> int:
        return self.responses.shape[1]


@dataclass(frozen=True)
class OneWayFit:
    endpoint: str
    levels: tuple
    group_index: np.ndarray
    group_means: np.ndarray
    group_sizes: np.ndarray
    residual_ss: float
    df: int
    residuals: np.ndarray

    @property
    def sigma2(self) -> float:
        return self.residual_ss / self.df


def fit_oneway(data: Dataset, endpoint=0) -> OneWayFit:
    """Ordinary least squares fit of one endpoint on the group factor."""
    if isinstance(endpoint, str):
        endpoint = data.endpoint_names.index(endpoint)
    gi = data.group_index
    sizes = data.group_sizes
    small = [lev for lev, n in zip(data.levels, sizes) if n < 2]
    if small:
        raise DegenerateGroupError(f"groups with fewer than 2 observations: {small}")
    y = data.responses[:, endpoint]
    means = np.bincount(gi, weights=y, minlength=sizes.size) / sizes
    resid = y - means[gi]
    return OneWayFit(
        endpoint=data.endpoint_names[endpoint],
        levels=data.levels,
        group_index=gi,
        group_means=means,
        group_sizes=sizes,
        residual_ss=float(resid @ resid),
        df=int(y.size - sizes.size),
        residuals=resid,
    )


@dataclass(frozen=True)
class ContrastSet:
    matrix: np.ndarray
    names: tuple

    @property
    def k(self) -> int:
        return self.matrix.shape[1]


def dunnett_contrasts(k: int, levels: Sequence[str] | None = None) -> ContrastSet:
    """Many-to-one contrasts, every treatment against the first level."""
    if int(k) != k or k < 2:
        raise InvalidKError(f"Dunnett contrasts need k >= 2 groups, got {k}")
    k = int(k)
    levels = tuple(levels) if levels is not None else tuple(str(i + 1) for i in range(k))
    if len(levels) != k:
        raise ValueError("need one label per group")
    C = np.zeros((k - 1, k))
    C[:, 0] = -1.0
    C[np.arange(k - 1), np.arange(1, k)] = 1.0
    return ContrastSet(C, tuple(f"{levels[0]} vs {lev}" for lev in levels[1:]))


@dataclass(frozen=True)
class JointInference:
    estimates: np.ndarray
    std_errors: np.ndarray
    t_stats: np.ndarray
    df: float
    corr: np.ndarray
    hypothesis_names: tuple
    covariance_kind: str
    cov: np.ndarray = field(repr=False)
    endpoint_of: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return self.estimates.size

    def endpoint_partition(self) -> list:
        """Hypothesis indices grouped by endpoint, in stacking order."""
        return [list(np.flatnonzero(self.endpoint_of == j))
                for j in range(int(self.endpoint_of.max()) + 1)]


def _check_common_design(fits, contrasts):
    if not fits:
        raise ValueError("at least one fit is required")
    first = fits[0]
    for f in fits[1:]:
        if f.levels != first.levels or not np.array_equal(f.group_index, first.group_index):
            raise MixedDesignError(
                f"fits {first.endpoint!r} and {f.endpoint!r} use different groupings")
    if contrasts.k != len(first.levels):
        raise MixedDesignError(
            f"contrasts expect {contrasts.k} groups, fits have {len(first.levels)}")


def influence_functions(fits: Sequence[OneWayFit], contrasts: ContrastSet) -> np.ndarray:
    """Stacked ``(m*J) x n`` influence matrix of the contrast estimates."""
    _check_common_design(fits, contrasts)
    C = contrasts.matrix
    rows = []
    for f in fits:
        gi = f.group_index
        rows.append(C[:, gi] * (f.residuals / f.group_sizes[gi])[None, :])
    return np.vstack(rows)


def joint_inference(fits: Sequence[OneWayFit], contrasts: ContrastSet,
                    kind: str = "model_based") -> JointInference:
    """Stack all contrast estimates across endpoints with their joint covariance.

    ``kind="sandwich"`` uses the HC0 cross-product of the influence functions
    as is.  ``kind="model_based"`` keeps its correlation but rescales every
    variance to the classical pooled-variance value ``s^2 * c (X'X)^-1 c'``.
    The residual df is the smallest one among the fits.
    """
    if kind not in COVARIANCE_KINDS:
        raise ValueError(f"kind must be one of {COVARIANCE_KINDS}, got {kind!r}")
    fits = list(fits)
    IF = influence_functions(fits, contrasts)
    C = contrasts.matrix
    m = C.shape[0]

    V = IF @ IF.T
    V = (V + V.T) / 2
    hc0_var = np.diag(V).copy()
    estimates = np.concatenate([C @ f.group_means for f in fits])
    endpoint_of = np.repeat(np.arange(len(fits)), m)
    names = tuple(f"{f.endpoint}, {name}" for f in fits for name in contrasts.names)

    tiny = 1e-24 * max(1.0, float(np.max(np.abs(estimates))) ** 2)
    for j, f in enumerate(fits):
        if np.any(hc0_var[endpoint_of == j] <= tiny) or f.residual_ss <= tiny:
            raise SingularDesignError(
                f"endpoint {f.endpoint!r} has zero residual variance", endpoint=f.endpoint)
    sd = np.sqrt(hc0_var)
    corr = V / np.outer(sd, sd)
    corr = np.clip((corr + corr.T) / 2, -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)

    if kind == "sandwich":
        se = sd
    else:
        se = np.concatenate([np.sqrt(f.sigma2 * (C ** 2 @ (1.0 / f.group_sizes))) for f in fits])
    cov = corr * np.outer(se, se)

    dfs = {f.df for f in fits}
    if len(dfs) > 1:
        warnings.warn(f"fits disagree on residual df {sorted(dfs)}; using the minimum",
                      RuntimeWarning, stacklevel=2)
    return JointInference(
        estimates=estimates,
        std_errors=se,
        t_stats=estimates / se,
        df=float(min(dfs)),
        corr=validate_correlation(corr, name="contrast correlation"),
        hypothesis_names=names,
        covariance_kind=kind,
        cov=cov,
        endpoint_of=endpoint_of,
    )


def fit_all(data: Dataset, kind: str = "model_based", contrasts: ContrastSet | None = None):
    """Fit every endpoint and return the stacked Dunnett joint inference."""
    fits = [fit_oneway(data, j) for j in range(data.n_endpoints)]
    if contrasts is None:
        contrasts = dunnett_contrasts(len(data.levels), data.levels)
    return joint_inference(fits, contrasts, kind)
