"""Multivariate normal sampling and multivariate t probabilities.

Rectangle probabilities of the central multivariate t distribution are
computed by the separation-of-variables transform integrated with a
randomized Kronecker lattice rule (Richtmyer generators, random shifts,
baker's periodization).  Two integrands are available:

* the *radial* form, in which ``T = Z / s`` and ``s`` is one extra lattice
  coordinate pushed through the scaled chi quantile.  It only needs normal
  distribution functions and is the workhorse for moderate probabilities.
* the *conditional-t* form, where every coordinate is drawn from its exact
  conditional Student t law.  It is slower but keeps relative accuracy for
  probabilities far in the tail, so exceedance probabilities below
  ``TAIL_SWITCH`` are routed through it.

Exactly equicorrelated matrices with nonnegative correlation bypass the
lattice rule; there the probability is a two-dimensional integral over the
shared latent factor and the radial variable, done with fixed composite
Gauss-Legendre rules.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import optimize, special, stats

__all__ = [
    "DEFAULT_SEED",
    "NonconvergenceError",
    "NonconvergenceWarning",
    "NotPSDError",
    "InvalidSigmaError",
    "ProbResult",
    "equicorrelated",
    "validate_correlation",
    "factor_psd",
    "mvn_sample",
    "t_cdf",
    "t_sf",
    "t_quantile",
    "mvt_cdf",
    "mvt_exceedance",
    "equicoordinate_cdf",
    "equicoordinate_sf",
    "equicoordinate_quantile",
]

PSD_TOL = 1e-10
DEFAULT_SEED = 2718
DEFAULT_ABSEPS = 1e-4
DEFAULT_MAX_POINTS = 2_000_000
TAIL_SWITCH = 1e-3

_N_SHIFTS = 24  # enough for a stable variance estimate when stopping early
_N0 = 64
_ERR_MULT = 3.5
_U_FLOOR = 1e-300
_EQUI_TOL = 1e-12


class NotPSDError(ValueError):
    """Correlation matrix has an eigenvalue below ``-PSD_TOL``."""


class InvalidSigmaError(ValueError):
    """A standard deviation is not strictly positive."""


class NonconvergenceError(RuntimeError):
    """A root or integral could not be brought within tolerance."""


class NonconvergenceWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class ProbResult:
    """Probability with an absolute error estimate (3.5 standard errors)."""

    value: float
    error_estimate: float
    converged: bool = True

    def __float__(self):
        return self.value


# ---------------------------------------------------------------------------
# correlation matrices

def equicorrelated(dim: int, rho: float) -> np.ndarray:
    R = np.full((dim, dim), float(rho))
    np.fill_diagonal(R, 1.0)
    return R


def validate_correlation(R, name: str = "R") -> np.ndarray:
    """Return ``R`` as a float array after checking the correlation invariants.

    Raises ``ValueError`` for shape, symmetry, diagonal or range problems and
    ``NotPSDError`` when the smallest eigenvalue is below ``-PSD_TOL``.
    """
    R = np.array(R, dtype=float, copy=True)
    if R.ndim == 0:
        R = R.reshape(1, 1)
    if R.ndim != 2 or R.shape[0] != R.shape[1] or R.shape[0] < 1:
        raise ValueError(f"{name} must be a square matrix, got shape {R.shape}")
    if not np.all(np.isfinite(R)):
        raise ValueError(f"{name} contains non-finite entries")
    if not np.allclose(R, R.T, rtol=0, atol=1e-12):
        raise ValueError(f"{name} is not symmetric")
    if not np.allclose(np.diag(R), 1.0, rtol=0, atol=1e-12):
        raise ValueError(f"{name} must have a unit diagonal")
    if np.any(np.abs(R) > 1 + 1e-12):
        raise ValueError(f"{name} has entries outside [-1, 1]")
    R = (R + R.T) / 2
    np.fill_diagonal(R, 1.0)
    lam_min = np.linalg.eigvalsh(R)[0]
    if lam_min < -PSD_TOL:
        raise NotPSDError(
            f"{name} is not positive semidefinite (smallest eigenvalue {lam_min:.3g})")
    return R


def _psd_cholesky(A, tol=PSD_TOL):
    # Cholesky that tolerates zero pivots: such columns are left at zero.
    n = A.shape[0]
    L = np.zeros_like(A)
    for j in range(n):
        d = A[j, j] - L[j, :j] @ L[j, :j]
        if d <= tol:
            continue
        L[j, j] = math.sqrt(d)
        L[j + 1:, j] = (A[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


def factor_psd(R) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == R``.

    Rank-deficient matrices are first projected onto the PSD cone by clipping
    negative eigenvalues to zero, then factored with a pivot-tolerant
    Cholesky, so ``[[1, 1], [1, 1]]`` gives ``[[1, 0], [1, 0]]``.
    """
    R = validate_correlation(R)
    try:
        L = np.linalg.cholesky(R)
        if np.all(np.diag(L) > 1e-7):
            return L
    except np.linalg.LinAlgError:
        pass
    lam, V = np.linalg.eigh(R)
    Rp = (V * np.clip(lam, 0.0, None)) @ V.T
    return _psd_cholesky((Rp + Rp.T) / 2)


def _as_rng(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def mvn_sample(n: int, mu, sigma, R, rng=None) -> np.ndarray:
    """Draw ``n`` rows from N(mu, D R D) with ``D = diag(sigma)``."""
    if int(n) < 1:
        raise ValueError("n must be at least 1")
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
    if np.any(~np.isfinite(sigma)) or np.any(sigma <= 0):
        raise InvalidSigmaError(f"all standard deviations must be > 0, got {sigma}")
    L = factor_psd(R)
    if not (mu.shape == sigma.shape == (L.shape[0],)):
        raise ValueError("mu, sigma and R dimensions disagree")
    z = _as_rng(rng).standard_normal((int(n), L.shape[0]))
    return mu + (z @ L.T) * sigma


# ---------------------------------------------------------------------------
# univariate t

def _check_df(df):
    df = float(df)
    if not df > 0:
        raise ValueError(f"df must be positive, got {df}")
    return df


def t_cdf(x, df):
    df = _check_df(df)
    if math.isinf(df):
        return special.ndtr(x)
    return special.stdtr(df, x)


def t_sf(x, df):
    return t_cdf(-np.asarray(x, dtype=float), df)


def t_quantile(p, df):
    df = _check_df(df)
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0) | (p >= 1)):
        raise ValueError("p must lie strictly between 0 and 1")
    if math.isinf(df):
        return special.ndtri(p)
    return special.stdtrit(df, p)


# ---------------------------------------------------------------------------
# lattice rule

@lru_cache(maxsize=None)
def _richtmyer(dim):
    primes = []
    c = 2
    while len(primes) < dim + 1:
        if all(c % p for p in primes if p * p <= c):
            primes.append(c)
        c += 1
    # sqrt(2) is reserved for the radial coordinate
    return np.sqrt(np.array(primes[1:], dtype=float))


def _lattice(n, shifts, q):
    """Baker-transformed shifted Kronecker points, shape (len(shifts), n, dim)."""
    i = np.arange(1, n + 1, dtype=float)[:, None]
    x = np.mod(i * q[None, :] + shifts[:, None, :], 1.0)
    return 1.0 - np.abs(2.0 * x - 1.0)


@lru_cache(maxsize=256)
def _radii(df, n, seed, rnd):
    """Scaled chi radii ``sqrt(chi2_df / df)`` on the radial lattice coordinate."""
    shifts = np.random.default_rng([seed, 1, rnd]).random(_N_SHIFTS)
    i = np.arange(1, n + 1, dtype=float)
    x = np.mod(i[None, :] * math.sqrt(2.0) + shifts[:, None], 1.0)
    u = np.clip(1.0 - np.abs(2.0 * x - 1.0), 1e-16, 1 - 1e-16)
    s = np.sqrt(special.gammaincinv(df / 2.0, u) * 2.0 / df)
    s.setflags(write=False)
    return s


def _qmc(integrand, ndim, nbatch, abseps, releps, max_points, seed, radial_df=None):
    """Adaptive randomized lattice integration of ``integrand``.

    ``integrand(w, s)`` maps uniforms ``w`` of shape (K, n, ndim) and radii
    ``s`` of shape (K, n) (or None) to values of shape (nbatch, K, n).
    Successive rounds double ``n`` and are pooled by inverse variance.
    """
    rng = np.random.default_rng([seed, 0])
    q = _richtmyer(max(ndim, 1))[:ndim]
    est = var = None
    n, used, rnd = _N0, 0, 0
    while True:
        shifts = rng.random((_N_SHIFTS, ndim))
        w = _lattice(n, shifts, q) if ndim else np.zeros((_N_SHIFTS, n, 0))
        s = _radii(radial_df, n, seed, rnd) if radial_df is not None else None
        vals = integrand(w, s)
        means = vals.mean(axis=2)
        e = means.mean(axis=1)
        v = means.var(axis=1, ddof=1) / _N_SHIFTS
        if rnd == 0:
            est, var = e, v
        else:
            denom = var + v
            pos = denom > 0
            wgt = np.divide(var, denom, out=np.full_like(var, 0.5), where=pos)
            est = est + (e - est) * wgt
            var = np.divide(var * v, denom, out=np.zeros_like(var), where=pos)
        used += n * _N_SHIFTS
        rnd += 1
        err = _ERR_MULT * np.sqrt(var)
        tol = np.maximum(abseps, releps * np.abs(est))
        if np.all(err <= tol):
            return est, err, True
        if used + 2 * n * _N_SHIFTS > max_points:
            return est, err, False
        n *= 2


# ---------------------------------------------------------------------------
# variable ordering and integrands

def _reorder(lo, hi, R):
    """Gibson-Glasbey-Elston ordering: most constrained variable first.

    Returns the permutation and the pivot-tolerant Cholesky factor of the
    permuted matrix.
    """
    m = R.shape[0]
    A = R.copy()
    lo = lo.copy()
    hi = hi.copy()
    perm = np.arange(m)
    L = np.zeros_like(A)
    y = np.zeros(m)
    for k in range(m):
        best, best_p = k, np.inf
        for i in range(k, m):
            var = A[i, i] - L[i, :k] @ L[i, :k]
            mu = L[i, :k] @ y[:k]
            if var > PSD_TOL:
                sd = math.sqrt(var)
                p = special.ndtr((hi[i] - mu) / sd) - special.ndtr((lo[i] - mu) / sd)
            else:
                p = float(lo[i] <= mu <= hi[i])
            if p < best_p:
                best, best_p = i, p
        if best != k:
            for arr in (lo, hi, perm, y):
                arr[[k, best]] = arr[[best, k]]
            A[[k, best], :] = A[[best, k], :]
            A[:, [k, best]] = A[:, [best, k]]
            L[[k, best], :] = L[[best, k], :]
        d = A[k, k] - L[k, :k] @ L[k, :k]
        if d > PSD_TOL:
            L[k, k] = math.sqrt(d)
            L[k + 1:, k] = (A[k + 1:, k] - L[k + 1:, :k] @ L[k, :k]) / L[k, k]
            mu = L[k, :k] @ y[:k]
            a = (lo[k] - mu) / L[k, k]
            b = (hi[k] - mu) / L[k, k]
            pr = special.ndtr(b) - special.ndtr(a)
            # expected value of the truncated normal feeds the next choice
            y[k] = (_phi(a) - _phi(b)) / pr if pr > 1e-300 else (a if np.isfinite(a) else b)
        else:
            y[k] = 0.0
    return perm, L


def _phi(x):
    return 0.0 if np.isinf(x) else math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)


def _interval(a, b, cdf, inv):
    """Mass of (a, b) and a sampler, computed on the side that avoids cancellation."""
    flip = a > 0
    aa = np.where(flip, -b, a)
    bb = np.where(flip, -a, b)
    d = cdf(aa)
    mass = cdf(bb) - d

    def draw(w):
        u = np.clip(d + w * mass, _U_FLOOR, 1.0 - 1e-16)
        z = inv(u)
        return np.where(flip, -z, z)

    return mass, draw


def _radial_integrand(lo, hi, L):
    """Normal-conditional integrand with a radial scale variable."""
    m = L.shape[0]
    diag = np.diag(L)

    def f(w, s):
        nb = lo.shape[0]
        shape = (nb,) + w.shape[:2]
        out = np.ones(shape)
        y = np.zeros(shape + (m,))
        scale = 1.0 if s is None else s[None]
        for k in range(m):
            mu = y[..., :k] @ L[k, :k] if k else 0.0
            with np.errstate(invalid="ignore"):
                a = lo[:, k, None, None] * scale - mu
                b = hi[:, k, None, None] * scale - mu
            a = np.nan_to_num(a, nan=-np.inf)
            b = np.nan_to_num(b, nan=np.inf)
            if diag[k] > 0:
                with np.errstate(over="ignore"):
                    a, b = a / diag[k], b / diag[k]
                mass, draw = _interval(a, b, special.ndtr, special.ndtri)
                out *= mass
                if k < m - 1:
                    y[..., k] = draw(w[None, ..., k])
            else:
                out *= (a <= 0) & (b >= 0)
        return out

    return f


def _tcond_integrand(lo, hi, L, df):
    """Integrand drawing each coordinate from its exact conditional t law."""
    m = L.shape[0]
    diag = np.diag(L)
    finite = not math.isinf(df)

    def f(w, s):
        shape = w.shape[:2]
        out = np.ones(shape)
        y = np.zeros(shape + (m,))
        ssq = np.zeros(shape)
        drawn = 0
        for k in range(m):
            mu = y[..., :k] @ L[k, :k] if k else 0.0
            if diag[k] > 0:
                if finite:
                    dfk = df + drawn
                    c = np.sqrt((df + ssq) / dfk)
                    cdf = lambda x, dfk=dfk: special.stdtr(dfk, x)
                    inv = lambda p, dfk=dfk: special.stdtrit(dfk, p)
                else:
                    c = 1.0
                    cdf, inv = special.ndtr, special.ndtri
                a = (lo[k] - mu) / (diag[k] * c)
                b = (hi[k] - mu) / (diag[k] * c)
                mass, draw = _interval(a, b, cdf, inv)
                out *= mass
                if k < m - 1:
                    y[..., k] = c * draw(w[..., k])
                    ssq = ssq + y[..., k] ** 2
                    drawn += 1
            else:
                out *= (lo[k] <= mu) & (mu <= hi[k])
        return out[None]

    return f


# ---------------------------------------------------------------------------
# equicorrelated quadrature

def _gl_composite(breaks, order):
    x, w = np.polynomial.legendre.leggauss(order)
    a, b = np.asarray(breaks[:-1]), np.asarray(breaks[1:])
    half = (b - a)[:, None] / 2
    nodes = (a[:, None] + half * (x[None, :] + 1)).ravel()
    return nodes, (half * w[None, :]).ravel()


_Z_BREAKS = np.linspace(-12.0, 12.0, 33)
_S_QUANTILES = np.array([1e-15, 1e-12, 1e-9, 1e-7, 1e-5, 1e-4, 1e-3, 0.01, 0.05, 0.15,
                         0.3, 0.5, 0.7, 0.85, 0.95, 0.99, 0.999, 1 - 1e-4, 1 - 1e-6,
                         1 - 1e-9, 1 - 1e-12, 1 - 1e-15])


@lru_cache(maxsize=64)
def _radial_rule(df, order):
    """Nodes/weights integrating against the density of sqrt(chi2_df / df)."""
    if math.isinf(df):
        return np.ones(1), np.ones(1)
    breaks = stats.chi.ppf(_S_QUANTILES, df) / math.sqrt(df)
    nodes, w = _gl_composite(breaks, order)
    logpdf = stats.chi.logpdf(nodes * math.sqrt(df), df) + 0.5 * math.log(df)
    return nodes, w * np.exp(logpdf)


@lru_cache(maxsize=8)
def _latent_rule(order):
    z, w = _gl_composite(_Z_BREAKS, order)
    return z, w * np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)


def _equi_quadrature(lo, hi, rho, df, outside):
    """Rectangle (or complement) probability for equicorrelation rho in [0, 1)."""

    # identical limit pairs contribute identical factors
    pairs, counts = np.unique(np.stack([lo, hi], axis=1), axis=0, return_counts=True)
    lo_u, hi_u = pairs[:, 0], pairs[:, 1]

    def rule(order_s, order_z):
        s, ws = _radial_rule(df, order_s)
        z, wz = _latent_rule(order_z)
        r, c = math.sqrt(rho), math.sqrt(1.0 - rho)
        base = -r * z[None, :, None]
        # radial nodes are interior Gauss points, so inf * s never meets s == 0
        a = (lo_u[None, None, :] * s[:, None, None] + base) / c
        b = (hi_u[None, None, :] * s[:, None, None] + base) / c
        if outside:
            q = special.ndtr(a) + special.ndtr(-b)
            with np.errstate(divide="ignore"):
                logp = np.log1p(-np.minimum(q, 1.0)) @ counts
            g = -np.expm1(logp)
        else:
            flip = a > 0
            mass = np.where(flip, special.ndtr(-a) - special.ndtr(-b),
                            special.ndtr(b) - special.ndtr(a))
            g = np.prod(mass ** counts, axis=2)
        return ws @ g @ wz

    fine = rule(12, 12)
    coarse = rule(8, 8)
    return float(np.clip(fine, 0.0, 1.0)), abs(fine - coarse) + 1e-15


def _equi_rho(R):
    m = R.shape[0]
    if m < 2:
        return None
    off = R[~np.eye(m, dtype=bool)]
    if np.ptp(off) > _EQUI_TOL or off[0] < 0:
        return None
    return float(off[0])


# ---------------------------------------------------------------------------
# public probability functions

def _prep_limits(upper, lower, m):
    upper = np.broadcast_to(np.asarray(upper, dtype=float), (m,)).copy()
    if lower is None:
        lower = np.full(m, -np.inf)
    lower = np.broadcast_to(np.asarray(lower, dtype=float), (m,)).copy()
    if np.any(np.isnan(upper)) or np.any(np.isnan(lower)):
        raise ValueError("integration limits must not be NaN")
    return lower, upper


def _rect_batch(lo, hi, R, df, abseps, releps, max_points, seed):
    """P(lo_b <= T <= hi_b) for each row b, sharing one lattice."""
    nb, m = lo.shape
    perm, L = _reorder(lo[0], hi[0], R)
    lo_p, hi_p = lo[:, perm], hi[:, perm]
    radial = None if math.isinf(df) else df
    f = _radial_integrand(lo_p, hi_p, L)
    ndim = m - 1
    if ndim == 0 and radial is None:
        v = f(np.zeros((1, 1, 0)), None)[:, 0, 0]
        return v, np.zeros(nb), True
    return _qmc(f, ndim, nb, abseps, releps, max_points, seed, radial_df=radial)


def _warn_nonconv(what, err):
    warnings.warn(f"{what}: accuracy target not reached (error estimate {err:.2g})",
                  NonconvergenceWarning, stacklevel=3)


def mvt_cdf(b, R, df, *, lower=None, abseps=DEFAULT_ABSEPS, releps=0.0,
            max_points=DEFAULT_MAX_POINTS, seed=DEFAULT_SEED, method="auto") -> ProbResult:
    """P(lower <= T <= b) for central multivariate t with correlation R.

    ``df = inf`` gives the multivariate normal probability.  ``method`` is
    ``"auto"`` (quadrature for nonnegative equicorrelation, lattice rule
    otherwise), ``"qmc"`` or ``"quadrature"``.
    """
    R = validate_correlation(R)
    df = _check_df(df)
    m = R.shape[0]
    lo, hi = _prep_limits(b, lower, m)
    if np.any(lo > hi):
        return ProbResult(0.0, 0.0)
    if m == 1:
        v = float(t_cdf(hi[0], df) - t_cdf(lo[0], df))
        return ProbResult(v, 1e-15)
    rho = _equi_rho(R)
    if method == "quadrature" and rho is None:
        raise ValueError("quadrature requires a nonnegative equicorrelated matrix")
    if rho is not None and method != "qmc":
        if rho >= 1 - _EQUI_TOL:
            v = float(t_cdf(hi.min(), df) - t_cdf(lo.max(), df))
            return ProbResult(max(v, 0.0), 1e-15)
        v, err = _equi_quadrature(lo, hi, rho, df, outside=False)
        if err <= abseps or method == "quadrature":
            return ProbResult(v, err)
    v, err, ok = _rect_batch(lo[None], hi[None], R, df, abseps, releps, max_points, seed)
    if not ok:
        _warn_nonconv("mvt_cdf", err[0])
    return ProbResult(float(np.clip(v[0], 0.0, 1.0)), float(err[0]), bool(ok))


def _tail_exceedance(lo, hi, R, df, releps, max_points, seed):
    """P(T outside [lo, hi]) as a sum of disjoint rectangle probabilities.

    Term i is P(T_i outside its interval, T_j inside for j < i); each term
    is integrated with the conditional-t integrand so small values keep
    relative accuracy.
    """
    m = R.shape[0]
    total, err2, ok = 0.0, 0.0, True
    for i in range(m):
        idx = list(range(i + 1))
        sub = R[np.ix_(idx, idx)]
        pieces = []
        if np.isfinite(hi[i]):
            pieces.append((hi[i], np.inf))
        if np.isfinite(lo[i]):
            pieces.append((-np.inf, lo[i]))
        for a_i, b_i in pieces:
            a = lo[:i + 1].copy()
            b = hi[:i + 1].copy()
            a[i], b[i] = a_i, b_i
            if i == 0:
                total += float(t_cdf(b_i, df) - t_cdf(a_i, df))
                continue
            perm, L = _reorder(a, b, sub)
            f = _tcond_integrand(a[perm], b[perm], L, df)
            v, e, c = _qmc(f, i, 1, 1e-300, releps, max_points, seed)
            total += float(v[0])
            err2 += float(e[0]) ** 2
            ok = ok and c
    return total, math.sqrt(err2), ok


def mvt_exceedance(b, R, df, *, lower=None, abseps=DEFAULT_ABSEPS, releps=1e-3,
                   max_points=DEFAULT_MAX_POINTS, seed=DEFAULT_SEED,
                   precise_tail=True) -> ProbResult:
    """P(T not in [lower, b]), the complement of :func:`mvt_cdf`.

    When the complement is below ``TAIL_SWITCH`` and ``precise_tail`` is set,
    it is recomputed directly so that tiny values keep about ``releps``
    relative accuracy instead of drowning in the absolute error of the CDF.
    """
    R = validate_correlation(R)
    df = _check_df(df)
    m = R.shape[0]
    lo, hi = _prep_limits(b, lower, m)
    if m == 1:
        v = float(t_cdf(lo[0], df) + t_sf(hi[0], df))
        return ProbResult(min(v, 1.0), 1e-15)
    rho = _equi_rho(R)
    if rho is not None:
        if rho >= 1 - _EQUI_TOL:
            inside = max(float(t_cdf(hi.min(), df) - t_cdf(lo.max(), df)), 0.0)
            return ProbResult(1.0 - inside, 1e-15)
        v, err = _equi_quadrature(lo, hi, rho, df, outside=True)
        if err <= max(abseps if v > TAIL_SWITCH else 0.0, releps * v):
            return ProbResult(v, err)
    vals, errs, ok = equicoordinate_sf_raw(lo[None], hi[None], R, df, abseps=abseps,
                                           releps=releps, max_points=max_points,
                                           seed=seed, precise_tail=precise_tail)
    return ProbResult(float(vals[0]), float(errs[0]), bool(ok))


def equicoordinate_sf_raw(lo, hi, R, df, *, abseps, releps, max_points, seed, precise_tail):
    """Batched complement probabilities for rows of ``lo``/``hi``."""
    v, err, ok = _rect_batch(lo, hi, R, df, abseps, 0.0, max_points, seed)
    out = np.clip(1.0 - v, 0.0, 1.0)
    err = err.copy()
    if precise_tail:
        for j in np.flatnonzero(out < TAIL_SWITCH):
            t, e, c = _tail_exceedance(lo[j], hi[j], R, df, releps, max_points, seed)
            out[j], err[j] = min(t, 1.0), e
            ok = ok and c
    if not ok:
        _warn_nonconv("exceedance probability", float(np.max(err)))
    return out, err, ok


def _equi_limits(c, m, two_sided):
    c = np.atleast_1d(np.asarray(c, dtype=float))
    hi = np.repeat(c[:, None], m, axis=1)
    lo = -hi if two_sided else np.full_like(hi, -np.inf)
    return lo, hi


def equicoordinate_sf(c, R, df, *, two_sided=False, abseps=DEFAULT_ABSEPS, releps=1e-3,
                      max_points=DEFAULT_MAX_POINTS, seed=DEFAULT_SEED, precise_tail=True):
    """P(max_j T_j > c) (or P(max_j |T_j| > c)) for each value in ``c``.

    Returns ``(values, error_estimates)`` arrays.  All values share one
    lattice, which is what makes single-step max-T adjustment cheap.
    """
    R = validate_correlation(R)
    df = _check_df(df)
    m = R.shape[0]
    lo, hi = _equi_limits(c, m, two_sided)
    if m == 1 or _equi_rho(R) is not None:
        res = [mvt_exceedance(h, R, df, lower=l, abseps=abseps, releps=releps,
                              max_points=max_points, seed=seed, precise_tail=precise_tail)
               for l, h in zip(lo, hi)]
        return np.array([r.value for r in res]), np.array([r.error_estimate for r in res])
    vals, errs, _ = equicoordinate_sf_raw(lo, hi, R, df, abseps=abseps, releps=releps,
                                          max_points=max_points, seed=seed,
                                          precise_tail=precise_tail)
    return vals, errs


def equicoordinate_cdf(c, R, df, *, two_sided=False, **kw):
    """P(max_j T_j <= c) for each value in ``c``; see :func:`equicoordinate_sf`."""
    R = validate_correlation(R)
    m = R.shape[0]
    lo, hi = _equi_limits(c, m, two_sided)
    res = [mvt_cdf(h, R, df, lower=l, **kw) for l, h in zip(lo, hi)]
    return np.array([r.value for r in res]), np.array([r.error_estimate for r in res])


def equicoordinate_quantile(p, R, df, *, two_sided=False, abseps=DEFAULT_ABSEPS,
                            seed=DEFAULT_SEED, max_points=DEFAULT_MAX_POINTS) -> float:
    """Critical value ``q`` with P(max_j T_j <= q) = p (``|T_j|`` if two-sided).

    The bracket starts at the univariate and Bonferroni quantiles, which
    bound ``q`` from below and above, and is widened geometrically if the
    numerical CDF disagrees with them.
    """
    p = float(p)
    if not 0 < p < 1:
        raise ValueError("p must lie strictly between 0 and 1")
    R = validate_correlation(R)
    df = _check_df(df)
    m = R.shape[0]
    tail = (1 - p) / 2 if two_sided else 1 - p
    if m == 1:
        return float(t_quantile(1 - tail, df))

    def f(q):
        lo = -q if two_sided else -np.inf
        return mvt_cdf(np.full(m, q), R, df, lower=np.full(m, lo), abseps=abseps,
                       seed=seed, max_points=max_points).value - p

    left = float(t_quantile(1 - tail, df))
    right = float(t_quantile(1 - tail / m, df))
    if right - left < 1e-6:
        right = left + 1e-3
    step = max(right - left, 0.1)
    fl, fr = f(left), f(right)
    while fl > 0:
        left -= step
        step *= 2
        if left < -50:
            raise NonconvergenceError("no lower bracket for the quantile in [-50, 50]")
        fl = f(left)
    step = max(right - left, 0.1)
    while fr < 0:
        right += step
        step *= 2
        if right > 50:
            raise NonconvergenceError("no upper bracket for the quantile in [-50, 50]")
        fr = f(right)
    if fl == 0:
        return left
    if fr == 0:
        return right
    return float(optimize.brentq(f, left, right, xtol=1e-9, rtol=1e-12))
