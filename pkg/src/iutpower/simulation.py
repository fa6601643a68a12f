"""Monte Carlo power of IUT, UIT and aiaUIT for correlated endpoints.

Every replicate draws its own Philox stream from ``SeedSequence(seed,
spawn_key=(replicate, attempt))``, so tallies do not depend on how the
replicates are split across workers.
"""
from __future__ import annotations

import logging
import string
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import mvdist
from .inference import marginal_p, maxt_adjusted_p, maxt_reject
from .models import (
    DegenerateGroupError,
    SingularDesignError,
    dunnett_contrasts,
    fit_oneway,
    joint_inference,
    Dataset,
)

__all__ = [
    "Scenario",
    "ReplicateRecord",
    "PowerRow",
    "replicate_rng",
    "run_replicate",
    "simulate_power",
    "run_table",
]

log = logging.getLogger(__name__)

DESIGNS = ("two_sample", "dunnett")
SIM_ABSEPS = 1e-3
MAX_RETRIES = 10
_CHUNK = 250


@dataclass(frozen=True)
class Scenario:
    """One simulated design.

    ``means`` is ``k x J`` (group by endpoint), ``sds`` has one entry per
    endpoint and ``rho`` is the endpoint correlation matrix.
    """

    group_sizes: tuple
    means: np.ndarray
    sds: np.ndarray
    rho: np.ndarray
    alpha: float = 0.05
    sims: int = 10_000
    seed: int = 17051949
    design: str | None = None
    label: str = ""

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.group_sizes)
        means = np.atleast_2d(np.asarray(self.means, dtype=float))
        sds = np.atleast_1d(np.asarray(self.sds, dtype=float))
        k, J = means.shape
        if k < 2 or J < 1:
            raise ValueError("need at least 2 groups and 1 endpoint")
        if len(sizes) != k:
            raise ValueError(f"{len(sizes)} group sizes for {k} groups of means")
        if any(n < 2 for n in sizes):
            raise ValueError("every group needs at least 2 observations")
        if sds.shape != (J,) or np.any(~np.isfinite(sds)) or np.any(sds <= 0):
            raise mvdist.InvalidSigmaError("need one positive standard deviation per endpoint")
        rho = np.asarray(self.rho, dtype=float)
        if rho.ndim == 0:
            rho = mvdist.equicorrelated(J, float(rho))
        rho = mvdist.validate_correlation(rho, name="rho")
        if rho.shape != (J, J):
            raise ValueError(f"rho must be {J} x {J}")
        design = self.design or ("two_sample" if k == 2 else "dunnett")
        if design not in DESIGNS:
            raise ValueError(f"design must be one of {DESIGNS}")
        if (design == "two_sample") != (k == 2):
            raise ValueError("two_sample needs exactly 2 groups, dunnett at least 3")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie strictly between 0 and 1")
        if int(self.sims) < 1:
            raise ValueError("sims must be at least 1")
        for name, value in (("group_sizes", sizes), ("means", means), ("sds", sds),
                            ("rho", rho), ("design", design), ("sims", int(self.sims)),
                            ("seed", int(self.seed))):
            object.__setattr__(self, name, value)

    @property
    def k(self) -> int:
        return self.means.shape[0]

    @property
    def n_endpoints(self) -> int:
        return self.means.shape[1]

    @property
    def n_hypotheses(self) -> int:
        return (self.k - 1) * self.n_endpoints

    def hypothesis_labels(self) -> tuple:
        """Column names for the per-hypothesis rates: ``m*`` and ``e*``."""
        M = self.n_hypotheses
        m_cols = tuple(f"m{i + 1}" for i in range(M))
        if self.design == "two_sample":
            e_cols = tuple(f"e{j + 1}" for j in range(self.n_endpoints))
        else:
            letters = string.ascii_lowercase
            e_cols = tuple(f"{letters[j]}{c + 1}"
                           for j in range(self.n_endpoints) for c in range(self.k - 1))
        return m_cols, e_cols


@dataclass(frozen=True)
class ReplicateRecord:
    adjusted: np.ndarray
    marginal: np.ndarray
    resamples: int = 0


@dataclass(frozen=True)
class PowerRow:
    iut: float
    uit: float
    m: np.ndarray
    e: np.ndarray
    aia: float
    rr: float | None
    sims: int
    resamples: int = 0
    counts: np.ndarray = field(default=None, repr=False)


def replicate_rng(seed: int, replicate: int, attempt: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(replicate), int(attempt)))
    return np.random.Generator(np.random.Philox(ss))


def _generate(sc: Scenario, rng) -> Dataset:
    blocks = [mvdist.mvn_sample(n, sc.means[g], sc.sds, sc.rho, rng)
              for g, n in enumerate(sc.group_sizes)]
    labels = np.repeat([f"G{g}" for g in range(sc.k)], sc.group_sizes)
    return Dataset(groups=labels, responses=np.vstack(blocks), control="G0")


def _fit(sc: Scenario, data: Dataset):
    fits = [fit_oneway(data, j) for j in range(sc.n_endpoints)]
    return joint_inference(fits, dunnett_contrasts(sc.k), "model_based")


def _marginal_partition(sc: Scenario, ji):
    return None if sc.design == "two_sample" else ji.endpoint_partition()


def _draw_fit(sc: Scenario, replicate: int):
    """Joint inference of replicate ``replicate`` and the number of redraws."""
    for attempt in range(MAX_RETRIES + 1):
        data = _generate(sc, replicate_rng(sc.seed, replicate, attempt))
        try:
            return _fit(sc, data), attempt
        except (SingularDesignError, DegenerateGroupError):
            log.warning("replicate %d attempt %d degenerate, resampling", replicate, attempt)
    raise SingularDesignError(f"replicate {replicate} degenerate after {MAX_RETRIES} retries")


def run_replicate(sc: Scenario, rep_seed: int) -> ReplicateRecord:
    """Simulate and analyse replicate number ``rep_seed`` of ``sc``.

    Adjusted p-values are joint max-T over all hypotheses (model-based
    covariance); marginal ones are univariate for two-sample designs and
    within-endpoint max-T for Dunnett designs.  A replicate whose fit is
    degenerate is redrawn from a fresh sub-stream, at most
    ``MAX_RETRIES`` times.
    """
    ji, attempt = _draw_fit(sc, rep_seed)
    kw = dict(abseps=SIM_ABSEPS, precise_tail=False)
    adjusted = maxt_adjusted_p(ji, "greater", **kw)
    marginal = marginal_p(ji, "greater", _marginal_partition(sc, ji), **kw)
    return ReplicateRecord(adjusted, marginal, attempt)


def _tally(sc: Scenario, start: int, stop: int) -> np.ndarray:
    """Integer counts [iut, uit, aia, m_1..m_M, e_1..e_M, resamples] over a range."""
    M = sc.n_hypotheses
    counts = np.zeros(3 + 2 * M + 1, dtype=np.int64)
    kw = dict(abseps=SIM_ABSEPS, precise_tail=False)
    for r in range(start, stop):
        # Only p < alpha enters the tallies, so decide without full p-values.
        ji, attempt = _draw_fit(sc, r)
        adj = maxt_reject(ji, sc.alpha, "greater", **kw)
        marg = maxt_reject(ji, sc.alpha, "greater", _marginal_partition(sc, ji) or
                           [[i] for i in range(ji.size)], **kw)
        counts[0] += marg.all()
        counts[1] += adj.any()
        counts[2] += adj.all()
        counts[3:3 + M] += adj
        counts[3 + M:3 + 2 * M] += marg
        counts[-1] += attempt
    return counts


def _tally_args(args):
    return _tally(*args)


def _row_from_counts(sc: Scenario, counts: np.ndarray) -> PowerRow:
    M = sc.n_hypotheses
    rates = counts[:-1] / sc.sims
    iut = float(rates[0])
    aia = float(rates[2])
    return PowerRow(
        iut=iut,
        uit=float(rates[1]),
        m=rates[3:3 + M].copy(),
        e=rates[3 + M:3 + 2 * M].copy(),
        aia=aia,
        rr=aia / iut if counts[0] > 0 else None,
        sims=sc.sims,
        resamples=int(counts[-1]),
        counts=counts,
    )


def simulate_power(sc: Scenario, workers: int = 1, progress=None) -> PowerRow:
    """Empirical rejection rates over ``sc.sims`` replicates.

    ``workers > 1`` spreads fixed-size replicate chunks over a process pool;
    the result is bitwise identical for every worker count.  ``progress``,
    if given, is called with the number of finished replicates.
    """
    chunks = [(sc, s, min(s + _CHUNK, sc.sims)) for s in range(0, sc.sims, _CHUNK)]
    total = np.zeros(3 + 2 * sc.n_hypotheses + 1, dtype=np.int64)
    done = 0
    if workers <= 1 or len(chunks) == 1:
        results = map(_tally_args, chunks)
        pool = None
    else:
        pool = ProcessPoolExecutor(max_workers=workers)
        results = pool.map(_tally_args, chunks)
    try:
        for (_, s, e), c in zip(chunks, results):
            total += c
            done += e - s
            if progress is not None:
                progress(done)
    finally:
        if pool is not None:
            pool.shutdown()
    return _row_from_counts(sc, total)


@dataclass
class TableEntry:
    scenario: Scenario
    row: PowerRow | None
    error: Exception | None = None


def run_table(rows, workers: int = 1, progress=None) -> list:
    """Power rows for a list of scenarios; failures are kept per row."""
    rows = list(rows)
    if not rows:
        raise ValueError("no scenarios given")
    out = []
    for i, sc in enumerate(rows):
        try:
            cb = None if progress is None else (lambda d, i=i: progress(i, d))
            out.append(TableEntry(sc, simulate_power(sc, workers, cb)))
        except (ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
            log.error("scenario %d failed: %s", i + 1, exc)
            out.append(TableEntry(sc, None, exc))
    return out
