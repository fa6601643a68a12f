"""Acceptance gate.

Every check records its outcome through ``acceptance_log.record``; the
terminal summary then prints one PASS/FAIL line per criterion.  The table
reproductions take roughly half an hour on one core.
"""
import math

import numpy as np
import pytest
from scipy import stats

import reference_rows
from acceptance_log import record
from iutpower import cli
from iutpower.example_data import example_dataset
from iutpower.inference import decide, marginal_p, maxt_adjusted_p, raw_p, simultaneous_ci
from iutpower.models import Dataset, fit_all
from iutpower.mvdist import equicorrelated, equicoordinate_quantile, mvn_sample, mvt_cdf, t_cdf
from iutpower.simulation import Scenario, _draw_fit, run_replicate, run_table

N_INSTANCES = 1000
TIE = 2e-4  # integration slack around alpha for decision comparisons


def check_rates(criterion, label, got, want, keys):
    bad = []
    for key in keys:
        tol = reference_rows.tolerance(want[key])
        if not abs(got[key] - want[key]) <= tol:
            bad.append(f"{key} {got[key]:.4f} vs {want[key]} (tol {tol:.4f})")
    record(criterion, not bad, label + (": " + "; ".join(bad) if bad else ""))
    assert not bad, bad


# --- 1. two endpoints, two samples ------------------------------------------

@pytest.mark.slow
@pytest.mark.parametrize("key", list(reference_rows.TWO_ENDPOINT), ids=lambda k: "rho{}-ma{}-mb{}".format(*k))
def test_criterion1_two_endpoint_rows(key):
    got = reference_rows.rates(reference_rows.run("two", key))
    check_rates(1, "rho={} ma2={} mb2={}".format(*key), got,
                reference_rows.two_endpoint_expected(key), reference_rows.RATE_KEYS_2)


# --- 2. four endpoints -------------------------------------------------------

@pytest.mark.slow
@pytest.mark.parametrize("ma2", list(reference_rows.FOUR_ENDPOINT))
def test_criterion2_four_endpoint_rows(ma2):
    got = reference_rows.rates(reference_rows.run("four", ma2))
    check_rates(2, f"ma2={ma2}", got, reference_rows.four_endpoint_expected(ma2), reference_rows.RATE_KEYS_4)


# --- 3. Dunnett, three endpoints ---------------------------------------------

@pytest.mark.slow
@pytest.mark.parametrize("ma", list(reference_rows.DUNNETT))
def test_criterion3_dunnett_rows(ma):
    got = reference_rows.rates(reference_rows.run("dunnett", ma))
    check_rates(3, f"ma2=ma3={ma}", got, reference_rows.dunnett_expected(ma), ("IUT", "UIT", "aia"))


# --- 4. dose-finding example -------------------------------------------------

REFERENCE_ADJUSTED = {
    "EP1, C vs 5": 0.681, "EP1, C vs 20": 0.033, "EP1, C vs 80": 0.009,
    "EP2, C vs 5": 0.008, "EP2, C vs 20": 5.13e-09, "EP2, C vs 80": 3.21e-10,
}
REFERENCE_MARGINAL = {
    "EP1, C vs 5": 0.341, "EP1, C vs 20": 0.008, "EP1, C vs 80": 0.002,
    "EP2, C vs 5": 1.96e-3, "EP2, C vs 20": 5.59e-10, "EP2, C vs 80": 3.75e-10,
}


@pytest.fixture(scope="module")
def example_p():
    ji = fit_all(example_dataset(), "sandwich")
    names = ji.hypothesis_names
    return (dict(zip(names, maxt_adjusted_p(ji))), dict(zip(names, marginal_p(ji))))


def _close(got, want, abs_tol, factor):
    if want > 0.005:
        return abs(got - want) <= abs_tol
    return want / factor <= got <= want * factor


@pytest.mark.parametrize("kind", ["adjusted", "marginal"])
@pytest.mark.parametrize("name", list(REFERENCE_ADJUSTED))
def test_criterion4_example_p_values(example_p, kind, name):
    adj, marg = example_p
    if kind == "adjusted":
        got, want = adj[name], REFERENCE_ADJUSTED[name]
        ok = _close(got, want, 0.005, 3)
    else:
        got, want = marg[name], REFERENCE_MARGINAL[name]
        ok = _close(got, want, 0.003, 2)
    record(4, ok, f"{kind} {name}: {got:.3g} vs {want:g}")
    assert ok


def test_criterion4_global_decisions(example_p):
    adj, marg = example_p
    out = decide(list(marg.values()), list(adj.values()), 0.05)
    ok = (not out.iut_reject and not out.aia_reject
          and abs(out.p_iut_max - 0.341) <= 0.003 and abs(out.p_aia_max - 0.681) <= 0.005)
    record(4, ok, f"global: p_iut_max {out.p_iut_max:.4f}, p_aia_max {out.p_aia_max:.4f}")
    assert ok


# --- 5. sampling oracle for the multivariate t -------------------------------

ORACLE_DRAWS = 10**7
ORACLE_CHUNK = 10**6
ORACLE_DF = (10.0, 38.0, math.inf)
ORACLE_B = (0.0, 1.0, 2.0, 3.0)


def oracle_cdf(J, rho, seed):
    """Brute-force P(max_j T_j <= b) for every (df, b) in the grid."""
    rng = np.random.default_rng(seed)
    hits = np.zeros((len(ORACLE_DF), len(ORACLE_B)), dtype=np.int64)
    for _ in range(ORACLE_DRAWS // ORACLE_CHUNK):
        z0 = rng.standard_normal((ORACLE_CHUNK, 1))
        e = rng.standard_normal((ORACLE_CHUNK, J))
        top = (math.sqrt(rho) * z0 + math.sqrt(1 - rho) * e).max(axis=1)
        for i, df in enumerate(ORACLE_DF):
            s = 1.0 if math.isinf(df) else np.sqrt(rng.chisquare(df, ORACLE_CHUNK) / df)
            for j, b in enumerate(ORACLE_B):
                hits[i, j] += np.count_nonzero(top <= b * s)
    return hits / ORACLE_DRAWS


@pytest.mark.slow
@pytest.mark.parametrize("rho", [0.0, 0.5, 0.9])
@pytest.mark.parametrize("J", [2, 3, 6])
def test_criterion5_sampling_oracle(J, rho):
    ref = oracle_cdf(J, rho, seed=1000 * J + int(10 * rho))
    R = equicorrelated(J, rho)
    bad = []
    for i, df in enumerate(ORACLE_DF):
        for j, b in enumerate(ORACLE_B):
            p = ref[i, j]
            for method in ("quadrature", "qmc"):
                r = mvt_cdf(np.full(J, b), R, df, method=method)
                tol = 3 * math.sqrt(p * (1 - p) / ORACLE_DRAWS + (r.error_estimate / 3) ** 2)
                if not abs(r.value - p) <= tol:
                    bad.append(f"df={df} b={b} {method}: {r.value:.6f} vs {p:.6f} (tol {tol:.1e})")
    record(5, not bad, f"J={J} rho={rho}" + (": " + "; ".join(bad) if bad else ""))
    assert not bad, bad


# --- 6. invariant suites -----------------------------------------------------

def random_design_fit(rng):
    """Joint inference for a random small design like the simulated ones."""
    k = int(rng.integers(2, 4))
    J = int(rng.integers(1, 4 if k == 2 else 3))
    sizes = rng.integers(4, 21, size=k)
    rho = rng.uniform(0, 0.95)
    sds = rng.uniform(0.5, 5, J)
    R = equicorrelated(J, rho) if J > 1 else np.eye(1)
    blocks = [mvn_sample(int(n), rng.normal(0, 1.5, J) * sds, sds, R, rng) for n in sizes]
    data = Dataset(np.repeat([f"g{i}" for i in range(k)], sizes), np.vstack(blocks))
    return fit_all(data, str(rng.choice(["model_based", "sandwich"])))


@pytest.fixture(scope="module")
def design_instances():
    rng = np.random.default_rng(20240601)
    out = []
    for _ in range(N_INSTANCES):
        ji = random_design_fit(rng)
        out.append((ji, raw_p(ji), maxt_adjusted_p(ji)))
    return out


@pytest.mark.slow
def test_criterion6_dominance_and_bonferroni(design_instances):
    low = high = 0
    for ji, raw, adj in design_instances:
        low += bool(np.any(adj < raw - TIE))
        high += bool(np.any(adj > np.minimum(1, ji.size * raw) + TIE))
    record(6, low == 0, f"adjusted >= raw: {low} of {N_INSTANCES} violate")
    record(6, high == 0, f"adjusted <= Bonferroni: {high} of {N_INSTANCES} violate")
    assert low == high == 0


@pytest.mark.slow
def test_criterion6_ci_test_duality(design_instances):
    rng = np.random.default_rng(7)
    bad = 0
    for ji, _, _ in design_instances:
        alt = str(rng.choice(["greater", "two_sided"]))
        alpha = float(rng.choice([0.01, 0.05, 0.1]))
        adj = maxt_adjusted_p(ji, alt)
        ci = simultaneous_ci(ji, 1 - alpha, alt)
        excludes = (ci.lower > 0) | (ci.upper < 0)
        clear = np.abs(adj - alpha) > TIE
        bad += bool(np.any(excludes[clear] != (adj < alpha)[clear]))
    record(6, bad == 0, f"CI/test duality: {bad} of {N_INSTANCES} disagree")
    assert bad == 0


@pytest.mark.slow
def test_criterion6_aia_implies_uit(design_instances):
    bad = 0
    for _, raw, adj in design_instances:
        out = decide(raw, adj, 0.05)
        bad += out.aia_reject and not out.uit_reject
    record(6, bad == 0, f"aia => uit: {bad} of {N_INSTANCES} violate")
    assert bad == 0


@pytest.mark.slow
def test_criterion6_aia_implies_iut_per_replicate():
    rng = np.random.default_rng(99)
    bad = 0
    for i in range(N_INSTANCES):
        J = int(rng.integers(1, 5))
        n = int(rng.integers(5, 25))
        delta = rng.uniform(0, 1.5, J)
        sc = Scenario((n, n), [np.zeros(J), delta], rng.uniform(0.5, 3, J),
                      float(rng.uniform(0, 0.95)), sims=1, seed=int(rng.integers(2**31)))
        rec = run_replicate(sc, i)
        aia = np.all(rec.adjusted < sc.alpha)
        iut = np.all(rec.marginal < sc.alpha)
        tie = np.any(np.abs(rec.marginal - sc.alpha) <= TIE)
        bad += bool(aia and not iut and not tie)
    record(6, bad == 0, f"aia => iut per replicate: {bad} of {N_INSTANCES} violate")
    assert bad == 0


@pytest.mark.slow
def test_criterion6_frechet_bounds():
    rng = np.random.default_rng(31)
    bad = 0
    for _ in range(N_INSTANCES):
        dim = int(rng.integers(2, 7))
        A = rng.normal(size=(dim, dim + 4))
        S = A @ A.T
        d = np.sqrt(np.diag(S))
        R = S / np.outer(d, d)
        df = float(rng.choice([4.0, 10.0, 38.0, math.inf]))
        b = rng.uniform(-1, 3, dim)
        r = mvt_cdf(b, R, df)
        F = t_cdf(b, df)
        lower, upper = max(0.0, 1 - float(np.sum(1 - F))), float(np.min(F))
        slack = r.error_estimate + 1e-12
        bad += not (lower - slack <= r.value <= upper + slack)
    record(6, bad == 0, f"Frechet bounds: {bad} of {N_INSTANCES} violate")
    assert bad == 0


@pytest.mark.slow
def test_criterion6_quantile_roundtrip():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(N_INSTANCES):
        p = float(rng.choice([0.5, 0.9, 0.95, 0.99]))
        J = int(rng.integers(1, 7))
        rho = float(rng.choice([0.0, 0.09, 0.5, 0.7, 0.9]))
        df = float(rng.choice([10, 38, 57]))
        R = equicorrelated(J, rho) if J > 1 else np.eye(1)
        q = equicoordinate_quantile(p, R, df)
        worst = max(worst, abs(mvt_cdf(np.full(J, q), R, df).value - p))
    ok = worst < 1e-4
    record(6, ok, f"quantile/CDF roundtrip: worst |cdf(q) - p| = {worst:.2e}")
    assert ok


@pytest.mark.slow
def test_criterion6_null_p_uniform():
    rng = np.random.default_rng(77)
    ps = []
    for _ in range(N_INSTANCES):
        k = int(rng.integers(2, 4))
        J = int(rng.integers(1, 4))
        n = int(rng.integers(3, 20))
        mu = rng.normal(0, 5, J)
        sc = Scenario((n,) * k, np.tile(mu, (k, 1)), rng.uniform(0.5, 5, J),
                      float(rng.uniform(0, 0.95)), sims=10, seed=int(rng.integers(2**31)))
        for r in range(10):
            ji, _ = _draw_fit(sc, r)
            ps.append(raw_p(ji)[0])
    pv = stats.kstest(ps, "uniform").pvalue
    record(6, pv > 0.01, f"null raw p uniform: KS p = {pv:.3f} over {len(ps)} values")
    assert pv > 0.01


# --- 7. worker-count determinism ---------------------------------------------

def test_criterion7_worker_determinism():
    rows = [reference_rows.two_endpoint_scenario(0.7, 1.3, 18.0, sims=1500),
            reference_rows.two_endpoint_scenario(0.09, 1.7, 18.0, sims=1500)]
    one = cli.result_table(run_table(rows, workers=1)).encode()
    eight = cli.result_table(run_table(rows, workers=8)).encode()
    ok = one == eight
    record(7, ok, f"workers 1 vs 8: {len(one)} bytes, identical={ok}")
    assert ok
