"""Acceptance checks, one test per criterion.

Each test prints a single PASS/FAIL line; the lines are repeated in the
terminal summary. Run with ``pytest tests/test_acceptance.py -v``.
"""

import csv
import io
import itertools
import math
import time

import numpy as np
import pytest
from scipy import stats

from conftest import record
from hieragg import analytic, cli, config, covariance, hierarchy
from hieragg.copulas import CopulaSpec, sample_copula
from hieragg.hierarchy import TreeSpec
from hieragg.marginals import MarginalSpec, exact_xtvar, std_normal_quantile
from hieragg.riskmetrics import empirical_xtvar

SEED = 20240611
LOGNORMAL = MarginalSpec.lognormal_moments(670_000, 8.1e6)


def brute_kendall_tau(x, y):
    n = len(x)
    s = 0
    for i in range(n - 1):
        s += int(np.sum(np.sign(x[i + 1:] - x[i]) * np.sign(y[i + 1:] - y[i])))
    return s / (n * (n - 1) / 2)


def test_criterion_1_closed_form_reproduction():
    db1, eta1 = analytic.db_gaussian(2, 10, 0.4), analytic.eta_gaussian(2, 10, 0.4)
    db2, eta2 = analytic.db_gaussian(4, 5, 0.4), analytic.eta_gaussian(4, 5, 0.4)
    ok = (0.8315 <= db1 <= 0.8325 and 0.140 <= eta1 <= 0.142
          and 0.775 <= db2 <= 0.777 and 0.199 <= eta2 <= 0.200)
    record(1, ok, f"(2,10): DB={db1:.5f} eta={eta1:.5f}; (4,5): DB={db2:.5f} eta={eta2:.5f}")
    assert ok


def test_criterion_2_mc_vs_exact_gaussian():
    n, alpha = 1_000_000, 0.01
    start = time.perf_counter()
    worst_db, worst_z, fails = 0.0, 0.0, []
    for k, m, rho in itertools.product([2, 3], [2, 3], [-0.2, 0.0, 0.4, 0.8]):
        tree = TreeSpec(k, m, MarginalSpec.normal(), CopulaSpec.gaussian(k, rho))
        root = hierarchy.aggregate_mc(tree, n, SEED).root
        db = 1.0 - empirical_xtvar(root, alpha) / hierarchy.standalone_sum_at_risk(tree, alpha)
        var = analytic.sigma_level(analytic.GaussianTreeParams(k, m, rho), 0) ** 2
        z = (root.var(ddof=1) - var) / (var * math.sqrt(2.0 / (n - 1)))
        d = abs(db - analytic.db_gaussian(k, m, rho))
        worst_db, worst_z = max(worst_db, d), max(worst_z, abs(z))
        if not (d < 0.01 and abs(z) < 3.0):
            fails.append((k, m, rho, d, z))
    elapsed = time.perf_counter() - start
    ok = not fails and elapsed < 120
    record(2, ok, f"16 configs, max |dDB|={worst_db:.4f}, max |z_var|={worst_z:.2f}, {elapsed:.0f}s, failures={fails}")
    assert ok


def test_criterion_3_ci_covariance():
    worst_v, worst_eig, worst_sum = 0.0, math.inf, 0.0
    ok = True
    for k, m, rho in itertools.product([2, 3, 4], [1, 2, 3], [-0.2, 0.0, 0.3, 0.7]):
        c = covariance.build_ci_covariance(k, m, rho)
        v = covariance.verify_ci(c).max_violation
        lo, hi = c.eigen_range()
        rel = abs(c.total_variance / c.sigma_z_squared() - 1.0)
        worst_v, worst_sum = max(worst_v, v), max(worst_sum, rel)
        worst_eig = min(worst_eig, lo / hi)
        ok &= v < 1e-10 and lo >= -1e-10 * hi and rel < 1e-9
    record(3, ok, f"36 configs, max violation={worst_v:.2e}, min eig/max eig={worst_eig:.2e}, grand-sum rel err={worst_sum:.2e}")
    assert ok


def test_criterion_4_construction_equivalence():
    n = 100_000
    parts, ok = [], True
    for k, m, rho in [(2, 3, 0.4), (3, 2, 0.8)]:
        tree = TreeSpec(k, m, MarginalSpec.normal(), CopulaSpec.gaussian(k, rho))
        root = hierarchy.aggregate_mc(tree, n, SEED).root
        joint = covariance.sample_joint(covariance.build_ci_covariance(k, m, rho), n, SEED).levels[m].sum(axis=0)
        ratio = joint.var(ddof=1) / root.var(ddof=1)
        p = stats.ks_2samp(joint, root).pvalue
        good = 0.99 <= ratio <= 1.01 and p > 0.01
        ok &= good
        parts.append(f"({k},{m},{rho}): var ratio={ratio:.4f}, KS p={p:.3f}")
    record(4, ok, "; ".join(parts))
    assert ok


def test_criterion_5_effective_correlation():
    k, m, rho, n = 2, 4, 0.5, 1_000_000
    x = covariance.sample_joint(covariance.build_ci_covariance(k, m, rho), n, SEED).levels[m]
    r = np.corrcoef(x)
    idx = np.arange(k**m)
    lvl = covariance.common_ancestor_level(idx[:, None], idx[None, :], k, m)
    off = ~np.eye(k**m, dtype=bool)
    parts, ok = [], True
    for p in range(m):
        target = covariance.effective_correlation(k, m, rho, p)
        dev = float(np.abs(r[(lvl == p) & off] - target).max())
        ok &= dev < 0.005
        parts.append(f"p={p}: target={target:.5f} max dev={dev:.4f}")
    record(5, ok, "; ".join(parts))
    assert ok


def test_criterion_6_lognormal_endpoints():
    start = time.perf_counter()
    tree = TreeSpec(3, 6, LOGNORMAL, CopulaSpec.independence(3))
    s1 = hierarchy.standalone_sum_at_risk(tree, 0.01)
    assert s1 == pytest.approx(729 * exact_xtvar(LOGNORMAL, 0.01), rel=1e-14)
    s0 = empirical_xtvar(hierarchy.independent_baseline(tree, 200_000, SEED).root, 0.01)
    elapsed = time.perf_counter() - start
    ok = 21.3e9 <= s1 <= 23.5e9 and 1.15e9 <= s0 <= 1.45e9 and elapsed < 120
    record(6, ok, f"S1={s1 / 1e9:.3f}bn (exact), S0={s0 / 1e9:.3f}bn (MC n=200000), {elapsed:.0f}s")
    assert ok


def _eta_second_differences(k, m):
    grid = np.round(np.arange(0.0, 1.0 + 1e-9, 0.01), 10)
    return np.diff([analytic.eta_gaussian(k, m, r) for r in grid], 2)


def _mc_db(kind, grid, n):
    cfg = config.from_dict({
        "mode": "mc",
        "tree": {"shapes": [[3, 6], [729, 1]]},
        "marginal": {"kind": "lognormal", "mean": 670_000, "sd": 8.1e6},
        "copula": {"kind": kind, "grid": grid},
        "n_sims": n,
        "seed": SEED,
    })
    text, _ = cli.cmd_simulate(cfg)
    db = {}
    for row in csv.DictReader(io.StringIO(text)):
        db[(row["k"], row["param"])] = float(row["DB"])
    return {g: (db[("3", g)], db[("729", g)]) for g in (cli._fmt(float(v)) if v != "inf" else "inf" for v in grid)}


def test_criterion_7_shape_and_convexity():
    # (a) thin beats fat, exact
    order = [(r.k, r.m) for r in analytic.compare_shapes(1024, [(4, 5), (32, 2), (2, 10)], 0.4)]
    ok_a = order == [(2, 10), (4, 5), (32, 2)]
    # (b) curvature of eta(rho) for k = 3
    ok_b = all((_eta_second_differences(3, m) >= -1e-15).all() for m in range(3, 11))
    ok_b &= bool((_eta_second_differences(3, 1) <= 1e-15).all())
    # (c) hierarchical (3, 6) against flat (729, 1), Monte Carlo
    n = 50_000
    gauss = _mc_db("gaussian", [0, 0.2, 0.4, 0.6, 0.8, 1], n)
    clay = _mc_db("clayton", [0, 0.5, 2, 10, "inf"], n)
    gaps = {f"g{g}": h - f for g, (h, f) in gauss.items()} | {f"c{g}": h - f for g, (h, f) in clay.items()}
    ok_c = all(v >= -0.01 for v in gaps.values())
    ok = ok_a and ok_b and ok_c
    worst = min(gaps, key=gaps.get)
    record(7, ok, f"(a) order={order} {ok_a}; (b) {ok_b}; (c) n={n}, DB(3,6)-DB(729,1) min {gaps[worst]:.4f} at {worst} {ok_c}")
    assert ok


def test_criterion_8_copula_statistics():
    n = 1_000_000
    parts, ok = [], True
    for k, rho in [(3, 0.4), (4, -0.2), (2, 0.8)]:
        z = std_normal_quantile(sample_copula(CopulaSpec.gaussian(k, rho), n, SEED))
        r = np.corrcoef(z, rowvar=False)[np.triu_indices(k, 1)]
        dev = float(np.abs(r - rho).max())
        ok &= dev < 0.004
        parts.append(f"gauss k={k} rho={rho}: max dev={dev:.4f}")
    g = np.random.default_rng(SEED)
    for theta in (0.5, 2.0):
        u = sample_copula(CopulaSpec.clayton(2, theta), n, SEED)
        sub = u[g.choice(n, 10_000, replace=False)]
        tau = brute_kendall_tau(sub[:, 0], sub[:, 1])
        target = theta / (theta + 2)
        ok &= abs(tau - target) < 0.01
        parts.append(f"clayton theta={theta}: tau={tau:.4f} (target {target:.4f})")
    record(8, ok, "; ".join(parts))
    assert ok


def test_criterion_9_determinism(tmp_path):
    docs = {
        "mc-gauss": {"mode": "mc", "tree": {"shapes": [[3, 3], [27, 1]]},
                     "marginal": {"kind": "lognormal", "mean": 670_000, "sd": 8.1e6},
                     "copula": {"kind": "gaussian", "grid": [-0.03, 0.3, 1]}, "n_sims": 20_000, "seed": 7},
        "mc-clayton": {"mode": "mc", "tree": {"k": 4, "m": 2},
                       "copula": {"kind": "clayton", "grid": [0, 1.5, "inf"]}, "n_sims": 20_000, "seed": 7},
        "both": {"mode": "both", "tree": {"k": 3, "m": 2}, "copula": {"grid": [0.4, 0.8]}, "n_sims": 20_000, "seed": 7},
        "covariance": {"mode": "covariance", "tree": {"k": 3, "m": 3}, "copula": {"grid": [0.3]}},
        "analytic": {"mode": "analytic", "tree": {"k": 3, "m": [1, 5, 9]}, "copula": {"grid": [0, 0.5, 1]}},
    }
    bad = []
    for name, doc in docs.items():
        path = tmp_path / f"{name}.json"
        path.write_text(config.from_dict(doc).to_json())
        outs = []
        for i, threads in enumerate(["1", "1", "4"]):
            out = tmp_path / f"{name}-{i}.csv"
            assert cli.main(["--config", str(path), "--out", str(out), "--threads", threads]) == 0
            outs.append(out.read_bytes())
        if len(set(outs)) != 1:
            bad.append(name)
    ok = not bad
    record(9, ok, f"{len(docs)} experiments x (1, 1, 4 workers): byte-identical CSV; mismatches={bad}")
    assert ok
