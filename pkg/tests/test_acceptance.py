"""Acceptance suite: one test per criterion, each prints a PASS/FAIL line in the summary."""

import itertools
import math
import time

import numpy as np
import pytest

from conftest import rand_dist, rand_scenario, tv_pair
from oracles import binom_interval, prokhorov_brute
from robustmech.cli import run_experiment
from robustmech.dist import (DiscreteDist, GridSpec, ProductDist, expected_rounded_tv, fosd, kolmogorov_distance,
                             levy_ball_extremes, levy_distance, prokhorov_distance, round_dist, rounded_tv_batch,
                             shift, tv_distance)
from robustmech.learn import (BayesNet, Mrf, SampleSet, bn_hybrid_check, learn_product, mrf_joint,
                              mrf_round_potentials, product_of_marginals, product_sample_count)
from robustmech.mech import BOTTOM, eps_bic_regret, eps_dsic_regret, extend_mechanism, revenue_exact
from robustmech.multi_item import (Scenario, bic_gap_report, bic_prokhorov_robustify, dsic_tv_robustify,
                                   nisan_ic_transform, opt_bic_lp, opt_dsic_lp, tail_fractions, tv_robustify)
from robustmech.single_item import levy_robust, myerson_optimal, myerson_revenue, shift_mechanism
from robustmech.valuation import ADDITIVE

pytestmark = pytest.mark.acceptance


@pytest.fixture
def verdict(record_property):
    def check(ok, detail):
        record_property("detail", detail)
        assert ok, detail
    return check


def single_item(rng, n, kmax=4, grid=None):
    return [rand_dist(rng, int(rng.integers(1, kmax + 1)), grid=grid) for _ in range(n)]


def dominating(rng, f, H=1.0):
    """Push atoms up and move some mass upward; the result FOSD-dominates f."""
    pts = np.minimum(f.support[:, 0] + rng.uniform(0, 0.3, size=len(f)) * (rng.random(len(f)) < 0.7), H)
    extra = rng.uniform(pts.max(), H)
    t = rng.uniform(0, 0.3)
    probs = np.append(f.probs * (1 - t), t)
    return DiscreteDist(np.append(pts, extra).reshape(-1, 1), probs, normalize=True)


def kolmogorov_nudge(rng, f, eps):
    """(1 - eps) f + eps g has Kolmogorov distance eps * K(f, g) <= eps from f."""
    g = rand_dist(rng, int(rng.integers(1, 3)))
    pts = np.vstack([f.support, g.support])
    return DiscreteDist(pts, np.concatenate([(1 - eps) * f.probs, eps * g.probs]), normalize=True)


def levy_member(rng, f, eps):
    """Move atoms by at most eps/2, then mix in eps/2 fresh mass: Levy distance <= eps."""
    a = eps / 2
    moved = DiscreteDist(f.support + rng.uniform(-a, a, size=f.support.shape), f.probs, normalize=True)
    return kolmogorov_nudge(rng, moved, a)


def prokhorov_nudge(rng, f, eps, H=1.0):
    """Move every atom by less than eps in l1 (inside [0, H]); Prokhorov distance < eps."""
    step = rng.uniform(-1, 1, size=f.support.shape)
    step *= 0.999 * eps / np.abs(step).sum(axis=1, keepdims=True)
    return DiscreteDist(np.clip(f.support + step, 0, H), f.probs, normalize=True)


# ------------------------------------------------------------------ single item

def test_c01_myerson_optimality(verdict):
    rng = np.random.default_rng(101)
    start, worst = time.perf_counter(), 0.0
    for k in range(100):
        ds = single_item(rng, int(rng.integers(1, 4)), grid=0.05 if k % 2 else None)
        M, _ = myerson_optimal(ds)
        lp, _ = opt_dsic_lp(Scenario(len(ds), 1, 1.0, ADDITIVE, ProductDist(ds)))
        worst = max(worst, abs(revenue_exact(M, ProductDist(ds)) - lp))
    secs = time.perf_counter() - start
    verdict(worst <= 1e-6 and secs < 30, f"max |myerson - lp| = {worst:.2e} over 100 instances in {secs:.1f}s")


def test_c02_revenue_monotonicity(verdict):
    rng = np.random.default_rng(102)
    worst = -np.inf
    for _ in range(200):
        F = single_item(rng, int(rng.integers(1, 4)))
        Fp = [dominating(rng, f) for f in F]
        assert all(fosd(f, g) for f, g in zip(F, Fp))
        M, _ = myerson_optimal(F, H=1.0)
        worst = max(worst, myerson_revenue(F) - revenue_exact(extend_mechanism(M), ProductDist(Fp)))
    verdict(worst <= 1e-6, f"max OPT(F) - Rev(M, F') = {worst:.2e} over 200 dominated pairs")


def test_c03_kolmogorov_continuity(verdict):
    rng = np.random.default_rng(103)
    worst = 0.0
    for k in range(100):
        eps = (0.02, 0.05)[k % 2]
        F = single_item(rng, int(rng.integers(1, 4)), grid=0.05)
        Fh = [kolmogorov_nudge(rng, f, eps) for f in F]
        assert max(kolmogorov_distance(f, g) for f, g in zip(F, Fh)) <= eps + 1e-12
        n = len(F)
        opt = opt_bic_lp(Scenario(n, 1, 1.0, ADDITIVE, ProductDist(F)))[0]
        opt_h = opt_bic_lp(Scenario(n, 1, 1.0, ADDITIVE, ProductDist(Fh)))[0]
        worst = max(worst, abs(opt - opt_h) - 3 * n * eps)
    verdict(worst <= 1e-6, f"max |OPT(D) - OPT(D^)| - 3nHε = {worst:.3f} over 100 pairs")


def test_c04_levy_robustness(verdict):
    rng = np.random.default_rng(104)
    worst, checked = -np.inf, 0
    for k in range(40):
        eps = (0.02, 0.05, 0.1)[k % 3]
        F = single_item(rng, int(rng.integers(1, 4)))
        n = len(F)
        Mstar = levy_robust(ProductDist(F), eps, H=1.0)
        options = []
        for f in F:
            lo, hi = levy_ball_extremes(f, eps, H=1.0)
            members = [lo, hi, shift(f, eps), shift(f, -eps)] + [levy_member(rng, f, eps) for _ in range(3)]
            assert all(levy_distance(f, g) <= eps + 1e-9 for g in members)
            options.append(members)
        for choice in range(8):
            idx = [choice % 4] * n if choice < 4 else rng.integers(0, 7, size=n)
            Dh = ProductDist([options[i][j] for i, j in enumerate(idx)])
            gap = myerson_revenue(Dh) - revenue_exact(Mstar, Dh)
            worst = max(worst, gap - (6 * n + 3 * n * eps + 2) * eps)
            checked += 1
    verdict(worst <= 1e-6, f"max gap - (6nH+3nε+2)ε = {worst:.3f} over {checked} adversarial D^")


def test_c05_shifted_mechanism(verdict):
    rng = np.random.default_rng(105)
    worst, dsic, ir = -np.inf, 0.0, True
    for k in range(100):
        eps = (0.01, 0.05, 0.1)[k % 3]
        F = single_item(rng, int(rng.integers(1, 4)))
        right = [shift(f, eps) for f in F]
        left = [shift(f, -eps) for f in F]
        M, _ = myerson_optimal(right, H=1.0 + eps)
        Mp = shift_mechanism(M, eps)
        loss = revenue_exact(M, ProductDist(right)) - revenue_exact(Mp, ProductDist(left))
        worst = max(worst, loss - 2 * eps)
        rep = eps_dsic_regret(Mp)
        dsic, ir = max(dsic, rep.eps), ir and rep.ir_ok
    verdict(worst <= 1e-9 and dsic <= 1e-9 and ir,
            f"max loss - 2ε = {worst:.2e}; DSIC regret {dsic:.1e}; IR {ir}")


# ------------------------------------------------------------------ distances

def test_c06_prokhorov_oracle(verdict):
    rng = np.random.default_rng(106)
    worst, far = 0.0, -np.inf
    for k in range(150):
        dim = 1 + k % 2
        p = rand_dist(rng, int(rng.integers(1, 6)), dim, grid=0.05 if k % 3 else None)
        q = rand_dist(rng, int(rng.integers(1, 6)), dim, grid=0.05 if k % 3 else None)
        res = prokhorov_distance(p, q, with_witness=True)
        worst = max(worst, abs(res.distance - prokhorov_brute(p, q)))
        assert res.witness.check()
        far = max(far, res.witness.far_mass(res.distance) - res.distance)
    verdict(worst <= 1e-7 and far <= 1e-6,
            f"max |search - brute| = {worst:.1e}; max Pr[l1 > ε*] - ε* = {far:.1e} over 150 pairs")


def test_c07_randomized_rounding(verdict):
    rng = np.random.default_rng(107)
    worst = -np.inf
    for k in range(50):
        dim = 1 + k % 2
        p = rand_dist(rng, int(rng.integers(1, 5)), dim)
        q = DiscreteDist(np.clip(p.support + rng.normal(0, 0.03, size=p.support.shape), 0, 1), p.probs)
        if k % 5 == 0:
            q = rand_dist(rng, 3, dim)
        pk = prokhorov_distance(p, q)
        for delta in (0.1, 0.5):
            mean, se = expected_rounded_tv(p, q, delta, 10 ** 4, rng)
            # second route for one offset: round both sides and take TV directly
            off = rng.uniform(0, delta, size=dim)
            g = GridSpec(off, delta)
            assert rounded_tv_batch(p, q, delta, off)[0] == pytest.approx(
                tv_distance(round_dist(p, g), round_dist(q, g)), abs=1e-12)
            worst = max(worst, mean - (1 + 1 / delta) * pk - 3 * se)
    verdict(worst <= 0, f"max E[TV] - (1+1/δ)·Prokhorov - 3se = {worst:.3f} over 50 pairs x 2 widths")


# ------------------------------------------------------------------ multi item

def test_c08_tv_transform(verdict):
    worst_r, worst_l, ir = -np.inf, -np.inf, True
    for seed in range(100):
        rng = np.random.default_rng(10800 + seed)
        s = rand_scenario(rng, 2, 1 + seed % 2, 2)
        M = opt_bic_lp(s, (0.0, 0.05)[seed % 2])[1]
        eta = eps_bic_regret(M, s.D).eps
        Fh = tv_pair(rng, s.D, rng.uniform(0, 0.3, size=s.n))
        rho = sum(tv_distance(a, b) for a, b in zip(s.D, Fh))
        M2 = tv_robustify(M, s.D)
        reports = [sorted(set(a.points) | set(b.points)) + [BOTTOM] for a, b in zip(s.D, Fh)]
        rep = eps_bic_regret(M2, Fh, reports)
        mLH = s.m * s.L * s.H
        worst_r = max(worst_r, rep.eps - (2 * mLH * rho + eta))
        worst_l = max(worst_l, revenue_exact(M, s.D) - revenue_exact(M2, Fh) - s.n * mLH * rho)
        ir = ir and rep.ir_ok
    verdict(worst_r <= 1e-6 and worst_l <= 1e-6 and ir,
            f"max regret - (2mLHρ+η) = {worst_r:.3f}; max loss - nmLHρ = {worst_l:.3f}; IR {ir}")


def _floored_revenue(M, D, shift_by):
    return sum(pr * np.maximum(M.outcome(p).payments - shift_by, 0.0).sum() for p, pr in D.profiles())


def _pipeline_ratio(seed):
    rng = np.random.default_rng(seed)
    s = rand_scenario(rng, 2, 2, 2)
    M = opt_bic_lp(s)[1]
    eps = (0.005, 0.01, 0.02)[seed % 3]
    Dh = ProductDist([prokhorov_nudge(rng, f, eps) for f in s.D])
    pipe = bic_prokhorov_robustify(M, s, eps, K=4, seed=seed)
    n, m, L, H = s.n, s.m, s.L, s.H
    return pipe.averaged_regret(Dh).eps / (n * m * L * H * eps + m * L * math.sqrt(n * H * eps))


def test_c09_prokhorov_pipeline(verdict):
    comp = 0.0
    for seed in range(30):
        rng = np.random.default_rng(10900 + seed)
        s = rand_scenario(rng, 2, 1 + seed % 2, 2)
        M = opt_bic_lp(s)[1]
        eps = 0.01
        Dh = ProductDist([prokhorov_nudge(rng, f, eps) for f in s.D])
        pipe = bic_prokhorov_robustify(M, s, eps, K=2, seed=seed)
        mL, d = s.m * s.L, pipe.delta
        for b, a in zip(pipe.branches, pipe.audit(Dh)):
            Rh = ProductDist([round_dist(f, b.grid) for f in Dh.factors])
            shift_by = mL * d
            comp = max(comp,
                       a.xi1 - 3 * mL * d,
                       a.final - (a.xi2 + 3 * mL * d),
                       abs(a.revenue_m1 - _floored_revenue(M, s.D, shift_by)),
                       abs(a.revenue - _floored_revenue(b.M2, Rh, shift_by)),
                       revenue_exact(M, s.D) - s.n * shift_by - a.revenue_m1,
                       a.revenue_m2 - s.n * shift_by - a.revenue)
            assert a.ir_ok
    c_a = max(_pipeline_ratio(seed) for seed in range(150))
    c_b = max(_pipeline_ratio(seed) for seed in range(150, 300))
    stable = abs(c_b - c_a) <= 0.2 * c_a
    verdict(comp <= 1e-6 and stable,
            f"component slack {comp:.1e}; fitted c = {c_a:.3f} (seeds 0-149) vs {c_b:.3f} (seeds 150-299)")


def test_c10_dsic_pipeline(verdict):
    inc_support, inc_full, broken = 0.0, 0.0, 0
    for seed in range(100):
        rng = np.random.default_rng(11000 + seed)
        n, m = 2, 1 + seed % 2
        s = rand_scenario(rng, n, m, 3 if m == 1 else 2)
        M = opt_dsic_lp(s, 0.05 * (seed % 3))[1]
        eta = eps_dsic_regret(M).eps
        Fh = tv_pair(rng, s.D, rng.uniform(0, 0.3, size=n))
        M2 = dsic_tv_robustify(M, s.D)
        types = [sorted(set(a.points) | set(b.points)) for a, b in zip(s.D, Fh)]
        rep = eps_dsic_regret(M2, types, [t + [BOTTOM] for t in types])
        assert rep.ir_ok
        inc_full = max(inc_full, rep.eps - eta)
        broken += rep.eps - eta > 1e-9
        # same audit with the other bidders restricted to supp(F)
        for i in range(n):
            grid = [types[j] if j == i else list(s.D.factors[j].points) for j in range(n)]
            inc_support = max(inc_support, eps_dsic_regret(M2, grid, [t + [BOTTOM] for t in grid]).per_bidder[i] - eta)

    tail_ok, tails = True, []
    rng = np.random.default_rng(11001)
    for k in range(20):
        s = rand_scenario(rng, 2, 1 + k % 2, 3)
        eps = 0.001
        Dh = ProductDist([prokhorov_nudge(rng, f, eps) for f in s.D])
        pk = max(prokhorov_distance(a, b) for a, b in zip(s.D, Dh))
        delta = s.n * math.sqrt(s.H * eps)
        for alpha in (0.25, 0.5):
            fr, any_bad, _ = tail_fractions(s.D, Dh, delta, pk, alpha, 400, k)
            lo = [binom_interval(round(f * 400), 400)[0] for f in fr]
            tails.append(max(fr))
            tail_ok &= all(x <= alpha / s.n for x in lo) and binom_interval(round(any_bad * 400), 400)[0] <= alpha

    verdict(inc_full <= 1e-9 and tail_ok,
            f"regret increase {inc_full:.3f} with opponents on supp(F^) ({broken}/100 instances), "
            f"{inc_support:.1e} with opponents on supp(F); Markov tails ok {tail_ok} (max fraction {max(tails):.3f})")


def test_c11_bic_gap(verdict):
    worst, count = -np.inf, 0
    for seed in range(50):
        rng = np.random.default_rng(11100 + seed)
        s = rand_scenario(rng, 2, 1 + seed % 2, 2 if seed % 2 else 3)
        for eps in (0.01, 0.04):
            rep = bic_gap_report(s, eps)
            worst = max(worst, rep.gap - rep.bound)
            count += 1
    verdict(worst <= 1e-6, f"max (OPT_ε - OPT) - 2n√(mLHε) = {worst:.3f} over {count} LPs")


def test_c12_menu_transform(verdict):
    regret, ir, worst = 0.0, True, -np.inf
    for seed in range(100):
        rng = np.random.default_rng(11200 + seed)
        m = 1 + seed % 2
        s = rand_scenario(rng, 1, m, 4)
        eps = (0.01, 0.04, 0.1)[seed % 3]
        M = opt_bic_lp(s, eps)[1]
        N = nisan_ic_transform(M, eps)
        probes = sorted(set(s.D.factors[0].points) | {tuple(rng.uniform(0, 1, m)) for _ in range(6)})
        rep = eps_dsic_regret(N, [probes])
        regret, ir = max(regret, rep.eps), ir and rep.ir_ok
        r = math.sqrt(eps)
        worst = max(worst, (1 - r) * (revenue_exact(M, s.D) - r) - revenue_exact(N, s.D))
    verdict(regret <= 1e-9 and ir and worst <= 1e-9,
            f"max regret {regret:.1e}; IR {ir}; max (1-√ε)(Rev-√ε) - Rev(N) = {worst:.3f} over 100 instances")


# ------------------------------------------------------------------ learning

def test_c13_product_learning(verdict):
    eta, delta_fail, trials = 0.2, 0.1, 200
    rng = np.random.default_rng(113)
    hits = 0
    for t in range(trials):
        m = 1 + t % 3
        truth = product_of_marginals([rand_dist(rng, int(rng.integers(1, 4))) for _ in range(m)])
        N = product_sample_count(m, 1.0, eta, delta_fail)
        learned = learn_product(SampleSet.draw(truth, N, 1000 + t), eta, 1.0)
        hits += prokhorov_distance(learned, truth) <= eta
    margin = 1.96 * math.sqrt(delta_fail * (1 - delta_fail) / trials)
    need = (1 - delta_fail) - margin
    verdict(hits / trials >= need, f"{hits}/{trials} within η (need ≥ {need:.3f})")


def _random_bn(rng, k):
    parents = [(), tuple(j for j in (0,) if rng.random() < 0.7),
               tuple(j for j in (0, 1) if rng.random() < 0.6)]
    cpts = [{cfg: rng.dirichlet(np.ones(k)) for cfg in itertools.product(range(k), repeat=len(pa))}
            for pa in parents]
    return BayesNet(parents, list(range(k)), cpts)


def _joint_table(bn, k):
    """Independent enumeration of the joint pmf, indexed by value tuples."""
    out = {}
    for x in itertools.product(range(k), repeat=3):
        out[x] = math.prod(bn.cpts[v][tuple(x[p] for p in bn.parents[v])][x[v]] for v in range(3))
    return out


def test_c14_bayesnet_hybrid(verdict):
    rng = np.random.default_rng(114)
    worst = -np.inf
    for _ in range(1000):
        k = int(rng.integers(2, 4))
        p = _random_bn(rng, k)
        scale = rng.uniform(0, 0.5)
        cpts = [{cfg: (1 - scale) * row + scale * rng.dirichlet(np.ones(k)) for cfg, row in tab.items()}
                for tab in p.cpts]
        q = BayesNet(p.parents, p.alphabet, cpts)
        row_tv = max(0.5 * np.abs(row - q.cpts[v][cfg]).sum() for v in range(3) for cfg, row in p.cpts[v].items())
        jp, jq = _joint_table(p, k), _joint_table(q, k)
        joint = 0.5 * sum(abs(jp[x] - jq[x]) for x in jp)
        bound, lib_joint, _ = bn_hybrid_check(p, q)
        assert lib_joint == pytest.approx(joint, abs=1e-12) and bound == pytest.approx(3 * row_tv)
        worst = max(worst, joint - 3 * row_tv)
    verdict(worst <= 1e-9, f"max joint TV - |V|·row TV = {worst:.3f} over 1000 perturbations")


def test_c15_mrf_rounding(verdict):
    rng = np.random.default_rng(115)
    worst = -np.inf
    for _ in range(1000):
        V = int(rng.integers(2, 4))
        edges = [e for e in itertools.combinations(range(V), 2) if rng.random() < 0.7] or [(0, 1)]
        mrf = Mrf(V, [0, 1], [rng.uniform(0.01, 1, 2) for _ in range(V)], edges,
                  [rng.uniform(0.01, 1, (2, 2)) for _ in edges])
        eps = float(rng.choice([0.01, 0.05, 0.1, 0.3]))
        tv = tv_distance(mrf_joint(mrf), mrf_joint(mrf_round_potentials(mrf, eps)))
        worst = max(worst, tv - eps)
    verdict(worst <= 0, f"max joint TV - ε = {worst:.3f} over 1000 random fields")


# ------------------------------------------------------------------ end to end

E2E = {"experiment": "end_to_end", "samples": 10 ** 6, "eps": 0.002, "grids": 4, "eps_target": 0.3,
       "learn_eta": 0.2,
       "truth": {"n": 1, "m": 2, "H": 1.0, "model": "additive",
                 "factors": [{"dim": 2, "support": [[0.2, 0.4], [0.2, 1.0], [0.8, 0.4], [0.8, 1.0]],
                              "probs": [0.3, 0.2, 0.3, 0.2]}]}}


def test_c16_end_to_end(verdict):
    start = time.perf_counter()
    rows = run_experiment(E2E, seed=116, trials=50)
    short = [r for r in rows if r.metric == "revenue_shortfall"]
    ok = sum(r.passed for r in short)
    close = sum(r.passed for r in rows if r.metric == "learned_prokhorov")
    secs = time.perf_counter() - start
    verdict(ok >= 45, f"{ok}/50 trials with Rev ≥ OPT_η - 0.3 (max shortfall {max(r.measured for r in short):.3f}); "
                      f"learned within ε in {close}/50; {secs:.0f}s")
