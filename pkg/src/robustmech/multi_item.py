"""Optimal-revenue LPs and the robustifying transforms for multi-item auctions."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .dist import (GridSpec, ProductDist, as_point, condition_on, dist_from_json,
                   preimage_mask, round_dist, rounded_tv_batch, tv_distance)
from .errors import (BaseMechanismNotIR, ConfigError, InstanceTooLarge, InvalidEpsilon, LpInfeasible,
                     MultiBidderUnsupported)
from .lpcore import GE, LE, LpProblem, lp_solve
from .mech import (BOTTOM, ENUM_CAP, FunctionMechanism, Mechanism, Outcome, TabularMechanism, TypeSpace,
                   eps_bic_regret, eps_dsic_regret, interim_tables, ir_check, mix_outcomes, revenue_exact)
from .valuation import ValuationModel, model_from_json

LP_VAR_CAP = 6000


@dataclass
class Scenario:
    n: int
    m: int
    H: float
    model: ValuationModel
    D: ProductDist

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ConfigError("need at least one bidder and one item")
        if self.D.n != self.n or self.D.dim != self.m:
            raise ConfigError(f"distribution shape ({self.D.n} bidders, dim {self.D.dim}) "
                              f"disagrees with n={self.n}, m={self.m}")
        self.model.check_items(self.m)

    @property
    def L(self):
        return self.model.L

    def check_range(self, slack=1e-9):
        for i, f in enumerate(self.D.factors):
            if f.support.min() < -slack or f.support.max() > self.H + slack:
                raise ConfigError(f"bidder {i} has types outside [0, {self.H}]^{self.m}")

    def with_dist(self, D: ProductDist):
        return Scenario(self.n, self.m, self.H, self.model, D)

    @classmethod
    def from_json(cls, obj, load_factor=None):
        missing = [k for k in ("n", "m", "H", "model", "factors") if k not in obj]
        if missing:
            raise ConfigError(f"scenario lacks {', '.join(missing)}")
        factors = []
        for f in obj["factors"]:
            if isinstance(f, str):
                if load_factor is None:
                    raise ConfigError("factor given as a path but no loader supplied")
                factors.append(load_factor(f))
            else:
                factors.append(dist_from_json(f))
        s = cls(int(obj["n"]), int(obj["m"]), float(obj["H"]), model_from_json(obj["model"]), ProductDist(factors))
        s.check_range()
        return s

    def to_json(self):
        return {"n": self.n, "m": self.m, "H": self.H, "model": self.model.to_json(),
                "factors": [f.to_json() for f in self.D.factors]}


def assignments(n, m):
    """Every deterministic item-to-bidder map that sells at least one item."""
    out = []
    for owners in itertools.product(range(-1, n), repeat=m):
        if all(o < 0 for o in owners):
            continue
        out.append(tuple(frozenset(j for j, o in enumerate(owners) if o == i) for i in range(n)))
    return out


class _LpLayout:
    def __init__(self, s: Scenario):
        self.s = s
        self.sizes = [len(f) for f in s.D.factors]
        self.P = math.prod(self.sizes)
        self.assign = assignments(s.n, s.m)
        self.nA = len(self.assign)
        self.nvars = self.P * (self.nA + s.n)
        if self.P > ENUM_CAP or self.nvars > LP_VAR_CAP:
            raise InstanceTooLarge(
                f"LP would have {self.nvars} variables over {self.P} profiles (cap {LP_VAR_CAP})")
        self.keys = list(itertools.product(*(range(k) for k in self.sizes)))
        self.strides = np.cumprod([1] + self.sizes[::-1][:-1])[::-1]
        self.probs = np.array([math.prod(s.D.factors[i].probs[k] for i, k in enumerate(key)) for key in self.keys])
        # val[i][k, a]: bidder i with its k-th type, value for assignment a
        self.val = [np.array([[s.model.value(pt, a[i]) for a in self.assign] for pt in s.D.factors[i].points])
                    for i in range(s.n)]

    def pidx(self, key):
        return int(np.dot(key, self.strides))

    def y(self, p):
        return p * self.nA

    def pay(self, p, i):
        return self.P * self.nA + p * self.s.n + i

    def base_rows(self):
        s = self.s
        rows, rels, rhs = [], [], []
        for p in range(self.P):
            r = np.zeros(self.nvars)
            r[self.y(p):self.y(p) + self.nA] = 1.0
            rows.append(r), rels.append(LE), rhs.append(1.0)
        for p, key in enumerate(self.keys):
            for i in range(s.n):
                r = np.zeros(self.nvars)
                r[self.y(p):self.y(p) + self.nA] = self.val[i][key[i]]
                r[self.pay(p, i)] = -1.0
                rows.append(r), rels.append(GE), rhs.append(0.0)
        return rows, rels, rhs

    def utility_row(self, r, p, i, k, weight):
        """Add weight * (bidder i of type k's utility at profile p) to row r."""
        r[self.y(p):self.y(p) + self.nA] += weight * self.val[i][k]
        r[self.pay(p, i)] -= weight

    def solve(self, rows, rels, rhs):
        s = self.s
        obj = np.zeros(self.nvars)
        for p in range(self.P):
            obj[self.pay(p, 0):self.pay(p, 0) + s.n] = self.probs[p]
        bounds = [(0.0, np.inf)] * (self.P * self.nA) + [(-np.inf, np.inf)] * (self.P * s.n)
        sol = lp_solve(LpProblem(obj, np.array(rows), rels, np.array(rhs), bounds))
        if not sol.optimal:
            raise LpInfeasible(f"revenue LP returned {sol.status.value}; the zero mechanism is always feasible")
        x = sol.x
        table = {}
        for p, key in enumerate(self.keys):
            ys = np.clip(x[self.y(p):self.y(p) + self.nA], 0.0, None)
            tot = ys.sum()
            if tot > 1.0:
                ys = ys / tot
            lot = [(self.assign[a], ys[a]) for a in np.flatnonzero(ys > 1e-12)]
            table[key] = Outcome(lot, x[self.pay(p, 0):self.pay(p, 0) + s.n])
        mech = TabularMechanism(TypeSpace.of(s.D), table, s.n, s.m, s.H, s.model)
        return float(sol.objective), mech


def opt_bic_lp(s: Scenario, eta: float = 0.0):
    """Best revenue over eta-BIC, ex-post IR mechanisms on supp(D), with a maximizer."""
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    lay = _LpLayout(s)
    rows, rels, rhs = lay.base_rows()
    for i in range(s.n):
        others = [j for j in range(s.n) if j != i]
        rest_keys = list(itertools.product(*(range(lay.sizes[j]) for j in others)))
        rest_probs = [math.prod(s.D.factors[j].probs[k] for j, k in zip(others, rk)) for rk in rest_keys]
        for k in range(lay.sizes[i]):
            for t in range(lay.sizes[i]):
                if t == k:
                    continue
                r = np.zeros(lay.nvars)
                for rk, w in zip(rest_keys, rest_probs):
                    full = list(rk)
                    full.insert(i, k)
                    lay.utility_row(r, lay.pidx(full), i, k, w)
                    full[i] = t
                    lay.utility_row(r, lay.pidx(full), i, k, -w)
                rows.append(r), rels.append(GE), rhs.append(-eta)
    return lay.solve(rows, rels, rhs)


def opt_dsic_lp(s: Scenario, gamma: float = 0.0):
    """Best revenue over gamma-DSIC, ex-post IR mechanisms on supp(D), with a maximizer."""
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    lay = _LpLayout(s)
    rows, rels, rhs = lay.base_rows()
    for p, key in enumerate(lay.keys):
        for i in range(s.n):
            for t in range(lay.sizes[i]):
                if t == key[i]:
                    continue
                alt = list(key)
                alt[i] = t
                r = np.zeros(lay.nvars)
                lay.utility_row(r, p, i, key[i], 1.0)
                lay.utility_row(r, lay.pidx(alt), i, key[i], -1.0)
                rows.append(r), rels.append(GE), rhs.append(-gamma)
    return lay.solve(rows, rels, rhs)


# ---------------------------------------------------------------- TV transforms

def _require_ir(M: TabularMechanism, F: ProductDist):
    bad = ir_check(M, profiles=[p for p, _ in F.profiles()])
    if bad:
        raise BaseMechanismNotIR(f"base mechanism violates IR at {len(bad)} (bidder, profile) pairs, e.g. {bad[0]}")


@dataclass
class TauMap:
    """Repairs off-support reports into supp(F_i) or BOTTOM by interim best response."""

    M: Mechanism
    F: ProductDist
    _tables: list = field(default=None, repr=False)
    _cache: dict = field(default_factory=dict, repr=False)

    def tables(self, i):
        if self._tables is None:
            self._tables = [None] * self.F.n
        if self._tables[i] is None:
            pts = list(self.F.factors[i].points)
            self._tables[i] = dict(zip(pts, interim_tables(self.M, self.F, i, pts)))
        return self._tables[i]

    def interim_value(self, i, v, z):
        bundles, _ = self.tables(i)[z]
        return sum(q * self.M.model.value(v, s) for s, q in bundles.items())

    def interim_payment(self, i, z):
        return self.tables(i)[z][1]

    def __call__(self, i, v):
        if v is BOTTOM:
            return BOTTOM
        v = as_point(v)
        if self.F.factors[i].index(v) is not None:
            return v
        hit = self._cache.get((i, v))
        if hit is not None:
            return hit
        best, arg = 0.0, BOTTOM
        for z in self.F.factors[i].points:          # lexicographic order
            u = self.interim_value(i, v, z) - self.interim_payment(i, z)
            if arg is BOTTOM and u >= best - 1e-12 or u > best + 1e-12:
                best, arg = u, z
        self._cache[(i, v)] = arg
        return arg


def tv_robustify(M1: TabularMechanism, F: ProductDist) -> FunctionMechanism:
    """Accept any report by repairing it to its interim best response against F.

    Repaired bidders pay their realized value times the ratio of expected
    payment to expected value of the repaired report, which keeps IR exact.
    """
    _require_ir(M1, F)
    tau = TauMap(M1, F)
    model = M1.model

    def fn(profile):
        mapped = tuple(tau(i, v) for i, v in enumerate(profile))
        if any(t is BOTTOM for t in mapped):
            return Outcome.zero(M1.n)
        out = M1.outcome(mapped)
        pay = out.payments.copy()
        for i, (v, t) in enumerate(zip(profile, mapped)):
            if t != v:
                denom = tau.interim_value(i, v, t)
                pay[i] = out.value(model, v, i) * tau.interim_payment(i, t) / denom if denom > 1e-15 else 0.0
        return out.with_payments(pay)

    mech = FunctionMechanism(fn, M1.n, M1.m, M1.H, model, name="tv-robust")
    mech.tau = tau
    mech.base = M1
    return mech


def dsic_tv_robustify(M1: TabularMechanism, F: ProductDist) -> FunctionMechanism:
    """Ex-post repair: one off-support bidder best-responds to the actual other
    reports; two or more off-support bidders void the profile."""
    _require_ir(M1, F)
    model = M1.model
    supports = [set(f.points) for f in F.factors]

    def fn(profile):
        off = [i for i, v in enumerate(profile) if v not in supports[i]]
        if not off:
            return M1.outcome(profile)
        if len(off) > 1:
            return Outcome.zero(M1.n)
        i = off[0]
        v = profile[i]
        best, arg = 0.0, None
        for z in F.factors[i].points:
            trial = list(profile)
            trial[i] = z
            out = M1.outcome(tuple(trial))
            u = out.utility(model, v, i)
            if arg is None and u >= best - 1e-12 or u > best + 1e-12:
                best, arg = u, out
        return arg if arg is not None else Outcome.zero(M1.n)

    mech = FunctionMechanism(fn, M1.n, M1.m, M1.H, model, name="dsic-tv-robust")
    mech.base = M1
    return mech


# ------------------------------------------------------------ rounding lifts

def resample_lift(M: TabularMechanism, D: ProductDist, g: GridSpec) -> TabularMechanism:
    """Mechanism on the rounded supports: redraw each type inside its rounding
    cell from D, run M there, and discount payments by mL*delta (floored at 0).

    The table stores the exact expectation over the redraw.
    """
    shift = M.m * M.model.L * g.width
    rounded = [round_dist(f, g) for f in D.factors]
    conds = []
    for f, r in zip(D.factors, rounded):
        per = {}
        for w in r.points:
            c = condition_on(f, preimage_mask(f, w, g))
            per[w] = list(c.items())
        conds.append(per)
    ts = TypeSpace([r.points for r in rounded])
    if math.prod(len(r) for r in rounded) * math.prod(max(len(v) for v in c.values()) for c in conds) > ENUM_CAP:
        raise InstanceTooLarge("resampling expectation exceeds the enumeration cap")
    table = {}
    for key in itertools.product(*(range(len(r)) for r in rounded)):
        ws = [ts.types[i][k] for i, k in enumerate(key)]
        weighted = []
        for combo in itertools.product(*(conds[i][w] for i, w in enumerate(ws))):
            pr = math.prod(c[1] for c in combo)
            out = M.outcome(tuple(c[0] for c in combo))
            weighted.append((pr, out.with_payments(np.maximum(out.payments - shift, 0.0))))
        table[key] = mix_outcomes(weighted, M.n)
    return TabularMechanism(ts, table, M.n, M.m, M.H, M.model)


def round_lift(M2: Mechanism, g: GridSpec) -> FunctionMechanism:
    """Round bids onto the grid, run M2, and discount payments by mL*delta (floored at 0)."""
    shift = M2.m * M2.model.L * g.width

    def fn(profile):
        out = M2.outcome(tuple(g.round_point(b) for b in profile))
        return out.with_payments(np.maximum(out.payments - shift, 0.0))

    mech = FunctionMechanism(fn, M2.n, M2.m, M2.H, M2.model, name="round-lift")
    mech.base = M2
    mech.grid = g
    return mech


# ------------------------------------------------------------ pipelines

@dataclass
class Branch:
    grid: GridSpec
    M1: TabularMechanism
    M2: FunctionMechanism
    Mhat: FunctionMechanism
    rounded_D: ProductDist


@dataclass
class BranchAudit:
    offset: tuple
    rho: float                 # sum over bidders of TV between rounded D and rounded D-hat
    tv_per_bidder: list
    xi1: float
    xi2: float
    final: float
    revenue: float
    revenue_m1: float
    revenue_m2: float
    ir_ok: bool


@dataclass
class ProkhorovPipeline:
    kind: str                  # "bic" or "dsic"
    base: TabularMechanism
    scenario: Scenario
    eps: float
    delta: float
    seed: int
    branches: list

    def mechanism(self) -> FunctionMechanism:
        """The offset-randomized mechanism: outcomes averaged over branches."""
        w = 1.0 / len(self.branches)
        s = self.scenario

        def fn(profile):
            return mix_outcomes([(w, b.Mhat.outcome(profile)) for b in self.branches], s.n)

        return FunctionMechanism(fn, s.n, s.m, s.H, s.model, name=f"{self.kind}-pipeline")

    def audit_misreports(self, D_hat: ProductDist, branch=None):
        out = []
        for i in range(self.scenario.n):
            pts = set(D_hat.factors[i].points) | set(self.scenario.D.factors[i].points)
            for b in self.branches if branch is None else [branch]:
                pts |= set(b.rounded_D.factors[i].points)
                pts |= set(round_dist(D_hat.factors[i], b.grid).points)
            out.append(sorted(pts) + [BOTTOM])
        return out

    def audit(self, D_hat: ProductDist):
        """Exact per-branch regrets and revenues when bidders are drawn from D_hat."""
        rows = []
        for b in self.branches:
            Rhat = ProductDist([round_dist(f, b.grid) for f in D_hat.factors])
            tvs = [tv_distance(x, y) for x, y in zip(b.rounded_D.factors, Rhat.factors)]
            grid_reports = [sorted(set(x.points) | set(y.points)) + [BOTTOM]
                            for x, y in zip(b.rounded_D.factors, Rhat.factors)]
            reports = self.audit_misreports(D_hat, b)
            if self.kind == "bic":
                xi1 = eps_bic_regret(b.M1, b.rounded_D).eps
                r2 = eps_bic_regret(b.M2, Rhat, grid_reports)
                rf = eps_bic_regret(b.Mhat, D_hat, reports)
            else:
                xi1 = eps_dsic_regret(b.M1).eps
                r2 = eps_dsic_regret(b.M2, [list(f.points) for f in Rhat.factors], grid_reports)
                rf = eps_dsic_regret(b.Mhat, [list(f.points) for f in D_hat.factors], reports)
            rows.append(BranchAudit(
                b.grid.offset, float(sum(tvs)), tvs, xi1, r2.eps, rf.eps,
                revenue_exact(b.Mhat, D_hat), revenue_exact(b.M1, b.rounded_D), revenue_exact(b.M2, Rhat),
                r2.ir_ok and rf.ir_ok))
        return rows

    def averaged_regret(self, D_hat: ProductDist):
        M = self.mechanism()
        reports = self.audit_misreports(D_hat)
        if self.kind == "bic":
            return eps_bic_regret(M, D_hat, reports)
        return eps_dsic_regret(M, [list(f.points) for f in D_hat.factors], reports)


def _check_eps(eps):
    if not (0.0 < eps < 1.0):
        raise InvalidEpsilon(f"eps must lie in (0, 1), got {eps}")


def _offsets(m, delta, K, seed):
    return [np.random.default_rng([seed, k]).uniform(0.0, delta, size=m) for k in range(K)]


def _build_pipeline(kind, M, s, eps, delta, K, seed, tv_step):
    branches = []
    for off in _offsets(s.m, delta, K, seed):
        g = GridSpec(off, delta)
        M1 = resample_lift(M, s.D, g)
        RD = ProductDist([round_dist(f, g) for f in s.D.factors])
        M2 = tv_step(M1, RD)
        branches.append(Branch(g, M1, M2, round_lift(M2, g), RD))
    return ProkhorovPipeline(kind, M, s, eps, delta, seed, branches)


def bic_prokhorov_robustify(M: TabularMechanism, s: Scenario, eps: float, K: int = 1, seed: int = 0,
                            delta: float | None = None) -> ProkhorovPipeline:
    """Randomized-offset rounding, TV repair and un-rounding of a BIC mechanism for D."""
    _check_eps(eps)
    if K < 1:
        raise ValueError("need at least one grid draw")
    delta = math.sqrt(s.n * s.H * eps) if delta is None else float(delta)
    return _build_pipeline("bic", M, s, eps, delta, K, seed, tv_robustify)


def dsic_prokhorov_robustify(M: TabularMechanism, s: Scenario, eps: float, alpha: float, K: int = 1,
                             seed: int = 0, delta: float | None = None) -> ProkhorovPipeline:
    """DSIC analogue of the BIC pipeline, with the ex-post repair step."""
    _check_eps(eps)
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    delta = s.n * math.sqrt(s.H * eps) if delta is None else float(delta)
    pipe = _build_pipeline("dsic", M, s, eps, delta, K, seed, dsic_tv_robustify)
    pipe.alpha = alpha
    return pipe


def markov_threshold(n, alpha, delta, eps):
    return (n / alpha) * (1.0 + 1.0 / delta) * eps


def tail_fractions(D: ProductDist, D_hat: ProductDist, delta, eps, alpha, draws, seed):
    """Per-bidder fraction of random offsets whose rounded TV exceeds the Markov threshold."""
    rng = np.random.default_rng(seed)
    offsets = rng.uniform(0.0, delta, size=(draws, D.dim))
    thr = markov_threshold(D.n, alpha, delta, eps)
    fracs, any_bad = [], np.zeros(draws, dtype=bool)
    for f, fh in zip(D.factors, D_hat.factors):
        bad = rounded_tv_batch(f, fh, delta, offsets) > thr
        any_bad |= bad
        fracs.append(float(bad.mean()))
    return fracs, float(any_bad.mean()), thr


# ------------------------------------------------------------ single bidder

def nisan_ic_transform(M: Mechanism, eps: float, menu_types=None) -> FunctionMechanism:
    """Scale every menu payment by 1 - sqrt(eps) and let the bidder pick.

    The zero outcome is always on the menu, so the result is IR.
    """
    if M.n != 1:
        raise MultiBidderUnsupported("the menu transform needs exactly one bidder")
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if menu_types is None:
        if M.typespace is None:
            raise ValueError("function mechanisms need explicit menu types")
        menu_types = M.typespace.types[0]
    scale = 1.0 - math.sqrt(eps)
    menu = [Outcome.zero(1)]
    for t in menu_types:
        out = M.outcome((t,))
        menu.append(out.with_payments(scale * out.payments))
    # among utility ties the bidder takes the dearer entry; cheaper-first would
    # let an exactly IC mechanism lose all its revenue at eps = 0
    menu.sort(key=lambda o: -float(o.payments[0]))
    model = M.model

    def fn(profile):
        v = profile[0]
        utils = [o.utility(model, v, 0) for o in menu]
        top = max(utils)
        return next(o for o, u in zip(menu, utils) if u >= top - 1e-12)

    mech = FunctionMechanism(fn, 1, M.m, M.H, model, name="menu")
    mech.menu = menu
    return mech


@dataclass
class GapReport:
    opt: float
    opt_eta: float
    bound: float
    passed: bool

    @property
    def gap(self):
        return self.opt_eta - self.opt


def bic_gap_bound(n, m, L, H, eps):
    return 2.0 * n * math.sqrt(m * L * H * eps)


def bic_gap_report(s: Scenario, eps: float) -> GapReport:
    opt, _ = opt_bic_lp(s, 0.0)
    opt_eta, _ = opt_bic_lp(s, eps)
    bound = bic_gap_bound(s.n, s.m, s.L, s.H, eps)
    return GapReport(opt, opt_eta, bound, opt_eta - opt <= bound + 1e-6)
