"""Mechanisms as outcome tables or callables, and exact incentive audits.

Types are point tuples.  ``BOTTOM`` is the non-participation report: any
profile containing it yields no allocation and no payments for anyone.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .dist import ProductDist, as_point
from .errors import InstanceTooLarge, UnsupportedType
from .valuation import ValuationModel, model_from_json

ENUM_CAP = 10 ** 6
IR_TOL = 1e-9
SCHEMA = "robustmech.mechanism/1"


class _Bottom:
    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self):
        return "BOTTOM"

    def __reduce__(self):
        return (_Bottom, ())


BOTTOM = _Bottom()


def is_bottom(t):
    return t is BOTTOM


def canon_type(t):
    return BOTTOM if t is BOTTOM else as_point(t)


class Outcome:
    """A lottery over assignments plus a payment vector.

    ``lottery`` holds ``(assign, prob)`` pairs where ``assign`` is a tuple of
    frozensets, one per bidder.  Leftover probability means nothing is sold.
    """

    __slots__ = ("lottery", "payments", "_bundles")

    def __init__(self, lottery, payments):
        n = len(payments)
        clean = {}
        for assign, pr in lottery:
            pr = float(pr)
            if pr < -1e-9:
                raise ValueError("negative lottery probability")
            if pr <= 1e-14:
                continue
            assign = tuple(frozenset(s) for s in assign)
            if len(assign) != n:
                raise ValueError("assignment length differs from bidder count")
            seen = set()
            for s in assign:
                if seen & s:
                    raise ValueError("an item is assigned to two bidders")
                seen |= s
            if not any(assign):
                continue
            clean[assign] = clean.get(assign, 0.0) + pr
        if sum(clean.values()) > 1.0 + 1e-9:
            raise ValueError("lottery probabilities exceed one")
        self.lottery = tuple(sorted(clean.items(), key=lambda kv: [sorted(s) for s in kv[0]]))
        self.payments = np.asarray(payments, dtype=float)
        if not np.all(np.isfinite(self.payments)):
            raise ValueError("non-finite payment")
        self._bundles = None

    @classmethod
    def zero(cls, n):
        return cls((), np.zeros(n))

    @property
    def n(self):
        return self.payments.size

    def bundles(self, i):
        """Distribution of bidder i's item set (empty set omitted)."""
        if self._bundles is None:
            per = [dict() for _ in range(self.n)]
            for assign, pr in self.lottery:
                for j, s in enumerate(assign):
                    if s:
                        per[j][s] = per[j].get(s, 0.0) + pr
            self._bundles = per
        return self._bundles[i]

    def value(self, model: ValuationModel, v, i):
        return sum(pr * model.value(v, s) for s, pr in self.bundles(i).items())

    def utility(self, model: ValuationModel, v, i):
        return self.value(model, v, i) - float(self.payments[i])

    def is_zero(self):
        return not self.lottery and not np.any(self.payments)

    def with_payments(self, payments):
        out = Outcome.__new__(Outcome)
        out.lottery = self.lottery
        out.payments = np.asarray(payments, dtype=float)
        out._bundles = self._bundles
        return out

    def __eq__(self, other):
        return (isinstance(other, Outcome) and len(self.lottery) == len(other.lottery)
                and all(a == b and abs(p - q) <= 1e-12
                        for (a, p), (b, q) in zip(self.lottery, other.lottery))
                and np.allclose(self.payments, other.payments, atol=1e-12, rtol=0))

    def __repr__(self):
        parts = ", ".join(f"{[sorted(s) for s in a]}:{p:.4g}" for a, p in self.lottery)
        return f"Outcome([{parts}], pay={self.payments.tolist()})"


def mix_outcomes(weighted, n):
    """Convex combination of outcomes, given (weight, outcome) pairs."""
    lot, pay = {}, np.zeros(n)
    for w, out in weighted:
        for a, pr in out.lottery:
            lot[a] = lot.get(a, 0.0) + w * pr
        pay += w * out.payments
    return Outcome(lot.items(), pay)


def utility(model: ValuationModel, v, out: Outcome, i) -> float:
    return out.utility(model, v, i)


@dataclass(frozen=True)
class TypeSpace:
    """Per-bidder type lists; BOTTOM sits at index len(types[i])."""

    types: tuple

    def __init__(self, types):
        canon = []
        for ts in types:
            pts = [as_point(t) for t in ts]
            if len(set(pts)) != len(pts):
                raise ValueError("duplicate types")
            canon.append(tuple(pts))
        object.__setattr__(self, "types", tuple(canon))

    @classmethod
    def of(cls, D: ProductDist):
        return cls([f.points for f in D.factors])

    @property
    def n(self):
        return len(self.types)

    def bottom_index(self, i):
        return len(self.types[i])

    def index(self, i, t):
        if t is BOTTOM:
            return len(self.types[i])
        try:
            return self.types[i].index(as_point(t))
        except ValueError:
            raise UnsupportedType(f"type {t} of bidder {i} is not in the type space") from None

    def with_bottom(self, i):
        return list(self.types[i]) + [BOTTOM]

    def profiles(self):
        return itertools.product(*self.types)


class Mechanism:
    """Common interface: ``outcome(profile)`` plus the metadata n, m, H, model."""

    n: int
    m: int
    H: float
    model: ValuationModel
    typespace: TypeSpace | None = None

    def outcome(self, profile) -> Outcome:
        raise NotImplementedError

    def __call__(self, profile):
        return self.outcome(profile)


class TabularMechanism(Mechanism):
    def __init__(self, typespace: TypeSpace, table, n, m, H, model: ValuationModel):
        self.typespace = typespace
        self.n, self.m, self.H, self.model = n, m, float(H), model
        if typespace.n != n:
            raise ValueError("type space has the wrong number of bidders")
        self.table = {}
        self._zero = Outcome.zero(n)
        for key, out in table.items():
            key = tuple(int(k) for k in key)
            if any(k == typespace.bottom_index(i) for i, k in enumerate(key)):
                continue
            self.table[key] = out
        sizes = [len(t) for t in typespace.types]
        for key in itertools.product(*(range(s) for s in sizes)):
            self.table.setdefault(key, self._zero)

    def outcome_by_index(self, key):
        if any(k == self.typespace.bottom_index(i) for i, k in enumerate(key)):
            return self._zero
        return self.table[tuple(key)]

    def outcome(self, profile):
        key = tuple(self.typespace.index(i, t) for i, t in enumerate(profile))
        return self.outcome_by_index(key)

    def map_payments(self, fn):
        """New mechanism with payments replaced by fn(outcome) (same lotteries)."""
        table = {k: out.with_payments(fn(out)) for k, out in self.table.items()}
        return TabularMechanism(self.typespace, table, self.n, self.m, self.H, self.model)


class FunctionMechanism(Mechanism):
    """Wraps a callable on full profiles; BOTTOM handling and caching are done here."""

    def __init__(self, fn, n, m, H, model, *, name="function"):
        self.fn = fn
        self.n, self.m, self.H, self.model = n, m, float(H), model
        self.name = name
        self._cache = {}
        self._zero = Outcome.zero(n)

    def outcome(self, profile):
        if len(profile) != self.n:
            raise ValueError("profile length differs from bidder count")
        key = tuple(canon_type(t) for t in profile)
        if any(t is BOTTOM for t in key):
            return self._zero
        hit = self._cache.get(key)
        if hit is None:
            hit = self._cache[key] = self.fn(key)
        return hit


@dataclass
class RegretReport:
    per_bidder: np.ndarray
    eps: float
    witness: tuple | None = None          # (bidder, true type, misreport)
    ir_violations: list = field(default_factory=list)

    @property
    def ir_ok(self):
        return not self.ir_violations


def _check_enum(count):
    if count > ENUM_CAP:
        raise InstanceTooLarge(f"{count} profiles exceed the enumeration cap of {ENUM_CAP}")


def _others(D: ProductDist, i):
    """(profile of opponents with None at slot i, prob) pairs."""
    factors = [f for j, f in enumerate(D.factors) if j != i]
    _check_enum(math.prod(len(f) for f in factors))
    for combo in itertools.product(*(f.items() for f in factors)):
        prof = [c[0] for c in combo]
        pr = math.prod(c[1] for c in combo)
        prof.insert(i, None)
        yield prof, pr


def _check_support(M, D):
    if M.typespace is None:
        return
    for i, f in enumerate(D.factors):
        for t in f.points:
            M.typespace.index(i, t)


def revenue_exact(M: Mechanism, D: ProductDist) -> float:
    """Expected total payment under truthful bidding."""
    _check_support(M, D)
    _check_enum(D.num_profiles())
    return float(sum(pr * M.outcome(prof).payments.sum() for prof, pr in D.profiles()))


def interim_tables(M: Mechanism, D: ProductDist, i, reports):
    """For each report of bidder i: expected bundle distribution and payment."""
    reports = list(reports)
    others = list(_others(D, i))
    out = []
    for t in reports:
        bundles, pay = {}, 0.0
        if t is not BOTTOM:
            for prof, pr in others:
                prof[i] = t
                o = M.outcome(tuple(prof))
                for s, q in o.bundles(i).items():
                    bundles[s] = bundles.get(s, 0.0) + pr * q
                pay += pr * float(o.payments[i])
        out.append((bundles, pay))
    return out


def _interim_utility(model, v, table):
    bundles, pay = table
    return sum(q * model.value(v, s) for s, q in bundles.items()) - pay


def interim_utility(M: Mechanism, D: ProductDist, i, v, report) -> float:
    return _interim_utility(M.model, v, interim_tables(M, D, i, [report])[0])


def default_misreports(M: Mechanism, i):
    if M.typespace is None:
        raise ValueError("function mechanisms need an explicit misreport grid")
    return M.typespace.with_bottom(i)


def _misreport_lists(M, misreports, n):
    """Per-bidder misreport lists, always including BOTTOM."""
    if misreports is None:
        return [default_misreports(M, i) for i in range(n)]
    if len(misreports) != n:
        raise ValueError("give one misreport list per bidder")
    out = []
    for ts in misreports:
        ts = [canon_type(t) for t in ts]
        out.append(ts if BOTTOM in ts else ts + [BOTTOM])
    return out


def eps_bic_regret(M: Mechanism, D: ProductDist, misreports=None) -> RegretReport:
    """Exact interim regret of truthful bidding under D, plus ex-post IR on supp(D)."""
    _check_support(M, D)
    n = D.n
    reports = _misreport_lists(M, misreports, n)
    per = np.zeros(n)
    witness = None
    best = 0.0
    for i in range(n):
        truth = list(D.factors[i].points)
        cands = list(dict.fromkeys(truth + reports[i]))
        tables = dict(zip(cands, interim_tables(M, D, i, cands)))
        for v in truth:
            u_true = _interim_utility(M.model, v, tables[v])
            for t in cands:
                gain = _interim_utility(M.model, v, tables[t]) - u_true
                if gain > per[i]:
                    per[i] = gain
                    if gain > best:
                        best, witness = gain, (i, v, t)
    viol = ir_check(M, profiles=[p for p, _ in D.profiles()])
    return RegretReport(per, float(per.max(initial=0.0)), witness, viol)


def eps_dsic_regret(M: Mechanism, types=None, misreports=None) -> RegretReport:
    """Ex-post regret over every opponent profile drawn from ``types``.

    ``types`` defaults to the type space of a tabular mechanism; true types and
    opponent reports both range over it.
    """
    if types is None:
        if M.typespace is None:
            raise ValueError("function mechanisms need an explicit type grid")
        types = [list(ts) for ts in M.typespace.types]
    types = [[canon_type(t) for t in ts] for ts in types]
    n = len(types)
    reports = _misreport_lists(M, misreports, n) if misreports is not None else [ts + [BOTTOM] for ts in types]
    _check_enum(math.prod(len(t) for t in types))
    per = np.zeros(n)
    witness, best = None, 0.0
    for i in range(n):
        cands = list(dict.fromkeys(types[i] + reports[i]))
        for rest in itertools.product(*(types[j] for j in range(n) if j != i)):
            rest = list(rest)
            outs = {}
            for t in cands:
                prof = rest[:i] + [t] + rest[i:]
                outs[t] = M.outcome(tuple(prof))
            for v in types[i]:
                u_true = outs[v].utility(M.model, v, i)
                for t in cands:
                    gain = outs[t].utility(M.model, v, i) - u_true
                    if gain > per[i]:
                        per[i] = gain
                        if gain > best:
                            best, witness = gain, (i, v, t, tuple(rest))
    profiles = itertools.product(*types)
    return RegretReport(per, float(per.max(initial=0.0)), witness, ir_check(M, profiles=profiles))


def ir_check(M: Mechanism, model: ValuationModel | None = None, profiles=None):
    """(bidder, profile) pairs whose truthful ex-post utility is below -1e-9."""
    model = model or M.model
    if profiles is None:
        if M.typespace is None:
            raise ValueError("function mechanisms need explicit profiles")
        profiles = M.typespace.profiles()
    bad = []
    for prof in profiles:
        out = M.outcome(tuple(prof))
        for i in range(M.n):
            if out.utility(model, prof[i], i) < -IR_TOL:
                bad.append((i, tuple(prof)))
    return bad


def _round_down(values, b):
    """Largest entry of sorted ``values`` not exceeding b, else None."""
    k = np.searchsorted(values, b + 1e-12, side="right") - 1
    return None if k < 0 else float(values[k])


def extend_mechanism(M: TabularMechanism) -> FunctionMechanism:
    """Evaluate M on arbitrary bids by rounding each bid down into the type space.

    Coordinates round down separately to the values used by that bidder's
    types; a bid with no type below it, or one whose rounded point is not a
    type, counts as BOTTOM.
    """
    ts = M.typespace
    grids = [[np.unique([t[j] for t in ts.types[i]]) for j in range(M.m)] for i in range(M.n)]
    members = [set(t) for t in ts.types]

    def round_bid(i, b):
        pt = []
        for j, g in enumerate(grids[i]):
            r = _round_down(g, b[j])
            if r is None:
                return BOTTOM
            pt.append(r)
        pt = as_point(pt)
        return pt if pt in members[i] else BOTTOM

    def fn(profile):
        return M.outcome(tuple(round_bid(i, b) for i, b in enumerate(profile)))

    mech = FunctionMechanism(fn, M.n, M.m, M.H, M.model, name="extended")
    mech.base = M
    mech.round_bid = round_bid
    return mech


def monte_carlo_revenue(M: Mechanism, D: ProductDist, samples, rng):
    """Sample mean and standard error of revenue under truthful bids."""
    draws = [f.support[np.minimum(np.searchsorted(np.cumsum(f.probs), rng.random(samples), side="right"), len(f) - 1)]
             for f in D.factors]
    revs = np.empty(samples)
    for k in range(samples):
        revs[k] = M.outcome(tuple(as_point(d[k]) for d in draws)).payments.sum()
    return float(revs.mean()), float(revs.std(ddof=1) / math.sqrt(samples))


def tabulate(M: Mechanism, typespace: TypeSpace) -> TabularMechanism:
    table = {}
    for key in itertools.product(*(range(len(t)) for t in typespace.types)):
        prof = tuple(typespace.types[i][k] for i, k in enumerate(key))
        table[key] = M.outcome(prof)
    return TabularMechanism(typespace, table, M.n, M.m, M.H, M.model)


def mechanism_to_json(M: TabularMechanism):
    rows = []
    for key in sorted(M.table):
        out = M.table[key]
        rows.append({
            "profile": list(key),
            "lottery": [{"assign": [sorted(s) for s in a], "p": p} for a, p in out.lottery],
            "payments": out.payments.tolist(),
        })
    return {
        "schema": SCHEMA, "n": M.n, "m": M.m, "H": M.H, "model": M.model.to_json(),
        "typespace": [[list(t) for t in ts] for ts in M.typespace.types],
        "table": rows,
    }


def mechanism_from_json(obj) -> TabularMechanism:
    ts = TypeSpace([[tuple(t) for t in ts] for ts in obj["typespace"]])
    table = {}
    for row in obj["table"]:
        lot = [(tuple(frozenset(s) for s in e["assign"]), e["p"]) for e in row["lottery"]]
        table[tuple(row["profile"])] = Outcome(lot, row["payments"])
    return TabularMechanism(ts, table, obj["n"], obj["m"], obj["H"], model_from_json(obj["model"]))


def save_mechanism(M: TabularMechanism, path):
    # repr-based float output round-trips every double exactly
    with open(path, "w") as fh:
        json.dump(mechanism_to_json(M), fh)


def load_mechanism(path) -> TabularMechanism:
    with open(path) as fh:
        return mechanism_from_json(json.load(fh))

