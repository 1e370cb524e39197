"""Single-item auctions: discrete Myerson with ironing, and the Levy-robust variant."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .dist import DiscreteDist, ProductDist, levy_ball_extremes
from .errors import DimMismatch, InvalidEpsilon
from .mech import Outcome, TabularMechanism, TypeSpace, extend_mechanism
from .valuation import ADDITIVE

ITEM = frozenset({0})


@dataclass
class IronedCurve:
    values: np.ndarray       # support, ascending
    quantiles: np.ndarray    # Pr[v >= value]
    revenue: np.ndarray      # value * quantile
    hull: list               # indices (into the padded curve) of hull vertices
    virtual: np.ndarray      # plain discrete virtual values
    ironed: np.ndarray       # hull slopes, one per support point


def ironed_curve(d: DiscreteDist) -> IronedCurve:
    if d.dim != 1:
        raise DimMismatch("single-item bidders have one-dimensional types")
    v = d.support[:, 0]
    f = d.probs
    q = np.cumsum(f[::-1])[::-1]          # Pr[v >= v_j]
    q_above = np.append(q[1:], 0.0)       # Pr[v > v_j]
    gaps = np.append(np.diff(v), 0.0)
    virtual = v - gaps * q_above / f
    # revenue curve in quantile space, from quantile 0 upward
    xs = np.concatenate([[0.0], q[::-1]])
    ys = np.concatenate([[0.0], (v * q)[::-1]])
    hull = [0]
    for k in range(1, xs.size):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            # drop b when it lies on or below the chord a -> k
            cross = (xs[b] - xs[a]) * (ys[k] - ys[a]) - (ys[b] - ys[a]) * (xs[k] - xs[a])
            if cross >= -1e-15:
                hull.pop()
            else:
                break
        hull.append(k)
    slopes = np.empty(xs.size - 1)
    for a, b in zip(hull[:-1], hull[1:]):
        slopes[a:b] = (ys[b] - ys[a]) / (xs[b] - xs[a])
    ironed = slopes[::-1].copy()          # back to ascending value order
    return IronedCurve(v.copy(), q, v * q, hull, virtual, ironed)


@dataclass
class MyersonRule:
    curves: list

    def score(self, i, k):
        return float(self.curves[i].ironed[k])

    def winner(self, key):
        """Bidder with the highest positive ironed virtual value; lowest index on ties."""
        best, who = 0.0, None
        for i, k in enumerate(key):
            s = self.score(i, k)
            if s > best + 1e-12 or (who is None and s > 1e-12):
                best, who = s, i
        return who


def myerson_optimal(dists, H=None):
    """Revenue-optimal DSIC, IR single-item auction for independent discrete bidders."""
    dists = list(dists.factors if isinstance(dists, ProductDist) else dists)
    rule = MyersonRule([ironed_curve(d) for d in dists])
    n = len(dists)
    sizes = [len(d) for d in dists]
    ts = TypeSpace([d.points for d in dists])
    table = {}
    for key in itertools.product(*(range(s) for s in sizes)):
        w = rule.winner(key)
        if w is None:
            table[key] = Outcome.zero(n)
            continue
        pay = np.zeros(n)
        probe = list(key)
        for z in range(sizes[w]):
            probe[w] = z
            if rule.winner(probe) == w:
                pay[w] = dists[w].support[z, 0]
                break
        assign = tuple(ITEM if i == w else frozenset() for i in range(n))
        table[key] = Outcome([(assign, 1.0)], pay)
    top = max(float(d.support[-1, 0]) for d in dists) if H is None else H
    return TabularMechanism(ts, table, n, 1, top, ADDITIVE), rule


def myerson_revenue(dists) -> float:
    """Expected maximum positive ironed virtual value."""
    dists = list(dists.factors if isinstance(dists, ProductDist) else dists)
    curves = [ironed_curve(d) for d in dists]
    total = 0.0
    for combo in itertools.product(*(range(len(d)) for d in dists)):
        pr = np.prod([d.probs[k] for d, k in zip(dists, combo)])
        total += pr * max(0.0, max(c.ironed[k] for c, k in zip(curves, combo)))
    return float(total)


def levy_robust(D: ProductDist, eps: float, H: float | None = None):
    """Extended Myerson auction for the worst member of each bidder's Levy ball."""
    if eps < 0 or eps >= 1:
        raise InvalidEpsilon(f"eps must lie in [0, 1), got {eps}")
    if eps == 0:
        base, _ = myerson_optimal(D, H)
    else:
        worst = [levy_ball_extremes(f, eps, H)[0] for f in D.factors]
        base, _ = myerson_optimal(worst, H)
    return extend_mechanism(base)


def shift_mechanism(M: TabularMechanism, eps: float) -> TabularMechanism:
    """Move every type down by 2*eps and refund 2*eps per unit of allocation."""
    gap = 2.0 * eps
    ts = TypeSpace([[(t[0] - gap,) for t in types] for types in M.typespace.types])
    table = {}
    for key, out in M.table.items():
        alloc = np.array([sum(out.bundles(i).values()) for i in range(M.n)])
        table[key] = out.with_payments(out.payments - gap * alloc)
    return TabularMechanism(ts, table, M.n, M.m, M.H, M.model)
