"""Finite-support distributions over R^m and the distances between them."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch, EmptyConditioning, InvalidDistribution, InvalidEpsilon
from .lpcore import transport_plan

QUANTUM_DIGITS = 12
PROB_TOL = 1e-9
SEARCH_TOL = 1e-9
SNAP_TOL = 1e-7
_EPS_CMP = 1e-12


def quantize(x):
    """Canonical coordinates: rounded to 1e-12, with -0.0 folded into 0.0."""
    return np.round(np.asarray(x, dtype=float), QUANTUM_DIGITS) + 0.0


def as_point(x):
    return tuple(float(c) for c in quantize(np.atleast_1d(x)))


class DiscreteDist:
    """Distribution on finitely many points of R^m.

    Atoms are quantized, merged, stripped of zero mass and sorted
    lexicographically.  ``support`` is a (k, m) array, ``points`` the same
    atoms as tuples (handy as dict keys).
    """

    def __init__(self, support, probs, *, normalize=False):
        probs = np.asarray(probs, dtype=float).ravel()
        pts = np.asarray(support, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.ndim != 2 or pts.shape[0] != probs.size:
            raise InvalidDistribution("support and probs disagree in length")
        if probs.size == 0:
            raise InvalidDistribution("empty support")
        if not np.all(np.isfinite(pts)) or not np.all(np.isfinite(probs)):
            raise InvalidDistribution("non-finite atoms or masses")
        if np.any(probs < -1e-12):
            raise InvalidDistribution("negative probability")
        probs = np.clip(probs, 0.0, None)
        total = probs.sum()
        if normalize:
            if total <= 0:
                raise InvalidDistribution("zero total mass")
            probs = probs / total
        elif abs(total - 1.0) > PROB_TOL:
            raise InvalidDistribution(f"probabilities sum to {total!r}; deficit {1.0 - total:+.3e}")
        pts = quantize(pts)
        merged = {}
        for row, pr in zip(map(tuple, pts.tolist()), probs):
            merged[row] = merged.get(row, 0.0) + pr
        keys = sorted(k for k, v in merged.items() if v > 0.0)
        if not keys:
            raise InvalidDistribution("all atoms have zero mass")
        self.support = np.array(keys, dtype=float).reshape(len(keys), pts.shape[1])
        self.probs = np.array([merged[k] for k in keys])
        self.points = [tuple(k) for k in keys]
        self._index = {k: i for i, k in enumerate(self.points)}

    @property
    def dim(self):
        return self.support.shape[1]

    def __len__(self):
        return len(self.points)

    def __repr__(self):
        body = ", ".join(
            f"{p[0] if self.dim == 1 else p}: {w:.6g}" for p, w in zip(self.points, self.probs))
        return f"DiscreteDist({{{body}}})"

    def __eq__(self, other):
        return (isinstance(other, DiscreteDist) and self.points == other.points
                and np.allclose(self.probs, other.probs, atol=1e-12, rtol=0))

    def prob(self, point):
        i = self._index.get(as_point(point))
        return 0.0 if i is None else float(self.probs[i])

    def index(self, point):
        return self._index.get(as_point(point))

    def items(self):
        return zip(self.points, self.probs)

    def mean(self):
        return self.probs @ self.support

    @classmethod
    def point_mass(cls, x):
        return cls([np.atleast_1d(np.asarray(x, dtype=float))], [1.0])

    @classmethod
    def from_dict(cls, mapping):
        pts = [np.atleast_1d(np.asarray(k, dtype=float)) for k in mapping]
        return cls(pts, list(mapping.values()))

    def to_json(self):
        return {"dim": self.dim, "support": [list(p) for p in self.points], "probs": self.probs.tolist()}


@dataclass(frozen=True)
class ProductDist:
    factors: tuple

    def __init__(self, factors):
        factors = tuple(factors)
        if not factors:
            raise InvalidDistribution("a product needs at least one factor")
        if len({f.dim for f in factors}) != 1:
            raise DimMismatch("all factors must share one dimension")
        object.__setattr__(self, "factors", factors)

    @property
    def n(self):
        return len(self.factors)

    @property
    def dim(self):
        return self.factors[0].dim

    def __getitem__(self, i):
        return self.factors[i]

    def __iter__(self):
        return iter(self.factors)

    def num_profiles(self):
        return math.prod(len(f) for f in self.factors)

    def profiles(self):
        """Yield (profile of points, probability) over the product support."""
        for combo in itertools.product(*(range(len(f)) for f in self.factors)):
            pr = 1.0
            for f, k in zip(self.factors, combo):
                pr *= f.probs[k]
            yield tuple(f.points[k] for f, k in zip(self.factors, combo)), pr

    def replace(self, i, factor):
        fs = list(self.factors)
        fs[i] = factor
        return ProductDist(fs)


@dataclass(frozen=True)
class GridSpec:
    offset: tuple
    width: float

    def __init__(self, offset, width):
        offset = tuple(float(x) for x in np.atleast_1d(offset))
        width = float(width)
        if width <= 0:
            raise ValueError("grid width must be positive")
        if any(o < -1e-15 or o > width + 1e-15 for o in offset):
            raise ValueError("grid offset must lie in [0, width]")
        object.__setattr__(self, "offset", offset)
        object.__setattr__(self, "width", width)

    @property
    def dim(self):
        return len(self.offset)

    def cell_index(self, x):
        """Integer cell per coordinate; None marks the clamped-to-zero cell."""
        out = []
        for xj, lj in zip(x, self.offset):
            k = math.floor((xj - lj) / self.width)
            out.append(k if k * self.width + lj > 0 else None)
        return tuple(out)

    def round_point(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        off = np.asarray(self.offset)
        r = np.floor((x - off) / self.width) * self.width + off
        return as_point(np.maximum(r, 0.0))


@dataclass
class Coupling:
    left: DiscreteDist
    right: DiscreteDist
    mass: np.ndarray

    def check(self, tol=1e-8):
        return (np.all(self.mass >= -tol)
                and np.allclose(self.mass.sum(axis=1), self.left.probs, atol=tol)
                and np.allclose(self.mass.sum(axis=0), self.right.probs, atol=tol))

    def far_mass(self, eps):
        d = l1_matrix(self.left, self.right)
        return float(self.mass[d > eps + _EPS_CMP].sum())


@dataclass
class Cdf:
    breakpoints: np.ndarray
    values: np.ndarray

    def __call__(self, x):
        idx = np.searchsorted(self.breakpoints, np.asarray(x, dtype=float) + _EPS_CMP, side="right")
        vals = np.concatenate([[0.0], self.values])
        return vals[idx]


def _require_1d(*ds):
    for d in ds:
        if d.dim != 1:
            raise DimMismatch("operation defined for one-dimensional distributions only")


def _require_same_dim(p, q):
    if p.dim != q.dim:
        raise DimMismatch(f"dimensions differ: {p.dim} vs {q.dim}")


def cdf(d: DiscreteDist) -> Cdf:
    _require_1d(d)
    vals = np.minimum(np.cumsum(d.probs), 1.0)
    vals[-1] = 1.0
    return Cdf(d.support[:, 0].copy(), vals)


def l1_matrix(p: DiscreteDist, q: DiscreteDist):
    return np.abs(p.support[:, None, :] - q.support[None, :, :]).sum(axis=2)


def tv_distance(p: DiscreteDist, q: DiscreteDist) -> float:
    _require_same_dim(p, q)
    keys = set(p.points) | set(q.points)
    return 0.5 * sum(abs(p.prob(k) - q.prob(k)) for k in keys)


def kolmogorov_distance(p: DiscreteDist, q: DiscreteDist) -> float:
    _require_1d(p, q)
    xs = np.union1d(p.support[:, 0], q.support[:, 0])
    return float(np.max(np.abs(cdf(p)(xs) - cdf(q)(xs))))


def _levy_ok(Fp, Fq, xs, eps):
    cand = np.concatenate([xs, xs + eps, xs - eps])
    lower = Fp(cand - eps) - eps
    upper = Fp(cand + eps) + eps
    g = Fq(cand)
    return bool(np.all(lower <= g + _EPS_CMP) and np.all(g <= upper + _EPS_CMP))


def levy_distance(p: DiscreteDist, q: DiscreteDist) -> float:
    _require_1d(p, q)
    Fp, Fq = cdf(p), cdf(q)
    xs = np.union1d(p.support[:, 0], q.support[:, 0])
    if _levy_ok(Fp, Fq, xs, 0.0):
        return 0.0
    lo, hi = 0.0, 1.0
    while hi - lo > SEARCH_TOL:
        mid = 0.5 * (lo + hi)
        if _levy_ok(Fp, Fq, xs, mid):
            hi = mid
        else:
            lo = mid
    # the exact value is a support gap or a CDF-level gap; snap to it when close
    levels = np.union1d(Fp(xs), Fq(xs))
    cands = np.concatenate([np.abs(np.subtract.outer(xs, xs)).ravel(),
                            np.abs(np.subtract.outer(levels, levels)).ravel()])
    for c in np.unique(cands[np.abs(cands - hi) <= SNAP_TOL]):
        if c < hi and _levy_ok(Fp, Fq, xs, c):
            return float(c)
    return hi


@dataclass
class ProkhorovResult:
    distance: float     # snapped value when a breakpoint is within SNAP_TOL
    searched: float     # raw binary-search value
    witness: Coupling


def _close_mass(p, q, dmat, eps):
    return transport_plan(p.probs, q.probs, dmat <= eps + _EPS_CMP)


def prokhorov_distance(p: DiscreteDist, q: DiscreteDist, *, with_witness=False):
    """Smallest eps such that some coupling keeps mass 1-eps within l1 distance eps."""
    _require_same_dim(p, q)
    dmat = l1_matrix(p, q)

    def feasible(eps):
        return _close_mass(p, q, dmat, eps)[0] >= 1.0 - eps - _EPS_CMP

    if feasible(0.0):
        lo = hi = 0.0
    else:
        lo, hi = 0.0, 1.0
        while hi - lo > SEARCH_TOL:
            mid = 0.5 * (lo + hi)
            if feasible(mid):
                hi = mid
            else:
                lo = mid
    searched = hi
    best = searched
    breaks = np.unique(dmat)
    cands = [b for b in breaks if abs(b - searched) <= SNAP_TOL]
    mass_at = _close_mass(p, q, dmat, searched)[0]
    if abs((1.0 - mass_at) - searched) <= SNAP_TOL:
        cands.append(1.0 - mass_at)
    for c in sorted(cands):
        if c < best and feasible(c):
            best = float(c)
            break
    if not with_witness:
        return best
    mass, plan = _close_mass(p, q, dmat, best)
    rest_p = np.clip(p.probs - plan.sum(axis=1), 0.0, None)
    rest_q = np.clip(q.probs - plan.sum(axis=0), 0.0, None)
    left = rest_p.sum()
    if left > 1e-15:
        plan = plan + np.outer(rest_p, rest_q) / left
    return ProkhorovResult(best, searched, Coupling(p, q, plan))


def fosd(p: DiscreteDist, q: DiscreteDist) -> bool:
    """True when q first-order dominates p (F_q <= F_p everywhere)."""
    _require_1d(p, q)
    xs = np.union1d(p.support[:, 0], q.support[:, 0])
    return bool(np.all(cdf(q)(xs) <= cdf(p)(xs) + _EPS_CMP))


def _from_cdf(xs, values):
    xs = np.asarray(xs, dtype=float)
    order = np.argsort(xs, kind="stable")
    xs, values = xs[order], np.asarray(values)[order]
    jumps = np.diff(np.concatenate([[0.0], values]))
    keep = jumps > 1e-15
    return DiscreteDist(xs[keep], jumps[keep], normalize=True)


def levy_ball_extremes(d: DiscreteDist, eps: float, H: float | None = None):
    """FOSD-minimal and maximal members of the eps Levy ball around d.

    worst has CDF min(F(x+eps)+eps, 1) on [-eps, H]; best has CDF
    max(F(x-eps)-eps, 0) on [0, H+eps].
    """
    _require_1d(d)
    if not (0.0 < eps < 1.0):
        raise InvalidEpsilon(f"eps must lie in (0, 1), got {eps}")
    F = cdf(d)
    top = float(d.support[-1, 0]) if H is None else float(H)
    xs = np.unique(np.concatenate([[-eps], d.support[:, 0] - eps]))
    xs = xs[xs >= -eps - _EPS_CMP]
    worst = _from_cdf(xs, np.minimum(F(xs + eps) + eps, 1.0))
    xs = np.unique(np.concatenate([d.support[:, 0] + eps, [top + eps]]))
    vals = np.where(xs >= top + eps - _EPS_CMP, 1.0, np.maximum(F(xs - eps) - eps, 0.0))
    best = _from_cdf(xs, vals)
    return worst, best


def shift(d: DiscreteDist, t: float) -> DiscreteDist:
    return DiscreteDist(d.support + t, d.probs)


def round_dist(d: DiscreteDist, grid: GridSpec) -> DiscreteDist:
    if d.dim != grid.dim:
        raise DimMismatch("grid offset dimension differs from the distribution")
    pts = [grid.round_point(x) for x in d.support]
    return DiscreteDist(pts, d.probs)


def preimage_mask(d: DiscreteDist, w, grid: GridSpec):
    """Atoms of d that the grid rounds onto w."""
    w = as_point(w)
    return np.array([grid.round_point(x) == w for x in d.support])


def condition_on(d: DiscreteDist, mask) -> DiscreteDist:
    mask = np.asarray(mask, dtype=bool)
    mass = d.probs[mask].sum()
    if mass <= 0:
        raise EmptyConditioning("conditioning event has zero probability")
    return DiscreteDist(d.support[mask], d.probs[mask] / mass, normalize=True)


def condition_cube(d: DiscreteDist, corner, widths) -> DiscreteDist:
    lo = np.atleast_1d(np.asarray(corner, dtype=float))
    hi = lo + np.atleast_1d(np.asarray(widths, dtype=float))
    if lo.size != d.dim:
        raise DimMismatch("cube corner dimension differs from the distribution")
    inside = np.all((d.support >= lo - _EPS_CMP) & (d.support < hi - _EPS_CMP), axis=1)
    return condition_on(d, inside)


def sample(d: DiscreteDist, rng, size=None):
    """Inverse-CDF draw(s).  Returns a point tuple, or an (size, m) array."""
    cum = np.cumsum(d.probs)
    cum[-1] = 1.0
    if size is None:
        k = int(np.searchsorted(cum, rng.random(), side="right"))
        return d.points[min(k, len(d) - 1)]
    ks = np.minimum(np.searchsorted(cum, rng.random(size), side="right"), len(d) - 1)
    return d.support[ks]


def sample_product(pd: ProductDist, rng):
    return tuple(sample(f, rng) for f in pd.factors)


def _cell_keys(support, offsets, width):
    # support (k, m), offsets (T, m) -> integer cells (T, k, m) with the clamp cell marked
    k = np.floor((support[None, :, :] - offsets[:, None, :]) / width)
    val = k * width + offsets[:, None, :]
    return np.where(val > 0, k, -(2 ** 40))


def rounded_tv_batch(p: DiscreteDist, q: DiscreteDist, width: float, offsets):
    """Exact TV between the two rounded distributions for each offset row."""
    _require_same_dim(p, q)
    offsets = np.atleast_2d(np.asarray(offsets, dtype=float))
    kp = _cell_keys(p.support, offsets, width)
    kq = _cell_keys(q.support, offsets, width)
    same_pp = np.all(kp[:, :, None, :] == kp[:, None, :, :], axis=3)
    same_pq = np.all(kp[:, :, None, :] == kq[:, None, :, :], axis=3)
    pcell = same_pp @ p.probs
    qcell = same_pq @ q.probs
    overlap = (p.probs[None, :] * np.minimum(pcell, qcell) / pcell).sum(axis=1)
    return np.clip(1.0 - overlap, 0.0, 1.0)


def expected_rounded_tv(p: DiscreteDist, q: DiscreteDist, width: float, trials: int, rng):
    """Monte Carlo mean and standard error of the rounded TV over random offsets."""
    if trials < 1:
        raise ValueError("trials must be positive")
    offsets = rng.uniform(0.0, width, size=(trials, p.dim))
    vals = np.concatenate([rounded_tv_batch(p, q, width, offsets[s:s + 2000])
                           for s in range(0, trials, 2000)])
    stderr = float(vals.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return float(vals.mean()), stderr


def load_dist(path) -> DiscreteDist:
    with open(path) as fh:
        return dist_from_json(json.load(fh))


def dist_from_json(obj) -> DiscreteDist:
    for key in ("dim", "support", "probs"):
        if key not in obj:
            raise InvalidDistribution(f"distribution file lacks '{key}'")
    support = np.asarray(obj["support"], dtype=float).reshape(len(obj["probs"]), -1)
    if support.shape[1] != int(obj["dim"]):
        raise InvalidDistribution(f"support rows have {support.shape[1]} coordinates, dim says {obj['dim']}")
    return DiscreteDist(support, obj["probs"])


def save_dist(d: DiscreteDist, path):
    with open(path, "w") as fh:
        json.dump(d.to_json(), fh, indent=1)
