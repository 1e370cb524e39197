"""Learning type distributions: item-wise products, Bayes nets and MRFs on a
finite alphabet, and Scheffe tournaments for picking among candidates."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .dist import DiscreteDist, as_point, quantize, tv_distance
from .errors import AlphabetViolation, EmptyCandidates, EmptySamples, StructureMismatch, TooLarge

JOINT_CAP = 10 ** 6
SAMPLE_CONSTANT = 2.0


@dataclass
class SampleSet:
    rows: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=float)
        if self.rows.ndim == 1:
            self.rows = self.rows.reshape(-1, 1)

    @property
    def dim(self):
        return self.rows.shape[1]

    def __len__(self):
        return self.rows.shape[0]

    @classmethod
    def draw(cls, d: DiscreteDist, size, seed):
        from .dist import sample
        return cls(sample(d, np.random.default_rng(seed), size), seed)


# ---------------------------------------------------------------- products

def product_sample_count(m, H, eta, delta_fail) -> int:
    if not (0 < eta < 1 and 0 < delta_fail < 1) or m < 1 or H <= 0:
        raise ValueError("need m >= 1, H > 0 and eta, delta_fail in (0, 1)")
    return math.ceil(SAMPLE_CONSTANT * m ** 3 * H / eta ** 3 * (math.log(1 / delta_fail) + math.log(m)))


def product_of_marginals(marginals) -> DiscreteDist:
    pts, probs = [], []
    for combo in itertools.product(*(m.items() for m in marginals)):
        pts.append([c[0][0] for c in combo])
        probs.append(math.prod(c[1] for c in combo))
    return DiscreteDist(pts, probs, normalize=True)


def learn_product(samples: SampleSet, eta, H) -> DiscreteDist:
    """Floor every coordinate to multiples of eta/m, then multiply the per-item
    empirical marginals."""
    if len(samples) == 0:
        raise EmptySamples("no samples to learn from")
    m = samples.dim
    step = eta / m
    rounded = np.clip(np.floor(quantize(samples.rows / step)) * step, 0.0, H)
    marginals = []
    for j in range(m):
        vals, counts = np.unique(quantize(rounded[:, j]), return_counts=True)
        marginals.append(DiscreteDist(vals.reshape(-1, 1), counts / counts.sum()))
    return product_of_marginals(marginals)


# ---------------------------------------------------------------- Bayes nets

def _topo_order(nodes, parents):
    order, done, visiting = [], set(), set()

    def visit(v):
        if v in done:
            return
        if v in visiting:
            raise StructureMismatch("parent structure has a cycle")
        visiting.add(v)
        for u in parents.get(v, ()):
            if u not in nodes:
                raise StructureMismatch(f"unknown parent {u!r} of {v!r}")
            visit(u)
        visiting.discard(v)
        done.add(v)
        order.append(v)

    for v in nodes:
        visit(v)
    return order


@dataclass
class BayesNet:
    """Nodes are coordinates 0..V-1; ``cpts[v]`` maps a tuple of parent
    alphabet indices to a probability vector over the alphabet."""

    parents: tuple
    alphabet: tuple
    cpts: list
    order: list = field(init=False)

    def __post_init__(self):
        self.parents = tuple(tuple(p) for p in self.parents)
        self.alphabet = tuple(float(a) for a in self.alphabet)
        V, k = len(self.parents), len(self.alphabet)
        self.order = _topo_order(range(V), dict(enumerate(self.parents)))
        if len(self.cpts) != V:
            raise StructureMismatch("one conditional table per node is required")
        clean = []
        for v, table in enumerate(self.cpts):
            rows = {}
            for cfg in itertools.product(range(k), repeat=len(self.parents[v])):
                row = np.asarray(table[cfg], dtype=float)
                if row.shape != (k,) or np.any(row < -1e-12) or abs(row.sum() - 1) > 1e-9:
                    raise ValueError(f"bad conditional row for node {v}, parents {cfg}")
                rows[cfg] = row
            clean.append(rows)
        self.cpts = clean

    @property
    def num_nodes(self):
        return len(self.parents)

    @property
    def in_degree(self):
        return max((len(p) for p in self.parents), default=0)

    def prob(self, idx):
        pr = 1.0
        for v in range(self.num_nodes):
            pr *= self.cpts[v][tuple(idx[u] for u in self.parents[v])][idx[v]]
        return pr


def _enum_guard(k, V):
    if k ** V > JOINT_CAP:
        raise TooLarge(f"{k}^{V} joint outcomes exceed the cap of {JOINT_CAP}")


def bn_joint(bn: BayesNet) -> DiscreteDist:
    k, V = len(bn.alphabet), bn.num_nodes
    _enum_guard(k, V)
    pts, probs = [], []
    for idx in itertools.product(range(k), repeat=V):
        pr = bn.prob(idx)
        if pr > 0:
            pts.append([bn.alphabet[i] for i in idx])
            probs.append(pr)
    return DiscreteDist(pts, probs, normalize=True)


def bn_sample(bn: BayesNet, rng, size=None):
    """Ancestral sampling; a point tuple, or an array of ``size`` rows."""
    count = 1 if size is None else size
    idx = np.zeros((count, bn.num_nodes), dtype=int)
    for v in bn.order:
        pa = list(bn.parents[v])
        u = rng.random(count)
        for cfg, row in bn.cpts[v].items():
            hit = np.all(idx[:, pa] == cfg, axis=1) if pa else np.ones(count, dtype=bool)
            if hit.any():
                draw = np.searchsorted(np.cumsum(row), u[hit], side="right")
                idx[hit, v] = np.minimum(draw, len(row) - 1)
    vals = np.asarray(bn.alphabet)[idx]
    return as_point(vals[0]) if size is None else vals


def bn_learn_known_dag(samples: SampleSet, parents, alphabet) -> BayesNet:
    """Empirical conditional frequencies; unseen parent settings get a uniform row."""
    if len(samples) == 0:
        raise EmptySamples("no samples to learn from")
    alphabet = tuple(float(a) for a in alphabet)
    lookup = {a: i for i, a in enumerate(as_point(alphabet))}
    rows = quantize(samples.rows)
    if rows.shape[1] != len(parents):
        raise StructureMismatch("sample width differs from node count")
    try:
        idx = np.vectorize(lambda x: lookup[float(x)])(rows)
    except KeyError as exc:
        raise AlphabetViolation(f"sample value {exc.args[0]} is outside the alphabet") from None
    k = len(alphabet)
    cpts = []
    for v, pa in enumerate(parents):
        counts = {}
        for r in idx:
            key = tuple(r[list(pa)])
            counts.setdefault(key, np.zeros(k))[r[v]] += 1
        table = {}
        for cfg in itertools.product(range(k), repeat=len(pa)):
            c = counts.get(cfg)
            table[cfg] = c / c.sum() if c is not None else np.full(k, 1.0 / k)
        cpts.append(table)
    return BayesNet(parents, alphabet, cpts)


def bn_hybrid_check(p: BayesNet, q: BayesNet):
    """(V * worst conditional-row TV, exact joint TV, whether joint <= V * worst)."""
    if p.parents != q.parents or p.alphabet != q.alphabet:
        raise StructureMismatch("networks differ in structure or alphabet")
    worst = 0.0
    for v in range(p.num_nodes):
        for cfg, row in p.cpts[v].items():
            worst = max(worst, 0.5 * float(np.abs(row - q.cpts[v][cfg]).sum()))
    lhs = p.num_nodes * worst
    rhs = tv_distance(bn_joint(p), bn_joint(q))
    return lhs, rhs, rhs <= lhs + 1e-9


# ---------------------------------------------------------------- MRFs

@dataclass
class Mrf:
    """Potentials are arrays indexed by alphabet positions: ``node_pot[v]`` has
    shape (k,), ``edge_pot[e]`` has shape (k,)*len(e) for hyperedge e."""

    num_nodes: int
    alphabet: tuple
    node_pot: list
    edges: list
    edge_pot: list

    def __post_init__(self):
        self.alphabet = tuple(float(a) for a in self.alphabet)
        k = len(self.alphabet)
        self.node_pot = [np.asarray(p, dtype=float) for p in self.node_pot]
        self.edges = [tuple(e) for e in self.edges]
        self.edge_pot = [np.asarray(p, dtype=float) for p in self.edge_pot]
        if len(self.node_pot) != self.num_nodes or len(self.edge_pot) != len(self.edges):
            raise StructureMismatch("potential count disagrees with the graph")
        if len(set(frozenset(e) for e in self.edges)) != len(self.edges):
            raise StructureMismatch("repeated hyperedge")
        for e, pot in zip(self.edges, self.edge_pot):
            if len(set(e)) != len(e) or any(not 0 <= v < self.num_nodes for v in e):
                raise StructureMismatch(f"bad hyperedge {e}")
            if pot.shape != (k,) * len(e):
                raise StructureMismatch(f"potential for {e} has shape {pot.shape}")
        for pot in self.node_pot + self.edge_pot:
            if np.any(pot < 0) or np.any(pot > 1):
                raise ValueError("potentials must lie in [0, 1]")

    @property
    def max_edge(self):
        return max([len(e) for e in self.edges] + [1])

    def weight(self, idx):
        w = 1.0
        for v, pot in enumerate(self.node_pot):
            w *= pot[idx[v]]
        for e, pot in zip(self.edges, self.edge_pot):
            w *= pot[tuple(idx[v] for v in e)]
        return w

    def map_potentials(self, fn):
        return Mrf(self.num_nodes, self.alphabet, [fn(p) for p in self.node_pot],
                   list(self.edges), [fn(p) for p in self.edge_pot])


def mrf_joint(mrf: Mrf) -> DiscreteDist:
    """Normalized joint; an identically zero product gives the uniform law."""
    k, V = len(mrf.alphabet), mrf.num_nodes
    _enum_guard(k, V)
    idxs = list(itertools.product(range(k), repeat=V))
    w = np.array([mrf.weight(i) for i in idxs])
    if w.sum() <= 0:
        w = np.ones(len(idxs))
    pts = [[mrf.alphabet[a] for a in i] for i in idxs]
    return DiscreteDist(pts, w / w.sum(), normalize=True)


def round_down_to_powers(x, base):
    """Largest power of ``base`` (> 1) not above x, elementwise; 0 stays 0."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    k = np.floor(np.log(x[pos]) / math.log(base) + 1e-9)
    out[pos] = np.minimum(base ** k, x[pos])
    return out


def mrf_round_potentials(mrf: Mrf, eps: float) -> Mrf:
    """Snap each potential value down to a power of 1 + eps/(2 n^d)."""
    if not (0 < eps < 1):
        raise ValueError("eps must lie in (0, 1)")
    base = 1.0 + eps / (2.0 * mrf.num_nodes ** mrf.max_edge)
    return mrf.map_potentials(lambda p: round_down_to_powers(p, base))


def mrf_rounding_tv(mrf: Mrf, eps: float) -> float:
    return tv_distance(mrf_joint(mrf), mrf_joint(mrf_round_potentials(mrf, eps)))


# ---------------------------------------------------------------- Scheffe

def scheffe_select(candidates, samples: SampleSet):
    """Round-robin Scheffe tournament; returns (winner index, win counts)."""
    if not candidates:
        raise EmptyCandidates("no candidate distributions")
    K = len(candidates)
    pts = sorted(set().union(*(set(c.points) for c in candidates)))
    pos = {p: i for i, p in enumerate(pts)}
    Q = np.zeros((K, len(pts)))
    for a, c in enumerate(candidates):
        for p, pr in c.items():
            Q[a, pos[p]] = pr
    emp = np.zeros(len(pts))
    for row in map(tuple, quantize(samples.rows).tolist()):
        k = pos.get(row)
        if k is not None:
            emp[k] += 1
    emp /= max(len(samples), 1)
    wins = np.zeros(K, dtype=int)
    for a in range(K):
        for b in range(K):
            if a == b:
                continue
            A = Q[a] > Q[b]
            pa, pb, pe = Q[a, A].sum(), Q[b, A].sum(), emp[A].sum()
            if abs(pa - pe) <= abs(pb - pe):
                wins[a] += 1
    return int(np.argmax(wins)), wins
