"""Dense tableau simplex and the transport-mass LP built on top of it.

The solver maximizes ``c @ x`` subject to rows ``a @ x (<=|=|>=) b`` and
per-variable bounds where the lower bound is 0 or -inf and the upper bound
is finite or +inf.  Two phases, Dantzig pricing with a switch to Bland's
rule during runs of degenerate pivots (so cycling cannot happen), and duals
read off the final basis.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import NumericalBreakdown, ShapeMismatch

TOL = 1e-7
PIVOT_TOL = 1e-10
PERTURB = 1e-7

LE, EQ, GE = "<=", "=", ">="
_REL_ALIASES = {"<=": LE, "≤": LE, "le": LE, "=": EQ, "==": EQ, "eq": EQ, ">=": GE, "≥": GE, "ge": GE}


class Status(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


@dataclass
class LpProblem:
    """maximize objective @ x subject to A x (rel) rhs and bounds."""

    objective: np.ndarray
    A: np.ndarray
    relations: list
    rhs: np.ndarray
    bounds: list = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float).ravel()
        n = self.objective.size
        if n == 0:
            raise ShapeMismatch("an LP needs at least one variable")
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n) if np.size(self.A) else np.zeros((0, n))
        self.rhs = np.asarray(self.rhs, dtype=float).ravel()
        self.relations = [_REL_ALIASES[r] for r in self.relations]
        if not (self.A.shape[0] == self.rhs.size == len(self.relations)):
            raise ShapeMismatch("constraint rows, relations and rhs disagree in length")
        if self.bounds is None:
            self.bounds = [(0.0, np.inf)] * n
        if len(self.bounds) != n:
            raise ShapeMismatch("one (lower, upper) pair per variable is required")
        bounds = []
        for lo, hi in self.bounds:
            lo = -np.inf if lo is None else float(lo)
            hi = np.inf if hi is None else float(hi)
            if lo not in (0.0, -np.inf):
                raise ValueError("lower bounds must be 0 or -inf")
            if lo > hi:
                raise ValueError("lower bound exceeds upper bound")
            bounds.append((lo, hi))
        self.bounds = bounds
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.rhs))
                and np.all(np.isfinite(self.objective))):
            raise ValueError("non-finite LP coefficients")

    @classmethod
    def from_rows(cls, objective, constraints, bounds=None):
        objective = np.asarray(objective, dtype=float)
        if constraints:
            A = np.array([np.asarray(c, dtype=float) for c, _, _ in constraints])
            rels = [r for _, r, _ in constraints]
            rhs = [b for _, _, b in constraints]
        else:
            A, rels, rhs = np.zeros((0, objective.size)), [], []
        return cls(objective, A, rels, rhs, bounds)

    @property
    def constraints(self):
        return [(self.A[k], self.relations[k], float(self.rhs[k])) for k in range(len(self.relations))]

    @property
    def num_vars(self):
        return self.objective.size

    @property
    def num_rows(self):
        return len(self.relations)

    def instance_hash(self):
        h = hashlib.sha256()
        for arr in (self.objective, self.A, self.rhs, np.array(self.bounds, dtype=float)):
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update("".join(self.relations).encode())
        return h.hexdigest()[:16]


@dataclass
class LpSolution:
    status: Status
    x: np.ndarray
    objective: float
    duals: np.ndarray = field(default=None)         # one per constraint row
    bound_duals: np.ndarray = field(default=None)   # one per variable, nonzero only for finite uppers
    iterations: int = 0

    @property
    def optimal(self):
        return self.status is Status.OPTIMAL

    def dual_objective(self, problem: LpProblem):
        ub = np.array([hi if np.isfinite(hi) else 0.0 for _, hi in problem.bounds])
        return float(problem.rhs @ self.duals + ub @ self.bound_duals)


class _Tableau:
    def __init__(self, T, basis, max_iter, problem):
        self.T = T
        self.basis = basis
        self.iters = 0
        self.max_iter = max_iter
        self.problem = problem

    def pivot(self, r, e):
        T = self.T
        T[r] /= T[r, e]
        col = T[:, e].copy()
        col[r] = 0.0
        nz = np.flatnonzero(col)
        if nz.size:
            T[nz] -= np.outer(col[nz], T[r])
        self.basis[r] = e

    def _tick(self):
        self.iters += 1
        if self.iters > self.max_iter:
            raise NumericalBreakdown(f"simplex exceeded {self.max_iter} pivots", self.problem.instance_hash())

    def run(self, allowed):
        """Primal simplex on the current objective row; False means unbounded."""
        T, basis = self.T, self.basis
        nrows = T.shape[0] - 1
        bland = False
        while True:
            obj = T[-1, :-1]
            cand = np.flatnonzero((obj < -TOL) & allowed)
            if cand.size == 0:
                return True
            e = cand[0] if bland else cand[np.argmin(obj[cand])]
            colv = T[:nrows, e]
            rows = np.flatnonzero(colv > PIVOT_TOL)
            if rows.size == 0:
                return False
            rhs = np.maximum(T[rows, -1], 0.0)
            ratios = rhs / colv[rows]
            best = ratios.min()
            if bland:
                ties = rows[ratios <= best + 1e-12 * max(1.0, best)]
                r = ties[np.argmin(np.asarray(basis)[ties])]
            else:
                # two-pass ratio test: loosen by TOL, then take the sturdiest pivot
                loose = ((rhs + TOL) / colv[rows]).min()
                near = rows[ratios <= loose]
                r = near[np.argmax(colv[near])]
            self._tick()
            bland = max(T[r, -1], 0.0) / T[r, e] <= TOL
            self.pivot(r, e)
            b = T[:nrows, -1]
            b[(b < 0) & (b > -TOL)] = 0.0

    def dual_run(self, allowed):
        """Dual simplex from a dual-feasible basis; False means primal infeasible."""
        T = self.T
        nrows = T.shape[0] - 1
        while nrows:
            b = T[:nrows, -1]
            r = int(np.argmin(b))
            if b[r] >= -TOL:
                b[b < 0] = 0.0
                return True
            row = T[r, :-1]
            cand = np.flatnonzero((row < -PIVOT_TOL) & allowed)
            if cand.size == 0:
                return False
            ratios = np.maximum(T[-1, cand], 0.0) / -row[cand]
            near = cand[ratios <= ratios.min() + TOL]
            e = near[np.argmin(row[near])]
            self._tick()
            self.pivot(r, e)
        return True


def lp_solve(problem: LpProblem) -> LpSolution:
    n = problem.num_vars
    # column layout: one column per variable, plus a negative part for free ones
    cols_of = []
    ncols = 0
    for lo, _ in problem.bounds:
        if lo == 0.0:
            cols_of.append((ncols,))
            ncols += 1
        else:
            cols_of.append((ncols, ncols + 1))
            ncols += 2

    def expand(row):
        out = np.zeros(ncols)
        for j, cs in enumerate(cols_of):
            out[cs[0]] = row[j]
            if len(cs) == 2:
                out[cs[1]] = -row[j]
        return out

    rows, rels, rhs, origin = [], [], [], []
    if problem.num_rows:
        Aexp = np.zeros((problem.num_rows, ncols))
        for j, cs in enumerate(cols_of):
            Aexp[:, cs[0]] = problem.A[:, j]
            if len(cs) == 2:
                Aexp[:, cs[1]] = -problem.A[:, j]
        for k in range(problem.num_rows):
            rows.append(Aexp[k])
            rels.append(problem.relations[k])
            rhs.append(problem.rhs[k])
            origin.append(("row", k))
    for j, (_, hi) in enumerate(problem.bounds):
        if np.isfinite(hi):
            e = np.zeros(n)
            e[j] = 1.0
            rows.append(expand(e))
            rels.append(LE)
            rhs.append(hi)
            origin.append(("ub", j))

    m = len(rows)
    A = np.array(rows).reshape(m, ncols)
    b = np.array(rhs, dtype=float)
    sign = np.ones(m)
    for k in range(m):
        if b[k] < 0 or (b[k] == 0 and rels[k] == GE):
            A[k] = -A[k]
            b[k] = -b[k]
            sign[k] = -1.0
            rels[k] = {LE: GE, GE: LE, EQ: EQ}[rels[k]]
    # equilibrate rows so every row's largest coefficient is 1
    scale = np.abs(A).max(axis=1, initial=0.0)
    scale[scale == 0.0] = 1.0
    A /= scale[:, None]
    b /= scale
    sign /= scale

    n_slack = sum(1 for r in rels if r != EQ)
    n_art = sum(1 for r in rels if r != LE)
    total = ncols + n_slack + n_art
    T = np.zeros((m + 1, total + 1))
    T[:m, :ncols] = A
    # Relax inequality rows by tiny seeded amounts so that ties in the ratio
    # test (and the stalling they cause) go away; the exact right-hand side
    # is restored through the final basis inverse.
    wiggle = np.random.default_rng(7).uniform(0.5, 1.0, m) * PERTURB
    wiggle[[r == EQ for r in rels]] = 0.0
    ge = np.array([r == GE for r in rels], dtype=bool)
    wiggle[ge] = -np.minimum(wiggle[ge], 0.5 * b[ge])
    T[:m, -1] = b + wiggle
    basis = [0] * m
    unit_col = [0] * m  # column holding +e_k initially, for reading off duals
    s = ncols
    a = ncols + n_slack
    art_cols = []
    for k, r in enumerate(rels):
        if r == LE:
            T[k, s] = 1.0
            basis[k] = unit_col[k] = s
            s += 1
        else:
            if r == GE:
                T[k, s] = -1.0
                s += 1
            T[k, a] = 1.0
            basis[k] = unit_col[k] = a
            art_cols.append(a)
            a += 1

    max_iter = 50 * (problem.num_vars + problem.num_rows)
    tab = _Tableau(T, basis, max_iter, problem)
    allowed = np.ones(total, dtype=bool)

    if art_cols:
        # phase one: maximize -sum(artificials)
        T[-1, :] = 0.0
        T[-1, art_cols] = 1.0
        for k, col in enumerate(basis):
            if col in art_cols:
                T[-1] -= T[k]
        tab.run(allowed)
        if T[-1, -1] < -TOL * max(1.0, np.abs(b).max(initial=0.0)):
            return LpSolution(Status.INFEASIBLE, np.full(n, np.nan), np.nan, iterations=tab.iters)
        art_set = set(art_cols)
        for k in range(m):
            if basis[k] in art_set:
                cand = np.flatnonzero(np.abs(T[k, :ncols + n_slack]) > PIVOT_TOL)
                if cand.size:
                    tab.pivot(k, cand[0])
        allowed[art_cols] = False

    c = np.zeros(total)
    c[:ncols] = expand(problem.objective)
    T[-1, :] = 0.0
    T[-1, :-1] = -c
    for k, col in enumerate(basis):
        if c[col] != 0.0:
            T[-1] += c[col] * T[k]
    if not tab.run(allowed):
        return LpSolution(Status.UNBOUNDED, np.full(n, np.nan), np.inf, iterations=tab.iters)
    T[:m, -1] = T[:m, unit_col] @ b
    if not tab.dual_run(allowed):
        return LpSolution(Status.INFEASIBLE, np.full(n, np.nan), np.nan, iterations=tab.iters)

    z = np.zeros(total)
    for k, col in enumerate(basis):
        z[col] = T[k, -1]
    x = np.array([z[cs[0]] - (z[cs[1]] if len(cs) == 2 else 0.0) for cs in cols_of])
    y_std = T[-1, unit_col] + c[unit_col]
    duals = np.zeros(problem.num_rows)
    bound_duals = np.zeros(n)
    for k, (kind, idx) in enumerate(origin):
        if kind == "row":
            duals[idx] = sign[k] * y_std[k]
        else:
            bound_duals[idx] = sign[k] * y_std[k]
    return LpSolution(Status.OPTIMAL, x, float(problem.objective @ x), duals, bound_duals, tab.iters)


def _check_transport_inputs(p, q, allowed):
    p = np.asarray(p, dtype=float).ravel()
    q = np.asarray(q, dtype=float).ravel()
    allowed = np.asarray(allowed, dtype=bool)
    if allowed.shape != (p.size, q.size):
        raise ShapeMismatch(f"allowed has shape {allowed.shape}, expected {(p.size, q.size)}")
    for name, v in (("p", p), ("q", q)):
        if abs(v.sum() - 1.0) > 1e-9 or np.any(v < -1e-12):
            raise ValueError(f"{name} is not a probability vector")
    return p, q, allowed


def transport_plan(p, q, allowed):
    """Max allowed mass and the sub-coupling matrix achieving it."""
    p, q, allowed = _check_transport_inputs(p, q, allowed)
    plan = np.zeros((p.size, q.size))
    pairs = np.argwhere(allowed)
    if pairs.size == 0:
        return 0.0, plan
    k = len(pairs)
    A = np.zeros((p.size + q.size, k))
    A[pairs[:, 0], np.arange(k)] = 1.0
    A[p.size + pairs[:, 1], np.arange(k)] = 1.0
    sol = lp_solve(LpProblem(np.ones(k), A, [LE] * (p.size + q.size), np.concatenate([p, q])))
    plan[pairs[:, 0], pairs[:, 1]] = np.clip(sol.x, 0.0, None)
    return float(min(1.0, max(0.0, sol.objective))), plan


def max_mass_transport(p, q, allowed) -> float:
    """Largest mass a sub-coupling of p and q can put on allowed pairs."""
    return transport_plan(p, q, allowed)[0]
