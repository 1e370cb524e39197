"""Command-line harness for robust auction design.

Subcommands compute distances and optimal revenue, robustify a mechanism and
audit its bounds, learn distributions from samples, and run seeded sweeps.

Exit status is 0 when every audited bound holds, 2 when one fails, and 1 on
errors.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dist import (DiscreteDist, ProductDist, dist_from_json, kolmogorov_distance, levy_distance,
                   prokhorov_distance, tv_distance)
from .errors import ConfigError, RobustMechError
from .learn import (SampleSet, bn_learn_known_dag, learn_product, product_of_marginals,
                    product_sample_count)
from .mech import BOTTOM, eps_bic_regret, ir_check, revenue_exact, save_mechanism
from .multi_item import (Scenario, bic_prokhorov_robustify, dsic_prokhorov_robustify, opt_bic_lp,
                         opt_dsic_lp, tv_robustify)
from .single_item import levy_robust

REPORT_SCHEMA = "robustmech.report/1"
RESULT_SCHEMA = "robustmech.result/1"
DEFAULT_TOL = 1e-6
COLUMNS = ["experiment", "instance_hash", "metric", "measured", "bound_expr", "bound", "pass"]


@dataclass
class ReportRow:
    experiment: str
    instance_hash: str
    metric: str
    measured: float
    bound_expr: str = ""
    bound: float | None = None
    passed: bool = True

    @classmethod
    def check(cls, experiment, instance, metric, measured, expr, bound, tol):
        return cls(experiment, instance, metric, float(measured), expr, float(bound),
                   bool(measured <= bound + tol))

    def as_list(self):
        return [self.experiment, self.instance_hash, self.metric, repr(self.measured), self.bound_expr,
                "" if self.bound is None else repr(self.bound), "true" if self.passed else "false"]


def write_rows(rows, path=None):
    buf = io.StringIO()
    buf.write(f"# schema={REPORT_SCHEMA}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow(r.as_list())
    text = buf.getvalue()
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None


def load_dist_file(path) -> DiscreteDist:
    return dist_from_json(_read_json(path))


def load_scenario(path) -> Scenario:
    base = os.path.dirname(os.path.abspath(path))
    return Scenario.from_json(_read_json(path), lambda p: load_dist_file(os.path.join(base, p)))


def load_adversary(path, s: Scenario) -> ProductDist:
    """Either a scenario-shaped file ({"factors": [...]}) or a single distribution used for every bidder."""
    obj = _read_json(path)
    base = os.path.dirname(os.path.abspath(path))
    if "factors" in obj:
        fs = [load_dist_file(os.path.join(base, f)) if isinstance(f, str) else dist_from_json(f)
              for f in obj["factors"]]
    else:
        fs = [dist_from_json(obj)] * s.n
    if len(fs) != s.n:
        raise ConfigError(f"adversary has {len(fs)} factors, scenario has {s.n} bidders")
    return ProductDist(fs)


def instance_hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]


def threads():
    try:
        return max(1, int(os.environ.get("RAL_THREADS", "1")))
    except ValueError:
        raise ConfigError("RAL_THREADS must be an integer") from None


def trial_seed(seed, trial):
    return int(np.random.SeedSequence([seed, trial]).generate_state(1)[0])


# ---------------------------------------------------------------- dist

METRICS = {"tv": tv_distance, "kolmogorov": kolmogorov_distance, "levy": levy_distance,
           "prokhorov": prokhorov_distance}


def cmd_dist(args):
    p, q = load_dist_file(args.first), load_dist_file(args.second)
    names = list(METRICS) if args.metric == "all" else [args.metric]
    if p.dim > 1:
        names = [n for n in names if n in ("tv", "prokhorov")]
    values = {}
    for name in names:
        if name == "prokhorov":
            res = prokhorov_distance(p, q, with_witness=True)
            values[name] = res.distance
            out = args.out or "witness.json"
            with open(out, "w") as fh:
                json.dump({"schema": RESULT_SCHEMA, "distance": res.distance, "searched": res.searched,
                           "left": p.to_json(), "right": q.to_json(),
                           "mass": res.witness.mass.tolist()}, fh, indent=1)
        else:
            values[name] = METRICS[name](p, q)
    for name in names:
        print(f"{name} {values[name]!r}")
    if {"levy", "kolmogorov", "tv"} <= values.keys():
        ok = values["levy"] <= values["kolmogorov"] + 1e-9 <= values["tv"] + 2e-9
        print(f"ordering levy<=kolmogorov<=tv {'holds' if ok else 'VIOLATED'}")
        return 0 if ok else 2
    return 0


# ---------------------------------------------------------------- opt

def cmd_opt(args):
    s = load_scenario(args.scenario)
    solver = opt_dsic_lp if args.ic == "dsic" else opt_bic_lp
    value, mech = solver(s, args.eta)
    print(f"opt {value!r}")
    if args.out:
        save_mechanism(mech, args.out)
    return 0


# ---------------------------------------------------------------- robustify

def _robust_levy(args, s, D_hat, ih, tol):
    from .single_item import myerson_optimal
    if s.m != 1:
        raise ConfigError("the Levy construction is for single-item scenarios")
    mech = levy_robust(s.D, args.eps, s.H)
    if D_hat is None:
        return mech, []
    n, H, e = s.n, s.H, args.eps
    opt_hat = revenue_exact(myerson_optimal(D_hat)[0], D_hat)
    rev = revenue_exact(mech, D_hat)
    rows = [ReportRow.check("robustify-levy", ih, "adversary_levy_distance",
                            max(levy_distance(a, b) for a, b in zip(s.D, D_hat)), "ε", e, 1e-9),
            ReportRow.check("robustify-levy", ih, "revenue_gap", opt_hat - rev, "(6nH+3nε+2)ε",
                            (6 * n * H + 3 * n * e + 2) * e, tol)]
    rows.append(ReportRow.check("robustify-levy", ih, "ir_violations",
                                len(ir_check(mech, profiles=[p for p, _ in D_hat.profiles()])), "0", 0, 0))
    return mech, rows


def _robust_tv(args, s, D_hat, ih, tol):
    _, M1 = opt_bic_lp(s, args.eta)
    mech = tv_robustify(M1, s.D)
    if D_hat is None:
        return mech, []
    eta = eps_bic_regret(M1, s.D).eps
    rho = sum(tv_distance(a, b) for a, b in zip(s.D, D_hat))
    reports = [sorted(set(a.points) | set(b.points)) + [BOTTOM] for a, b in zip(s.D, D_hat)]
    rep = eps_bic_regret(mech, D_hat, reports)
    n, m, L, H = s.n, s.m, s.L, s.H
    loss = revenue_exact(M1, s.D) - revenue_exact(mech, D_hat)
    rows = [ReportRow.check("robustify-tv", ih, "bic_regret", rep.eps, "2mLHρ+η", 2 * m * L * H * rho + eta, tol),
            ReportRow.check("robustify-tv", ih, "revenue_loss", loss, "nmLHρ", n * m * L * H * rho, tol),
            ReportRow.check("robustify-tv", ih, "ir_violations", len(rep.ir_violations), "0", 0, 0)]
    return mech, rows


def _robust_prokhorov(args, s, D_hat, ih, tol):
    if args.ic == "dsic":
        _, M = opt_dsic_lp(s, args.eta)
        pipe = dsic_prokhorov_robustify(M, s, args.eps, args.alpha, args.grids, args.seed, args.delta)
    else:
        _, M = opt_bic_lp(s, args.eta)
        pipe = bic_prokhorov_robustify(M, s, args.eps, args.grids, args.seed, args.delta)
    mech = pipe.mechanism()
    if D_hat is None:
        return mech, []
    n, m, L, d = s.n, s.m, s.L, pipe.delta
    base_rev = revenue_exact(M, s.D)
    rows = []
    exp = f"robustify-prokhorov-{args.ic}"
    lift = "3mLδ" if args.ic == "bic" else "2mLδ"
    lift_c = 3 if args.ic == "bic" else 2
    for k, a in enumerate(pipe.audit(D_hat)):
        tag = f"[{k}]"
        rows.append(ReportRow.check(exp, ih, f"xi1{tag}", a.xi1, "3mLδ", 3 * m * L * d, tol))
        rows.append(ReportRow.check(exp, ih, f"final_regret{tag}", a.final, f"ξ2+{lift}",
                                    a.xi2 + lift_c * m * L * d, tol))
        rows.append(ReportRow.check(exp, ih, f"revenue_shift_m1{tag}", base_rev - a.revenue_m1,
                                    "nmLδ", n * m * L * d, tol))
        rows.append(ReportRow.check(exp, ih, f"revenue_shift_final{tag}", a.revenue_m2 - a.revenue,
                                    "nmLδ", n * m * L * d, tol))
        rows.append(ReportRow(exp, ih, f"rho{tag}", a.rho))
        rows.append(ReportRow.check(exp, ih, f"ir{tag}", 0 if a.ir_ok else 1, "0", 0, 0))
    avg = pipe.averaged_regret(D_hat)
    shape = n * m * L * s.H * args.eps + m * L * math.sqrt(n * s.H * args.eps)
    rows.append(ReportRow(exp, ih, "averaged_regret", avg.eps, "c·(nmLHε+mL√(nHε))", shape, True))
    rows.append(ReportRow(exp, ih, "revenue", revenue_exact(mech, D_hat)))
    return mech, rows


def cmd_robustify(args):
    s = load_scenario(args.scenario)
    D_hat = load_adversary(args.adversary, s) if args.adversary else None
    tol = args.tolerance
    ih = instance_hash(s.to_json())
    if not (0 <= args.eps < 1):
        raise ConfigError("--eps must lie in [0, 1)")
    build = {"levy": _robust_levy, "tv": _robust_tv, "prokhorov": _robust_prokhorov}[args.metric]
    _, rows = build(args, s, D_hat, ih, tol)
    if rows:
        text = write_rows(rows, args.out)
        sys.stdout.write(text)
    else:
        print(f"constructed {args.metric} mechanism; pass --adversary to audit it")
    return 0 if all(r.passed for r in rows) else 2


# ---------------------------------------------------------------- learn

def read_samples(path) -> SampleSet:
    rows = []
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), 1):
            if not rec or rec[0].startswith("#"):
                continue
            try:
                rows.append([float(x) for x in rec])
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: non-numeric sample row") from None
    if rows and len({len(r) for r in rows}) != 1:
        raise ConfigError(f"{path}: rows have differing widths")
    return SampleSet(np.array(rows, dtype=float).reshape(len(rows), -1 if rows else 1))


def cmd_learn(args):
    samples = read_samples(args.samples)
    if args.model == "product":
        d = learn_product(samples, args.eta, args.H)
        out = d.to_json()
    else:
        if not args.structure:
            raise ConfigError("--structure is required for bayesnet learning")
        st = _read_json(args.structure)
        bn = bn_learn_known_dag(samples, st["parents"], st["alphabet"])
        out = {"parents": [list(p) for p in bn.parents], "alphabet": list(bn.alphabet),
               "cpts": [{",".join(map(str, k)): v.tolist() for k, v in t.items()} for t in bn.cpts]}
    out["schema"] = RESULT_SCHEMA
    text = json.dumps(out, indent=1)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        print(text)
    return 0


# ---------------------------------------------------------------- experiment

EXPERIMENTS = {
    "learn_product": {"truth": list, "eta": float, "delta_fail": float, "H": float},
    "end_to_end": {"truth": dict, "samples": int, "eps": float, "grids": int, "eps_target": float,
                   "learn_eta": float},
}


def validate_config(cfg):
    errors = []
    kind = cfg.get("experiment")
    if kind not in EXPERIMENTS:
        errors.append(f"experiment must be one of {sorted(EXPERIMENTS)}, got {kind!r}")
        return errors
    for key, typ in EXPERIMENTS[kind].items():
        if key not in cfg:
            errors.append(f"missing field '{key}'")
        elif typ is float and not isinstance(cfg[key], (int, float)):
            errors.append(f"field '{key}' must be a number")
        elif typ in (int, list, dict) and not isinstance(cfg[key], typ):
            errors.append(f"field '{key}' must be {typ.__name__}")
    known = set(EXPERIMENTS[kind]) | {"experiment", "trials", "seed"}
    errors += [f"unknown field '{k}'" for k in sorted(set(cfg) - known)]
    return errors


def _learn_trial(cfg, trial, seed):
    truth = product_of_marginals([dist_from_json(mg) for mg in cfg["truth"]])
    N = product_sample_count(truth.dim, cfg["H"], cfg["eta"], cfg["delta_fail"])
    samples = SampleSet.draw(truth, N, trial_seed(seed, trial))
    learned = learn_product(samples, cfg["eta"], cfg["H"])
    pk = prokhorov_distance(learned, truth)
    ih = instance_hash(cfg["truth"])
    return [ReportRow.check(f"learn_product[{trial}]", ih, "prokhorov", pk, "η", cfg["eta"], 1e-9)]


def _end_to_end_trial(cfg, trial, seed):
    truth_s = Scenario.from_json(cfg["truth"])
    s_seed = trial_seed(seed, trial)
    learned = []
    for i, f in enumerate(truth_s.D):
        samples = SampleSet.draw(f, cfg["samples"], trial_seed(s_seed, i))
        learned.append(learn_product(samples, cfg["learn_eta"], truth_s.H))
    s_learned = truth_s.with_dist(ProductDist(learned))
    _, M = opt_bic_lp(s_learned)
    pipe = bic_prokhorov_robustify(M, s_learned, cfg["eps"], cfg["grids"], s_seed)
    mech = pipe.mechanism()
    regret = pipe.averaged_regret(truth_s.D).eps
    rev = revenue_exact(mech, truth_s.D)
    opt_eta, _ = opt_bic_lp(truth_s, regret)
    pk = max(prokhorov_distance(a, b) for a, b in zip(learned, truth_s.D))
    ih = instance_hash(cfg["truth"])
    name = f"end_to_end[{trial}]"
    return [ReportRow.check(name, ih, "learned_prokhorov", pk, "ε", cfg["eps"], 1e-9),
            ReportRow(name, ih, "regret_on_truth", regret),
            ReportRow.check(name, ih, "revenue_shortfall", opt_eta - rev, "ε_target", cfg["eps_target"], 1e-9)]


TRIALS = {"learn_product": _learn_trial, "end_to_end": _end_to_end_trial}


def run_experiment(cfg, seed, trials=None):
    errors = validate_config(cfg)
    if errors:
        raise ConfigError("invalid experiment config:\n  " + "\n  ".join(errors))
    trials = trials or int(cfg.get("trials", 10))
    fn = TRIALS[cfg["experiment"]]
    workers = threads()
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            chunks = list(pool.map(fn, [cfg] * trials, range(trials), [seed] * trials))
    else:
        chunks = [fn(cfg, t, seed) for t in range(trials)]
    # trial order first, then metric name within a trial
    return [r for c in chunks for r in sorted(c, key=lambda r: r.metric)]


def cmd_experiment(args):
    cfg = _read_json(args.config)
    rows = run_experiment(cfg, args.seed if args.seed is not None else cfg.get("seed", 0), args.trials)
    text = write_rows(rows, args.out)
    if not args.out:
        sys.stdout.write(text)
    else:
        passed = sum(r.passed for r in rows)
        print(f"{passed}/{len(rows)} rows pass; written to {args.out}")
    return 0 if all(r.passed for r in rows) else 2


# ---------------------------------------------------------------- entry

def build_parser():
    ap = argparse.ArgumentParser(prog="robustmech", description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=None, help="root seed (default 0)")
    ap.add_argument("--tolerance", type=float, default=DEFAULT_TOL, help="slack for bound checks")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("dist", help="distance between two distribution files")
    p.add_argument("first")
    p.add_argument("second")
    p.add_argument("--metric", choices=list(METRICS) + ["all"], default="tv")
    p.add_argument("--out", help="witness coupling file for prokhorov (default witness.json)")
    p.set_defaults(fn=cmd_dist)

    p = sub.add_parser("opt", help="optimal revenue of a scenario by LP")
    p.add_argument("scenario")
    p.add_argument("--ic", choices=["bic", "dsic"], default="bic")
    p.add_argument("--eta", type=float, default=0.0, help="incentive slack")
    p.add_argument("--out", help="write the optimal mechanism here")
    p.set_defaults(fn=cmd_opt)

    p = sub.add_parser("robustify", help="build a robust mechanism and audit it against an adversary")
    p.add_argument("scenario")
    p.add_argument("--metric", choices=["levy", "tv", "prokhorov"], required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--delta", type=float, default=None, help="grid width override")
    p.add_argument("--grids", type=int, default=4, help="number of random grid offsets")
    p.add_argument("--alpha", type=float, default=0.25)
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--ic", choices=["bic", "dsic"], default="bic")
    p.add_argument("--adversary", help="distribution(s) to audit against")
    p.add_argument("--out", help="CSV report path")
    p.set_defaults(fn=cmd_robustify)

    p = sub.add_parser("learn", help="learn a distribution from CSV samples")
    p.add_argument("samples")
    p.add_argument("--model", choices=["product", "bayesnet"], default="product")
    p.add_argument("--eta", type=float, default=0.2)
    p.add_argument("--H", type=float, default=1.0)
    p.add_argument("--structure", help="JSON with parents and alphabet (bayesnet)")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_learn)

    p = sub.add_parser("experiment", help="seeded trial sweep from a JSON config")
    p.add_argument("config")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--out", help="CSV output path")
    p.set_defaults(fn=cmd_experiment)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.seed is None and args.cmd != "experiment":
        args.seed = 0
    try:
        return args.fn(args)
    except (RobustMechError, OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
