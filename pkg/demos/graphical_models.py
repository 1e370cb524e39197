# Item values with structure: a small Bayes net and a small Markov random field.
#
# The Bayes net is learned from samples with its DAG known; the error in the
# joint is bounded by |V| times the worst conditional-row error. The MRF
# potentials are rounded down to powers of (1 + eps), which moves the joint
# by at most eps in TV.

import numpy as np

from robustmech.dist import tv_distance
from robustmech.learn import (BayesNet, Mrf, SampleSet, bn_hybrid_check, bn_joint, bn_learn_known_dag, bn_sample,
                              mrf_joint, mrf_round_potentials, scheffe_select)

# a "mood" node drives two item values on {0, 1}
bn = BayesNet([(), (0,), (0,)], [0.0, 1.0],
              [{(): [0.6, 0.4]},
               {(0,): [0.8, 0.2], (1,): [0.3, 0.7]},
               {(0,): [0.9, 0.1], (1,): [0.2, 0.8]}])
rng = np.random.default_rng(5)
print(f"{'samples':>8} {'joint TV':>9} {'|V| x row TV':>13}")
for N in (100, 1000, 10000):
    learned = bn_learn_known_dag(SampleSet(bn_sample(bn, rng, N)), bn.parents, bn.alphabet)
    bound, joint, ok = bn_hybrid_check(bn, learned)
    print(f"{N:8d} {joint:9.4f} {bound:13.4f}")

# Scheffe picks among candidate structures using fresh samples
candidates = [bn_joint(bn_learn_known_dag(SampleSet(bn_sample(bn, rng, 500)), pa, bn.alphabet))
              for pa in ([(), (), ()], [(), (0,), (0,)], [(), (0,), (1,)])]
idx, wins = scheffe_select(candidates, SampleSet(bn_sample(bn, rng, 5000)))
print(f"\nScheffe tournament wins {wins.tolist()}: picks candidate {idx} "
      f"(TV to truth {tv_distance(candidates[idx], bn_joint(bn)):.4f})")

# an Ising-like chain on three binary nodes
e = np.exp(0.8)
pair = np.array([[e, 1.0], [1.0, e]]) / e
mrf = Mrf(3, [0, 1], [np.array([1.0, 0.7])] * 3, [(0, 1), (1, 2)], [pair, pair])
print(f"\n{'eps':>6} {'joint TV after rounding':>24}")
for eps in (0.3, 0.1, 0.01):
    print(f"{eps:6.2f} {tv_distance(mrf_joint(mrf), mrf_joint(mrf_round_potentials(mrf, eps))):24.5f}")
