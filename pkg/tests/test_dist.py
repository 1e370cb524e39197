import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import dist1, dists, rand_dist
from oracles import levy_brute, prokhorov_brute, step_cdf
from robustmech.dist import (DiscreteDist, GridSpec, ProductDist, condition_cube, dist_from_json,
                             expected_rounded_tv, fosd, kolmogorov_distance, levy_ball_extremes,
                             levy_distance, prokhorov_distance, round_dist, rounded_tv_batch, sample,
                             sample_product, shift, tv_distance)
from robustmech.errors import DimMismatch, EmptyConditioning, InvalidDistribution, InvalidEpsilon


def point(x):
    return DiscreteDist.point_mass(x)


class TestConstruction:
    def test_merges_and_sorts_atoms(self):
        d = DiscreteDist([[1.0], [0.0], [1.0]], [0.25, 0.5, 0.25])
        assert d.points == [(0.0,), (1.0,)]
        assert d.probs.tolist() == [0.5, 0.5]

    def test_drops_zero_mass(self):
        assert len(DiscreteDist([[0.0], [1.0]], [1.0, 0.0])) == 1

    def test_rejects_bad_mass(self):
        with pytest.raises(InvalidDistribution, match="deficit"):
            DiscreteDist([[0.0]], [0.9])
        with pytest.raises(InvalidDistribution):
            DiscreteDist([[0.0], [1.0]], [1.2, -0.2])

    def test_json_round_trip(self):
        d = dist1({0.1: 0.3, 0.7: 0.7})
        assert dist_from_json(json.loads(json.dumps(d.to_json()))) == d

    def test_product_needs_common_dimension(self):
        with pytest.raises(DimMismatch):
            ProductDist([point(0.0), point([0.0, 1.0])])


class TestDistances:
    def test_tv_examples(self):
        assert tv_distance(point(0), point(1)) == 1.0
        assert tv_distance(dist1({0: .5, 1: .5}), dist1({0: .25, 1: .75})) == pytest.approx(0.25)

    def test_kolmogorov_examples(self):
        assert kolmogorov_distance(point(0), point(0.1)) == 1.0
        assert kolmogorov_distance(dist1({0: .5, 1: .5}), dist1({0: .3, 1: .7})) == pytest.approx(0.2)

    @pytest.mark.parametrize("t", [0.05, 0.3, 0.77])
    def test_levy_of_two_point_masses(self, t):
        assert levy_distance(point(0), point(t)) == pytest.approx(t, abs=1e-12)

    def test_point_masses_separate_the_metrics(self):
        A, e = 0.8, 0.05
        p, q = point(A), point(A - e)
        assert kolmogorov_distance(p, q) == 1.0
        assert tv_distance(p, q) == 1.0
        assert levy_distance(p, q) == pytest.approx(e, abs=1e-12)
        assert prokhorov_distance(p, q) == pytest.approx(e, abs=1e-12)

    def test_one_dim_only_for_cdf_metrics(self):
        with pytest.raises(DimMismatch):
            levy_distance(point([0, 0]), point([0, 1]))

    @settings(max_examples=60, deadline=None)
    @given(dists(), dists())
    def test_levy_matches_candidate_scan(self, p, q):
        assert levy_distance(p, q) == pytest.approx(levy_brute(p, q), abs=1e-7)

    @settings(max_examples=40, deadline=None)
    @given(dists(max_atoms=4, dim=2, step=0.1), dists(max_atoms=4, dim=2, step=0.1))
    def test_prokhorov_matches_coupling_lp(self, p, q):
        assert prokhorov_distance(p, q) == pytest.approx(prokhorov_brute(p, q), abs=1e-7)

    @settings(max_examples=80, deadline=None)
    @given(dists(), dists())
    def test_metric_ordering(self, p, q):
        lv, ko, tv = levy_distance(p, q), kolmogorov_distance(p, q), tv_distance(p, q)
        assert lv <= ko + 1e-9 <= tv + 2e-9
        pk = prokhorov_distance(p, q)
        assert pk <= tv + 1e-9
        assert pk == pytest.approx(prokhorov_distance(q, p), abs=1e-9)

    @settings(max_examples=40, deadline=None)
    @given(dists(dim=2, step=0.1))
    def test_identity(self, p):
        assert tv_distance(p, p) == 0
        assert prokhorov_distance(p, p) == 0

    @settings(max_examples=40, deadline=None)
    @given(dists(), dists())
    def test_witness_keeps_mass_close(self, p, q):
        res = prokhorov_distance(p, q, with_witness=True)
        assert res.witness.check()
        assert res.witness.far_mass(res.distance + 1e-6) <= res.distance + 1e-6

    def test_prokhorov_can_exceed_levy(self):
        # one-dimensional Prokhorov is not bounded by Levy in general
        p, q = dist1({0.4: .5, 0.7: .5}), dist1({0.0: .3, 0.9: .7})
        assert prokhorov_distance(p, q) == pytest.approx(0.4, abs=1e-12)
        assert levy_distance(p, q) == pytest.approx(0.3, abs=1e-12)


class TestDominanceAndBall:
    def test_fosd_examples(self):
        d = dist1({0: .5, 1: .5})
        assert fosd(d, d)
        assert fosd(point(0), point(1)) and not fosd(point(1), point(0))
        a, b = dist1({0: .5, 2: .5}), point(1)
        assert not fosd(a, b) and not fosd(b, a)

    def test_extremes_of_a_point_mass(self):
        worst, best = levy_ball_extremes(point(1.0), 0.1, H=1.0)
        assert worst == dist1({-0.1: 0.1, 0.9: 0.9})
        assert best == point(1.1)

    def test_worst_member_follows_cdf_formula_at_half(self):
        d = dist1({0: .5, 1: .5})
        worst, _ = levy_ball_extremes(d, 0.5, H=1.0)
        F = step_cdf(d.support[:, 0], d.probs)
        G = step_cdf(worst.support[:, 0], worst.probs)
        for x in np.linspace(-0.5, 1.0, 61):
            assert G(x) == pytest.approx(min(F(x + 0.5) + 0.5, 1.0))
        assert worst == point(-0.5)

    def test_small_eps_approaches_d(self):
        d = dist1({0.2: .3, 0.6: .7})
        worst, best = levy_ball_extremes(d, 1e-9)
        assert levy_distance(worst, d) < 1e-6 and levy_distance(best, d) < 1e-6

    def test_invalid_eps(self):
        with pytest.raises(InvalidEpsilon):
            levy_ball_extremes(point(0.5), 0.0)

    def test_random_ball_members_are_sandwiched(self):
        rng = np.random.default_rng(77)
        checked = 0
        while checked < 200:
            d = rand_dist(rng, int(rng.integers(1, 5)), grid=0.1)
            eps = float(rng.choice([0.05, 0.1, 0.2]))
            # perturb atoms and masses, keep the result if it lands in the ball
            pts = np.clip(d.support[:, 0] + rng.uniform(-eps, eps, len(d)), -eps, 1 + eps)
            w = np.clip(d.probs + rng.uniform(-eps, eps, len(d)) / len(d), 1e-3, None)
            dh = DiscreteDist(pts, w, normalize=True)
            if levy_distance(d, dh) > eps:
                continue
            worst, best = levy_ball_extremes(d, eps, H=1.0)
            assert fosd(worst, dh) and fosd(dh, best)
            checked += 1


class TestTransforms:
    def test_shift(self):
        d = dist1({0.1: .4, 0.5: .6})
        assert shift(d, 0) == d
        assert shift(point(1), -0.2) == point(0.8)
        assert shift(shift(d, 0.3), -0.3) == d

    def test_round_dist_examples(self):
        g = GridSpec([0.2], 1.0)
        assert round_dist(point(0.1), g) == point(0.0)
        assert round_dist(point(1.3), g) == point(1.2)

    def test_fine_grid_is_identity_on_aligned_support(self):
        d = dist1({0.25: .5, 0.75: .5})
        assert round_dist(d, GridSpec([0.0], 0.25)) == d

    @settings(max_examples=50, deadline=None)
    @given(dists(dim=2, step=0.05), st.floats(0.05, 0.6), st.floats(0, 1), st.floats(0, 1))
    def test_rounded_points_lie_on_grid(self, d, width, a, b):
        g = GridSpec([a * width, b * width], width)
        r = round_dist(d, g)
        assert r.probs.sum() == pytest.approx(1.0)
        for pt in r.points:
            for x, off in zip(pt, g.offset):
                k = (x - off) / width
                assert x == 0.0 or abs(k - round(k)) < 1e-6

    def test_condition_cube_examples(self):
        assert condition_cube(dist1({0: .5, 1: .5}), [0.0], [0.5]) == point(0)
        d = dist1({0: .25, 0.4: .25, 1: .5})
        assert condition_cube(d, [0.0], [0.5]) == dist1({0: .5, 0.4: .5})
        assert condition_cube(d, [-1.0], [3.0]) == d
        with pytest.raises(EmptyConditioning):
            condition_cube(d, [2.0], [1.0])


class TestSampling:
    def test_point_mass(self):
        rng = np.random.default_rng(0)
        assert all(sample(point(0.3), rng) == (0.3,) for _ in range(20))

    def test_frequency(self):
        xs = sample(dist1({0: .5, 1: .5}), np.random.default_rng(3), 10 ** 5)
        assert xs.mean() == pytest.approx(0.5, abs=0.01)

    def test_seeded_repeat(self):
        D = ProductDist([dist1({0: .2, 1: .8}), dist1({0.5: .5, 0.7: .5})])
        a = [sample_product(D, np.random.default_rng(9)) for _ in range(3)]
        b = [sample_product(D, np.random.default_rng(9)) for _ in range(3)]
        assert a == b


class TestRoundedTv:
    def test_equal_inputs(self):
        d = dist1({0.1: .5, 0.8: .5})
        mean, _ = expected_rounded_tv(d, d, 0.3, 200, np.random.default_rng(1))
        assert mean == 0.0

    def test_two_point_masses(self):
        t, width = 0.03, 0.1
        mean, se = expected_rounded_tv(point(0.5), point(0.5 + t), width, 20000, np.random.default_rng(2))
        assert abs(mean - t / width) <= 3 * se + 1e-12

    @settings(max_examples=30, deadline=None)
    @given(dists(dim=2, step=0.1), dists(dim=2, step=0.1), st.floats(0.1, 0.5), st.integers(0, 10 ** 6))
    def test_batch_matches_direct_rounding(self, p, q, width, seed):
        offs = np.random.default_rng(seed).uniform(0, width, size=(5, 2))
        batch = rounded_tv_batch(p, q, width, offs)
        for o, val in zip(offs, batch):
            g = GridSpec(o, width)
            assert val == pytest.approx(tv_distance(round_dist(p, g), round_dist(q, g)), abs=1e-9)
