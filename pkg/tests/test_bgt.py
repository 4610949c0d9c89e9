import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sensorgt import bgt
from sensorgt.faults import fault_state_from_support


def joint_marginals(prior_normal, records, noise):
    """Exhaustive 2^N reference: full joint over fault configurations.

    Bit i of a configuration means sensor i is faulty.  Returns the marginal
    probability of being normal after conditioning on every record in order.
    Exact only while no sensor is pooled twice; an OR likelihood couples the
    pooled sensors, so overlapping pools leave the product family.
    """
    p0 = np.asarray(prior_normal, dtype=float)
    n = p0.shape[0]
    bits = (np.arange(2**n)[:, None] >> np.arange(n)) & 1
    probs = np.prod(np.where(bits == 1, 1.0 - p0, p0), axis=1)
    for rec in records:
        hit = bits[:, list(rec.pool)].any(axis=1)
        if rec.result == 1:
            like = np.where(hit, 1.0 - noise.beta, noise.alpha)
        else:
            like = np.where(hit, noise.beta, 1.0 - noise.alpha)
        probs = probs * like
        probs = probs / probs.sum()
    return np.array([probs[bits[:, i] == 0].sum() for i in range(n)])


class TestNoiseModel:
    def test_validation(self):
        with pytest.raises(ValueError, match="alpha"):
            bgt.NoiseModel(alpha=1.0, beta=0.0)
        with pytest.raises(ValueError, match="beta"):
            bgt.NoiseModel(alpha=0.0, beta=-0.1)
        with pytest.raises(ValueError, match="informative"):
            bgt.NoiseModel(alpha=0.6, beta=0.5)

    def test_noiseless_allowed(self):
        nm = bgt.NoiseModel(alpha=0.0, beta=0.0)
        assert nm.alpha == 0.0 and nm.beta == 0.0


class TestBeliefState:
    def test_uniform(self):
        b = bgt.BeliefState.uniform(5, 0.8)
        assert b.num_sensors == 5
        assert np.array_equal(b.p, np.full(5, 0.8))

    def test_validation(self):
        with pytest.raises(ValueError):
            bgt.BeliefState(np.array([[0.5]]))
        with pytest.raises(ValueError):
            bgt.BeliefState(np.array([0.5, 1.2]))

    def test_read_only(self):
        b = bgt.BeliefState.uniform(3, 0.5)
        with pytest.raises(ValueError):
            b.p[0] = 0.1


class TestTestRecord:
    def test_validation(self):
        with pytest.raises(ValueError, match="non-empty"):
            bgt.TestRecord(pool=(), result=0)
        with pytest.raises(ValueError, match="distinct"):
            bgt.TestRecord(pool=(1, 1), result=0)
        with pytest.raises(ValueError, match="0 or 1"):
            bgt.TestRecord(pool=(1, 2), result=2)


class TestPriorAndPoolProbability:
    def test_default_prior(self):
        assert bgt.default_prior(18, 2) == 1.0 - 2.0 / 18.0
        assert bgt.default_prior(1000, 4) == 0.996
        with pytest.raises(ValueError):
            bgt.default_prior(10, 11)

    def test_pool_probability(self):
        b = bgt.BeliefState(np.array([0.5, 0.8, 1.0, 0.25]))
        assert bgt.pool_probability_normal(b, [0, 1]) == pytest.approx(0.4)
        assert bgt.pool_probability_normal(b, [2]) == 1.0
        with pytest.raises(ValueError):
            bgt.pool_probability_normal(b, [])


class TestPredictiveVariance:
    def test_matches_polynomial_expansion(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            a = rng.uniform(0.0, 0.45)
            b = rng.uniform(0.0, 0.45)
            om = rng.uniform(0.0, 1.0)
            nm = bgt.NoiseModel(a, b)
            poly = b - b * b + (1 - 2 * b) * (1 - a - b) * om - (1 - a - b) ** 2 * om * om
            assert abs(bgt.predictive_variance(om, nm) - poly) < 1e-12

    def test_range_check(self):
        with pytest.raises(ValueError):
            bgt.predictive_variance(1.5, bgt.NoiseModel(0.0, 0.0))


class TestTargetPoolProbability:
    def test_known_values(self):
        assert bgt.target_pool_probability(bgt.NoiseModel(0.0, 0.0)) == 0.5
        assert bgt.target_pool_probability(bgt.NoiseModel(0.0, 0.3)) == pytest.approx(2.0 / 7.0)
        assert bgt.target_pool_probability(bgt.NoiseModel(0.1, 0.3)) == pytest.approx(1.0 / 3.0)

    @settings(max_examples=100, deadline=None)
    @given(
        a=st.floats(0.0, 0.45),
        b=st.floats(0.0, 0.45),
        om=st.floats(0.0, 1.0),
    )
    def test_maximizes_variance(self, a, b, om):
        nm = bgt.NoiseModel(a, b)
        star = bgt.target_pool_probability(nm)
        assert bgt.predictive_variance(star, nm) >= bgt.predictive_variance(om, nm) - 1e-12


class TestGreedyDesignPool:
    def test_uniform_point_nine_grows_to_seven(self):
        # 0.9^7 = 0.478 is the closest power of 0.9 to the noiseless target 0.5
        b = bgt.BeliefState.uniform(40, 0.9)
        pool = bgt.greedy_design_pool(b, bgt.NoiseModel(0.0, 0.0), seed=3)
        assert len(pool) == 7
        assert pool == sorted(pool)

    def test_half_probability_stays_singleton(self):
        b = bgt.BeliefState.uniform(10, 0.5)
        pool = bgt.greedy_design_pool(b, bgt.NoiseModel(0.0, 0.0), seed=4)
        assert len(pool) == 1

    def test_low_index_wins_ties(self):
        # identical candidates tie at every step, so growth proceeds in
        # index order from the seeded start
        b = bgt.BeliefState.uniform(10, 0.9)
        pool = bgt.greedy_design_pool(b, bgt.NoiseModel(0.0, 0.0), seed=0)
        start = int(np.random.default_rng(0).integers(10))
        expected = sorted({start} | set([i for i in range(10) if i != start][:6]))
        assert pool == expected

    def test_deterministic_per_seed(self):
        b = bgt.BeliefState(np.linspace(0.3, 0.99, 25))
        nm = bgt.NoiseModel(0.05, 0.05)
        assert bgt.greedy_design_pool(b, nm, seed=9) == bgt.greedy_design_pool(b, nm, seed=9)

    def test_start_varies_with_seed(self):
        b = bgt.BeliefState.uniform(30, 0.5)
        starts = {tuple(bgt.greedy_design_pool(b, bgt.NoiseModel(0.0, 0.0), seed=s)) for s in range(20)}
        assert len(starts) > 5


class TestBayesUpdate:
    def test_each_step_marginalizes_product_joint(self):
        # one update from a product prior is an exact marginalization; the
        # chain re-forms the product before every test
        rng = np.random.default_rng(1)
        nm = bgt.NoiseModel(0.1, 0.1)
        for _ in range(10):
            n = 8
            belief = bgt.BeliefState(rng.uniform(0.2, 0.99, size=n))
            for _ in range(12):
                size = int(rng.integers(1, n + 1))
                pool = tuple(int(i) for i in rng.choice(n, size=size, replace=False))
                rec = bgt.TestRecord(pool=pool, result=int(rng.integers(2)))
                ref = joint_marginals(belief.p, [rec], nm)
                belief = bgt.bayes_update(belief, rec, nm)
                assert np.abs(belief.p - ref).max() < 1e-9

    def test_disjoint_pools_match_cumulative_joint(self):
        # when no sensor is pooled twice the true joint stays product-form,
        # so the whole chain agrees with full enumeration
        rng = np.random.default_rng(6)
        nm = bgt.NoiseModel(0.15, 0.05)
        for _ in range(10):
            n = 9
            prior = rng.uniform(0.2, 0.99, size=n)
            belief = bgt.BeliefState(prior)
            perm = rng.permutation(n)
            pools = [tuple(int(i) for i in perm[:3]), tuple(int(i) for i in perm[3:6]), tuple(int(i) for i in perm[6:])]
            records = []
            for pool in pools:
                records.append(bgt.TestRecord(pool=pool, result=int(rng.integers(2))))
                belief = bgt.bayes_update(belief, records[-1], nm)
            ref = joint_marginals(prior, records, nm)
            assert np.abs(belief.p - ref).max() < 1e-9

    def test_out_of_pool_untouched(self):
        belief = bgt.BeliefState(np.array([0.7, 0.8, 0.9, 0.6]))
        rec = bgt.TestRecord(pool=(1, 2), result=1)
        out = bgt.bayes_update(belief, rec, bgt.NoiseModel(0.1, 0.1))
        assert out.p[0] == belief.p[0]
        assert out.p[3] == belief.p[3]

    def test_positive_lowers_negative_raises(self):
        belief = bgt.BeliefState(np.array([0.7, 0.8, 0.9]))
        nm = bgt.NoiseModel(0.05, 0.1)
        up = bgt.bayes_update(belief, bgt.TestRecord(pool=(0, 1), result=0), nm)
        down = bgt.bayes_update(belief, bgt.TestRecord(pool=(0, 1), result=1), nm)
        assert (up.p[:2] >= belief.p[:2]).all()
        assert (down.p[:2] <= belief.p[:2]).all()

    def test_noiseless_negative_clears_pool_exactly(self):
        belief = bgt.BeliefState(np.array([0.3, 0.5, 0.9]))
        out = bgt.bayes_update(belief, bgt.TestRecord(pool=(0, 2), result=0), bgt.NoiseModel(0.05, 0.0))
        assert out.p[0] == 1.0
        assert out.p[2] == 1.0
        assert out.p[1] == 0.5

    def test_noiseless_negative_survives_underflow(self):
        # 700 sensors at 0.3 underflows the pool product to exactly 0.0
        n = 700
        belief = bgt.BeliefState.uniform(n, 0.3)
        assert bgt.pool_probability_normal(belief, range(n)) == 0.0
        out = bgt.bayes_update(belief, bgt.TestRecord(pool=tuple(range(n)), result=0), bgt.NoiseModel(0.0, 0.0))
        assert (out.p == 1.0).all()

    def test_certain_hit_learns_nothing_more(self):
        belief = bgt.BeliefState(np.array([0.0, 0.8, 0.9]))
        out = bgt.bayes_update(belief, bgt.TestRecord(pool=(0, 1), result=1), bgt.NoiseModel(0.0, 0.1))
        assert np.allclose(out.p, belief.p)

    def test_index_out_of_range(self):
        belief = bgt.BeliefState.uniform(3, 0.5)
        with pytest.raises(ValueError, match="range"):
            bgt.bayes_update(belief, bgt.TestRecord(pool=(3,), result=0), bgt.NoiseModel(0.1, 0.1))
        with pytest.raises(ValueError, match="range"):
            bgt.bayes_update(belief, bgt.TestRecord(pool=(-1,), result=0), bgt.NoiseModel(0.1, 0.1))

    @settings(max_examples=100, deadline=None)
    @given(
        seed=st.integers(0, 10_000),
        result=st.integers(0, 1),
        a=st.floats(0.0, 0.45),
        b=st.floats(0.0, 0.45),
    )
    def test_monotone_evidence(self, seed, result, a, b):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 10))
        belief = bgt.BeliefState(rng.uniform(0.05, 0.99, size=n))
        size = int(rng.integers(1, n + 1))
        pool = tuple(int(i) for i in rng.choice(n, size=size, replace=False))
        out = bgt.bayes_update(belief, bgt.TestRecord(pool=pool, result=result), bgt.NoiseModel(a, b))
        idx = list(pool)
        if result == 0:
            assert (out.p[idx] >= belief.p[idx] - 1e-15).all()
        else:
            assert (out.p[idx] <= belief.p[idx] + 1e-15).all()


class TestThresholdDecode:
    def test_strict_threshold(self):
        belief = bgt.BeliefState(np.array([0.19, 0.2, 0.21]))
        decoded = bgt.threshold_decode(belief, sigma=0.2)
        assert decoded.support() == (0,)

    def test_default_threshold(self):
        belief = bgt.BeliefState(np.array([0.05, 0.9]))
        assert bgt.threshold_decode(belief).support() == (0,)

    def test_validation(self):
        with pytest.raises(ValueError):
            bgt.threshold_decode(bgt.BeliefState.uniform(2, 0.5), sigma=1.0)


class TestMapDecode:
    def test_noiseless_unique_state(self):
        prior = bgt.BeliefState.uniform(6, 0.9)
        nm = bgt.NoiseModel(0.0, 0.0)
        truth = {1, 4}
        pools = [(0, 1), (2, 3), (4, 5), (1, 4), (0, 2), (3, 5), (0, 5), (1, 2), (3, 4)]
        records = [bgt.TestRecord(pool=p, result=int(bool(set(p) & truth))) for p in pools]
        decoded = bgt.map_decode(records, prior, nm, d=2)
        assert decoded.support() == (1, 4)

    def test_empty_records_decode_prior(self):
        prior = bgt.BeliefState.uniform(5, 0.8)
        decoded = bgt.map_decode([], prior, bgt.NoiseModel(0.1, 0.1), d=2)
        assert decoded.support() == ()

    def test_matches_exhaustive_posterior_argmax(self):
        rng = np.random.default_rng(2)
        n, d = 10, 2
        nm = bgt.NoiseModel(0.1, 0.1)
        for _ in range(20):
            p0 = rng.uniform(0.5, 0.99, size=n)
            prior = bgt.BeliefState(p0)
            records = []
            for _ in range(15):
                size = int(rng.integers(1, 6))
                pool = tuple(int(i) for i in rng.choice(n, size=size, replace=False))
                records.append(bgt.TestRecord(pool=pool, result=int(rng.integers(2))))
            decoded = bgt.map_decode(records, prior, nm, d=d, seed=7)

            # brute force over all 2^10 states restricted to support <= d
            bits = (np.arange(2**n)[:, None] >> np.arange(n)) & 1
            probs = np.prod(np.where(bits == 1, 1.0 - p0, p0), axis=1)
            for rec in records:
                hit = bits[:, list(rec.pool)].any(axis=1)
                if rec.result == 1:
                    probs = probs * np.where(hit, 1.0 - nm.beta, nm.alpha)
                else:
                    probs = probs * np.where(hit, nm.beta, 1.0 - nm.alpha)
            small = bits.sum(axis=1) <= d
            best = probs[small].max()
            got = probs[int(sum(1 << i for i in decoded.support()))]
            assert got >= best * (1.0 - 1e-12)

    def test_enumeration_cap(self):
        prior = bgt.BeliefState.uniform(30, 0.9)
        with pytest.raises(bgt.FeasibilityError):
            bgt.map_decode([], prior, bgt.NoiseModel(0.1, 0.1), d=5, enumeration_cap=100)


class TestRandomInitialPools:
    def test_count_and_min_size(self):
        pools = bgt.random_initial_pools(12, 8, seed=0)
        assert len(pools) == 8
        assert all(len(p) >= 2 for p in pools)
        assert all(all(0 <= i < 12 for i in p) for p in pools)

    def test_zero_count(self):
        assert bgt.random_initial_pools(5, 0, seed=0) == []

    def test_density_controls_size(self):
        small = bgt.random_initial_pools(100, 50, density=0.1, seed=1)
        big = bgt.random_initial_pools(100, 50, density=0.9, seed=1)
        assert np.mean([len(p) for p in small]) < np.mean([len(p) for p in big])

    def test_deterministic(self):
        assert bgt.random_initial_pools(10, 5, seed=2) == bgt.random_initial_pools(10, 5, seed=2)

    def test_validation(self):
        with pytest.raises(ValueError):
            bgt.random_initial_pools(10, -1)
        with pytest.raises(ValueError):
            bgt.random_initial_pools(1, 1)
        with pytest.raises(ValueError):
            bgt.random_initial_pools(10, 1, density=0.0)


class TestHasConverged:
    def test_small_move_converges(self):
        a = bgt.BeliefState(np.array([0.5, 0.5]))
        b = bgt.BeliefState(np.array([0.5, 0.5 + 5e-4]))
        assert bgt.has_converged(a, b)
        assert not bgt.has_converged(a, b, epsilon=1e-4)

    def test_validation(self):
        a = bgt.BeliefState.uniform(2, 0.5)
        with pytest.raises(ValueError):
            bgt.has_converged(a, bgt.BeliefState.uniform(3, 0.5))
        with pytest.raises(ValueError):
            bgt.has_converged(a, a, epsilon=0.0)


class TestBalanceSplit:
    def test_even_split_deals_by_index_when_uniform(self):
        belief = bgt.BeliefState.uniform(10, 0.9)
        a, b = bgt.balance_split_kf_bgt([4, 7, 1, 9], belief, min_subgroup=2)
        assert a == [1, 7]
        assert b == [4, 9]

    def test_odd_split_first_group_larger(self):
        belief = bgt.BeliefState.uniform(10, 0.9)
        a, b = bgt.balance_split_kf_bgt([5, 2, 8, 0, 6], belief, min_subgroup=1)
        assert a == [0, 5, 8]
        assert b == [2, 6]

    def test_top_suspects_land_in_different_subgroups(self):
        belief = bgt.BeliefState(np.array([0.05, 0.05, 0.9, 0.9]))
        a, b = bgt.balance_split_kf_bgt([0, 1, 2, 3], belief, min_subgroup=2)
        assert a == [0, 2]
        assert b == [1, 3]

    def test_padding_prefers_likely_normal_and_deficient_group(self):
        p = np.array([0.10, 0.90, 0.50, 0.80, 0.80, 0.50, 0.95, 0.50])
        belief = bgt.BeliefState(p)
        a, b = bgt.balance_split_kf_bgt([5, 2, 7], belief, min_subgroup=3)
        # b = [5] needs two pads and takes the best outsiders 6 then 1;
        # a = [2, 7] needs one and gets 3 (index beats the tied 4)
        assert a == [2, 7, 3]
        assert b == [5, 6, 1]

    def test_equal_need_pads_first_group_first(self):
        belief = bgt.BeliefState(np.array([0.2, 0.9, 0.8, 0.7]))
        a, b = bgt.balance_split_kf_bgt([0, 3], belief, min_subgroup=2)
        assert a == [0, 1]
        assert b == [3, 2]

    def test_padding_never_reuses_pool_members(self):
        belief = bgt.BeliefState(np.array([0.99, 0.98, 0.5, 0.5]))
        a, b = bgt.balance_split_kf_bgt([0, 1], belief, min_subgroup=2)
        assert a == [1, 2]
        assert b == [0, 3]

    def test_insufficient_outsiders(self):
        belief = bgt.BeliefState.uniform(3, 0.9)
        with pytest.raises(ValueError, match="cannot pad"):
            bgt.balance_split_kf_bgt([0, 1, 2], belief, min_subgroup=3)

    def test_validation(self):
        belief = bgt.BeliefState.uniform(5, 0.9)
        with pytest.raises(ValueError, match="non-empty"):
            bgt.balance_split_kf_bgt([], belief)
        with pytest.raises(ValueError, match="distinct"):
            bgt.balance_split_kf_bgt([1, 1], belief)
        with pytest.raises(ValueError, match="out of range"):
            bgt.balance_split_kf_bgt([9], belief)


class TestEndToEndBoolean:
    def test_adaptive_loop_finds_planted_faults(self):
        # miniature closed loop: design, observe noiselessly, update, decode
        rng = np.random.default_rng(5)
        n = 30
        truth = {4, 17}
        nm = bgt.NoiseModel(0.0, 0.0)
        belief = bgt.BeliefState.uniform(n, bgt.default_prior(n, 2))
        for t in range(40):
            pool = bgt.greedy_design_pool(belief, nm, seed=int(rng.integers(2**31)))
            hit = int(bool(set(pool) & truth))
            belief = bgt.bayes_update(belief, bgt.TestRecord(pool=tuple(pool), result=hit), nm)
        decoded = bgt.threshold_decode(belief)
        assert decoded == fault_state_from_support(n, sorted(truth))
