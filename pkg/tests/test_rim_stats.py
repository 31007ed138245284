import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from qrobust.errors import ValidationError
from qrobust.rim_stats import (
    FidelitySampleSet,
    RimEstimate,
    arim,
    bootstrap_ci,
    ecdf_with_dkw,
    rim,
    rim2_identity_check,
    rim_error_bound,
    rim_order_relations,
    rim_via_quantile,
    spearman,
    worst_case_fidelity,
    yield_fraction,
)
from qrobust.rng import RngStream

from oracles import spearman_rho

fidelities = st.lists(st.floats(0, 1), min_size=1, max_size=60)
orders = st.sampled_from([1, 1.5, 2, 3, 4])


class TestRim:
    @pytest.mark.parametrize("p", [1, 2, 3, 7.5])
    def test_point_mass(self, p):
        assert rim([0.83] * 9, p).value == 1 - 0.83

    def test_three_point_p1(self):
        assert rim([1.0, 0.9, 0.8], 1).value == pytest.approx(0.1, abs=1e-15)

    def test_three_point_p2(self):
        expected = math.sqrt((0.0 + 0.01 + 0.04) / 3)
        assert rim([1.0, 0.9, 0.8], 2).value == pytest.approx(expected, abs=1e-15)
        assert rim_via_quantile([1.0, 0.9, 0.8], 2).value == pytest.approx(expected, abs=1e-15)
        assert expected == pytest.approx(0.12910, abs=1e-5)

    def test_ideal_distribution_is_zero(self):
        for p in (1, 2, 3):
            assert rim_via_quantile([1.0] * 4, p).value == 0.0

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            rim([], 1)

    def test_out_of_support_rejected(self):
        with pytest.raises(ValidationError):
            rim([0.5, 1.2], 1)

    def test_order_below_one_rejected(self):
        with pytest.raises(ValidationError):
            rim([0.5], 0.5)

    def test_carries_provenance(self):
        s = FidelitySampleSet([0.9, 0.95], sigma=0.02, seed=4, controller_id=7)
        est = rim(s, 2)
        assert (est.order, est.n, est.sigma) == (2.0, 2, 0.02)

    @settings(max_examples=100)
    @given(fidelities, orders)
    def test_value_in_unit_interval(self, f, p):
        assert 0.0 <= rim(f, p).value <= 1.0

    @settings(max_examples=100)
    @given(fidelities)
    def test_p1_is_mean_infidelity(self, f):
        assert rim_via_quantile(f, 1).value == pytest.approx(1 - np.mean(f), abs=1e-12)

    def test_quantile_agreement_on_random_sets(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            f = rng.beta(5, 1, size=rng.integers(1, 200))
            for p in (1, 2, 3):
                assert abs(rim(f, p).value - rim_via_quantile(f, p).value) <= 1e-12

    @settings(max_examples=100)
    @given(fidelities, orders)
    def test_quantile_agreement_property(self, f, p):
        assert abs(rim(f, p).value - rim_via_quantile(f, p).value) <= 1e-12


class TestIdentities:
    def test_point_mass(self):
        a, b = rim2_identity_check([0.7] * 5)
        assert a == pytest.approx(0.09, abs=1e-15) and b == pytest.approx(0.09, abs=1e-15)

    def test_two_point(self):
        a, b = rim2_identity_check([1.0, 0.8])
        assert a == pytest.approx(0.02, abs=1e-15)
        assert b == pytest.approx(0.02, abs=1e-15)

    @settings(max_examples=100)
    @given(fidelities)
    def test_rim2_identity_property(self, f):
        a, b = rim2_identity_check(f)
        assert abs(a - b) <= 1e-12

    def test_two_point_order_relation(self):
        r = rim_order_relations([1.0, 0.5], 1, 2)
        assert r.rim_p == pytest.approx(0.25, abs=1e-15)
        assert r.rim_q == pytest.approx(math.sqrt(0.125), abs=1e-15)
        assert r.upper_bound == pytest.approx(math.sqrt(2) * 0.25, abs=1e-15)
        assert r.monotone_ok and r.bound_ok

    def test_point_mass_relations_tight(self):
        r = rim_order_relations([0.6] * 4, 1, 3)
        assert r.rim_p == r.rim_q and r.monotone_ok and r.bound_ok

    @settings(max_examples=200)
    @given(fidelities, orders, st.floats(0.01, 4))
    def test_order_relations_property(self, f, p, gap):
        r = rim_order_relations(f, p, p + gap)
        assert r.monotone_ok and r.bound_ok

    def test_order_requires_increasing(self):
        with pytest.raises(ValidationError):
            rim_order_relations([0.5, 0.6], 2, 2)


class TestErrorBound:
    def test_p1(self):
        assert rim_error_bound(1, 100, 0.05) == pytest.approx(0.5 * math.sqrt(math.log(80) / 200), abs=1e-12)
        assert rim_error_bound(1, 100, 0.05) == pytest.approx(0.0740, abs=1e-4)

    def test_p2(self):
        assert rim_error_bound(2, 100, 0.05) == pytest.approx((math.log(80) / 200) ** 0.25 / 3, abs=1e-12)
        assert rim_error_bound(2, 100, 0.05) == pytest.approx(0.12824, abs=1e-5)

    def test_vanishes_with_n(self):
        assert rim_error_bound(1, 10**12, 0.05) < 1e-5

    @given(orders, st.integers(1, 10**6), st.floats(1e-6, 0.999))
    def test_decreasing_in_n(self, p, n, delta):
        assert rim_error_bound(p, n + 1, delta) < rim_error_bound(p, n, delta)

    @pytest.mark.parametrize("args", [(1, 0, 0.05), (1, 10, 0.0), (1, 10, 1.0), (0.5, 10, 0.05)])
    def test_domain(self, args):
        with pytest.raises(ValidationError):
            rim_error_bound(*args)


class TestArim:
    def test_equal_rims(self):
        assert arim([RimEstimate(1, 0.3, 10)] * 4).value == pytest.approx(0.3, abs=1e-15)

    def test_two_point(self):
        est = arim([RimEstimate(1, 0.0, 10), RimEstimate(1, 0.2, 10)])
        assert est.value == pytest.approx(0.1, abs=1e-15) and est.L == 2

    def test_matches_recomputation(self):
        vals = np.random.default_rng(2).uniform(0, 1, 100)
        est = arim([RimEstimate(1, v, 100, 0.02) for v in vals])
        assert est.value == pytest.approx(math.fsum(vals) / 100, abs=1e-14)

    @given(st.lists(st.floats(0, 1), min_size=1, max_size=30), st.randoms())
    def test_permutation_invariant(self, vals, rnd):
        shuffled = list(vals)
        rnd.shuffle(shuffled)
        a = arim([RimEstimate(1, v, 5) for v in vals]).value
        b = arim([RimEstimate(1, v, 5) for v in shuffled]).value
        assert a == pytest.approx(b, abs=1e-14)

    def test_empty_and_mixed(self):
        with pytest.raises(ValidationError):
            arim([])
        with pytest.raises(ValidationError):
            arim([RimEstimate(1, 0.1, 5), RimEstimate(2, 0.1, 5)])
        with pytest.raises(ValidationError):
            arim([RimEstimate(1, 0.1, 5, 0.0), RimEstimate(1, 0.1, 5, 0.1)])


class TestYield:
    def test_counting(self):
        assert yield_fraction([0.99, 0.97, 0.96, 0.90], 0.95) == 0.75

    def test_zero_threshold(self):
        assert yield_fraction([0.1, 0.5, 0.9], 0.0) == 1.0

    def test_strict_inequality(self):
        assert yield_fraction([0.95, 0.95], 0.95) == 0.0

    @given(fidelities, st.floats(0, 1), st.floats(0, 1))
    def test_nonincreasing_in_threshold(self, f, a, b):
        lo, hi = min(a, b), max(a, b)
        assert yield_fraction(f, hi) <= yield_fraction(f, lo)

    def test_worst_case(self):
        assert worst_case_fidelity([0.9, 0.4, 0.99]) == 0.4

    def test_threshold_domain(self):
        with pytest.raises(ValidationError):
            yield_fraction([0.5], 1.5)


class TestEcdf:
    def test_single_sample_band_is_vacuous(self):
        band = ecdf_with_dkw([0.5], 0.95)
        assert band.half_width == pytest.approx(math.sqrt(math.log(40) / 2), abs=1e-12)
        assert band.half_width == pytest.approx(1.358, abs=1e-3)
        assert band.lower[0] == 0.0 and band.upper[0] == 1.0

    def test_n100_half_width(self):
        band = ecdf_with_dkw(np.linspace(0, 1, 100), 0.95)
        assert band.half_width == pytest.approx(0.1358, abs=1e-4)

    @given(fidelities)
    def test_band_structure(self, f):
        band = ecdf_with_dkw(f)
        assert np.all(band.lower <= band.ecdf) and np.all(band.ecdf <= band.upper)
        assert np.all(np.diff(band.ecdf) >= 0) and band.ecdf[-1] == 1.0
        assert np.all(np.diff(band.grid) >= 0)

    def test_coverage(self):
        # the DKW constant is nearly tight (exact coverage at n = 50 is about
        # 95.7%), so 1000 trials are judged against a 3-sigma binomial margin
        dist = stats.beta(4, 1.5)
        rng = RngStream(17).generator()
        trials, hits = 1000, 0
        for _ in range(trials):
            x = rng.beta(4, 1.5, size=50)
            band = ecdf_with_dkw(x, 0.95)
            assert band.sup_deviation(dist.cdf) == pytest.approx(stats.kstest(x, dist.cdf).statistic, abs=1e-15)
            hits += band.contains_cdf(dist.cdf)
        margin = 3 * math.sqrt(trials * 0.05 * 0.95)
        assert hits >= 0.95 * trials - margin


class TestBootstrap:
    def test_zero_variance(self):
        lo, hi = bootstrap_ci([0.3] * 20, resamples=50)
        assert lo == hi == pytest.approx(0.3, abs=1e-15)

    def test_two_point_mean_golden(self):
        # resampled means of {0, 1} are 0, 1/2 or 1, with P(0) = P(1) = 1/4,
        # so both 2.5% tails land on the extremes
        assert bootstrap_ci([0.0, 1.0], resamples=100) == (0.0, 1.0)
        assert bootstrap_ci([0.0, 1.0], resamples=1000, rng=RngStream(7)) == (0.0, 1.0)

    def test_golden_fixed_seed(self):
        data = np.linspace(0.0, 1.0, 21)
        assert bootstrap_ci(data, resamples=100, rng=RngStream(3)) == (0.3916071428571428, 0.6254166666666665)

    def test_deterministic(self):
        data = np.random.default_rng(1).uniform(size=40)
        assert bootstrap_ci(data, rng=RngStream(9)) == bootstrap_ci(data, rng=RngStream(9))

    def test_contains_point_estimate_for_arim(self):
        vals = np.random.default_rng(4).uniform(0, 1, 100)
        lo, hi = bootstrap_ci(vals, np.mean, 100, 0.95, RngStream(1))
        assert lo <= np.mean(vals) <= hi

    def test_invalid(self):
        with pytest.raises(ValidationError):
            bootstrap_ci([1.0], resamples=0)
        with pytest.raises(ValidationError):
            bootstrap_ci([], resamples=10)


class TestSpearman:
    def test_identity_and_reversal(self):
        x = np.arange(10.0)
        assert spearman(x, x).rho == pytest.approx(1.0)
        assert spearman(x, -x).rho == pytest.approx(-1.0)

    def test_tied_example_against_brute_force(self):
        x = [1, 2, 2, 3, 5, 5, 5, 8]
        y = [2, 1, 4, 4, 3, 7, 6, 6]
        assert spearman(x, y).rho == pytest.approx(spearman_rho(x, y), abs=1e-12)

    @settings(max_examples=50)
    @given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), min_size=3, max_size=25))
    def test_brute_force_property(self, pairs):
        x, y = map(list, zip(*pairs))
        if len(set(x)) < 2 or len(set(y)) < 2:
            return
        assert spearman(x, y).rho == pytest.approx(spearman_rho(x, y), abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            spearman([1, 2, 3], [1, 2])
