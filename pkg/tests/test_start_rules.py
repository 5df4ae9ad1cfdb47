import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from manso.core import BoxDomain, EstimateStats, SamplePoint
from manso.start_rules import (
    StartDecision,
    StartRuleConfig,
    chebyshev_prob_bound,
    check_s1,
    check_s2,
    check_s3,
)


def point(x, mean, var=0.5, n=5, index=-1):
    return SamplePoint(
        x=np.asarray(x, dtype=float),
        stats=EstimateStats(n=n, mean=mean, var_of_mean=var),
        index=index,
    )


CFG = StartRuleConfig(beta=0.1, omega=0.5, tau=0.1, n=5)


class TestChebyshevBound:
    def test_hand_arithmetic_example(self):
        # eps = sqrt(2 / 0.1), bound = 2 / (eps + 0.5)^2
        expected = 2.0 / (math.sqrt(20.0) + 0.5) ** 2
        got = chebyshev_prob_bound(-0.5, 2.0, 0.1)
        assert got == pytest.approx(expected, rel=1e-12)
        assert got == pytest.approx(0.0808991586989, rel=1e-9)
        assert got <= 0.1

    def test_zero_mean_diff_hits_beta_exactly(self):
        assert chebyshev_prob_bound(0.0, 2.0, 0.1) == pytest.approx(0.1, rel=1e-12)

    def test_noiseless_tie(self):
        assert chebyshev_prob_bound(0.0, 0.0, 0.1) == 0.0
        assert chebyshev_prob_bound(-1.0, 0.0, 0.1) == 0.0
        assert chebyshev_prob_bound(1e-9, 0.0, 0.1) == 1.0

    def test_mean_diff_at_epsilon_saturates(self):
        eps = math.sqrt(2.0 / 0.1)
        assert chebyshev_prob_bound(eps, 2.0, 0.1) == 1.0
        assert chebyshev_prob_bound(eps + 1.0, 2.0, 0.1) == 1.0

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            chebyshev_prob_bound(0.0, -1.0, 0.1)
        with pytest.raises(ValueError):
            chebyshev_prob_bound(0.0, 1.0, 0.5)
        with pytest.raises(ValueError):
            chebyshev_prob_bound(0.0, 1.0, 0.0)

    @settings(max_examples=200, deadline=None)
    @given(
        st.floats(-50, 50),
        st.floats(1e-6, 50),
        st.floats(1e-3, 0.499),
    )
    def test_plug_in_identity(self, mean_diff, var_diff, beta):
        # with the plug-in margin, bound <= beta exactly when mean_diff <= 0
        bound = chebyshev_prob_bound(mean_diff, var_diff, beta)
        assert (bound <= beta) == (mean_diff <= 0)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(-20, -0.01), st.floats(0.01, 20), st.floats(0.01, 0.49))
    def test_bound_nonincreasing_in_gap(self, mean_diff, var_diff, beta):
        # widening the gap eps - mean_diff never raises the bound
        worse = chebyshev_prob_bound(mean_diff, var_diff, beta)
        better = chebyshev_prob_bound(mean_diff - 1.0, var_diff, beta)
        assert better <= worse + 1e-15


class TestCheckS1:
    def test_vacuous_when_alone(self):
        a = point([0.0, 0.0], 1.0)
        decision = check_s1(a, [a], r_k=1.0, cfg=CFG)
        assert decision.start

    def test_point_outside_ball_ignored(self):
        a = point([0.0, 0.0], 5.0)
        z = point([1.001, 0.0], -100.0)
        assert check_s1(a, [z], r_k=1.0, cfg=CFG).start

    def test_better_neighbor_defeats(self):
        # plug-in identity: mean(z) <= mean(a) makes z a witness
        a = point([0.0, 0.0], 5.0, var=0.3)
        for var_a, var_z in [(0.1, 0.1), (0.1, 10.0), (10.0, 0.1), (1.0, 1.0)]:
            a = point([0.0, 0.0], 5.0, var=var_a)
            z = point([0.5, 0.0], 4.0, var=var_z)
            decision = check_s1(a, [z], r_k=1.0, cfg=CFG)
            assert not decision.start
            assert decision.rejected_by == "S1"
            assert decision.witness == 0

    def test_monotone_in_radius(self):
        a = point([0.0, 0.0], 5.0)
        z = point([0.8, 0.0], 4.0)
        rejected_at = [r for r in (0.5, 0.9, 1.5, 3.0) if not check_s1(a, [z], r, CFG).start]
        assert rejected_at == [0.9, 1.5, 3.0]

    def test_requires_two_samples(self):
        a = point([0.0], 1.0, n=1)
        with pytest.raises(ValueError):
            check_s1(a, [], 1.0, CFG)


class TestCheckS2:
    def test_vacuous_when_no_minima(self):
        assert check_s2(np.array([0.0, 0.0]), [], omega=0.5)

    def test_exact_hit_fails(self):
        assert not check_s2(np.array([1.0, 2.0]), [np.array([1.0, 2.0])], omega=0.5)

    def test_boundary_of_ball_counts_inside(self):
        # 3-4-5 triangle: distance exactly 0.5 at omega = 0.5
        a = np.array([0.0, 0.0])
        assert not check_s2(a, [np.array([0.3, 0.4])], omega=0.5)
        assert check_s2(a, [np.array([0.3, 0.4])], omega=0.499)


class TestCheckS3:
    DOM = BoxDomain(np.zeros(2), np.ones(2))

    def test_center_passes(self):
        assert check_s3(np.array([0.5, 0.5]), self.DOM if False else TestCheckS3.DOM, tau=0.1)

    def test_near_boundary_fails(self):
        assert not check_s3(np.array([0.05, 0.5]), TestCheckS3.DOM, tau=0.1)

    def test_slack_exactly_tau_passes(self):
        # the boundary neighborhood is open, so equality stays outside it
        assert check_s3(np.array([0.1, 0.5]), TestCheckS3.DOM, tau=0.1)


class TestStartDecision:
    def test_consistency_enforced(self):
        with pytest.raises(ValueError):
            StartDecision(start=True, rejected_by="S1")
        with pytest.raises(ValueError):
            StartDecision(start=False)


class TestStartRuleConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            StartRuleConfig(beta=0.5, omega=0.1, tau=0.1, n=5)
        with pytest.raises(ValueError):
            StartRuleConfig(beta=0.1, omega=0.0, tau=0.1, n=5)
        with pytest.raises(ValueError):
            StartRuleConfig(beta=0.1, omega=0.1, tau=0.1, n=1)
