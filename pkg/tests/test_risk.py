import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from equilibria.fixtures import fix_a, fix_b, fix_c, fix_power
from equilibria.market import MarketView, MartingalePolytope, build_market
from equilibria.oracle import rho_scipy
from equilibria.risk import (
    INFINITE,
    RiskModel,
    UtilitySpec,
    grad_r,
    inf_convolution,
    intersected_polytope,
    penalty_alpha,
    rho,
    strict_convexity_probe,
)

HALF = np.array([1.0, 0.0, 1.0, 0.0])


class TestClosedForms:
    def test_single_agent_no_assets(self):
        mf = fix_a()
        ev = rho(mf.agents[0], mf.market, np.array([1.0, -1.0]))
        assert ev.value == pytest.approx(math.log(math.cosh(1.0)), abs=1e-14)
        # optimizer measure is the Esscher tilt
        w = np.exp([-1.0, 1.0])
        assert ev.optimizer_measure == pytest.approx(w / w.sum())

    def test_hedgeable_claim_costs_nothing(self):
        mf = fix_b()
        dS = mf.market.increments[0]
        for agent in mf.agents:
            assert abs(rho(agent, mf.market, 5.0 * dS).value) <= 1e-12

    def test_exponential_utility_matches_entropic(self):
        mf = fix_c()
        rng = np.random.default_rng(5)
        ent = mf.agents[1]
        expo = RiskModel.utility_based(UtilitySpec("exponential", 2.0), ent.view, 0.7, ent.endowment)
        for _ in range(10):
            B = rng.normal(size=4)
            assert rho(expo, mf.market, B).value == pytest.approx(rho(ent, mf.market, B).value, abs=1e-10)

    def test_power_utility_matches_scipy(self):
        mf = fix_power()
        rng = np.random.default_rng(6)
        for _ in range(10):
            B = rng.uniform(-0.8, 0.8, 4)
            assert rho(mf.agents[0], mf.market, B).value == pytest.approx(
                rho_scipy(mf.agents[0], mf.market, B), abs=1e-9)

    def test_power_utility_two_assets_matches_scipy(self):
        market = build_market([0.1, 0.2, 0.3, 0.15, 0.25],
                              [[1.0, -1.0, 0.5, 0.0, -0.2], [0.0, 0.4, -1.0, 1.0, 0.1]])
        agent = RiskModel.utility_based(UtilitySpec("power", 0.5, -1.0), MarketView((0, 1)), 2.0)
        rng = np.random.default_rng(12)
        for _ in range(3):
            B = rng.uniform(-1.0, 1.0, 5)
            assert rho(agent, market, B).value == pytest.approx(rho_scipy(agent, market, B), abs=1e-7)


class TestAxiomsSmall:
    @pytest.mark.parametrize("make, k", [(fix_c, 0), (fix_c, 1), (fix_power, 0), (fix_power, 1)])
    def test_cash_and_monotone(self, make, k):
        mf = make()
        agent = mf.agents[k]
        rng = np.random.default_rng(k)
        for _ in range(20):
            B = rng.uniform(-0.7, 0.7, 4)
            c = rng.uniform(-0.2, 0.2)
            assert rho(agent, mf.market, B + c).value == pytest.approx(rho(agent, mf.market, B).value - c,
                                                                       abs=1e-9)
            bump = rng.uniform(0, 0.1, 4)
            assert rho(agent, mf.market, B + bump).value <= rho(agent, mf.market, B).value + 1e-9


class TestGradient:
    @pytest.mark.parametrize("make", [fix_c, fix_power])
    def test_against_central_differences(self, make):
        mf = make()
        rng = np.random.default_rng(8)
        h = 1e-5
        for agent in mf.agents:
            for _ in range(5):
                a = rng.uniform(-0.5, 0.5, 1)
                _, g, _ = grad_r(agent, mf.market, mf.bundle, a)
                fd = (rho(agent, mf.market, (a + h) @ mf.bundle).value
                      - rho(agent, mf.market, (a - h) @ mf.bundle).value) / (2 * h)
                assert g[0] == pytest.approx(fd, rel=1e-6, abs=1e-9)

    def test_optimizer_measure_is_martingale(self):
        mf = fix_c()
        poly = MartingalePolytope(mf.market, mf.agents[1].view)
        ev = rho(mf.agents[1], mf.market, np.array([0.3, -1.0, 2.0, 0.1]))
        assert poly.contains(ev.optimizer_measure, tol=1e-10)
        assert np.all(ev.optimizer_measure > 0)


class TestPenalty:
    def test_known_value(self):
        mf = fix_b()
        pen = penalty_alpha(mf.agents[0], mf.market, [0.5, 0.0, 0.5, 0.0])
        assert pen.alpha == pytest.approx(math.log(2.0))

    def test_outside_polytope(self):
        mf = fix_b()
        pen = penalty_alpha(mf.agents[0], mf.market, [0.5, 0.5, 0.0, 0.0])
        assert pen.alpha is INFINITE
        assert pen.is_infinite

    def test_dual_identity(self):
        # rho(B) = max_q E^q[-B] - alpha(q), attained at the optimizer measure
        mf = fix_c()
        agent = mf.agents[1]
        rng = np.random.default_rng(9)
        poly = MartingalePolytope(mf.market, agent.view)
        for _ in range(10):
            B = rng.normal(size=4)
            ev = rho(agent, mf.market, B)
            at_opt = -ev.optimizer_measure @ B - penalty_alpha(agent, mf.market, ev.optimizer_measure).alpha
            assert at_opt == pytest.approx(ev.value, abs=1e-9)
            for _ in range(5):
                t = rng.uniform(0.05, 0.45)
                s = rng.uniform(0.05, 0.45)
                q = np.array([t, 0.5 - t, s, 0.5 - s])
                assert poly.contains(q)
                assert -q @ B - penalty_alpha(agent, mf.market, q).alpha <= ev.value + 1e-12

    def test_power_has_no_closed_form(self):
        mf = fix_power()
        with pytest.raises(NotImplementedError):
            penalty_alpha(mf.agents[0], mf.market, mf.market.certificate)


class TestInfConvolution:
    def test_two_halves_make_a_whole(self):
        market = build_market([0.5, 0.5])
        agents = [RiskModel.entropic(2.0, MarketView(())) for _ in range(2)]
        C = np.array([1.0, -1.0])
        res = inf_convolution(agents, market, C)
        assert res.value == pytest.approx(math.log(math.cosh(1.0)), abs=1e-10)
        assert res.split == pytest.approx(np.vstack([C / 2, C / 2]), abs=1e-8)

    def test_split_sums_to_claim(self):
        mf = fix_c()
        C = np.array([0.4, -0.2, 1.0, 0.0])
        res = inf_convolution(mf.agents, mf.market, C)
        assert res.split.sum(axis=0) == pytest.approx(C, abs=1e-12)
        assert res.measures[0] == pytest.approx(res.measures[1], abs=1e-7)

    def test_intersection_contains_certificate(self):
        # in an arbitrage-free market every view's polytope holds the full-market certificate
        market = build_market([0.25] * 4, [[1.0, -1.0, 0.0, 0.0], [1.0, 1.0, 1.0, -3.0]])
        agents = [RiskModel.entropic(1.0, MarketView((0,))), RiskModel.entropic(1.0, MarketView((1,)))]
        poly = intersected_polytope(agents, market)
        assert poly.contains(market.certificate)


class TestProbe:
    def test_strictly_convex_on_fixture(self):
        mf = fix_c()
        for agent in mf.agents:
            report = strict_convexity_probe(agent, mf.market, mf.bundle, samples=16)
            assert report.passed, report.message

    def test_equality_direction_found(self):
        mf = fix_b()
        bundle = np.vstack([mf.bundle, mf.market.increments[0]])
        report = strict_convexity_probe(mf.agents[0], mf.market, bundle, samples=8)
        assert not report.passed
        assert "equality direction" in report.message
        assert report.equality_direction == pytest.approx([0.0, 1.0])


class TestProperties:
    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(-0.8, 0.8), min_size=4, max_size=4), st.floats(-2.0, 2.0))
    def test_hedge_and_cash_shift(self, claim, shift):
        # adding traded gains changes nothing; adding cash lowers the requirement one for one
        mf = fix_power()
        B = np.array(claim)
        base = rho(mf.agents[0], mf.market, B).value
        moved = B + shift * mf.market.increments[0] + shift / 10
        assert rho(mf.agents[0], mf.market, moved).value == pytest.approx(base - shift / 10, abs=1e-9)
