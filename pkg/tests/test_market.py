import numpy as np
import pytest

from equilibria.errors import ArbitrageDetected, InvalidProbabilities
from equilibria.fixtures import fix_b
from equilibria.market import (
    MarketView,
    MartingalePolytope,
    build_market,
    check_non_redundancy,
    is_replicable,
    relative_interior_slack,
    replicable_split,
    support_bounds,
    union_view,
)


@pytest.fixture
def market():
    return fix_b().market


class TestBuildMarket:
    def test_certificate_is_martingale_measure(self, market):
        q = market.certificate
        assert np.all(q > 0)
        assert q.sum() == pytest.approx(1.0)
        assert market.increments @ q == pytest.approx([0.0], abs=1e-12)

    def test_arbitrage_is_rejected(self):
        with pytest.raises(ArbitrageDetected, match="arbitrage"):
            build_market([0.5, 0.5], [[1.0, 0.0]])

    def test_weak_arbitrage_is_rejected(self):
        # gains never negative: every martingale measure sits on the middle state
        with pytest.raises(ArbitrageDetected):
            build_market([0.3, 0.3, 0.4], [[1.0, 0.0, 1.0]])

    @pytest.mark.parametrize("probs", [[0.5, 0.6], [1.0, 0.0], [-0.1, 1.1], []])
    def test_invalid_probabilities(self, probs):
        with pytest.raises(InvalidProbabilities):
            build_market(probs)

    def test_no_assets(self):
        m = build_market([0.2, 0.8])
        assert m.n_assets == 0
        assert m.certificate == pytest.approx([0.5, 0.5])


class TestReplication:
    def test_split_of_half_claim(self, market):
        theta, c, residual = replicable_split(market, MarketView((0,)), [1.0, 0.0, 1.0, 0.0])
        assert theta == pytest.approx([0.0], abs=1e-14)
        assert c == pytest.approx(0.5)
        assert residual == pytest.approx([0.5, -0.5, 0.5, -0.5])

    def test_replicable_claims(self, market):
        view = MarketView((0,))
        rng = np.random.default_rng(3)
        for _ in range(20):
            c, th = rng.normal(size=2)
            claim = c + th * market.increments[0]
            assert is_replicable(market, view, claim)
            _, c_hat, _ = replicable_split(market, view, claim)
            assert c_hat == pytest.approx(c)
        assert not is_replicable(market, MarketView(()), market.increments[0])

    def test_union_view(self):
        assert union_view([MarketView((2,)), MarketView((0, 2))]).asset_indices == (0, 2)


class TestPolytope:
    def test_support_bounds(self, market):
        poly = MartingalePolytope(market, MarketView((0,)))
        assert support_bounds(market, poly, [1.0, 0.0, 1.0, 0.0]) == pytest.approx((0.0, 1.0), abs=1e-12)
        lo, hi = support_bounds(market, poly, 2.0 + 3.0 * market.increments[0])
        assert lo == pytest.approx(2.0) and hi == pytest.approx(2.0)

    def test_contains(self, market):
        poly = MartingalePolytope(market, MarketView((0,)))
        assert poly.contains([0.5, 0.0, 0.5, 0.0])
        assert not poly.contains([0.5, 0.5, 0.0, 0.0])

    def test_relative_interior(self, market):
        poly = MartingalePolytope(market, MarketView((0,)))
        B = np.array([[1.0, 0.0, 1.0, 0.0]])
        assert relative_interior_slack(poly, B, [0.5]) > 0
        assert relative_interior_slack(poly, B, [1.0]) <= 1e-12
        assert relative_interior_slack(poly, B, [1.2]) == -np.inf


class TestNonRedundancy:
    def test_independent_bundle(self, market):
        poly = MartingalePolytope(market, MarketView((0,)))
        ok, witness = check_non_redundancy(market, [[1.0, 0.0, 1.0, 0.0]], poly)
        assert ok and witness is None

    def test_duplicate_claims(self, market):
        poly = MartingalePolytope(market, MarketView((0,)))
        B = [[1.0, 0.0, 1.0, 0.0], [1.0, 0.0, 1.0, 0.0]]
        ok, witness = check_non_redundancy(market, B, poly)
        assert not ok
        assert witness == pytest.approx([1.0, -1.0])

    def test_replicable_claim(self, market):
        poly = MartingalePolytope(market, MarketView((0,)))
        B = [[1.0, 0.0, 1.0, 0.0], [1.0, 1.0, -1.0, -1.0]]
        ok, witness = check_non_redundancy(market, B, poly)
        assert not ok
        assert witness == pytest.approx([0.0, 1.0])
