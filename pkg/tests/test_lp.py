import numpy as np
import pytest
from scipy.optimize import linprog as scipy_linprog

from equilibria.lp import linprog, simplex_standard


class TestAgainstScipy:
    def setup_method(self):
        self.rng = np.random.default_rng(11)

    @pytest.mark.parametrize("trial", range(25))
    def test_random_bounded_lp(self, trial):
        rng = self.rng if trial == 0 else np.random.default_rng(100 + trial)
        n, m_ub, m_eq = 5, 4, 2
        x_feas = rng.uniform(0.1, 1.0, n)
        A_ub = rng.normal(size=(m_ub, n))
        b_ub = A_ub @ x_feas + rng.uniform(0.0, 1.0, m_ub)
        A_eq = rng.normal(size=(m_eq, n))
        b_eq = A_eq @ x_feas
        # box the feasible set so both solvers see a bounded problem
        A_ub = np.vstack([A_ub, np.eye(n)])
        b_ub = np.concatenate([b_ub, np.full(n, 5.0)])
        c = rng.normal(size=n)
        ours = linprog(c, A_ub, b_ub, A_eq, b_eq)
        ref = scipy_linprog(c, A_ub, b_ub, A_eq, b_eq, bounds=[(0, None)] * n, method="highs")
        assert ours.ok and ref.status == 0
        assert ours.fun == pytest.approx(ref.fun, abs=1e-8)
        assert np.all(A_ub @ ours.x <= b_ub + 1e-8)
        assert np.allclose(A_eq @ ours.x, b_eq, atol=1e-8)

    def test_free_variables(self):
        # min 2x + y  s.t. x >= -2, y >= 3 - x, both free; optimum 1 at (-2, 5)
        res = linprog([2.0, 1.0], A_ub=[[-1.0, 0.0], [-1.0, -1.0]], b_ub=[2.0, -3.0],
                      lower=[-np.inf, -np.inf])
        ref = scipy_linprog([2.0, 1.0], [[-1.0, 0.0], [-1.0, -1.0]], [2.0, -3.0],
                            bounds=[(None, None)] * 2, method="highs")
        assert res.ok
        assert res.fun == pytest.approx(ref.fun, abs=1e-10)
        assert np.allclose(res.x, [-2.0, 5.0])


class TestStatus:
    def test_infeasible(self):
        res = simplex_standard(np.ones(2), np.array([[1.0, 1.0]]), np.array([-1.0]))
        assert res.status == "infeasible"
        assert not res.ok

    def test_unbounded(self):
        res = linprog([-1.0, 0.0], A_eq=[[1.0, -1.0]], b_eq=[0.0])
        assert res.status == "unbounded"

    def test_degenerate_cycling_example(self):
        # Beale's classic cycling LP; Bland's rule must terminate
        c = np.array([-0.75, 150.0, -0.02, 6.0])
        A_ub = np.array([[0.25, -60.0, -0.04, 9.0], [0.5, -90.0, -0.02, 3.0], [0.0, 0.0, 1.0, 0.0]])
        b_ub = np.array([0.0, 0.0, 1.0])
        res = linprog(c, A_ub, b_ub)
        assert res.ok
        assert res.fun == pytest.approx(-0.05, abs=1e-10)
