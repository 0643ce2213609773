"""Demand, partial-equilibrium price-allocation (PEPA), Pareto and agreeability tests.

Sign convention: an agent holding ``a`` units of the bundle has marginal
price ``E^{q*(a)}[B]``, so the first-order condition of the demand problem
reads ``-grad r(a) = p``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import SolverConfig
from .errors import AssumptionViolated, EmptyIntersection, NonConvergence, PriceOutsideRange
from .lp import linprog
from .market import (
    FiniteMarket,
    MartingalePolytope,
    check_non_redundancy,
    relative_interior_slack,
)
from .optimize import minimize_bfgs
from .risk import RiskModel, grad_r, intersected_polytope, rho, strict_convexity_probe

log = logging.getLogger(__name__)

DEFAULT = SolverConfig()


def _as_bundle(bundle) -> np.ndarray:
    return np.atleast_2d(np.asarray(bundle, dtype=float))


class _Agent:
    """Evaluates ``r(a) = rho(a . B)`` while remembering the last hedge for warm starts."""

    def __init__(self, model: RiskModel, market: FiniteMarket, bundle: np.ndarray):
        self.model, self.market, self.bundle = model, market, bundle
        self.hedge = None

    def __call__(self, a):
        value, grad, ev = grad_r(self.model, self.market, self.bundle, a, self.hedge)
        self.hedge = ev.hedge
        return value, grad, ev


# ---------------------------------------------------------------------------
# demand


@dataclass
class DemandResult:
    allocation: np.ndarray
    marginal_price: np.ndarray
    residual: float
    iterations: int


def solve_demand(model: RiskModel, market: FiniteMarket, bundle, p,
                 config: SolverConfig = DEFAULT, a0=None) -> DemandResult:
    """Minimiser of ``a -> rho(a . B) + a . p`` with diagnostics."""
    B = _as_bundle(bundle)
    p = np.atleast_1d(np.asarray(p, dtype=float))
    poly = MartingalePolytope(market, model.view)
    ok, witness = check_non_redundancy(market, B, poly)
    if not ok:
        raise AssumptionViolated("non-redundancy",
                                 f"bundle is redundant for agent {model.name!r}: delta = {witness.tolist()}",
                                 witness)
    if relative_interior_slack(poly, B, p) <= 1e-12:
        raise PriceOutsideRange(f"price {p.tolist()} is not attainable as a marginal price "
                                f"for agent {model.name!r}")
    agent = _Agent(model, market, B)

    def fun_grad(a):
        value, grad, _ = agent(a)
        return value + a @ p, grad + p

    def watch(a):
        if np.max(np.abs(a)) > config.divergence_bound:
            raise PriceOutsideRange(f"demand diverges at price {p.tolist()} (|a| > {config.divergence_bound:g})")

    x0 = np.zeros(B.shape[0]) if a0 is None else np.asarray(a0, dtype=float)
    res = minimize_bfgs(fun_grad, x0, gtol=min(config.outer_gtol, 1e-8),
                        max_iter=config.max_iterations, watch=watch)
    watch(res.x)
    _, grad, _ = agent(res.x)
    marginal = -grad
    residual = float(np.max(np.abs(marginal - p)))
    if residual > config.residual_tol:
        raise NonConvergence(f"demand solver stalled with price residual {residual:.3e}", res.x)
    return DemandResult(res.x, marginal, residual, res.iterations)


def demand(model: RiskModel, market: FiniteMarket, bundle, p, config: SolverConfig = DEFAULT) -> np.ndarray:
    """The agent's unique demand for the bundle at price ``p``."""
    return solve_demand(model, market, bundle, p, config).allocation


def demand_monotonicity_check(model: RiskModel, market: FiniteMarket, bundle, p1, p2,
                              config: SolverConfig = DEFAULT) -> float:
    """``(Z(p1) - Z(p2)) . (p1 - p2)``; negative whenever the prices differ."""
    p1 = np.atleast_1d(np.asarray(p1, dtype=float))
    p2 = np.atleast_1d(np.asarray(p2, dtype=float))
    z1 = demand(model, market, bundle, p1, config)
    z2 = z1 if np.array_equal(p1, p2) else demand(model, market, bundle, p2, config)
    return float((z1 - z2) @ (p1 - p2))


# ---------------------------------------------------------------------------
# PEPA


@dataclass
class PepaResult:
    price: np.ndarray
    allocation: np.ndarray  # I x n, columns sum to zero
    optimizer_measures: np.ndarray  # I x |states|
    clearing_residual: float
    foc_residual: float
    value: float
    iterations: int


def check_assumptions(agents: Sequence[RiskModel], market: FiniteMarket, bundle,
                      config: SolverConfig = DEFAULT) -> MartingalePolytope:
    """Raise AssumptionViolated unless the existence/uniqueness hypotheses hold numerically."""
    B = _as_bundle(bundle)
    try:
        poly = intersected_polytope(agents, market)
    except EmptyIntersection as exc:
        raise AssumptionViolated("common martingale measure",
                                 "the agents' martingale sets do not intersect") from exc
    ok, witness = check_non_redundancy(market, B, poly)
    if not ok:
        raise AssumptionViolated("non-redundancy",
                                 f"non-redundancy violated: delta = {witness.tolist()}",
                                 witness)
    for k, model in enumerate(agents):
        report = strict_convexity_probe(model, market, B, samples=config.probe_samples, seed=k)
        if not report.passed:
            raise AssumptionViolated("strict convexity",
                                     f"strict convexity fails for agent "
                                     f"{model.name or k}: {report.message}", report)
    return poly


def solve_pepa(agents: Sequence[RiskModel], market: FiniteMarket, bundle, a0=None,
               config: SolverConfig = DEFAULT, check: bool = True) -> PepaResult:
    """Unique PEPA of the bundle, found by minimising the aggregate requirement.

    The free variables are the holdings of all agents but the last; the last
    agent takes the opposite of their sum.  ``a0`` optionally gives an
    initial (I-1) x n or I x n allocation; the default is zero trade.
    """
    B = _as_bundle(bundle)
    n, I = B.shape[0], len(agents)
    if check:
        check_assumptions(agents, market, B, config)
    solvers = [_Agent(m, market, B) for m in agents]

    def full(x):
        head = x.reshape(I - 1, n)
        return np.vstack([head, -head.sum(axis=0)])

    def fun_grad(x):
        alloc = full(x)
        out = [s(a) for s, a in zip(solvers, alloc)]
        value = sum(o[0] for o in out)
        gI = out[-1][1]
        grad = np.concatenate([o[1] - gI for o in out[:-1]])
        return value, grad

    if I == 1:
        x = np.zeros(0)
        value, iterations = 0.0, 0
    else:
        if a0 is None:
            x0 = np.zeros((I - 1) * n)
        else:
            a0 = np.asarray(a0, dtype=float).reshape(-1, n)
            x0 = a0[:I - 1].ravel()
        res = minimize_bfgs(fun_grad, x0, gtol=config.outer_gtol, max_iter=config.max_iterations)
        if res.grad_norm > 1e-8:
            raise NonConvergence(f"aggregate minimisation stalled at gradient {res.grad_norm:.3e}", full(res.x))
        x, value, iterations = res.x, res.fun, res.iterations
    alloc = full(x) if I > 1 else np.zeros((1, n))
    evs = [s(a)[2] for s, a in zip(solvers, alloc)]
    measures = np.vstack([ev.optimizer_measure for ev in evs])
    marginals = measures @ B.T  # I x n
    price = marginals.mean(axis=0)
    foc = float(np.max(np.abs(marginals - price)))
    demands = [solve_demand(m, market, B, price, config, a0=a) for m, a in zip(agents, alloc)]
    clearing = float(np.max(np.abs(sum(d.allocation for d in demands))))
    result = PepaResult(price, alloc, measures, clearing, foc, float(value), iterations)
    if max(clearing, foc) > config.residual_tol:
        raise NonConvergence(f"equilibrium residuals too large (clearing {clearing:.3e}, foc {foc:.3e})", result)
    return result


# ---------------------------------------------------------------------------
# Pareto configuration


@dataclass
class ParetoResult:
    is_pareto: bool
    measure: np.ndarray | None
    gap: float


def pareto_check(agents: Sequence[RiskModel], market: FiniteMarket, tol: float = 1e-7) -> ParetoResult:
    """Compare the agents' optimizer measures at the zero claim in L1."""
    zero = np.zeros(market.n_states)
    qs = [rho(m, market, zero).optimizer_measure for m in agents]
    gap = max((float(np.abs(a - b).sum()) for k, a in enumerate(qs) for b in qs[k + 1:]), default=0.0)
    if gap <= tol:
        return ParetoResult(True, np.mean(qs, axis=0), gap)
    return ParetoResult(False, None, gap)


def marginal_prices_agree(result: PepaResult, bundle, tol: float = 1e-6) -> bool:
    """Constrained Pareto optimality: every agent's marginal price equals the others'."""
    marginals = result.optimizer_measures @ _as_bundle(bundle).T
    return bool(np.max(np.abs(marginals - marginals[0])) <= tol)


# ---------------------------------------------------------------------------
# mutual agreeability


@dataclass
class AgreeabilityResult:
    agreeable: bool
    price: np.ndarray | None  # witness price when agreeable
    certificate: np.ndarray | None  # Farkas weights when not
    value: float  # min over p of max_i (a_i . p + rho_i(a_i . B))
    rho_values: np.ndarray


def mutually_agreeable(agents: Sequence[RiskModel], market: FiniteMarket, bundle, allocation,
                       price=None, tol: float = 1e-9) -> AgreeabilityResult:
    """Decide whether some price makes every agent's trade acceptable.

    A price ``p`` works when ``a_i . p + rho_i(a_i . B) <= 0`` for every
    agent.  If ``price`` is given and works it is returned as the witness;
    otherwise an LP is solved.  A refusal carries weights ``lam >= 0`` with
    ``sum lam_i a_i = 0`` and ``sum lam_i rho_i > 0``.
    """
    B = _as_bundle(bundle)
    a = np.atleast_2d(np.asarray(allocation, dtype=float))
    I, n = a.shape
    if np.max(np.abs(a.sum(axis=0))) > 1e-9:
        raise ValueError("allocation is not feasible: columns must sum to zero")
    r = np.array([rho(m, market, ai @ B).value for m, ai in zip(agents, a)])
    if price is not None:
        price = np.atleast_1d(np.asarray(price, dtype=float))
        worst = float(np.max(a @ price + r))
        if worst <= tol:
            return AgreeabilityResult(True, price, None, worst, r)

    # min s  s.t.  a_i . p - s <= -rho_i,  p and s free
    c = np.zeros(n + 1)
    c[-1] = 1.0
    A_ub = np.hstack([a, -np.ones((I, 1))])
    primal = linprog(c, A_ub, -r, lower=np.full(n + 1, -np.inf))
    if not primal.ok:
        raise NonConvergence(f"agreeability LP ended with status {primal.status}")
    s = primal.fun
    if s <= tol:
        return AgreeabilityResult(True, primal.x[:n], None, s, r)
    # dual: max rho . lam  s.t.  a^T lam = 0, sum lam = 1, lam >= 0
    A_eq = np.vstack([a.T, np.ones((1, I))])
    b_eq = np.concatenate([np.zeros(n), [1.0]])
    dual = linprog(-r, A_eq=A_eq, b_eq=b_eq)
    if not dual.ok:
        raise NonConvergence(f"agreeability dual LP ended with status {dual.status}")
    return AgreeabilityResult(False, None, dual.x, s, r)
