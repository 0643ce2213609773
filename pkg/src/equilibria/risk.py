"""Capital requirements induced by entropic and utility-based acceptance sets.

Every agent hedges in its own sub-market.  The entropic requirement comes
from a log-sum-exp minimisation over hedges; the utility-based one is the
smallest cash amount restoring the agent's indirect utility, located by a
safeguarded Newton iteration on the cash amount.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import DomainViolation, EmptyIntersection, InfeasiblePolytope, NonConvergence
from .lp import linprog
from .market import (
    FiniteMarket,
    MarketView,
    MartingalePolytope,
    check_non_redundancy,
    support_bounds,
    union_view,
)
from .optimize import minimize_bfgs

log = logging.getLogger(__name__)

INNER_GTOL = 1e-10
ENTROPIC = "entropic"
UTILITY = "utility"


class Infinite:
    """Marker for a penalty of +infinity; refuses to take part in arithmetic."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "+inf"

    def __bool__(self):
        return True


INFINITE = Infinite()


@dataclass(frozen=True)
class UtilitySpec:
    """``exponential``: U(w) = -exp(-k w)/k.  ``power``: U(w) = (w - a)^k / k, k < 1, k != 0."""

    family: str
    exponent: float
    lower_bound: float = 0.0

    def __post_init__(self):
        if self.family == "exponential":
            if not self.exponent > 0:
                raise ValueError("exponential utility needs a positive exponent")
        elif self.family == "power":
            if self.exponent == 0 or self.exponent >= 1:
                raise ValueError("power utility needs exponent < 1 and != 0")
            if not self.lower_bound <= 0:
                raise ValueError("power utility lower bound must be <= 0")
        else:
            raise ValueError(f"unknown utility family {self.family!r}")

    @property
    def domain_floor(self) -> float:
        return -np.inf if self.family == "exponential" else self.lower_bound

    def value(self, w):
        k = self.exponent
        if self.family == "exponential":
            return -np.exp(-k * w) / k
        return (w - self.lower_bound) ** k / k

    def d1(self, w):
        k = self.exponent
        if self.family == "exponential":
            return np.exp(-k * w)
        return (w - self.lower_bound) ** (k - 1)

    def d2(self, w):
        k = self.exponent
        if self.family == "exponential":
            return -k * np.exp(-k * w)
        return (k - 1) * (w - self.lower_bound) ** (k - 2)


@dataclass(frozen=True)
class RiskModel:
    """An agent's preferences, endowment and accessible sub-market."""

    kind: str
    view: MarketView
    gamma: float | None = None
    utility: UtilitySpec | None = None
    endowment: np.ndarray | None = None
    initial_wealth: float = 0.0
    name: str = ""

    def __post_init__(self):
        if self.kind == ENTROPIC:
            if self.gamma is None or not self.gamma > 0:
                raise ValueError("entropic model needs gamma > 0")
        elif self.kind == UTILITY:
            if self.utility is None:
                raise ValueError("utility-based model needs a utility spec")
        else:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.endowment is not None:
            e = np.array(self.endowment, dtype=float)
            e.setflags(write=False)
            object.__setattr__(self, "endowment", e)

    @classmethod
    def entropic(cls, gamma, view, endowment=None, name=""):
        return cls(ENTROPIC, view, gamma=float(gamma), endowment=endowment, name=name)

    @classmethod
    def utility_based(cls, utility, view, initial_wealth, endowment=None, name=""):
        return cls(UTILITY, view, utility=utility, endowment=endowment,
                   initial_wealth=float(initial_wealth), name=name)

    def endowment_for(self, market: FiniteMarket) -> np.ndarray:
        if self.endowment is None:
            return np.zeros(market.n_states)
        if self.endowment.shape != (market.n_states,):
            raise ValueError(f"endowment has shape {self.endowment.shape}, expected ({market.n_states},)")
        return self.endowment

    def risk_aversion(self) -> float | None:
        """Absolute risk aversion when it is constant (entropic or exponential)."""
        if self.kind == ENTROPIC:
            return self.gamma
        if self.utility.family == "exponential":
            return self.utility.exponent
        return None

    def with_(self, **changes) -> "RiskModel":
        return replace(self, **changes)


@dataclass
class RiskEvaluation:
    value: float
    optimizer_measure: np.ndarray
    hedge: np.ndarray
    iterations: int
    residual: float


@dataclass(frozen=True)
class PenaltyValue:
    measure: np.ndarray
    alpha: float | Infinite

    @property
    def is_infinite(self) -> bool:
        return self.alpha is INFINITE


@dataclass
class _HedgeBasis:
    raw: np.ndarray  # view increments, k x n
    basis: np.ndarray  # orthonormal rows spanning the same space, r x n

    def to_raw(self, phi) -> np.ndarray:
        if self.raw.shape[0] == 0:
            return np.zeros(0)
        theta, *_ = np.linalg.lstsq(self.raw.T, self.basis.T @ phi, rcond=None)
        return theta

    def from_raw(self, theta) -> np.ndarray:
        if self.basis.shape[0] == 0 or theta is None:
            return np.zeros(self.basis.shape[0])
        return self.basis @ (np.asarray(theta, dtype=float) @ self.raw)


def _hedge_basis(market: FiniteMarket, view: MarketView) -> _HedgeBasis:
    G = market.view_increments(view)
    if G.shape[0] == 0:
        return _HedgeBasis(G, np.zeros((0, market.n_states)))
    _, s, vt = np.linalg.svd(G, full_matrices=False)
    r = int(np.sum(s > 1e-12 * max(1.0, s.max())))
    return _HedgeBasis(G, vt[:r])


# ---------------------------------------------------------------------------
# inner hedging problems


def _entropic_level(W, logp, R, gamma, phi0, tol=1e-14, max_iter=200):
    """Minimise log E[exp(-gamma (W + phi R))] over phi by damped Newton.

    Returns ``(level, q, phi, iterations, residual)`` where ``level`` is the
    minimum divided by gamma and ``residual = max |E^q[R]|``.
    """
    phi = np.array(phi0, dtype=float)

    def evaluate(phi):
        z = -gamma * (W + phi @ R) + logp
        L = logsumexp(z)
        return L, np.exp(z - L)

    L, q = evaluate(phi)
    if R.shape[0] == 0:
        return L / gamma, q, phi, 0, 0.0
    it = 0
    for it in range(1, max_iter + 1):
        m = R @ q
        res = np.max(np.abs(m))
        if res <= tol:
            break
        grad = -gamma * m
        H = gamma ** 2 * ((R * q) @ R.T - np.outer(m, m))
        try:
            c = np.linalg.cholesky(H)
            step = -np.linalg.solve(c.T, np.linalg.solve(c, grad))
        except np.linalg.LinAlgError:
            step = -grad
        t = 1.0
        accepted = False
        for _ in range(60):
            Ln, qn = evaluate(phi + t * step)
            if Ln <= L + 1e-4 * t * (grad @ step):
                accepted = True
                break
            if np.max(np.abs(R @ qn)) < res and Ln <= L + 1e-13 * max(1.0, abs(L)):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        phi = phi + t * step
        L, q = Ln, qn
    res = float(np.max(np.abs(R @ q)))
    return L / gamma, q, phi, it, res


def _feasible_start(W, R, floor):
    """Hedge making every state's wealth exceed ``floor``; None when impossible."""
    r, n = R.shape
    if r == 0:
        return (np.zeros(0) if np.all(W > floor) else None)
    # maximise t subject to W + phi R >= floor + t, t <= 1
    c = np.zeros(r + 1)
    c[-1] = -1.0
    A_ub = np.vstack([np.hstack([-R.T, np.ones((n, 1))]), np.eye(1, r + 1, r)])
    b_ub = np.concatenate([W - floor, [1.0]])
    res = linprog(c, A_ub, b_ub, lower=np.full(r + 1, -np.inf))
    if not res.ok or res.x[-1] <= 1e-12:
        return None
    return res.x[:r]


def _utility_level(W, p, R, U: UtilitySpec, phi0, tol=1e-14, max_iter=200):
    """Maximise E[U(W + phi R)] over phi.

    Returns ``(value, q, phi, iterations, residual)``; ``value`` is -inf
    when no hedge keeps wealth inside the utility's domain.
    """
    floor = U.domain_floor
    phi = np.array(phi0, dtype=float)
    if np.any(W + phi @ R <= floor):
        phi = _feasible_start(W, R, floor)
        if phi is None:
            return -np.inf, None, None, 0, np.inf

    def evaluate(phi):
        w = W + phi @ R
        if np.any(w <= floor):
            return -np.inf, None
        return float(p @ U.value(w)), w

    h, w = evaluate(phi)
    it = 0
    for it in range(1, max_iter + 1):
        mu = p * U.d1(w)
        q = mu / mu.sum()
        m = R @ q
        res = np.max(np.abs(m), initial=0.0)
        if res <= tol or R.shape[0] == 0:
            break
        grad = R @ mu
        H = (R * (p * U.d2(w))) @ R.T
        try:
            c = np.linalg.cholesky(-H)
            step = np.linalg.solve(c.T, np.linalg.solve(c, grad))
        except np.linalg.LinAlgError:
            step = grad / mu.sum()
        t = 1.0
        accepted = False
        for _ in range(80):
            hn, wn = evaluate(phi + t * step)
            if wn is not None:
                if hn >= h + 1e-4 * t * (grad @ step):
                    accepted = True
                    break
                qn = p * U.d1(wn)
                if np.max(np.abs(R @ (qn / qn.sum()))) < res and hn >= h - 1e-13 * max(1.0, abs(h)):
                    accepted = True
                    break
            t *= 0.5
        if not accepted:
            break
        phi = phi + t * step
        h, w = hn, wn
    mu = p * U.d1(w)
    q = mu / mu.sum()
    res = float(np.max(np.abs(R @ q), initial=0.0))
    return h, q, phi, it, res


# ---------------------------------------------------------------------------
# capital requirements


def _check_view(model: RiskModel, market: FiniteMarket) -> None:
    model.view.validate(market)


def _entropic_rho(gamma, model, market, claim, warm):
    hb = _hedge_basis(market, model.view)
    E = model.endowment_for(market)
    logp = np.log(market.probs)
    lvl0, _, _, it0, res0 = _entropic_level(E, logp, hb.basis, gamma, np.zeros(hb.basis.shape[0]))
    lvl, q, phi, it, res = _entropic_level(E + claim, logp, hb.basis, gamma, hb.from_raw(warm))
    residual = max(res0, res)
    if residual > INNER_GTOL:
        raise NonConvergence(f"entropic hedging stalled at residual {residual:.3e}", hb.to_raw(phi))
    return RiskEvaluation(float(lvl - lvl0), q, hb.to_raw(phi), it0 + it, float(residual))


def _utility_rho(model, market, claim, warm, max_iter=200):
    U = model.utility
    hb = _hedge_basis(market, model.view)
    R = hb.basis
    p = market.probs
    base = model.initial_wealth + model.endowment_for(market)
    if np.any(base <= U.domain_floor):
        raise DomainViolation("initial wealth plus endowment must exceed the utility's lower bound "
                              "in every state")
    u0, q0, phi0, it_total, res0 = _utility_level(base, p, R, U, np.zeros(R.shape[0]))
    if not np.isfinite(u0) or res0 > INNER_GTOL:
        raise NonConvergence(f"utility maximisation at zero claim stalled (residual {res0:.3e})")
    norm = float(np.max(np.abs(claim), initial=0.0))
    if norm == 0.0:
        return RiskEvaluation(0.0, q0, hb.to_raw(phi0), it_total, res0)

    lo, hi = -norm, norm
    phi_start = hb.from_raw(warm) if warm is not None else phi0
    m = hi
    root = None
    for _ in range(max_iter):
        val, q, phi, it, res = _utility_level(base + claim + m, p, R, U, phi_start)
        it_total += it
        if np.isfinite(val):
            if res > INNER_GTOL:
                raise NonConvergence(f"utility maximisation stalled at residual {res:.3e}", hb.to_raw(phi))
            phi_start = phi
            gap = val - u0
            if gap >= 0:
                hi = m
            else:
                lo = m
            slope = float(p @ U.d1(base + claim + m + phi @ R))
            step = -gap / slope
            if gap == 0.0 or abs(step) <= 1e-15 * max(1.0, abs(m)):
                root = m + step
                break
            nxt = m + step
        else:
            lo = m
            nxt = 0.5 * (lo + hi)
        if not lo < nxt < hi:
            nxt = 0.5 * (lo + hi)
        if hi - lo <= 4e-16 * max(1.0, abs(hi)):
            root = hi
            break
        m = nxt
    else:
        raise NonConvergence("capital requirement root search did not converge", hi)
    if root != m:
        val, q, phi, it, res = _utility_level(base + claim + root, p, R, U, phi_start)
        it_total += it
        if not np.isfinite(val):
            raise DomainViolation("no hedge keeps wealth inside the utility's domain")
    return RiskEvaluation(float(root), q, hb.to_raw(phi), it_total, max(res0, res))


def rho(model: RiskModel, market: FiniteMarket, claim, warm_start=None) -> RiskEvaluation:
    """Capital requirement of ``claim`` for the agent described by ``model``.

    ``warm_start`` is an optional hedge (in the view's asset coordinates)
    used to start the inner solver.
    """
    _check_view(model, market)
    claim = np.asarray(claim, dtype=float)
    if claim.shape != (market.n_states,):
        raise ValueError(f"claim has shape {claim.shape}, expected ({market.n_states},)")
    if model.kind == ENTROPIC:
        return _entropic_rho(model.gamma, model, market, claim, warm_start)
    return _utility_rho(model, market, claim, warm_start)


def grad_r(model: RiskModel, market: FiniteMarket, bundle, a, warm_start=None):
    """Value and gradient of ``a -> rho(a . bundle)``.

    The gradient is ``-E^{q*}[bundle]`` with ``q*`` the optimizer measure.
    Returns ``(value, gradient, evaluation)``.
    """
    bundle = np.atleast_2d(np.asarray(bundle, dtype=float))
    ev = rho(model, market, np.asarray(a, dtype=float) @ bundle, warm_start)
    return ev.value, -(bundle @ ev.optimizer_measure), ev


def penalty_alpha(model: RiskModel, market: FiniteMarket, q, tol: float = 1e-9) -> PenaltyValue:
    """Minimal penalty of the measure ``q`` in the agent's dual representation.

    Closed form only for constant absolute risk aversion (entropic or
    exponential utility): relative entropy scaled by the risk tolerance,
    shifted by the endowment's mean and the optimal zero-claim level.
    Measures outside the view's martingale polytope get ``INFINITE``.
    """
    q = np.asarray(q, dtype=float)
    gamma = model.risk_aversion()
    if gamma is None:
        raise NotImplementedError("no closed-form penalty for power utility")
    if not MartingalePolytope(market, model.view).contains(q, tol):
        return PenaltyValue(q, INFINITE)
    q = np.clip(q, 0.0, None)
    q = q / q.sum()
    hb = _hedge_basis(market, model.view)
    E = model.endowment_for(market)
    lvl0, *_ = _entropic_level(E, np.log(market.probs), hb.basis, gamma, np.zeros(hb.basis.shape[0]))
    pos = q > 0
    entropy = float(np.sum(q[pos] * np.log(q[pos] / market.probs[pos])))
    alpha = entropy / gamma + float(q @ E) + lvl0
    if -1e-12 < alpha < 0:
        alpha = 0.0
    return PenaltyValue(q, alpha)


# ---------------------------------------------------------------------------
# inf-convolution


@dataclass
class InfConvolutionResult:
    value: float
    split: np.ndarray  # I x |states|, rows sum to the claim
    measures: np.ndarray  # optimizer measure per agent
    residual: float


def intersected_polytope(models: Sequence[RiskModel], market: FiniteMarket) -> MartingalePolytope:
    """Polytope of measures that are martingale for every agent's view; raises if empty."""
    poly = MartingalePolytope(market, union_view([m.view for m in models]))
    try:
        support_bounds(market, poly, np.zeros(market.n_states))
    except InfeasiblePolytope as exc:
        raise EmptyIntersection("agents share no martingale measure") from exc
    return poly


def inf_convolution(models: Sequence[RiskModel], market: FiniteMarket, claim,
                    gtol: float = 1e-10) -> InfConvolutionResult:
    """Least aggregate capital requirement over splits of ``claim`` among the agents."""
    claim = np.asarray(claim, dtype=float)
    I, n = len(models), market.n_states
    intersected_polytope(models, market)
    if I == 1:
        ev = rho(models[0], market, claim)
        return InfConvolutionResult(ev.value, claim[None, :].copy(), ev.optimizer_measure[None, :], 0.0)

    tolerances = [m.risk_aversion() for m in models]
    if all(t is not None for t in tolerances):
        w = np.array([1.0 / t for t in tolerances])
    else:
        w = np.ones(I)
    w = w / w.sum()
    x0 = np.concatenate([wi * claim for wi in w[:-1]])

    def unpack(x):
        parts = x.reshape(I - 1, n)
        return np.vstack([parts, claim - parts.sum(axis=0)])

    def fun_grad(x):
        parts = unpack(x)
        evs = [rho(m, market, b) for m, b in zip(models, parts)]
        val = sum(e.value for e in evs)
        qI = evs[-1].optimizer_measure
        grad = np.concatenate([qI - e.optimizer_measure for e in evs[:-1]])
        return val, grad

    res = minimize_bfgs(fun_grad, x0, gtol=gtol)
    if res.grad_norm > 1e-8:
        raise NonConvergence(f"inf-convolution stalled at residual {res.grad_norm:.3e}", unpack(res.x))
    split = unpack(res.x)
    measures = np.vstack([rho(m, market, b).optimizer_measure for m, b in zip(models, split)])
    return InfConvolutionResult(res.fun, split, measures, res.grad_norm)


# ---------------------------------------------------------------------------
# strict convexity


@dataclass
class ProbeReport:
    margins: np.ndarray
    pairs: list = field(repr=False)
    equality_direction: np.ndarray | None = None
    violation_tol: float = 1e-9

    @property
    def min_margin(self) -> float:
        return float(self.margins.min()) if self.margins.size else np.inf

    @property
    def violations(self) -> list[int]:
        return [k for k, m in enumerate(self.margins) if m < -self.violation_tol]

    @property
    def passed(self) -> bool:
        return self.equality_direction is None and not self.violations and self.min_margin > 0

    @property
    def message(self) -> str:
        if self.equality_direction is not None:
            return f"equality direction detected: {self.equality_direction.tolist()}"
        if self.violations:
            return f"midpoint convexity violated for {len(self.violations)} pairs"
        return f"strict convexity holds with minimum margin {self.min_margin:.6g}"


def strict_convexity_probe(model: RiskModel, market: FiniteMarket, bundle, samples=32,
                           seed: int = 0, scale: float = 1.0) -> ProbeReport:
    """Midpoint strict-convexity test of ``a -> rho(a . bundle)``.

    ``samples`` is either a count of random pairs (drawn with ``seed``) or an
    explicit sequence of ``(a, delta)`` pairs.  The margin of a pair is
    ``(r(a) + r(delta)) / 2 - r((a + delta) / 2)``.
    """
    bundle = np.atleast_2d(np.asarray(bundle, dtype=float))
    n = bundle.shape[0]
    if isinstance(samples, (int, np.integer)):
        rng = np.random.default_rng(seed)
        pairs = [(scale * rng.standard_normal(n), scale * rng.standard_normal(n)) for _ in range(samples)]
    else:
        pairs = [(np.atleast_1d(np.asarray(a, dtype=float)), np.atleast_1d(np.asarray(d, dtype=float)))
                 for a, d in samples]
    margins = []
    for a, d in pairs:
        ra = rho(model, market, a @ bundle).value
        rd = rho(model, market, d @ bundle).value
        rm = rho(model, market, 0.5 * (a + d) @ bundle).value
        margins.append(0.5 * (ra + rd) - rm)
    ok, witness = check_non_redundancy(market, bundle, MartingalePolytope(market, model.view))
    return ProbeReport(np.array(margins), pairs, None if ok else witness)
