"""Brute-force reference computations used to cross-check the engine.

Nothing here calls the risk or equilibrium solvers.  Capital requirements
are recomputed from the utility definition by exhaustive grid search or by
plain scipy minimisation, dual values by enumerating measures on a grid over
the martingale polytope, and equilibria by evaluating the aggregate
requirement on an allocation grid.  Slow on purpose.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize, minimize_scalar

from .errors import GridTooCoarse, MinimumOnBoundary
from .market import FiniteMarket

MAX_POINTS = 10 ** 8


@dataclass(frozen=True)
class GridSpec:
    """Regular grid ``lower[k] + j * step`` up to ``upper[k]`` in every dimension."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    step: float

    def __post_init__(self):
        lower = tuple(float(x) for x in np.atleast_1d(self.lower))
        upper = tuple(float(x) for x in np.atleast_1d(self.upper))
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        if len(lower) != len(upper):
            raise ValueError("lower and upper bounds differ in dimension")
        if not self.step > 0:
            raise ValueError("grid step must be positive")
        if not all(np.isfinite(lower + upper)) or any(u < l for l, u in zip(lower, upper)):
            raise ValueError("grid bounds must be finite and ordered")
        if self.size > MAX_POINTS:
            raise ValueError(f"grid has {self.size} points, limit is {MAX_POINTS}")

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(int(np.floor((u - l) / self.step + 1e-9)) + 1 for l, u in zip(self.lower, self.upper))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64)) if self.shape else 1

    def axes(self) -> list[np.ndarray]:
        return [l + self.step * np.arange(k) for l, k in zip(self.lower, self.shape)]

    def points(self) -> np.ndarray:
        """All grid points in lexicographic order, one per row."""
        axes = self.axes()
        if not axes:
            return np.zeros((1, 0))
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.column_stack([g.ravel() for g in mesh])


# ---------------------------------------------------------------------------
# utilities, restated from the model definition


def _utility(model):
    """(U, floor) for the model: exponential for entropic agents."""
    if model.kind == "entropic":
        g = model.gamma
        return (lambda w: -np.exp(-g * w)), -np.inf
    fam, k, a = model.utility.family, model.utility.exponent, model.utility.lower_bound
    if fam == "exponential":
        return (lambda w: -np.exp(-k * w)), -np.inf

    def power(w):
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(w > a, np.abs(w - a) ** k / k, -np.inf)
        return out

    return power, a


def _wealth(model, market):
    e = np.zeros(market.n_states) if model.endowment is None else np.asarray(model.endowment, dtype=float)
    x = model.initial_wealth if model.kind == "utility" else 0.0
    return x + e


def _view(model, market) -> np.ndarray:
    return market.increments[list(model.view.asset_indices)]


# ---------------------------------------------------------------------------
# primal grid


def rho_primal_grid(model, market: FiniteMarket, claim, m_step: float = 1e-4,
                    theta_grid: GridSpec | None = None) -> float:
    """Smallest grid cash amount making ``claim`` acceptable, hedges searched on a grid.

    Acceptability means the best grid hedge reaches the utility the agent
    gets without the claim (also with the best grid hedge).
    """
    claim = np.asarray(claim, dtype=float)
    U, floor = _utility(model)
    D = _view(model, market)
    if D.shape[0] > 2 or market.n_states > 8:
        raise ValueError("primal grid oracle supports at most 2 assets and 8 states")
    if D.shape[0] == 0:
        thetas = np.zeros((1, 0))
    else:
        if theta_grid is None:
            theta_grid = GridSpec((-5.0,) * D.shape[0], (5.0,) * D.shape[0], 1e-2)
        thetas = theta_grid.points()
    gains = thetas @ D  # hedges x states
    base = _wealth(model, market)
    p = market.probs

    def indirect(W):
        with np.errstate(over="ignore", invalid="ignore"):
            vals = U(W[None, :] + gains) @ p
        return np.nanmax(np.where(np.isnan(vals), -np.inf, vals))

    u0 = indirect(base)
    norm = float(np.max(np.abs(claim), initial=0.0))
    ms = np.arange(-norm - 2 * m_step, norm + 2 * m_step + m_step / 2, m_step)

    def ok(j):
        return indirect(base + claim + ms[j]) >= u0

    if ok(0) or not ok(len(ms) - 1):
        raise GridTooCoarse("cash grid does not bracket the capital requirement")
    lo, hi = 0, len(ms) - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return float(ms[hi])


# ---------------------------------------------------------------------------
# dual grid


def polytope_grid(market: FiniteMarket, increments: np.ndarray, step: float = 1e-3) -> np.ndarray:
    """Measures on the martingale polytope whose free coordinates lie on a step grid.

    The constraints fix some coordinates in terms of the others; the free
    coordinates run over multiples of ``step`` and the fixed ones are
    solved for, keeping only nonnegative solutions.
    """
    n = market.n_states
    A = np.vstack([np.ones((1, n)), increments])
    b = np.zeros(A.shape[0])
    b[0] = 1.0
    # greedy choice of pivot columns
    pivots, rank = [], 0
    for j in range(n):
        if np.linalg.matrix_rank(A[:, pivots + [j]]) > rank:
            pivots.append(j)
            rank += 1
    free = [j for j in range(n) if j not in pivots]
    k = int(round(1 / step))
    count = 1
    for _ in free:
        count *= k + 1
    if count > MAX_POINTS:
        raise GridTooCoarse(f"dual grid would need {count} points")
    if free:
        axes = [np.arange(k + 1) * step] * len(free)
        Qf = np.column_stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")])
        Qf = Qf[Qf.sum(axis=1) <= 1 + 1e-12]
    else:
        Qf = np.zeros((1, 0))
    Ap = A[:, pivots]
    Af = A[:, free]
    rhs = b[None, :] - Qf @ Af.T
    Qp, *_ = np.linalg.lstsq(Ap, rhs.T, rcond=None)
    Q = np.zeros((Qf.shape[0], n))
    Q[:, free] = Qf
    Q[:, pivots] = Qp.T
    keep = np.all(Q >= -1e-12, axis=1) & np.all(np.abs(Q @ A.T - b) <= 1e-9, axis=1)
    Q = np.clip(Q[keep], 0.0, None)
    if Q.shape[0] == 0:
        raise GridTooCoarse("no grid measure lies in the polytope")
    return Q


def _entropy(Q: np.ndarray, p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(Q > 0, Q * np.log(Q / p), 0.0)
    return terms.sum(axis=1)


def rho_dual_grid(model, market: FiniteMarket, claim, step: float = 1e-3) -> float:
    """Dual value by enumeration: max over grid measures of expected loss minus penalty.

    Only constant-absolute-risk-aversion agents have an explicit penalty;
    its normalising constant is itself computed on the same grid.
    """
    if model.kind == "entropic":
        g = model.gamma
    elif model.utility.family == "exponential":
        g = model.utility.exponent
    else:
        raise ValueError("dual grid oracle needs an entropic or exponential-utility agent")
    claim = np.asarray(claim, dtype=float)
    Q = polytope_grid(market, _view(model, market), step)
    E = _wealth(model, market)
    ent = _entropy(Q, market.probs) / g
    with_claim = np.max(-Q @ (E + claim) - ent)
    without = np.max(-Q @ E - ent)
    return float(with_claim - without)


# ---------------------------------------------------------------------------
# scipy-based requirement and grid equilibrium


def _best_hedge_value(U, floor, W, D, p):
    k = D.shape[0]

    def neg(theta):
        w = W + np.atleast_1d(theta) @ D
        if np.any(w <= floor):
            return 1e300
        return -float(p @ U(w))

    if k == 0:
        return -neg(np.zeros(0))
    if k == 1:
        r = minimize_scalar(neg, bracket=(-1.0, 1.0), tol=1e-12)
        return -r.fun
    r = minimize(neg, np.zeros(k), method="Nelder-Mead",
                 options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 20000})
    return -r.fun


def requirement(model, market: FiniteMarket):
    """Capital requirement function built from the definition with off-the-shelf scipy routines."""
    U, floor = _utility(model)
    D = _view(model, market)
    p = market.probs
    base = _wealth(model, market)
    u0 = _best_hedge_value(U, floor, base, D, p)

    if model.kind == "entropic" or model.utility.family == "exponential":
        g = model.gamma if model.kind == "entropic" else model.utility.exponent

        def cara(claim):
            # exponential utility factorises in the cash amount
            v = _best_hedge_value(U, floor, base + np.asarray(claim, dtype=float), D, p)
            return float(np.log(v / u0) / g)

        return cara

    def general(claim):
        claim = np.asarray(claim, dtype=float)
        norm = float(np.max(np.abs(claim), initial=0.0))
        if norm == 0.0:
            return 0.0

        def gap(m):
            return _best_hedge_value(U, floor, base + claim + m, D, p) - u0

        return float(brentq(gap, -norm, norm, xtol=1e-14, rtol=1e-14))

    return general


def rho_scipy(model, market: FiniteMarket, claim) -> float:
    return requirement(model, market)(claim)


@dataclass
class GridEquilibrium:
    price: np.ndarray
    allocation: np.ndarray  # I x n
    value: float


def pepa_grid_search(agents, market: FiniteMarket, bundle, grid: GridSpec, fd_step: float = 1e-5
                     ) -> GridEquilibrium:
    """Minimise the aggregate requirement over an allocation grid.

    Grid coordinates are the holdings of all agents but the last.  The
    price is the negative central difference of the first agent's
    requirement function at the grid minimiser.
    """
    B = np.atleast_2d(np.asarray(bundle, dtype=float))
    n, I = B.shape[0], len(agents)
    if (I - 1) * n > 2 or len(grid.lower) != (I - 1) * n:
        raise ValueError("grid search supports at most two free allocation coordinates")
    reqs = [requirement(m, market) for m in agents]
    pts = grid.points()
    values = np.empty(len(pts))
    for k, x in enumerate(pts):
        head = x.reshape(I - 1, n)
        alloc = np.vstack([head, -head.sum(axis=0)])
        values[k] = sum(r(a @ B) for r, a in zip(reqs, alloc))
    best = int(np.argmin(values))
    idx = np.unravel_index(best, grid.shape)
    if any(i == 0 or i == s - 1 for i, s in zip(idx, grid.shape)):
        raise MinimumOnBoundary(f"grid minimum at the edge of the box: {pts[best].tolist()}")
    head = pts[best].reshape(I - 1, n)
    alloc = np.vstack([head, -head.sum(axis=0)])
    a1 = alloc[0]
    price = np.empty(n)
    for j in range(n):
        e = np.zeros(n)
        e[j] = fd_step
        up = reqs[0]((a1 + e) @ B)
        dn = reqs[0]((a1 - e) @ B)
        price[j] = -(up - dn) / (2 * fd_step)
    return GridEquilibrium(price, alloc, float(values[best]))
