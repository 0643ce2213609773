"""Finite-state one-period market: validation, hedgeable subspaces, martingale polytopes."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ArbitrageDetected, InfeasiblePolytope, InvalidProbabilities
from .lp import linprog

STRUCT_TOL = 1e-10
LP_TOL = 1e-9


@dataclass(frozen=True)
class FiniteMarket:
    """Reference measure on finitely many states plus discounted asset gains.

    ``increments[j, w]`` is the gain of asset ``j`` in state ``w``; the
    numeraire is the constant 1.  ``certificate`` is a strictly positive
    martingale measure found at construction.
    """

    state_labels: tuple[str, ...]
    probs: np.ndarray
    increments: np.ndarray
    certificate: np.ndarray = field(repr=False)
    asset_names: tuple[str, ...] = ()

    @property
    def n_states(self) -> int:
        return self.probs.size

    @property
    def n_assets(self) -> int:
        return self.increments.shape[0]

    def full_view(self) -> "MarketView":
        return MarketView(tuple(range(self.n_assets)))

    def view_increments(self, view: "MarketView | None") -> np.ndarray:
        if view is None:
            return self.increments
        return self.increments[list(view.asset_indices)]


@dataclass(frozen=True)
class MarketView:
    """The sub-market an agent can trade: a sorted tuple of asset indices."""

    asset_indices: tuple[int, ...]

    def __post_init__(self):
        idx = tuple(int(i) for i in self.asset_indices)
        if list(idx) != sorted(set(idx)):
            raise ValueError(f"view indices must be sorted and distinct, got {idx}")
        object.__setattr__(self, "asset_indices", idx)

    def validate(self, market: FiniteMarket) -> None:
        for i in self.asset_indices:
            if not 0 <= i < market.n_assets:
                raise ValueError(f"view references asset {i}, market has {market.n_assets}")

    def __len__(self) -> int:
        return len(self.asset_indices)


@dataclass(frozen=True)
class MartingalePolytope:
    """Probability vectors under which every asset in ``view`` has zero mean gain."""

    market: FiniteMarket
    view: MarketView

    def constraints(self) -> tuple[np.ndarray, np.ndarray]:
        D = self.market.view_increments(self.view)
        A = np.vstack([np.ones((1, self.market.n_states)), D])
        b = np.zeros(A.shape[0])
        b[0] = 1.0
        return A, b

    def contains(self, q, tol: float = 1e-8) -> bool:
        q = np.asarray(q, dtype=float)
        if q.shape != self.market.probs.shape or np.any(q < -tol):
            return False
        A, b = self.constraints()
        return bool(np.max(np.abs(A @ q - b)) <= tol)


def union_view(views: Sequence[MarketView]) -> MarketView:
    """View whose polytope is the intersection of the given views' polytopes."""
    return MarketView(tuple(sorted({i for v in views for i in v.asset_indices})))


def _max_min_weight(A: np.ndarray, b: np.ndarray, n_states: int):
    """Maximise t subject to q >= t, A q = b; returns (t, q) or (None, None)."""
    c = np.zeros(n_states + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-np.eye(n_states), np.ones((n_states, 1))])
    A_eq = np.hstack([A, np.zeros((A.shape[0], 1))])
    lower = np.zeros(n_states + 1)
    lower[-1] = -np.inf
    # t <= 1 keeps the LP bounded when A is empty
    A_ub = np.vstack([A_ub, np.eye(1, n_states + 1, n_states)])
    b_ub = np.concatenate([np.zeros(n_states), [1.0]])
    res = linprog(c, A_ub, b_ub, A_eq, b, lower=lower)
    if not res.ok:
        return None, None
    return res.x[-1], res.x[:-1]


def build_market(probs, increments=None, state_labels=None, asset_names=None) -> FiniteMarket:
    """Validate probabilities and gains; attach a no-arbitrage certificate.

    Raises InvalidProbabilities for non-positive or unnormalised weights and
    ArbitrageDetected when no strictly positive martingale measure exists.
    """
    probs = np.asarray(probs, dtype=float).ravel()
    n = probs.size
    if n == 0:
        raise InvalidProbabilities("probs: at least one state is required")
    if not np.all(np.isfinite(probs)) or np.any(probs <= 0.0):
        raise InvalidProbabilities("probs: every state must have strictly positive probability")
    if abs(probs.sum() - 1.0) > 1e-12:
        raise InvalidProbabilities(f"probs: must sum to 1, got {probs.sum()!r}")
    if increments is None:
        increments = np.zeros((0, n))
    increments = np.atleast_2d(np.asarray(increments, dtype=float))
    if increments.size == 0:
        increments = np.zeros((0, n))
    if increments.shape[1] != n:
        raise ValueError(f"increments have {increments.shape[1]} columns, expected {n}")
    if not np.all(np.isfinite(increments)):
        raise ValueError("increments must be finite")
    labels = tuple(str(s) for s in (state_labels if state_labels is not None else range(n)))
    if len(labels) != n:
        raise ValueError("state_labels length mismatch")
    names = tuple(asset_names) if asset_names is not None else tuple(
        f"S{j + 1}" for j in range(increments.shape[0]))

    A = np.vstack([np.ones((1, n)), increments])
    b = np.zeros(A.shape[0])
    b[0] = 1.0
    t, q = _max_min_weight(A, b, n)
    if t is None or t <= LP_TOL:
        raise ArbitrageDetected("no equivalent martingale measure: the market admits arbitrage")
    probs.setflags(write=False)
    increments.setflags(write=False)
    q.setflags(write=False)
    return FiniteMarket(labels, probs, increments, q, names)


def _weighted_basis(market: FiniteMarket, view: MarketView | None) -> np.ndarray:
    return np.vstack([np.ones((1, market.n_states)), market.view_increments(view)])


def replicable_split(market: FiniteMarket, view: MarketView | None, claim):
    """Project ``claim`` onto constants plus gains of ``view`` in the P-weighted product.

    Returns ``(theta, c, residual)`` with ``claim = c + theta @ dS + residual``.
    When the view's gains are linearly dependent, ``theta`` is the
    minimum-norm choice.
    """
    claim = np.asarray(claim, dtype=float)
    G = _weighted_basis(market, view)
    w = np.sqrt(market.probs)
    coef, *_ = np.linalg.lstsq((G * w).T, claim * w, rcond=None)
    fitted = coef @ G
    residual = claim - fitted
    residual[np.abs(residual) <= STRUCT_TOL * max(1.0, np.abs(claim).max(initial=0.0))] = 0.0
    return coef[1:], float(coef[0]), residual


def is_replicable(market: FiniteMarket, view: MarketView | None, claim, tol: float = STRUCT_TOL) -> bool:
    _, _, residual = replicable_split(market, view, claim)
    return bool(np.max(np.abs(residual), initial=0.0) <= tol)


def support_bounds(market: FiniteMarket, polytope: MartingalePolytope, claim) -> tuple[float, float]:
    """Exact min and max of ``E^q[claim]`` over the polytope."""
    claim = np.asarray(claim, dtype=float)
    A, b = polytope.constraints()
    lo = linprog(claim, A_eq=A, b_eq=b)
    hi = linprog(-claim, A_eq=A, b_eq=b)
    if not (lo.ok and hi.ok):
        raise InfeasiblePolytope("martingale polytope is empty")
    return lo.fun, -hi.fun


def relative_interior_slack(polytope: MartingalePolytope, bundle, price) -> float:
    """Largest t such that some q in the polytope has q >= t and E^q[bundle] = price.

    Positive iff ``price`` lies in the relative interior of the image of the
    polytope under ``q -> E^q[bundle]``.
    """
    bundle = np.atleast_2d(np.asarray(bundle, dtype=float))
    A, b = polytope.constraints()
    A = np.vstack([A, bundle])
    b = np.concatenate([b, np.asarray(price, dtype=float).ravel()])
    t, _ = _max_min_weight(A, b, polytope.market.n_states)
    return -np.inf if t is None else float(t)


def _normalise_witness(delta: np.ndarray) -> np.ndarray:
    delta = delta / np.max(np.abs(delta))
    first = next(x for x in delta if abs(x) > 1e-12)
    delta = delta if first > 0 else -delta
    delta[np.abs(delta) < 1e-12] = 0.0
    return delta


def check_non_redundancy(market: FiniteMarket, bundle, polytope: MartingalePolytope):
    """Check that no nonzero combination of the bundle has a constant price over the polytope.

    Returns ``(ok, witness)``.  ``witness`` is a violating combination
    when ``ok`` is False and None otherwise.
    """
    bundle = np.atleast_2d(np.asarray(bundle, dtype=float))
    n = bundle.shape[0]
    residuals = np.vstack([replicable_split(market, polytope.view, row)[2] for row in bundle])
    scale = max(1.0, np.abs(bundle).max())
    _, s, vt = np.linalg.svd(residuals.T, full_matrices=True)
    s = np.concatenate([s, np.zeros(n - s.size)])
    small = np.flatnonzero(s <= 1e-9 * scale)
    if small.size:
        delta = _normalise_witness(vt[small[0]].copy())
        lo, hi = support_bounds(market, polytope, delta @ bundle)
        if hi - lo <= LP_TOL * scale:
            return False, delta
    for k in range(n):
        lo, hi = support_bounds(market, polytope, bundle[k])
        if hi - lo <= LP_TOL * scale:
            return False, np.eye(n)[k]
    return True, None
