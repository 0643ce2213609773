"""Dense two-phase simplex with Bland's rule.

Meant for the tiny problems this package produces (tens of variables and
constraints), where determinism matters more than speed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PIVOT_TOL = 1e-12
FEAS_TOL = 1e-9


@dataclass(frozen=True)
class LPResult:
    status: str  # "optimal", "infeasible" or "unbounded"
    x: np.ndarray | None
    fun: float | None
    iterations: int

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    for r in range(T.shape[0]):
        if r != row and T[r, col] != 0.0:
            T[r] -= T[r, col] * T[row]


def _run(T: np.ndarray, basis: list[int], ncols: int, max_iter: int) -> tuple[str, int]:
    """Iterate on tableau ``T`` whose last row holds reduced costs.

    Only the first ``ncols`` columns are eligible to enter the basis.
    """
    m = T.shape[0] - 1
    for it in range(max_iter):
        cost = T[-1, :ncols]
        entering = next((j for j in range(ncols) if cost[j] < -FEAS_TOL * 1e-3), None)
        if entering is None:
            return "optimal", it
        col = T[:m, entering]
        best, leave = np.inf, None
        for r in range(m):
            if col[r] > PIVOT_TOL:
                ratio = T[r, -1] / col[r]
                # Bland: ties broken by smallest basic variable index
                if ratio < best - 1e-15 or (abs(ratio - best) <= 1e-15 and leave is not None
                                            and basis[r] < basis[leave]):
                    best, leave = ratio, r
        if leave is None:
            return "unbounded", it
        _pivot(T, leave, entering)
        basis[leave] = entering
    return "iteration_limit", max_iter


def simplex_standard(c, A, b, max_iter: int = 5000) -> LPResult:
    """Minimise ``c @ x`` subject to ``A @ x == b`` and ``x >= 0``."""
    c = np.asarray(c, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float)).copy()
    b = np.asarray(b, dtype=float).copy()
    m, n = A.shape
    if m == 0:
        if np.any(c < -FEAS_TOL):
            return LPResult("unbounded", None, None, 0)
        return LPResult("optimal", np.zeros(n), 0.0, 0)

    neg = b < 0
    A[neg] *= -1.0
    b[neg] *= -1.0

    # phase one: artificial variable per row
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :n] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = list(range(n, n + m))
    status, it1 = _run(T, basis, n, max_iter)
    if status == "iteration_limit":
        return LPResult(status, None, None, it1)
    if -T[-1, -1] > FEAS_TOL * max(1.0, np.abs(b).max()):
        return LPResult("infeasible", None, None, it1)

    # drive remaining artificials out of the basis; drop redundant rows
    keep = []
    for r in range(m):
        if basis[r] >= n:
            cand = next((j for j in range(n) if abs(T[r, j]) > 1e-9), None)
            if cand is None:
                continue
            _pivot(T, r, cand)
            basis[r] = cand
        keep.append(r)
    T2 = np.zeros((len(keep) + 1, n + 1))
    T2[:-1, :n] = T[keep, :n]
    T2[:-1, -1] = T[keep, -1]
    basis = [basis[r] for r in keep]
    T2[-1, :n] = c
    for r, j in enumerate(basis):
        if T2[-1, j] != 0.0:
            T2[-1] -= T2[-1, j] * T2[r]
    status, it2 = _run(T2, basis, n, max_iter)
    if status != "optimal":
        return LPResult(status, None, None, it1 + it2)
    x = np.zeros(n)
    for r, j in enumerate(basis):
        x[j] = T2[r, -1]
    x[x < 0.0] = 0.0
    return LPResult("optimal", x, float(c @ x), it1 + it2)


def linprog(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, lower=None) -> LPResult:
    """Minimise ``c @ x`` with inequality/equality rows and per-variable lower bounds.

    ``lower`` defaults to zero for every variable; ``-np.inf`` marks a free
    variable, which is split into positive and negative parts.
    """
    c = np.asarray(c, dtype=float)
    n = c.size
    lower = np.zeros(n) if lower is None else np.asarray(lower, dtype=float)
    A_ub = np.zeros((0, n)) if A_ub is None else np.atleast_2d(np.asarray(A_ub, dtype=float))
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float)
    A_eq = np.zeros((0, n)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, dtype=float))
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)

    free = np.isneginf(lower)
    shift = np.where(free, 0.0, lower)
    # x = shift + P y, y >= 0; free variables contribute a +/- column pair
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        cols.append(e)
        if free[j]:
            cols.append(-e)
    P = np.column_stack(cols) if cols else np.zeros((n, 0))
    k_ub = A_ub.shape[0]
    A = np.block([
        [A_ub @ P, np.eye(k_ub)],
        [A_eq @ P, np.zeros((A_eq.shape[0], k_ub))],
    ])
    b = np.concatenate([b_ub - A_ub @ shift, b_eq - A_eq @ shift])
    cc = np.concatenate([c @ P, np.zeros(k_ub)])
    res = simplex_standard(cc, A, b)
    if not res.ok:
        return res
    x = shift + P @ res.x[:P.shape[1]]
    return LPResult("optimal", x, float(c @ x), res.iterations)
