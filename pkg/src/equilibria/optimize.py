"""Quasi-Newton minimisation for the smooth convex outer problems.

BFGS with a strong-Wolfe line search does the bulk of the work.  Near the
optimum function differences drop below rounding error and the line search
stalls, so the last digits come from Newton steps on the gradient with a
finite-difference Jacobian, accepted whenever they shrink the gradient.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import line_search

log = logging.getLogger(__name__)

FunGrad = Callable[[np.ndarray], tuple[float, np.ndarray]]


@dataclass
class MinimizeResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    iterations: int
    converged: bool

    @property
    def grad_norm(self) -> float:
        return float(np.max(np.abs(self.grad), initial=0.0))


class _Cache:
    def __init__(self, fun_grad: FunGrad):
        self.fun_grad = fun_grad
        self.key = None
        self.value = None
        self.calls = 0

    def __call__(self, x):
        key = np.asarray(x, dtype=float).tobytes()
        if key != self.key:
            f, g = self.fun_grad(np.asarray(x, dtype=float).copy())
            self.key, self.value = key, (float(f), np.asarray(g, dtype=float))
            self.calls += 1
        return self.value

    def f(self, x):
        return self(x)[0]

    def g(self, x):
        return self(x)[1]


def _newton_polish(cache: _Cache, x, g, gtol, steps, h=1e-6, watch=None):
    n = x.size
    for _ in range(steps):
        if np.max(np.abs(g)) <= gtol:
            break
        J = np.empty((n, n))
        for k in range(n):
            e = np.zeros(n)
            e[k] = h
            J[:, k] = (cache.g(x + e) - cache.g(x - e)) / (2 * h)
        J = 0.5 * (J + J.T)
        step, *_ = np.linalg.lstsq(J, -g, rcond=1e-12)
        for t in (1.0, 0.5, 0.25):
            xn = x + t * step
            fn, gn = cache(xn)
            if np.isfinite(fn) and np.max(np.abs(gn)) < np.max(np.abs(g)):
                x, g = xn, gn
                break
        else:
            break
        if watch is not None:
            watch(x)
    return x, g


def minimize_bfgs(fun_grad: FunGrad, x0, gtol: float = 1e-10, max_iter: int = 500,
                  polish_steps: int = 8, watch: Callable[[np.ndarray], None] | None = None
                  ) -> MinimizeResult:
    """Minimise a smooth convex function given a joint value/gradient callable.

    ``watch`` is called with each accepted iterate; it may raise to abort
    (the demand solver uses this to detect divergence).
    """
    cache = _Cache(fun_grad)
    x = np.asarray(x0, dtype=float).copy()
    n = x.size
    f, g = cache(x)
    H = np.eye(n)
    it = 0
    for it in range(1, max_iter + 1):
        if np.max(np.abs(g), initial=0.0) <= gtol:
            break
        d = -H @ g
        if g @ d >= 0:
            H = np.eye(n)
            d = -g
        with warnings.catch_warnings():
            # a stalled search is expected near the optimum; the Newton polish takes over
            warnings.filterwarnings("ignore", message="The line search algorithm")
            alpha, *_ = line_search(cache.f, cache.g, x, d, gfk=g, old_fval=f, c1=1e-4, c2=0.9)
        if alpha is None:
            break
        s = alpha * d
        x_new = x + s
        f_new, g_new = cache(x_new)
        y = g_new - g
        sy = s @ y
        if sy > 1e-16 * np.linalg.norm(s) * np.linalg.norm(y):
            if it == 1:
                H = np.eye(n) * (sy / (y @ y))
            rho = 1.0 / sy
            V = np.eye(n) - rho * np.outer(s, y)
            H = V @ H @ V.T + rho * np.outer(s, s)
        x, f, g = x_new, f_new, g_new
        if watch is not None:
            watch(x)
    x, g = _newton_polish(cache, x, g, gtol, polish_steps, watch=watch)
    f = cache.f(x)
    converged = bool(np.max(np.abs(g), initial=0.0) <= gtol)
    log.debug("bfgs: %d iterations, %d evaluations, |g|=%.3e", it, cache.calls,
              np.max(np.abs(g), initial=0.0))
    return MinimizeResult(x, f, g, it, converged)
