"""Unconstrained smooth maximization and gradient verification.

A limited-memory quasi-Newton ascent with Armijo backtracking. The
objective is a callable returning (value, gradient); non-finite values
during the line search reject the step rather than aborting, since
log-determinants overflow transiently under aggressive steps.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InitializationError, InputError

__all__ = ["OptimSettings", "OptimResult", "maximize", "grad_check"]

ARMIJO_C = 1e-4
CONTRACTION = 0.5
MEMORY = 10
MIN_STEP = 1e-20


@dataclass
class OptimSettings:
    max_iters: int = 500
    grad_tol: float = 1e-5
    rel_tol: float = 1e-9

    def __post_init__(self):
        if self.max_iters <= 0 or self.grad_tol <= 0 or self.rel_tol <= 0:
            raise InputError("optimizer settings must be positive")


@dataclass
class OptimResult:
    params: np.ndarray
    value: float
    iterations: int
    converged: bool
    trace: list = field(default_factory=list)


def _two_loop(grad, pairs):
    """L-BFGS two-loop recursion for the descent direction -H @ grad."""
    q = grad.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    if pairs:
        s, y, _ = pairs[-1]
        q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def maximize(fun, init, settings=None):
    """Ascend ``fun`` from ``init``; returns an OptimResult.

    ``fun(x)`` must return (value, gradient). Stops when the gradient
    infinity-norm falls below ``grad_tol``, the relative value change
    falls below ``rel_tol``, or ``max_iters`` accepted steps have been
    taken. Every accepted step satisfies an Armijo sufficient-increase
    condition, so the recorded trace is non-decreasing.
    """
    settings = settings or OptimSettings()
    x = np.asarray(init, dtype=float).copy()

    def peek(z):
        # overflow during trial steps means "reject", not "crash"
        with np.errstate(all="ignore"):
            return fun(z)

    f, g = peek(x)
    g = np.asarray(g, dtype=float)
    if not np.isfinite(f):
        raise InitializationError("objective is not finite at the initial point")
    trace = [(0, float(f))]
    pairs: deque = deque(maxlen=MEMORY)
    iterations = 0
    converged = False
    # minimize phi = -f internally; standard L-BFGS bookkeeping
    gphi = -g
    while iterations < settings.max_iters:
        if np.max(np.abs(gphi)) < settings.grad_tol:
            converged = True
            break
        d = _two_loop(gphi, list(pairs))
        slope = gphi @ d
        if not np.isfinite(slope) or slope >= 0:
            d = -gphi
            slope = gphi @ d
        step = 1.0
        accepted = False
        while step > MIN_STEP:
            xn = x + step * d
            fn, gn = peek(xn)
            if np.isfinite(fn) and -fn <= -f + ARMIJO_C * step * slope:
                accepted = True
                break
            step *= CONTRACTION
        if not accepted:
            break
        gn = np.asarray(gn, dtype=float)
        s = xn - x
        y = (-gn) - gphi
        sy = s @ y
        if np.isfinite(sy) and sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            pairs.append((s, y, 1.0 / sy))
        rel_change = abs(fn - f) / max(1.0, abs(fn))
        x, f, gphi = xn, fn, -gn
        iterations += 1
        trace.append((iterations, float(f)))
        if rel_change < settings.rel_tol:
            converged = True
            break
    else:
        pass
    if iterations >= settings.max_iters and not converged:
        converged = False
    if not converged and np.max(np.abs(gphi)) < settings.grad_tol:
        converged = True
    return OptimResult(
        params=x, value=float(f), iterations=iterations,
        converged=converged, trace=trace,
    )


def grad_check(fun, point, step=1e-5):
    """Max relative error between analytic and central-difference gradients.

    Falls back to absolute error for coordinates where both gradients are
    below 1e-8 in magnitude.
    """
    if step <= 0:
        raise InputError("step must be positive")
    point = np.asarray(point, dtype=float)
    _, g = fun(point)
    g = np.asarray(g, dtype=float)
    worst = 0.0
    for i in range(point.size):
        e = np.zeros_like(point)
        e[i] = step
        fp, _ = fun(point + e)
        fm, _ = fun(point - e)
        fd = (fp - fm) / (2.0 * step)
        if max(abs(fd), abs(g[i])) < 1e-8:
            err = abs(g[i] - fd)
        else:
            err = abs(g[i] - fd) / max(abs(fd), 1e-12)
        worst = max(worst, err)
    return worst
