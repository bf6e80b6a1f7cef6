"""Limited-memory BFGS with Armijo backtracking.

Self-contained first-order minimizer over flat float64 vectors. The caller
supplies ``f(x) -> (energy, gradient)``; the two-loop recursion builds the
quasi-Newton direction from a short history of (step, gradient-difference)
pairs, and a halving backtracking line search enforces sufficient decrease,
so the returned trace of accepted energies is non-increasing.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import OptimizationError


@dataclass(frozen=True)
class MinimizeOptions:
    max_iters: int = 200
    memory: int = 10  # history pairs; 0 degrades to gradient descent
    tolerance: float = 1e-6  # stop when the gradient sup-norm falls below
    c1: float = 1e-4  # Armijo sufficient-decrease constant
    max_line_search: int = 20
    curvature_eps: float = 1e-10  # pairs with <s, y> at or below are skipped

    def __post_init__(self) -> None:
        if self.max_iters < 0 or self.memory < 0:
            raise ValueError("max_iters and memory must be non-negative")


@dataclass
class MinimizeResult:
    x: np.ndarray
    energy: float
    trace: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    stop_reason: str = "max_iters"


Objective = Callable[[np.ndarray], tuple[float, np.ndarray]]
AcceptHook = Callable[[int, np.ndarray, float], None]


def _checked_eval(f: Objective, x: np.ndarray, iteration: int) -> tuple[float, np.ndarray]:
    fx, g = f(x)
    g = np.asarray(g, dtype=np.float64).ravel()
    if not np.isfinite(fx) or not np.all(np.isfinite(g)):
        raise OptimizationError(
            f"non-finite energy or gradient at iteration {iteration}"
        )
    if g.shape != x.shape:
        raise OptimizationError(
            f"gradient size {g.shape} does not match variable size {x.shape}"
        )
    return float(fx), g


def _two_loop(g: np.ndarray, history: deque) -> np.ndarray:
    """Approximate -H^{-1} g from the stored curvature pairs."""
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(history):
        a = rho * np.dot(s, q)
        alphas.append(a)
        q -= a * y
    s, y, _ = history[-1]
    gamma = np.dot(s, y) / np.dot(y, y)
    q *= gamma
    for (s, y, rho), a in zip(history, reversed(alphas)):
        b = rho * np.dot(y, q)
        q += (a - b) * s
    return -q


def minimize(
    f: Objective,
    x0: np.ndarray,
    options: MinimizeOptions = MinimizeOptions(),
    on_accept: AcceptHook | None = None,
) -> MinimizeResult:
    """Minimize ``f`` from ``x0``.

    ``on_accept`` fires after every accepted evaluation, including the
    initial one (iteration 0), with (iteration, x, energy).
    """
    x = np.asarray(x0, dtype=np.float64).ravel().copy()
    fx, g = _checked_eval(f, x, 0)
    trace = [fx]
    if on_accept is not None:
        on_accept(0, x, fx)

    history: deque = deque(maxlen=max(1, options.memory))
    result = MinimizeResult(x=x, energy=fx, trace=trace)
    for iteration in range(1, options.max_iters + 1):
        g_inf = np.max(np.abs(g)) if g.size else 0.0
        if g_inf < options.tolerance:
            result.converged = True
            result.stop_reason = "tolerance"
            break

        if options.memory > 0 and history:
            d = _two_loop(g, history)
        else:
            d = -g
        gd = float(np.dot(g, d))
        if gd >= 0:  # stale curvature produced a non-descent direction
            d = -g
            gd = float(np.dot(g, d))

        # Unit step once curvature is known; a conservative first step else.
        step = 1.0 if history else min(1.0, 1.0 / max(np.sum(np.abs(g)), 1e-12))
        accepted = False
        for _ in range(options.max_line_search):
            x_new = x + step * d
            f_new, g_new = _checked_eval(f, x_new, iteration)
            if f_new <= fx + options.c1 * step * gd:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            result.stop_reason = "line_search_failure"
            break

        if options.memory > 0:
            s = x_new - x
            y = g_new - g
            sy = float(np.dot(s, y))
            if sy > options.curvature_eps:
                history.append((s, y, 1.0 / sy))
        x, fx, g = x_new, f_new, g_new
        trace.append(fx)
        result.iterations = iteration
        if on_accept is not None:
            on_accept(iteration, x, fx)

    result.x = x
    result.energy = fx
    return result
