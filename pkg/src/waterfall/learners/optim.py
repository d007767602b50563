"""Monotone descent for smooth objectives.

Search directions come from a limited-memory BFGS approximation and every
step is accepted only under an Armijo sufficient-decrease test, so the
recorded objective trace never increases. Box bounds are handled by
projecting trial points; when the projected quasi-Newton step fails to
descend the memory is dropped and a projected gradient step is used.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class OptSettings:
    max_iters: int = 500
    tol: float = 1e-6          # on the (projected) gradient infinity norm
    ftol: float = 0.0          # stop when relative decrease falls below this
    memory: int = 10
    armijo: float = 1e-4
    max_backtracks: int = 40


@dataclass(frozen=True)
class OptResult:
    x: np.ndarray
    fun: float
    trace: tuple[float, ...]
    n_iter: int
    converged: bool
    message: str = ""


class NonFiniteObjective(FloatingPointError):
    pass


def _projected_grad(x, g, lower, upper):
    if lower is None:
        return g
    pg = g.copy()
    pg[(x <= lower) & (g > 0)] = 0.0
    pg[(x >= upper) & (g < 0)] = 0.0
    return pg


def minimize(
    fun: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0: np.ndarray,
    settings: OptSettings = OptSettings(),
    lower: np.ndarray | None = None,
    upper: np.ndarray | None = None,
) -> OptResult:
    """Minimize ``fun`` (returning value and gradient) from ``x0``."""
    x = np.array(x0, dtype=float)
    bounded = lower is not None
    if bounded:
        lower = np.broadcast_to(np.asarray(lower, dtype=float), x.shape)
        upper = np.broadcast_to(np.asarray(upper, dtype=float), x.shape)
        x = np.clip(x, lower, upper)
        project = lambda z: np.clip(z, lower, upper)  # noqa: E731
    else:
        project = lambda z: z  # noqa: E731

    f, g = fun(x)
    if not np.isfinite(f):
        raise NonFiniteObjective("objective is not finite at the starting point")
    trace = [float(f)]
    s_hist: list[np.ndarray] = []
    y_hist: list[np.ndarray] = []
    step0 = 1.0 / max(1.0, float(np.linalg.norm(g)))
    qn_step = 1.0  # first trial step for quasi-Newton directions

    for it in range(settings.max_iters):
        pg = _projected_grad(x, g, lower, upper) if bounded else g
        if np.max(np.abs(pg), initial=0.0) < settings.tol:
            return OptResult(x, float(f), tuple(trace), it, True, "gradient tolerance reached")

        direction = _two_loop(g, s_hist, y_hist)
        use_memory = bool(s_hist)
        if float(direction @ g) >= 0:
            direction, use_memory = -g, False
            s_hist.clear()
            y_hist.clear()

        accepted = False
        for attempt in range(2):
            alpha = qn_step if use_memory else step0
            for _ in range(settings.max_backtracks):
                x_new = project(x + alpha * direction)
                delta = x_new - x
                f_new, g_new = fun(x_new)
                if np.isfinite(f_new) and f_new <= f + settings.armijo * float(g @ delta) and f_new <= f:
                    accepted = True
                    break
                alpha *= 0.5
            if accepted or not use_memory:
                break
            direction, use_memory = -g, False
            s_hist.clear()
            y_hist.clear()

        if not accepted:
            return OptResult(x, float(f), tuple(trace), it, False, "line search failed")

        s, yv = x_new - x, g_new - g
        if float(s @ yv) > 1e-12 * float(yv @ yv):
            s_hist.append(s)
            y_hist.append(yv)
            if len(s_hist) > settings.memory:
                s_hist.pop(0)
                y_hist.pop(0)
        if use_memory:
            # near kinks the unit step keeps failing; resume from the last
            # accepted length instead of re-halving from 1 every time
            qn_step = min(1.0, 2.0 * alpha)
        else:
            step0 = min(alpha * 2.0, 1e6)
        rel = (f - f_new) / max(abs(f), 1e-12)
        x, f, g = x_new, f_new, g_new
        trace.append(float(f))
        if settings.ftol > 0 and rel < settings.ftol:
            return OptResult(x, float(f), tuple(trace), it + 1, True, "relative decrease below ftol")

    return OptResult(x, float(f), tuple(trace), settings.max_iters, False, "iteration budget exhausted")


def _two_loop(g, s_hist, y_hist):
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(s_hist), reversed(y_hist)):
        rho = 1.0 / float(y @ s)
        a = rho * float(s @ q)
        alphas.append((rho, a))
        q -= a * y
    if s_hist:
        s, y = s_hist[-1], y_hist[-1]
        q *= float(s @ y) / float(y @ y)
    for (s, y), (rho, a) in zip(zip(s_hist, y_hist), reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return -q

