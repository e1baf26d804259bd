"""Unconstrained minimizers used by the refinement stages."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ValidationError


@dataclass(frozen=True)
class OptimizerConfig:
    max_iter: int = 500
    gtol: float = 1e-6  # on max|g| / max(1, |f|)
    xtol: float = 1e-9  # on max|step|
    initial_step: float = 1e-2  # norm of the first step
    seed: int = 0
    method: str = "lbfgs"  # or "adam"
    history: int = 20  # stored correction pairs

    def __post_init__(self):
        if self.gtol <= 0 or self.xtol <= 0:
            raise ValidationError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValidationError("max_iter must be >= 1")
        if self.method not in ("lbfgs", "adam"):
            raise ValidationError(f"unknown optimizer {self.method!r}")


@dataclass
class OptimResult:
    x: np.ndarray
    fun: float
    status: str
    n_iter: int
    n_eval: int
    trace: list = field(default_factory=list)

    @property
    def converged(self):
        return self.status.startswith("converged")


def _check(f, g):
    if not np.isfinite(f):
        raise NumericalError("objective is not finite")
    bad = np.flatnonzero(~np.isfinite(g))
    if bad.size:
        raise NumericalError(f"gradient is not finite at index {int(bad[0])}")


def _grad_small(f, g, gtol):
    return np.max(np.abs(g)) <= gtol * max(1.0, abs(f))


def lbfgs(fun_grad, x0, cfg: OptimizerConfig = OptimizerConfig(), c1=1e-4, shrink=0.5,
          max_backtracks=50) -> OptimResult:
    """Limited-memory BFGS with Armijo backtracking.

    ``fun_grad(x)`` returns ``(f, g)``. Every accepted step decreases f, so
    the recorded trace is monotone.
    """
    x = np.array(x0, dtype=float)
    f, g = fun_grad(x)
    _check(f, g)
    n_eval = 1
    trace = [f]
    mem = deque(maxlen=cfg.history)
    status = "max_iter"
    it = 0
    if _grad_small(f, g, cfg.gtol):
        return OptimResult(x, f, "converged_gradient", 0, n_eval, trace)
    for it in range(1, cfg.max_iter + 1):
        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y, rho in reversed(mem):
            a = rho * (s @ q)
            alphas.append(a)
            q -= a * y
        if mem:
            s, y, _ = mem[-1]
            q *= (s @ y) / (y @ y)
            step0 = 1.0
        else:
            q /= np.linalg.norm(q)
            step0 = cfg.initial_step
        for (s, y, rho), a in zip(mem, reversed(alphas)):
            b = rho * (y @ q)
            q += s * (a - b)
        d = -q
        slope = g @ d
        if slope >= 0:
            # lost descent; restart from steepest descent
            mem.clear()
            d = -g / np.linalg.norm(g)
            slope = g @ d
            step0 = cfg.initial_step

        alpha = step0
        for _ in range(max_backtracks):
            x_new = x + alpha * d
            f_new, g_new = fun_grad(x_new)
            n_eval += 1
            if np.isfinite(f_new) and f_new <= f + c1 * alpha * slope:
                break
            alpha *= shrink
        else:
            status = "line_search_failed"
            break
        _check(f_new, g_new)

        s = x_new - x
        y = g_new - g
        sy = s @ y
        if sy > 1e-12 * np.sqrt((s @ s) * (y @ y)):
            mem.append((s, y, 1.0 / sy))
        x, f, g = x_new, f_new, g_new
        trace.append(f)
        if _grad_small(f, g, cfg.gtol):
            status = "converged_gradient"
            break
        if np.max(np.abs(s)) <= cfg.xtol:
            status = "converged_step"
            break
    return OptimResult(x, f, status, it, n_eval, trace)


def adam(fun_grad, x0, cfg: OptimizerConfig = OptimizerConfig(), beta1=0.9, beta2=0.999,
         eps=1e-8) -> OptimResult:
    """Adaptive first-order steps with ``initial_step`` as the learning rate.

    Returns the best iterate seen; the trace records the running best value.
    """
    x = np.array(x0, dtype=float)
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    f, g = fun_grad(x)
    _check(f, g)
    best_x, best_f = x.copy(), f
    trace = [f]
    status = "max_iter"
    it = 0
    for it in range(1, cfg.max_iter + 1):
        if _grad_small(f, g, cfg.gtol):
            status = "converged_gradient"
            break
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        step = cfg.initial_step * (m / (1 - beta1 ** it)) / (np.sqrt(v / (1 - beta2 ** it)) + eps)
        x = x - step
        f, g = fun_grad(x)
        _check(f, g)
        if f < best_f:
            best_x, best_f = x.copy(), f
        trace.append(best_f)
        if np.max(np.abs(step)) <= cfg.xtol:
            status = "converged_step"
            break
    return OptimResult(best_x, best_f, status, it, it + 1, trace)


def minimize(fun_grad, x0, cfg: OptimizerConfig = OptimizerConfig()) -> OptimResult:
    if cfg.method == "adam":
        return adam(fun_grad, x0, cfg)
    return lbfgs(fun_grad, x0, cfg)
