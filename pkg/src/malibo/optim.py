"""Dense-parameter optimizers: ADAM with exponential LR decay and L-BFGS
with a strong-Wolfe line search.

All state is float64 and single-owner; every routine is deterministic for a
fixed call sequence.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

WOLFE_C1 = 1e-4
WOLFE_C2 = 0.9


class DivergenceError(RuntimeError):
    """Objective became non-finite during optimization."""

    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message)
        self.epoch = epoch


def finite_difference_gradient(f: Callable[[np.ndarray], float], x: np.ndarray,
                               h: float = 1e-5) -> np.ndarray:
    """Central finite differences, the reference oracle for analytic gradients."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in range(x.size):
        step = np.zeros_like(x)
        step.flat[i] = h
        grad.flat[i] = (f(x + step) - f(x - step)) / (2.0 * h)
    return grad


# -- ADAM ------------------------------------------------------------------


@dataclass
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    decay_per_epoch: float = 0.999

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if not 0 < self.decay_per_epoch <= 1:
            raise ValueError("decay_per_epoch must lie in (0, 1]")

    def lr_at_epoch(self, epoch: int) -> float:
        return self.lr * self.decay_per_epoch**epoch


class Adam:
    """Stateful ADAM stepper with bias correction."""

    def __init__(self, n_params: int, config: AdamConfig | None = None):
        self.config = config or AdamConfig()
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0

    def step(self, x: np.ndarray, grad: np.ndarray, lr: float | None = None) -> np.ndarray:
        cfg = self.config
        lr = cfg.lr if lr is None else lr
        self.t += 1
        self.m = cfg.beta1 * self.m + (1 - cfg.beta1) * grad
        self.v = cfg.beta2 * self.v + (1 - cfg.beta2) * grad * grad
        m_hat = self.m / (1 - cfg.beta1**self.t)
        v_hat = self.v / (1 - cfg.beta2**self.t)
        return x - lr * m_hat / (np.sqrt(v_hat) + cfg.eps)


def adam_minimize(fun_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
                  x0: np.ndarray, config: AdamConfig | None = None,
                  epochs: int = 100, steps_per_epoch: int = 1) -> np.ndarray:
    """Full-batch ADAM driver; LR at epoch e is ``lr * decay**e``.

    Returns the best iterate seen. Raises :class:`DivergenceError` with the
    epoch index if the objective becomes non-finite.
    """
    cfg = config or AdamConfig()
    x = np.asarray(x0, dtype=np.float64).copy()
    opt = Adam(x.size, cfg)
    best_f = np.inf
    best_x = x.copy()
    for epoch in range(epochs):
        lr = cfg.lr_at_epoch(epoch)
        for _ in range(steps_per_epoch):
            f, g = fun_grad(x)
            if not np.isfinite(f):
                raise DivergenceError(f"objective diverged at epoch {epoch}", epoch=epoch)
            if f < best_f:
                best_f, best_x = f, x.copy()
            x = opt.step(x, g, lr=lr)
    f, _ = fun_grad(x)
    if np.isfinite(f) and f < best_f:
        best_x = x
    return best_x


# -- L-BFGS ------------------------------------------------------------------


@dataclass
class LbfgsConfig:
    lr: float = 1.0
    max_iter: int = 20
    tol_grad: float = 1e-7
    tol_change: float = 1e-9
    history: int = 100

    def __post_init__(self):
        if min(self.lr, self.max_iter, self.tol_grad, self.tol_change) <= 0:
            raise ValueError("all L-BFGS parameters must be positive")
        if self.history < 1:
            raise ValueError("history must be >= 1")


@dataclass
class LbfgsResult:
    x: np.ndarray
    fun: float
    grad_norm: float
    n_iter: int
    converged: bool
    message: str = ""


def strong_wolfe(fun_grad, x: np.ndarray, direction: np.ndarray, f0: float,
                 g0: np.ndarray, alpha0: float = 1.0, c1: float = WOLFE_C1,
                 c2: float = WOLFE_C2, max_evals: int = 25):
    """Line search satisfying the strong Wolfe conditions.

    Returns ``(alpha, f, g, success)``; on failure alpha is the best
    sufficient-decrease step found (possibly 0).
    """
    dg0 = float(g0 @ direction)
    if dg0 >= 0:
        return 0.0, f0, g0, False

    def phi(alpha):
        f, g = fun_grad(x + alpha * direction)
        return f, g, float(g @ direction)

    def cubic_step(a0, f_a0, d_a0, a1, f_a1, d_a1):
        # minimizer of the cubic through both (value, slope) pairs
        d1 = d_a0 + d_a1 - 3.0 * (f_a0 - f_a1) / (a0 - a1)
        radicand = d1 * d1 - d_a0 * d_a1
        if radicand < 0 or not np.isfinite(radicand):
            return None
        d2 = np.sign(a1 - a0) * np.sqrt(radicand)
        denom = d_a1 - d_a0 + 2.0 * d2
        if denom == 0:
            return None
        return a1 - (a1 - a0) * (d_a1 + d2 - d1) / denom

    def zoom(a_lo, f_lo, dg_lo, a_hi, f_hi, dg_hi, budget):
        # invariant: a_lo satisfies Armijo and has the lower function value
        a_best, f_best, g_best = a_lo, f_lo, None
        for _ in range(budget):
            span = abs(a_hi - a_lo)
            if span < 1e-16 * max(1.0, abs(a_hi)):
                break
            alpha = None
            if np.isfinite(f_hi) and np.isfinite(dg_hi):
                alpha = cubic_step(a_lo, f_lo, dg_lo, a_hi, f_hi, dg_hi)
            inner_lo, inner_hi = min(a_lo, a_hi), max(a_lo, a_hi)
            margin = 0.1 * span
            if alpha is None or not np.isfinite(alpha) or not (
                inner_lo + margin <= alpha <= inner_hi - margin
            ):
                alpha = 0.5 * (a_lo + a_hi)
            f, g, dg = phi(alpha)
            if not np.isfinite(f) or f > f0 + c1 * alpha * dg0 or f >= f_lo:
                a_hi, f_hi, dg_hi = alpha, f, dg
            else:
                if abs(dg) <= -c2 * dg0:
                    return alpha, f, g, True
                if dg * (a_hi - a_lo) >= 0:
                    a_hi, f_hi, dg_hi = a_lo, f_lo, dg_lo
                a_lo, f_lo, dg_lo = alpha, f, dg
                a_best, f_best, g_best = alpha, f, g
        if g_best is None:
            f_best, g_best = fun_grad(x + a_best * direction)
        return a_best, f_best, g_best, False

    alpha_prev, f_prev, dg_prev = 0.0, f0, dg0
    alpha = alpha0
    for i in range(max_evals):
        f, g, dg = phi(alpha)
        if not np.isfinite(f) or f > f0 + c1 * alpha * dg0 or (i > 0 and f >= f_prev):
            return zoom(alpha_prev, f_prev, dg_prev, alpha, f, dg, max_evals)
        if abs(dg) <= -c2 * dg0:
            return alpha, f, g, True
        if dg >= 0:
            return zoom(alpha, f, dg, alpha_prev, f_prev, dg_prev, max_evals)
        alpha_prev, f_prev, dg_prev = alpha, f, dg
        alpha = 2.0 * alpha
    return zoom(alpha_prev, f_prev, dg_prev, alpha, np.inf, np.nan, max_evals)


def lbfgs_minimize(fun_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
                   z0: np.ndarray, config: LbfgsConfig | None = None) -> LbfgsResult:
    """Limited-memory BFGS with strong-Wolfe steps.

    Never returns a point worse than ``z0``; on line-search failure the best
    iterate is returned with ``converged=False``.
    """
    cfg = config or LbfgsConfig()
    x = np.asarray(z0, dtype=np.float64).copy()
    f, g = fun_grad(x)
    if not np.isfinite(f):
        raise DivergenceError("objective not finite at the initial point")
    best_f, best_x = f, x.copy()
    s_hist: list[np.ndarray] = []
    y_hist: list[np.ndarray] = []
    rho_hist: list[float] = []

    n_iter = 0
    converged = False
    message = "max_iter reached"
    for it in range(cfg.max_iter):
        grad_norm = float(np.max(np.abs(g)))
        if grad_norm <= cfg.tol_grad:
            converged, message = True, "gradient tolerance reached"
            break

        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rho_hist)):
            a = rho * (s @ q)
            alphas.append(a)
            q -= a * y
        if y_hist:
            gamma = (s_hist[-1] @ y_hist[-1]) / (y_hist[-1] @ y_hist[-1])
            q *= gamma
        for (s, y, rho), a in zip(zip(s_hist, y_hist, rho_hist), reversed(alphas)):
            b = rho * (y @ q)
            q += (a - b) * s
        direction = -q
        if direction @ g >= 0:  # not a descent direction; reset to steepest descent
            direction = -g
            s_hist, y_hist, rho_hist = [], [], []

        alpha0 = cfg.lr if it > 0 else min(1.0, 1.0 / max(1.0, float(np.sum(np.abs(g))))) * cfg.lr
        alpha, f_new, g_new, ok = strong_wolfe(fun_grad, x, direction, f, g, alpha0=alpha0)
        n_iter = it + 1
        if alpha == 0.0 or not np.isfinite(f_new):
            message = "line search failed"
            break

        step = alpha * direction
        x_new = x + step
        if f_new < best_f:
            best_f, best_x = f_new, x_new.copy()

        y_vec = g_new - g
        sy = float(step @ y_vec)
        if sy > 1e-10:
            s_hist.append(step)
            y_hist.append(y_vec)
            rho_hist.append(1.0 / sy)
            if len(s_hist) > cfg.history:
                s_hist.pop(0)
                y_hist.pop(0)
                rho_hist.pop(0)

        small_step = float(np.max(np.abs(step))) <= cfg.tol_change
        small_change = abs(f_new - f) <= cfg.tol_change
        x, f, g = x_new, f_new, g_new
        if not ok:
            message = "line search left Wolfe conditions unsatisfied"
            break
        if small_step or small_change:
            converged, message = True, "step/value change below tolerance"
            break
    else:
        grad_norm = float(np.max(np.abs(g)))
        if grad_norm <= cfg.tol_grad:
            converged, message = True, "gradient tolerance reached"

    if f <= best_f:
        best_f, best_x = f, x
    return LbfgsResult(
        x=best_x,
        fun=float(best_f),
        grad_norm=float(np.max(np.abs(fun_grad(best_x)[1]))),
        n_iter=n_iter,
        converged=converged,
        message=message,
    )
