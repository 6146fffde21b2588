"""Batch first-order solvers sharing one termination and tracing contract.

Every solver consumes an oracle closure ``w -> (value, gradient)`` and a
:class:`SolverConfig`, and returns a :class:`SolverResult` whose solution is
the evaluated iterate with the lowest recorded objective (subgradient-type and
accelerated methods are not descent methods, so last-iterate would be wrong).

Stopping tests run in the order: gradient norm, best-objective stall, then the
iteration budget.  The stall test compares the running best objective against
its value ten recorded iterations earlier; ``f_tol = 0`` disables it, since a
literal zero-improvement test would stop any oscillating method almost
immediately.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from .core import EvaluationError

__all__ = [
    "Algorithm",
    "SolverConfig",
    "SolverResult",
    "Termination",
    "TuneStepWarning",
    "accelerated_gradient",
    "dual_averaging",
    "gradient_descent",
    "lbfgs",
    "nesterov_alpha_next",
    "run_solver",
    "subgradient_method",
    "tune_initial_step",
]

Oracle = Callable[[np.ndarray], tuple[float, np.ndarray]]

_STALL_WINDOW = 10
_ARMIJO_C = 1e-4
_MAX_HALVINGS = 50


class Algorithm(str, Enum):
    SUBGRADIENT = "subgradient"
    DUAL_AVERAGING = "dual_averaging"
    GRADIENT_DESCENT = "gradient_descent"
    ACCELERATED_GRADIENT = "accelerated_gradient"
    LBFGS = "lbfgs"


class Termination(str, Enum):
    MAX_ITERS = "max_iters"
    GRAD_TOL = "grad_tol"
    F_TOL = "f_tol"
    LINE_SEARCH_FAILURE = "line_search_failure"


class TuneStepWarning(UserWarning):
    """No trial step decreased the objective; the smallest grid step was returned."""


@dataclass
class SolverConfig:
    """Shared solver settings.

    ``step_size`` is either a positive float or the string ``"auto"``, in
    which case :func:`tune_initial_step` picks it at the first iterate.  The
    starting point is ``initial_point`` when given, else the zero vector of
    length ``dim``.
    """

    algorithm: Algorithm = Algorithm.LBFGS
    max_iters: int = 1000
    grad_tol: float = 1e-8
    f_tol: float = 1e-10
    step_size: float | str = "auto"
    lbfgs_memory: int = 10
    initial_point: np.ndarray | None = None
    dim: int | None = None

    def __post_init__(self):
        self.algorithm = Algorithm(self.algorithm)
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.grad_tol < 0.0 or self.f_tol < 0.0:
            raise ValueError("grad_tol and f_tol must be nonnegative")
        if isinstance(self.step_size, str):
            if self.step_size != "auto":
                raise ValueError(f"step_size must be positive or 'auto', got {self.step_size!r}")
        elif not self.step_size > 0.0:
            raise ValueError(f"step_size must be positive, got {self.step_size}")
        if self.lbfgs_memory < 1:
            raise ValueError(f"lbfgs_memory must be >= 1, got {self.lbfgs_memory}")

    def start_point(self) -> np.ndarray:
        if self.initial_point is not None:
            x0 = np.asarray(self.initial_point, dtype=float)
            if x0.ndim != 1:
                raise ValueError(f"initial_point must be 1-D, got shape {x0.shape}")
            return x0.copy()
        if self.dim is None:
            raise ValueError("provide initial_point or dim in SolverConfig")
        return np.zeros(self.dim)


@dataclass
class SolverResult:
    """Outcome of one solver run; ``solution`` minimizes ``objective_trace``."""

    solution: np.ndarray
    objective_trace: np.ndarray
    iterate_trace: list[np.ndarray]
    termination: Termination
    oracle_calls: int


class _Tracker:
    """Records evaluated iterates, the running best, and the stall window."""

    def __init__(self):
        self.trace: list[float] = []
        self.iterates: list[np.ndarray] = []
        self.best_f = math.inf
        self.best_x: np.ndarray | None = None
        self._best_hist: list[float] = []

    def record(self, x: np.ndarray, f: float) -> None:
        self.trace.append(f)
        self.iterates.append(x.copy())
        if f < self.best_f:
            self.best_f = f
            self.best_x = x.copy()
        self._best_hist.append(self.best_f)

    def stalled(self, f_tol: float) -> bool:
        if f_tol <= 0.0 or len(self._best_hist) <= _STALL_WINDOW:
            return False
        return self._best_hist[-_STALL_WINDOW - 1] - self._best_hist[-1] <= f_tol

    def result(self, termination: Termination, calls: int) -> SolverResult:
        return SolverResult(
            solution=self.best_x.copy(),
            objective_trace=np.asarray(self.trace),
            iterate_trace=self.iterates,
            termination=termination,
            oracle_calls=calls,
        )


def _counting(oracle: Oracle):
    calls = [0]

    def wrapped(w: np.ndarray) -> tuple[float, np.ndarray]:
        calls[0] += 1
        f, g = oracle(w)
        return float(f), np.asarray(g, dtype=float)

    return wrapped, calls


def _check_finite(f: float, g: np.ndarray, k: int, tracker: _Tracker):
    if not (np.isfinite(f) and np.isfinite(g).all()):
        err = EvaluationError(f"non-finite oracle output at iteration {k}")
        err.objective_trace = list(tracker.trace)
        raise err


def tune_initial_step(oracle: Oracle, x0) -> float:
    """Largest step on a geometric grid that strictly decreases the objective.

    The grid is 2**k / (1 + ||g0||) for k = -20..20, scanned from the largest
    step down; scanning order makes the result deterministic.  If no step
    decreases the objective a :class:`TuneStepWarning` is emitted and the
    smallest grid step is returned.
    """
    x0 = np.asarray(x0, dtype=float)
    f0, g0 = oracle(x0)
    g0 = np.asarray(g0, dtype=float)
    base = 1.0 / (1.0 + float(np.linalg.norm(g0)))
    for k in range(20, -21, -1):
        alpha = base * 2.0**k
        f_trial, _ = oracle(x0 - alpha * g0)
        if np.isfinite(f_trial) and f_trial < f0:
            return alpha
    warnings.warn("no decreasing trial step found; returning smallest grid step", TuneStepWarning)
    return base * 2.0**-20


def subgradient_method(oracle: Oracle, config: SolverConfig) -> SolverResult:
    """Fixed-schedule subgradient descent, step a / sqrt(k + 1)."""
    x = config.start_point()
    oracle, calls = _counting(oracle)
    alpha = None if isinstance(config.step_size, str) else config.step_size
    tr = _Tracker()
    termination = Termination.MAX_ITERS
    for k in range(config.max_iters):
        f, g = oracle(x)
        _check_finite(f, g, k, tr)
        tr.record(x, f)
        if np.linalg.norm(g) <= config.grad_tol:
            termination = Termination.GRAD_TOL
            break
        if tr.stalled(config.f_tol):
            termination = Termination.F_TOL
            break
        if alpha is None:
            alpha = tune_initial_step(oracle, x)
        x = x - (alpha / math.sqrt(k + 1)) * g
    return tr.result(termination, calls[0])


def dual_averaging(oracle: Oracle, config: SolverConfig) -> SolverResult:
    """Weighted dual averaging with normalized subgradients.

    Maintains s_{k+1} = sum of g_i / ||g_i|| and maps it back through a
    sqrt(k+1) divisor: x_{k+1} = x0 - s_{k+1} / (a * sqrt(k+1)).  The scale a
    is set so that the first move has the length of the tuned (or configured)
    raw gradient step; exactly zero subgradients terminate the run instead of
    entering the sum.
    """
    x0 = config.start_point()
    x = x0.copy()
    oracle, calls = _counting(oracle)
    s = np.zeros_like(x0)
    a = None
    tr = _Tracker()
    termination = Termination.MAX_ITERS
    for k in range(config.max_iters):
        f, g = oracle(x)
        _check_finite(f, g, k, tr)
        tr.record(x, f)
        gnorm = float(np.linalg.norm(g))
        if gnorm <= config.grad_tol or gnorm == 0.0:
            termination = Termination.GRAD_TOL
            break
        if tr.stalled(config.f_tol):
            termination = Termination.F_TOL
            break
        if a is None:
            step = (
                config.step_size
                if not isinstance(config.step_size, str)
                else tune_initial_step(oracle, x0)
            )
            a = 1.0 / (step * gnorm)
        s = s + g / gnorm
        x = x0 - s / (a * math.sqrt(k + 1))
    return tr.result(termination, calls[0])


def gradient_descent(oracle: Oracle, config: SolverConfig) -> SolverResult:
    """Gradient descent with Armijo backtracking from a fixed trial step."""
    x = config.start_point()
    oracle, calls = _counting(oracle)
    alpha = None if isinstance(config.step_size, str) else config.step_size
    tr = _Tracker()
    termination = Termination.MAX_ITERS
    for k in range(config.max_iters):
        f, g = oracle(x)
        _check_finite(f, g, k, tr)
        tr.record(x, f)
        if np.linalg.norm(g) <= config.grad_tol:
            termination = Termination.GRAD_TOL
            break
        if tr.stalled(config.f_tol):
            termination = Termination.F_TOL
            break
        if alpha is None:
            alpha = tune_initial_step(oracle, x)
        gg = float(g @ g)
        t = alpha
        for _ in range(_MAX_HALVINGS + 1):
            f_trial, _ = oracle(x - t * g)
            if np.isfinite(f_trial) and f_trial <= f - _ARMIJO_C * t * gg:
                break
            t *= 0.5
        else:
            return tr.result(Termination.LINE_SEARCH_FAILURE, calls[0])
        x = x - t * g
    return tr.result(termination, calls[0])


def nesterov_alpha_next(alpha: float) -> float:
    """One step of the momentum recursion a -> (1 + sqrt(1 + 4 a^2)) / 2."""
    return 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * alpha * alpha))


def accelerated_gradient(oracle: Oracle, config: SolverConfig) -> SolverResult:
    """Accelerated gradient with the standard momentum sequence.

    x_{s+1} = y_s - step * grad(y_s), then y_{s+1} extrapolates x_{s+1} past
    x_s with coefficient (a_s - 1) / a_{s+1}, where a starts at 1 and follows
    :func:`nesterov_alpha_next` (so the second value is the golden ratio).
    With an auto step the tuned step is halved: the tuner approximates the
    largest still-decreasing step while the scheme wants the inverse of the
    gradient's Lipschitz constant, about half of that.
    """
    x_prev = config.start_point()
    y = x_prev.copy()
    oracle, calls = _counting(oracle)
    step = None if isinstance(config.step_size, str) else config.step_size
    a_cur = 1.0
    tr = _Tracker()
    termination = Termination.MAX_ITERS
    for k in range(config.max_iters):
        f, g = oracle(y)
        _check_finite(f, g, k, tr)
        tr.record(y, f)
        if np.linalg.norm(g) <= config.grad_tol:
            termination = Termination.GRAD_TOL
            break
        if tr.stalled(config.f_tol):
            termination = Termination.F_TOL
            break
        if step is None:
            step = 0.5 * tune_initial_step(oracle, x_prev)
        x_next = y - step * g
        a_next = nesterov_alpha_next(a_cur)
        y = x_next + ((a_cur - 1.0) / a_next) * (x_next - x_prev)
        x_prev = x_next
        a_cur = a_next
    return tr.result(termination, calls[0])


def _two_loop(g: np.ndarray, memory: list[tuple[np.ndarray, np.ndarray, float]]) -> np.ndarray:
    q = g.copy()
    alphas = []
    for s, yv, rho in reversed(memory):
        a = rho * float(s @ q)
        q -= a * yv
        alphas.append(a)
    if memory:
        s, yv, _ = memory[-1]
        q *= float(s @ yv) / float(yv @ yv)
    for (s, yv, rho), a in zip(memory, reversed(alphas)):
        b = rho * float(yv @ q)
        q += (a - b) * s
    return -q


def lbfgs(oracle: Oracle, config: SolverConfig) -> SolverResult:
    """Limited-memory BFGS with Armijo backtracking.

    Curvature pairs with s @ y <= 1e-12 * ||s|| ||y|| are discarded, and the
    search direction falls back to steepest descent whenever the two-loop
    output fails the descent test.  If backtracking exhausts its halvings on a
    quasi-Newton direction, the memory is cleared and the step retried once
    along the raw negative gradient before failure is reported.
    """
    x = config.start_point()
    oracle, calls = _counting(oracle)
    memory: list[tuple[np.ndarray, np.ndarray, float]] = []
    tr = _Tracker()
    f, g = oracle(x)
    _check_finite(f, g, 0, tr)
    tr.record(x, f)
    termination = Termination.MAX_ITERS

    def backtrack(d: np.ndarray, slope: float):
        t = 1.0
        for _ in range(_MAX_HALVINGS + 1):
            x_trial = x + t * d
            f_trial, g_trial = oracle(x_trial)
            if np.isfinite(f_trial) and f_trial <= f + _ARMIJO_C * t * slope:
                return x_trial, f_trial, g_trial
            t *= 0.5
        return None

    while True:
        if np.linalg.norm(g) <= config.grad_tol:
            termination = Termination.GRAD_TOL
            break
        if tr.stalled(config.f_tol):
            termination = Termination.F_TOL
            break
        if len(tr.trace) >= config.max_iters:
            break
        d = _two_loop(g, memory)
        slope = float(g @ d)
        used_memory = bool(memory)
        if slope >= 0.0:
            d = -g
            slope = -float(g @ g)
            used_memory = False
        accepted = backtrack(d, slope)
        if accepted is None and used_memory:
            memory.clear()
            accepted = backtrack(-g, -float(g @ g))
        if accepted is None:
            termination = Termination.LINE_SEARCH_FAILURE
            break
        x_new, f_new, g_new = accepted
        _check_finite(f_new, g_new, len(tr.trace), tr)
        tr.record(x_new, f_new)
        s = x_new - x
        yv = g_new - g
        sy = float(s @ yv)
        if sy > 1e-12 * float(np.linalg.norm(s)) * float(np.linalg.norm(yv)):
            memory.append((s, yv, 1.0 / sy))
            if len(memory) > config.lbfgs_memory:
                memory.pop(0)
        x, f, g = x_new, f_new, g_new
    return tr.result(termination, calls[0])


_DISPATCH = {
    Algorithm.SUBGRADIENT: subgradient_method,
    Algorithm.DUAL_AVERAGING: dual_averaging,
    Algorithm.GRADIENT_DESCENT: gradient_descent,
    Algorithm.ACCELERATED_GRADIENT: accelerated_gradient,
    Algorithm.LBFGS: lbfgs,
}


def run_solver(oracle: Oracle, config: SolverConfig) -> SolverResult:
    """Dispatch to the solver named by ``config.algorithm``."""
    return _DISPATCH[Algorithm(config.algorithm)](oracle, config)
