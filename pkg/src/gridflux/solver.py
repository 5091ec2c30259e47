"""Newton iteration, DC operating point and fixed-step backward Euler."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .mna import DaeSystem

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


class SingularJacobianError(SolverError):
    pass


class NonConvergenceError(SolverError):
    def __init__(self, message: str, last_dx: float):
        super().__init__(message)
        self.last_dx = last_dx


@dataclass(frozen=True)
class SolverOptions:
    rel_tol: float = 1e-1
    abs_tol: float = 1e-3
    newton_tol: float = 1e-3
    max_newton_iters: int = 50
    step_h: float = 1e-2
    t_stop: float = 0.0

    def __post_init__(self):
        if min(self.rel_tol, self.abs_tol, self.newton_tol) <= 0:
            raise ValueError("tolerances must be positive")
        if self.step_h <= 0:
            raise ValueError("step_h must be positive")
        if self.max_newton_iters < 1:
            raise ValueError("max_newton_iters must be >= 1")
        if self.t_stop < 0:
            raise ValueError("t_stop must be >= 0")


@dataclass(frozen=True)
class SystemState:
    t: float
    x: np.ndarray
    x_prev: np.ndarray
    newton_iters_last: int = 0


@dataclass
class WaveformSet:
    times: list[float] = field(default_factory=list)
    columns: dict[str, list[float]] = field(default_factory=dict)

    def append(self, t: float, values: dict[str, float]):
        if self.times and t <= self.times[-1]:
            raise ValueError("waveform times must be strictly increasing")
        self.times.append(t)
        for k, v in values.items():
            self.columns.setdefault(k, []).append(v)

    def column(self, name: str) -> np.ndarray:
        for k, v in self.columns.items():
            if k.lower() == name.lower():
                return np.asarray(v)
        raise KeyError(name)


@dataclass
class NewtonResult:
    x: np.ndarray
    iterations: int
    last_dx: float


def newton_solve(sys: DaeSystem, x0, t: float, alpha: float, history_term,
                 opts: SolverOptions) -> NewtonResult:
    """Solve ``f_static(x, t) + alpha*q(x) + history_term = 0``.

    ``alpha = 1/h`` and ``history_term = -q(x_old)/h`` give a backward-Euler
    step; ``alpha = 0`` with a zero history gives a DC solve. Converged when
    the last update ``|dx|_inf`` is below ``newton_tol`` and the residual at
    the updated point is below ``abs_tol + rel_tol*|x|_inf``.

    The reported iteration count excludes the final confirming solve, so an
    affine system takes exactly one iteration from any start.
    """
    x = np.array(x0, dtype=float)
    if not np.all(np.isfinite(x)):
        raise SolverError("initial guess is not finite")
    hist = np.zeros_like(x) if history_term is None else np.asarray(history_term, float)
    C = sys.C
    last_dx = math.inf
    for k in range(opts.max_newton_iters + 1):
        f = sys.f_static(x, t) + hist
        if alpha:
            f = f + alpha * (C @ x)
        if k > 0:
            res = np.max(np.abs(f)) if f.size else 0.0
            if last_dx < opts.newton_tol and res < opts.abs_tol + opts.rel_tol * np.max(np.abs(x)):
                return NewtonResult(x, max(k - 1, 1), last_dx)
            if k == opts.max_newton_iters:
                break
        J = sys.g_jacobian(x, t)
        if alpha:
            J = J + alpha * C
        try:
            dx = np.linalg.solve(J, -f)
        except np.linalg.LinAlgError:
            raise SingularJacobianError(f"singular Jacobian at t={t:g}") from None
        if not np.all(np.isfinite(dx)):
            raise SingularJacobianError(f"singular Jacobian at t={t:g}")
        last_dx = float(np.max(np.abs(dx))) if dx.size else 0.0
        x = x + dx
    raise NonConvergenceError(
        f"Newton did not converge at t={t:g} after {opts.max_newton_iters} iterations "
        f"(last |dx|={last_dx:.3g})", last_dx)


def flat_start(sys: DaeSystem) -> np.ndarray:
    """Power-grid flat start: top-level ``...R`` nodes at 1, everything else 0."""
    x = np.zeros(sys.layout.total)
    for i, n in enumerate(sys.layout.node_names):
        if "." not in n and n[-1:] in ("R", "r"):
            x[i] = 1.0
    return x


class _PinnedSystem:
    """``sys`` plus one constraint ``V(a) - V(b) = ic`` per capacitor IC.

    The extra unknowns are the currents that hold the capacitors at their
    initial voltages.
    """

    def __init__(self, sys: DaeSystem):
        self.sys = sys
        n, k = sys.layout.total, len(sys.initial_conditions)
        self.n = n
        self.B = np.zeros((n, k))
        self.ic = np.zeros(k)
        for j, (a, b, v) in enumerate(sys.initial_conditions):
            if a is not None:
                self.B[a, j] += 1.0
            if b is not None:
                self.B[b, j] -= 1.0
            self.ic[j] = v
        self.C = np.zeros((n + k, n + k))

    @property
    def source_scale(self):
        return self.sys.source_scale

    @source_scale.setter
    def source_scale(self, s):
        self.sys.source_scale = s

    def f_static(self, z, t=0.0):
        x, lam = z[:self.n], z[self.n:]
        f = self.sys.f_static(x, t) + self.B @ lam
        return np.concatenate([f, self.B.T @ x - self.sys.source_scale * self.ic])

    def g_jacobian(self, z, t=0.0):
        J = self.sys.g_jacobian(z[:self.n], t)
        k = self.B.shape[1]
        return np.block([[J, self.B], [self.B.T, np.zeros((k, k))]])


def dc_operating_point(sys: DaeSystem, opts: SolverOptions, x0=None) -> np.ndarray:
    """Operating point with capacitors open and inductors shorted.

    Capacitors carrying an initial condition are held at that voltage
    instead of left open. Falls back to source stepping (0.1, 0.2, ..., 1.0)
    when the direct solve fails.
    """
    guess = flat_start(sys) if x0 is None else np.asarray(x0, float)
    if sys.initial_conditions:
        pinned = _PinnedSystem(sys)
        z = _dc_solve(pinned, np.concatenate([guess, np.zeros(len(pinned.ic))]), opts)
        return z[:pinned.n]
    return _dc_solve(sys, guess, opts)


def _dc_solve(sys, guess, opts) -> np.ndarray:
    try:
        return newton_solve(sys, guess, 0.0, 0.0, None, opts).x
    except SolverError as first:
        log.info("DC solve failed (%s); retrying with source stepping", first)
    x = guess
    try:
        for s in np.linspace(0.1, 1.0, 10):
            sys.source_scale = float(s)
            x = newton_solve(sys, x, 0.0, 0.0, None, opts).x
    finally:
        sys.source_scale = 1.0
    return x


def bdf1_step(sys: DaeSystem, state: SystemState, h: float, opts: SolverOptions) -> SystemState:
    """One backward-Euler step ``f(x1) + (q(x1) - q(x0))/h = 0`` from ``state``."""
    if not h > 0:
        raise ValueError(f"step size must be positive, got {h!r}")
    alpha = 1.0 / h
    hist = -(sys.C @ state.x) * alpha
    res = newton_solve(sys, state.x, state.t + h, alpha, hist, opts)
    return SystemState(state.t + h, res.x, state.x, res.iterations)


def _record(w: WaveformSet, t: float, x: np.ndarray, idx: list[tuple[str, int]]):
    w.append(t, {name: float(x[i]) for name, i in idx})


def run_transient(sys: DaeSystem, opts: SolverOptions, print_vars, x0=None) -> WaveformSet:
    """DC point (or ``x0``), then fixed-step backward Euler to ``opts.t_stop``.

    Every accepted point, including t=0, is recorded for ``print_vars``.
    """
    idx = []
    for name in print_vars:
        try:
            idx.append((sys.layout.var_names[sys.layout.index(name)], sys.layout.index(name)))
        except KeyError:
            raise KeyError(f"unknown variable {name}") from None
    x = dc_operating_point(sys, opts) if x0 is None else np.asarray(x0, float)
    w = WaveformSet()
    _record(w, 0.0, x, idx)
    state = SystemState(0.0, x, x)
    n_full = int(math.floor(opts.t_stop / opts.step_h + 1e-9))
    for n in range(1, n_full + 1):
        state = _advance(sys, state, n * opts.step_h - state.t, opts)
        # pin t to n*h so times carry no accumulated rounding
        state = replace(state, t=n * opts.step_h)
        _record(w, state.t, state.x, idx)
    remaining = opts.t_stop - state.t
    if remaining > 1e-9 * opts.step_h:
        state = _advance(sys, state, remaining, opts)
        state = replace(state, t=opts.t_stop)
        _record(w, state.t, state.x, idx)
    return w


def _advance(sys, state, h, opts):
    try:
        return bdf1_step(sys, state, h, opts)
    except NonConvergenceError as exc:
        raise NonConvergenceError(f"{exc} (step from t={state.t:g})", exc.last_dx) from None
    except SolverError as exc:
        raise type(exc)(f"{exc} (step from t={state.t:g})") from None
