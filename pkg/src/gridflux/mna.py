"""Modified nodal analysis: stamp a flat circuit into ``f(x) + d q(x)/dt = 0``.

Unknowns are the non-ground node voltages followed by one auxiliary current
per voltage source (``V`` cards and ``B ... V={}`` cards, in document order)
and one per inductor. Linear devices are stamped once into constant
matrices; behavioral sources are compiled to Python closures together with
their symbolic partial derivatives.

Sign conventions follow SPICE: the auxiliary current of a voltage source
flows into its ``+`` node, through the source, out of its ``-`` node, and a
B-source ``I={}`` current flows from its first node through the source to
its second node.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .netlist.elaborate import FlatCircuit
from .netlist.expr import ZERO, ExprError, compile_exprs, diff, references


class EmptyCircuitError(ValueError):
    pass


class DeviceEvaluationError(ExprError):
    """An expression failed while evaluating a named device."""


@dataclass(frozen=True)
class SystemLayout:
    n_nodes: int
    n_aux: int
    var_names: tuple[str, ...]
    node_names: tuple[str, ...]
    aux_devices: tuple[str, ...]

    @property
    def total(self) -> int:
        return self.n_nodes + self.n_aux

    def index(self, name: str) -> int:
        """Position of ``V(node)`` / ``I(device)`` in the solution vector."""
        key = name.replace(" ", "").lower()
        for i, v in enumerate(self.var_names):
            if v.lower() == key:
                return i
        raise KeyError(name)


def build_layout(c: FlatCircuit) -> SystemLayout:
    if len(c.node_names) == 0:
        raise EmptyCircuitError("empty circuit")
    vsrc = [d.name for d in c.instances
            if d.kind == "V" or (d.kind == "B" and "v" in d.params)]
    inds = [d.name for d in c.instances if d.kind == "L"]
    aux = tuple(vsrc + inds)
    names = tuple(f"V({n})" for n in c.node_names) + tuple(f"I({d})" for d in aux)
    return SystemLayout(len(c.node_names), len(aux), names, tuple(c.node_names), aux)


@dataclass
class DaeSystem:
    """Residual ``f_static(x, t) + C @ dx/dt`` of a stamped circuit.

    ``G0`` and ``b`` hold the linear resistive part (``G0 @ x - s*b`` with
    source scale ``s``), ``C`` the constant reactive Jacobian. Behavioral
    sources contribute ``R @ g(x)`` with Jacobian ``(M @ dg(x)).reshape``.
    """
    layout: SystemLayout
    G0: np.ndarray
    b: np.ndarray
    C: np.ndarray
    b_names: tuple[str, ...] = ()
    _g: object = None
    _dg: object = None
    _R: object = None
    _M: object = None
    source_scale: float = 1.0
    nonlinear: bool = False
    _single: tuple = ()
    initial_conditions: tuple = ()  # (index a | None, index b | None, volts) per capacitor IC

    # --- pieces -----------------------------------------------------------
    def behavioral(self, x: np.ndarray) -> tuple:
        try:
            return self._g(x.tolist())
        except ExprError as exc:
            raise DeviceEvaluationError(self._blame(x, exc)) from None

    def _blame(self, x, exc) -> str:
        # re-evaluate one device at a time to name the culprit
        xs = x.tolist()
        for name, fn in zip(self.b_names, self._single):
            try:
                fn(xs)
            except ExprError as inner:
                return f"{name}: {inner}"
        return str(exc)

    def f_static(self, x: np.ndarray, t: float = 0.0) -> np.ndarray:
        f = self.G0 @ x - self.source_scale * self.b
        if self.nonlinear:
            f = f + self._R @ np.asarray(self.behavioral(x))
        return f

    def q(self, x: np.ndarray) -> np.ndarray:
        return self.C @ x

    def g_jacobian(self, x: np.ndarray, t: float = 0.0) -> np.ndarray:
        if not self.nonlinear:
            return self.G0.copy()
        try:
            vals = np.asarray(self._dg(x.tolist()))
        except ExprError as exc:
            raise DeviceEvaluationError(self._blame(x, exc)) from None
        n = self.layout.total
        return self.G0 + (self._M @ vals).reshape(n, n)

    def c_jacobian(self, x: np.ndarray | None = None) -> np.ndarray:
        return self.C


def stamp_all(c: FlatCircuit, layout: SystemLayout) -> DaeSystem:
    n = layout.total
    G = np.zeros((n, n))
    C = np.zeros((n, n))
    b = np.zeros(n)

    node_pos = {name.lower(): i for i, name in enumerate(layout.node_names)}
    aux_pos = {d.lower(): layout.n_nodes + i for i, d in enumerate(layout.aux_devices)}

    def idx(node: str) -> int | None:
        if node == "0":
            return None
        try:
            return node_pos[node.lower()]
        except KeyError:
            raise AssertionError(f"stamp references unknown node {node}") from None

    var_index = {("v", k): v for k, v in node_pos.items()}
    var_index.update({("i", k): v for k, v in aux_pos.items()})

    def pattern(M, a, bb, val):
        for r, sr in ((a, 1.0), (bb, -1.0)):
            if r is None:
                continue
            for col, sc in ((a, 1.0), (bb, -1.0)):
                if col is not None:
                    M[r, col] += sr * sc * val

    def couple(a, bb, k):
        # KCL: aux current leaves node a, enters node b; aux row: V(a) - V(b)
        if a is not None:
            G[a, k] += 1.0
            G[k, a] += 1.0
        if bb is not None:
            G[bb, k] -= 1.0
            G[k, bb] -= 1.0

    b_exprs, b_rows, b_names, ics = [], [], [], []
    for d in c.instances:
        a, bb = (idx(nm) for nm in d.nodes)
        if d.kind == "R":
            if d.value == 0:
                raise ValueError(f"{d.name}: zero resistance")
            pattern(G, a, bb, 1.0 / d.value)
        elif d.kind == "C":
            pattern(C, a, bb, d.value)
            if "ic" in d.params:
                ics.append((a, bb, d.params["ic"].value))
        elif d.kind == "V":
            k = aux_pos[d.name.lower()]
            couple(a, bb, k)
            b[k] += d.value
        elif d.kind == "L":
            k = aux_pos[d.name.lower()]
            couple(a, bb, k)
            C[k, k] -= d.value
        elif d.kind == "B":
            (kind, e), = d.params.items()
            if kind == "i":
                rows = [(r, s) for r, s in ((a, 1.0), (bb, -1.0)) if r is not None]
            else:
                k = aux_pos[d.name.lower()]
                couple(a, bb, k)
                rows = [(k, -1.0)]
            b_exprs.append(e)
            b_rows.append(rows)
            b_names.append(d.name)
        else:
            raise AssertionError(f"unexpected device kind {d.kind}")

    sys = DaeSystem(layout, G, b, C, tuple(b_names), initial_conditions=tuple(ics))
    if not b_exprs:
        sys._single = ()
        return sys

    # behavioral part: values, row scatter R, and partials scatter M
    sys._g = compile_exprs(b_exprs, var_index)
    sys._single = tuple(compile_exprs([e], var_index) for e in b_exprs)
    R = sp.lil_matrix((n, len(b_exprs)))
    partials, m_rows, m_cols, m_vals = [], [], [], []
    for j, (e, rows) in enumerate(zip(b_exprs, b_rows)):
        for r, s in rows:
            R[r, j] = s
        for key in sorted(references(e)):
            de = diff(e, key)
            if de == ZERO:
                continue
            col = var_index.get(key)
            if col is None:
                kind, name = key
                raise ExprError(f"{b_names[j]}: unbound reference {kind.upper()}({name})")
            p = len(partials)
            partials.append(de)
            for r, s in rows:
                m_rows.append(r * n + col)
                m_cols.append(p)
                m_vals.append(s)
    if not partials:
        partials.append(ZERO)
    sys._R = R.tocsr()
    sys._dg = compile_exprs(partials, var_index)
    sys._M = sp.csr_matrix((m_vals, (m_rows, m_cols)), shape=(n * n, len(partials)))
    sys.nonlinear = True
    return sys


def residual(sys: DaeSystem, x, xdot, t: float = 0.0) -> np.ndarray:
    """``f_static(x, t) + dq/dx @ xdot``."""
    x = np.asarray(x, dtype=float)
    return sys.f_static(x, t) + sys.C @ np.asarray(xdot, dtype=float)


def jacobian(sys: DaeSystem, x, t: float = 0.0, alpha: float = 0.0) -> np.ndarray:
    """Iteration matrix ``df_static/dx + alpha * dq/dx``."""
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    return sys.g_jacobian(np.asarray(x, dtype=float), t) + alpha * sys.C


def build_system(c: FlatCircuit) -> DaeSystem:
    return stamp_all(c, build_layout(c))
