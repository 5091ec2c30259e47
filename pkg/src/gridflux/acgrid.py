"""Power-grid devices in the rectangular I=YV format.

Each device is a SUBCKT of the shipped library ``lib/powergrid.cir``. The
``emit_*`` functions instantiate one and return the elaborated primitive
cards, with internal nodes and devices prefixed by the instance name.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from importlib.resources import files

from .netlist.elaborate import elaborate
from .netlist.parser import DeviceCard, NetlistDocument, parse_netlist

OMEGA_S = 2 * math.pi * 60.0


@lru_cache(maxsize=1)
def library_text() -> str:
    """Source of the shipped SUBCKT library."""
    return files("gridflux").joinpath("lib/powergrid.cir").read_text(encoding="utf-8")


@lru_cache(maxsize=1)
def library() -> NetlistDocument:
    return parse_netlist("* gridflux library\n" + library_text())


@dataclass(frozen=True)
class BusPair:
    """Real and imaginary rail nodes of one bus, ``<name>R`` / ``<name>I``."""
    name: str

    @property
    def node_r(self) -> str:
        return self.name + "R"

    @property
    def node_i(self) -> str:
        return self.name + "I"


@dataclass(frozen=True)
class SlackSpec:
    bus: BusPair
    v_mag: float = 1.0
    v_angle: float = 0.0  # radians

    def __post_init__(self):
        if not self.v_mag > 0:
            raise ValueError("v_mag must be positive")


@dataclass(frozen=True)
class CplSpec:
    bus: BusPair
    p: float
    q: float = 0.0
    curr_lim: float = 1000.0

    def __post_init__(self):
        if not self.curr_lim > 0:
            raise ValueError("curr_lim must be positive")


@dataclass(frozen=True)
class BranchSpec:
    from_bus: BusPair
    to_bus: BusPair
    x: float

    def __post_init__(self):
        if self.x == 0:
            raise ValueError("branch reactance must be nonzero")


@dataclass(frozen=True)
class MachineSpec:
    """Classical machine. ``v_set`` switches on terminal-voltage regulation,
    which replaces the fixed ``e_mag`` (used to initialize ``e_mag``)."""
    bus: BusPair
    h: float = 3.0
    d: float = 0.5
    xd_p: float = 0.2
    p_mech: float = 0.5
    e_mag: float = 1.0
    v_set: float | None = None
    omega: float = OMEGA_S

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("inertia h must be positive")
        if not self.xd_p > 0:
            raise ValueError("xd_p must be positive")


def _fmt(v: float) -> str:
    return repr(float(v))


def instance_line(name: str, nodes, subckt: str, params: dict[str, float]) -> str:
    """One ``X`` card instantiating a library SUBCKT."""
    ps = " ".join(f"{k}={_fmt(v)}" for k, v in params.items())
    return f"{name} {' '.join(nodes)} {subckt}" + (f" PARAMS: {ps}" if ps else "")


def slack_line(s: SlackSpec, name: str = "XSlack") -> str:
    return instance_line(name, (s.bus.node_r, s.bus.node_i), "SLACK",
                         {"VMAG": s.v_mag, "VANG": s.v_angle})


def cpl_line(c: CplSpec, name: str = "XLoad") -> str:
    return instance_line(name, (c.bus.node_r, c.bus.node_i), "CPL",
                         {"P": c.p, "Q": c.q, "CurrLim": c.curr_lim})


def branch_line(b: BranchSpec, name: str = "XBranch") -> str:
    nodes = (b.from_bus.node_r, b.from_bus.node_i, b.to_bus.node_r, b.to_bus.node_i)
    return instance_line(name, nodes, "ACBRANCH", {"X": b.x})


def machine_line(m: MachineSpec, name: str = "XGen") -> str:
    params = {"H": m.h, "D": m.d, "XDP": m.xd_p, "PM": m.p_mech, "E": m.e_mag,
              "OMEGA": m.omega}
    if m.v_set is not None:
        params.update(REG=1.0, VSET=m.v_set)
    return instance_line(name, (m.bus.node_r, m.bus.node_i), "MACHINE", params)


def compose(lines, title: str = "gridflux circuit") -> NetlistDocument:
    """Parse instance lines together with the device library."""
    return parse_netlist(title + "\n" + library_text() + "\n" + "\n".join(lines) + "\n")


def _emit(line: str) -> tuple[DeviceCard, ...]:
    return elaborate(compose([line])).instances


def emit_slack(s: SlackSpec, name: str = "XSlack") -> tuple[DeviceCard, ...]:
    """Two ideal sources pinning the rails, each behind an ammeter whose
    current is positive when power flows into the bus."""
    return _emit(slack_line(s, name))


def emit_cpl(c: CplSpec, name: str = "XLoad") -> tuple[DeviceCard, ...]:
    """Two limited current sources drawing ``(S/V)*`` plus their ammeters."""
    return _emit(cpl_line(c, name))


def emit_branch(b: BranchSpec, name: str = "XBranch") -> tuple[DeviceCard, ...]:
    """Cross-coupled rail currents of a series reactance."""
    return _emit(branch_line(b, name))


def emit_machine(m: MachineSpec, name: str = "XGen") -> tuple[DeviceCard, ...]:
    """Classical machine with swing dynamics on capacitor integrators."""
    return _emit(machine_line(m, name))


# Reference formulas, independent of the netlist realization.

def cpl_current(p: float, q: float, vr: float, vi: float,
                curr_lim: float = 1000.0) -> tuple[float, float]:
    """Load current ``(S/V)*`` with the denominator floor and limiter."""
    den = max(vr * vr + vi * vi, 1e-12)
    ir = (p * vr + q * vi) / den
    ii = (p * vi - q * vr) / den
    clip = lambda v: min(max(v, -curr_lim), curr_lim)  # noqa: E731
    return clip(ir), clip(ii)


def branch_current(x: float, vf: complex, vt: complex) -> complex:
    """Current from the from-bus to the to-bus of a series reactance."""
    return (vf - vt) / (1j * x)
