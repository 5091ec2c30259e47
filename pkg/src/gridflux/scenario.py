"""Built-in four-bus, two-area system with an HVDC link.

Topology (a reconstruction; the machine and load placement is a choice):

* bus 2: infinite bus, 1.0 at angle 0
* bus 4: classical machine whose EMF is initialized so that |V4| = 1.0971
  on the AC network without the link
* bus 3: constant power load P=0.9, Q=0.49
* branches 1-2, 1-3, 1-4, 2-3 (pure reactances)
* HVDC rectifier at bus 1, inverter at bus 2
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .acgrid import (BranchSpec, BusPair, CplSpec, MachineSpec, SlackSpec, branch_line,
                     compose, cpl_line, machine_line, slack_line)
from .hvdc import HvdcControlParams, HvdcParams, hvdc_line
from .mna import build_system
from .netlist.elaborate import elaborate
from .netlist.parser import NetlistDocument
from .solver import SolverOptions, dc_operating_point

BUSES = {k: BusPair(f"Bus{k}") for k in (1, 2, 3, 4)}


@dataclass(frozen=True)
class GeneratorData:
    """Machine data. Only ``h``, ``d`` and ``xd_p`` drive the classical model."""
    h: float = 3.0
    d: float = 0.5
    xd_p: float = 0.2
    p_mech: float = 0.5
    e_mag: float | None = None  # None: initialize from the |V4| target
    t_d0_p: float = 7.0
    t_d0_pp: float = 0.03
    t_q0_p: float = 0.75
    t_q0_pp: float = 0.05
    x_d: float = 2.1
    x_q: float = 0.5
    x_q_p: float = 0.25
    x_d_pp: float = 0.18
    x_q_pp: float = 0.18
    x_l: float = 0.15
    r_a: float = 0.0


@dataclass(frozen=True)
class ScenarioConfig:
    x_12: float = 0.2
    x_13: float = 0.1
    x_14: float = 0.1
    x_23: float = 0.1
    v_2: float = 1.0
    v_4: float = 1.0971
    hvdc: HvdcParams = field(default_factory=HvdcParams)
    control: HvdcControlParams = field(default_factory=HvdcControlParams)
    machine: GeneratorData = field(default_factory=GeneratorData)
    load_p: float = 0.9
    load_q: float = 0.49

    def with_extinction_control(self, on: bool) -> "ScenarioConfig":
        return replace(self, control=replace(self.control, extinction_control=on))


def _network_lines(sc: ScenarioConfig, machine: MachineSpec) -> list[str]:
    b = BUSES
    return [
        slack_line(SlackSpec(b[2], sc.v_2, 0.0), "XSlack2"),
        branch_line(BranchSpec(b[1], b[2], sc.x_12), "XBr12"),
        branch_line(BranchSpec(b[1], b[3], sc.x_13), "XBr13"),
        branch_line(BranchSpec(b[1], b[4], sc.x_14), "XBr14"),
        branch_line(BranchSpec(b[2], b[3], sc.x_23), "XBr23"),
        cpl_line(CplSpec(b[3], sc.load_p, sc.load_q), "XLoad3"),
        machine_line(machine, "XGen4"),
    ]


def _machine(sc: ScenarioConfig, **kw) -> MachineSpec:
    g = sc.machine
    return MachineSpec(BUSES[4], h=g.h, d=g.d, xd_p=g.xd_p, p_mech=g.p_mech, **kw)


def machine_emf(sc: ScenarioConfig) -> float:
    """EMF magnitude that holds |V4| at ``sc.v_4`` on the AC network alone."""
    if sc.machine.e_mag is not None:
        return sc.machine.e_mag
    doc = compose(_network_lines(sc, _machine(sc, v_set=sc.v_4)), "machine initialization")
    sys = build_system(elaborate(doc))
    x = dc_operating_point(sys, SolverOptions())
    return float(x[sys.layout.index("V(XGen4.emag)")])


def build_case4bus(sc: ScenarioConfig | None = None) -> NetlistDocument:
    sc = sc or ScenarioConfig()
    lines = _network_lines(sc, _machine(sc, e_mag=machine_emf(sc)))
    lines.append(hvdc_line(sc.hvdc, sc.control, BUSES[1], BUSES[2], "HvdcIdc", "XHvdc"))
    mode = "on" if sc.control.extinction_control else "off"
    lines.append(".TRAN 10m 200")
    return compose(lines, f"four-bus HVDC system, extinction-angle control {mode}")
