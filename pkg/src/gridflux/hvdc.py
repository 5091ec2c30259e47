"""Two-terminal LCC-HVDC average-value model.

The functions here are the reference algebra of the converters, DC line and
controls. :func:`emit_hvdc` instantiates the ``CHVDC2`` SUBCKT of the shipped
library, which realizes the same relations as behavioral sources around a
single R-L DC mesh.

Two voltage scalings are supported. ``"appendix-c"`` (default) multiplies the
whole bridge voltage by the bridge count and normalizes by the DC base
``N*3*sqrt(2)/pi``::

    v_dcr = (V/K) cos(alpha) - (pi/(3*sqrt(2))) * r_rec * i_dc

``"eq13"`` keeps the unnormalized EMF and applies ``N`` to the drop only::

    v_dcr = (3*sqrt(2)/pi) (V/K) cos(alpha) - N * r_rec * i_dc

The inverter uses ``cos(beta)`` and a ``+`` drop in both cases.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

from .acgrid import OMEGA_S, BusPair, compose, instance_line
from .netlist.elaborate import elaborate
from .netlist.parser import DeviceCard

log = logging.getLogger(__name__)

K_BRIDGE = 3 * math.sqrt(2) / math.pi
SCALINGS = ("appendix-c", "eq13")


class HvdcError(ValueError):
    pass


@dataclass(frozen=True)
class HvdcParams:
    """Converter and DC line data.

    ``dc_line_l=None`` back-solves the line inductance from ``x_dc``; a
    negative result is clamped to zero with a warning.
    """
    x_cr: float = 0.2
    x_ci: float = 0.2
    n_rec: int = 6
    n_inv: int = 6
    k_r: float = 1.0
    k_i: float = 1.0
    r_cr: float = 0.0
    r_ci: float = 0.0
    dc_line_r: float = 0.1
    dc_line_l: float | None = None
    l_smooth_r: float = 0.0
    l_smooth_i: float = 0.0
    omega: float = OMEGA_S
    x_dc: float = 0.111
    p_dc_rec: float = 0.8
    p_dc_inv: float = 0.7
    scaling: str = "appendix-c"
    # carried for netlist compatibility, not used by the model
    unused: dict = field(default_factory=lambda: {
        "I_rate": 1.0, "V_rate": 1.0, "Tur": 1.0, "Tdr": 1.0, "rmin": 0.0,
        "rmax": 1.0, "Alpha_max_ram": 0.21})

    def __post_init__(self):
        if self.scaling not in SCALINGS:
            raise ValueError(f"scaling must be one of {SCALINGS}")
        if self.n_rec < 1 or self.n_inv < 1:
            raise ValueError("bridge counts must be >= 1")
        if self.k_r <= 0 or self.k_i <= 0:
            raise ValueError("tap ratios must be positive")
        if self.omega <= 0:
            raise ValueError("omega must be positive")
        if self.dc_line_r < 0:
            raise ValueError("dc_line_r must be >= 0")


@dataclass(frozen=True)
class HvdcControlParams:
    i_dc_ref: float = 1.0
    v_ac_ref: float = 1.0
    t_meas: float = 0.005
    alpha_min: float = 0.21
    alpha_max: float = 0.35
    vdcol: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)  # v1, v2, imax1, imax2
    extinction_control: bool = False
    beta_ref: float = 0.349
    ki_cc: float = 20.0
    kp_cc: float = 1.0
    ki_ec: float = 10.0
    kp_ec: float = 0.5
    t_alpha: float = 1.0
    k_aw: float = 10.0
    alpha_nom: float | None = None  # rectifier angle held by constant-beta mode

    def __post_init__(self):
        if not self.alpha_min < self.alpha_max:
            raise ValueError("alpha_min must be below alpha_max")
        if self.vdcol[0] > self.vdcol[1]:
            raise ValueError("vdcol requires v1 <= v2")
        if min(self.ki_cc, self.kp_cc, self.ki_ec, self.kp_ec, self.k_aw) < 0:
            raise ValueError("gains must be >= 0")
        if self.t_meas <= 0 or self.t_alpha <= 0:
            raise ValueError("time constants must be positive")

    @property
    def alpha_hold(self) -> float:
        if self.alpha_nom is not None:
            return self.alpha_nom
        return 0.5 * (self.alpha_min + self.alpha_max)


@dataclass(frozen=True)
class ConverterState:
    """Operating point of one converter.

    ``angle`` is alpha for a rectifier and beta for an inverter. ``e_eq`` is
    the tap-adjusted commutating voltage ``V/K``.
    """
    v_ac: float
    e_eq: float
    angle: float
    gamma: float
    mu: float
    v_dc: float
    i_dc: float
    v_angle: float = 0.0


@dataclass
class ClampDiagnostics:
    """Counts acos-argument clamp events."""
    events: int = 0


def _clamp_unit(a: float, diag: ClampDiagnostics | None) -> float:
    if a > 1.0 or a < -1.0:
        if diag is not None:
            diag.events += 1
        return max(-1.0, min(1.0, a))
    return a


def thevenin_params(p: HvdcParams) -> tuple[float, float, float, float]:
    """``(L_r, L_i, R_r, R_i)`` of the two Thevenin halves of the link."""
    comm_r = 1.75 * p.n_rec * p.x_cr / p.omega
    comm_i = 1.75 * p.n_inv * p.x_ci / p.omega
    line_l = p.dc_line_l
    if line_l is None:
        line_l = p.x_dc / p.omega - (comm_r + comm_i + p.l_smooth_r + p.l_smooth_i)
        if line_l < 0:
            log.warning("x_dc=%g is below the commutation inductance; DC line "
                        "inductance clamped to 0", p.x_dc)
            line_l = 0.0
    l_r = line_l / 2 + p.l_smooth_r + comm_r
    l_i = line_l / 2 + p.l_smooth_i + comm_i
    return l_r, l_i, p.dc_line_r / 2, p.dc_line_r / 2


def _open_gain(n: int, scaling: str) -> float:
    # no-load DC voltage per unit of V/K
    return 1.0 if scaling == "appendix-c" else K_BRIDGE


def _drop_gain(n: int, scaling: str) -> float:
    # multiplier on r_conv * i_dc
    return 1.0 / K_BRIDGE if scaling == "appendix-c" else float(n)


def no_load_voltage(v_ac: float, k: float, n: int, p: HvdcParams) -> float:
    """Ideal no-load DC voltage (alpha = 0, i_dc = 0) in the chosen scaling."""
    return _open_gain(n, p.scaling) * v_ac / k


def rectifier_algebra(v_acr: float, k_r: float, alpha: float, i_dc: float,
                      p: HvdcParams, diag: ClampDiagnostics | None = None):
    """``(e_rec, r_rec, mu, v_dcr)`` of the rectifier."""
    e_acr = K_BRIDGE * v_acr / k_r
    e_rec = e_acr * math.cos(alpha)
    r_rec = 3 * p.x_cr / math.pi + 2 * p.r_cr
    arg = math.cos(alpha) - math.sqrt(2) * i_dc * p.x_cr / e_acr
    mu = math.acos(_clamp_unit(arg, diag)) - alpha
    v_dcr = (_open_gain(p.n_rec, p.scaling) * v_acr / k_r * math.cos(alpha)
             - _drop_gain(p.n_rec, p.scaling) * r_rec * i_dc)
    return e_rec, r_rec, mu, v_dcr


def inverter_algebra(v_aci: float, k_i: float, beta: float, i_dc: float,
                     p: HvdcParams, diag: ClampDiagnostics | None = None):
    """``(e_inv, r_inv, gamma, mu, v_dci)`` of the inverter; ``mu = beta - gamma``."""
    e_aci = K_BRIDGE * v_aci / k_i
    e_inv = e_aci * math.cos(beta)
    r_inv = 3 * p.x_ci / math.pi + 2 * p.r_ci
    cos_g = math.cos(beta) + math.sqrt(2) * i_dc * p.x_ci / e_aci
    gamma = math.acos(_clamp_unit(cos_g, diag))
    v_dci = (_open_gain(p.n_inv, p.scaling) * v_aci / k_i * math.cos(beta)
             + _drop_gain(p.n_inv, p.scaling) * r_inv * i_dc)
    return e_inv, r_inv, gamma, beta - gamma, v_dci


def dc_line_dynamics(v_dcr: float, v_dci: float, i_dc: float, p: HvdcParams) -> float:
    """``di_dc/dt`` of the single DC mesh."""
    l_r, l_i, r_r, r_i = thevenin_params(p)
    if l_r + l_i == 0:
        raise HvdcError("algebraic DC link unsupported")
    return (v_dcr - v_dci - (r_r + r_i) * i_dc) / (l_r + l_i)


def vdcol(v_ac_meas: float, cp: HvdcControlParams) -> float:
    """Voltage-dependent current limit: imax1 below v1, imax2 above v2."""
    v1, v2, i1, i2 = cp.vdcol
    frac = (v_ac_meas - v1) / max(v2 - v1, 1e-6)
    return i1 + (i2 - i1) * min(max(frac, 0.0), 1.0)


def rectifier_current_control(i_dc_meas: float, v_ac_meas: float,
                              cp: HvdcControlParams, integrator: float = 0.0) -> float:
    """Firing angle commanded by the current regulator (before the ``t_alpha`` lag).

    The regulator acts on ``cos(alpha)``: ``integrator + kp*(i_ord - i_meas)``,
    clamped to ``[cos(alpha_max), cos(alpha_min)]``.
    """
    i_ord = min(cp.i_dc_ref, vdcol(v_ac_meas, cp))
    cmd = integrator + cp.kp_cc * (i_ord - i_dc_meas)
    cos_a = min(max(cmd, math.cos(cp.alpha_max)), math.cos(cp.alpha_min))
    return math.acos(cos_a)


def inverter_angle_control(i_dc_meas: float, gamma_meas: float, cp: HvdcControlParams,
                           mu: float = 0.0, integrator: float = 0.0,
                           beta_hold: float | None = None) -> float:
    """Inverter advance angle.

    With extinction control off the held angle is returned unchanged. With
    it on, the PI regulator tracks ``gamma_ref = beta_ref - mu``, so beta
    settles at ``beta_ref``. ``i_dc_meas`` enters only through ``mu``.
    """
    if not cp.extinction_control:
        if beta_hold is None:
            raise HvdcError("constant-beta mode needs the held angle")
        return beta_hold
    err = cp.beta_ref - mu - gamma_meas
    return min(max(cp.beta_ref + integrator + cp.kp_ec * err, 1e-3), math.pi / 2)


def ac_injections(state: ConverterState, side: str, p: HvdcParams | None = None):
    """``(p_ac, q_ac, i_r, i_i)`` at the AC bus, load convention.

    The rectifier draws ``p_ac = v_dc*i_dc``; the inverter delivers it, so its
    ``p_ac`` is negative. Both draw ``q_ac = |p_ac| tan(phi)`` with
    ``cos(phi) = v_dc / v_dc0``.
    """
    if side not in ("rectifier", "inverter"):
        raise ValueError("side must be 'rectifier' or 'inverter'")
    p = p or HvdcParams()
    n = p.n_rec if side == "rectifier" else p.n_inv
    v0 = _open_gain(n, p.scaling) * state.e_eq
    p_dc = state.v_dc * state.i_dc
    q_ac = abs(state.i_dc) * math.sqrt(max(v0 * v0 - state.v_dc * state.v_dc, 1e-12))
    p_ac = p_dc if side == "rectifier" else -p_dc
    vr = state.v_ac * math.cos(state.v_angle)
    vi = state.v_ac * math.sin(state.v_angle)
    den = max(vr * vr + vi * vi, 1e-12)
    clip = lambda v: min(max(v, -1000.0), 1000.0)  # noqa: E731
    i_r = clip((p_ac * vr + q_ac * vi) / den)
    i_i = clip((p_ac * vi - q_ac * vr) / den)
    return p_ac, q_ac, i_r, i_i


@dataclass(frozen=True)
class LinkOperatingPoint:
    i_dc: float
    alpha: float
    beta: float
    v_dcr: float
    v_dci: float


def link_steady_state(v_rec: float, v_inv: float, p: HvdcParams,
                      cp: HvdcControlParams) -> LinkOperatingPoint:
    """Closed-form steady state of the link between two stiff AC buses.

    Constant-beta mode: alpha sits at ``alpha_hold`` and the current at its
    order, which fixes beta. Extinction control: beta = beta_ref and the
    current regulator sets alpha, or alpha sticks at a limit.
    """
    r_tot = p.dc_line_r
    dr = _drop_gain(p.n_rec, p.scaling) * (3 * p.x_cr / math.pi + 2 * p.r_cr)
    di = _drop_gain(p.n_inv, p.scaling) * (3 * p.x_ci / math.pi + 2 * p.r_ci)
    gr = _open_gain(p.n_rec, p.scaling) * v_rec / p.k_r
    gi = _open_gain(p.n_inv, p.scaling) * v_inv / p.k_i
    i_ord = min(cp.i_dc_ref, vdcol(v_rec, cp))
    if not cp.extinction_control:
        a = cp.alpha_hold
        cos_b = (gr * math.cos(a) - (dr + r_tot + di) * i_ord) / gi
        if not -1 <= cos_b <= 1:
            raise HvdcError("no constant-beta operating point")
        b = math.acos(cos_b)
        i = i_ord
    else:
        b = cp.beta_ref
        cos_a = (gi * math.cos(b) + (dr + r_tot + di) * i_ord) / gr
        cos_a = min(max(cos_a, math.cos(cp.alpha_max)), math.cos(cp.alpha_min))
        a = math.acos(cos_a)
        i = max((gr * cos_a - gi * math.cos(b)) / (dr + r_tot + di), 0.0)
    return LinkOperatingPoint(i, a, b, gr * math.cos(a) - dr * i, gi * math.cos(b) + di * i)


def subckt_params(p: HvdcParams, cp: HvdcControlParams) -> dict[str, float]:
    """Parameter overrides of ``CHVDC2`` realizing ``p`` and ``cp``."""
    if (p.x_cr, p.n_rec, p.k_r, p.r_cr, p.l_smooth_r) != (p.x_ci, p.n_inv, p.k_i,
                                                          p.r_ci, p.l_smooth_i):
        raise HvdcError("CHVDC2 needs identical converter data on both sides")
    gdc = p.x_dc
    if p.dc_line_l is not None:
        # the SUBCKT back-solves the line inductance from Gdc
        gdc = p.omega * (p.dc_line_l + 2 * p.l_smooth_r) + 3.5 * p.n_rec * p.x_cr
    v1, v2, i1, i2 = cp.vdcol
    return {
        "Tr": cp.t_meas, "V1": v1, "V2": v2, "Imax1": i1, "Imax2": i2,
        "Alpha_min_r": cp.alpha_min, "Alpha_max_r": cp.alpha_max, "Talpr": cp.t_alpha,
        "Tap": p.k_r, "Xc": p.x_cr, "Gdc": gdc, "Nbr": float(p.n_rec),
        "Idc_ref": cp.i_dc_ref, "Vac_ref": cp.v_ac_ref, "Rdc": p.dc_line_r,
        "Rc": p.r_cr, "Lsm": p.l_smooth_r, "Omega": p.omega,
        "Scale": 1.0 if p.scaling == "appendix-c" else 0.0,
        "EAC": 1.0 if cp.extinction_control else 0.0, "Beta_ref": cp.beta_ref,
        "Alpha_nom": cp.alpha_hold, "Kp_cc": cp.kp_cc, "Ki_cc": cp.ki_cc,
        "Kp_ec": cp.kp_ec, "Ki_ec": cp.ki_ec, "Kaw": cp.k_aw,
        "Pdc_rec": p.p_dc_rec, "Pdc_inv": p.p_dc_inv,
    }


def hvdc_line(p: HvdcParams, cp: HvdcControlParams, rec_bus: BusPair, inv_bus: BusPair,
              module: str = "HvdcIdc", name: str = "XHvdc") -> str:
    """``X`` card connecting a ``CHVDC2`` instance between two buses."""
    if rec_bus.name.lower() == inv_bus.name.lower():
        raise HvdcError("rectifier and inverter must sit on different buses")
    nodes = (module, rec_bus.node_r, inv_bus.node_r, rec_bus.node_i, inv_bus.node_i)
    return instance_line(name, nodes, "CHVDC2", subckt_params(p, cp))


def emit_hvdc(p: HvdcParams, cp: HvdcControlParams, rec_bus: BusPair, inv_bus: BusPair,
              module: str = "HvdcIdc", name: str = "XHvdc") -> tuple[DeviceCard, ...]:
    """Elaborated primitive cards of one HVDC link."""
    return elaborate(compose([hvdc_line(p, cp, rec_bus, inv_bus, module, name)])).instances
