"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""

import math
import time
from dataclasses import replace

import numpy as np
import pytest

from gridflux.acgrid import (BranchSpec, BusPair, CplSpec, MachineSpec, SlackSpec, branch_line,
                             compose, cpl_line, machine_line, slack_line)
from gridflux.cli import RunConfig, csv_text, load_document, simulate
from gridflux.hvdc import (K_BRIDGE, HvdcControlParams, HvdcParams, hvdc_line,
                           inverter_algebra, rectifier_algebra)
from gridflux.mna import build_system
from gridflux.netlist import elaborate, eval_expr, parse_netlist
from gridflux.solver import (SolverOptions, dc_operating_point, newton_solve, run_transient)

from .conftest import FIXTURES

BUS_A, BUS_B = BusPair("BusA"), BusPair("BusB")


def system_of(lines):
    return build_system(elaborate(compose(lines)))


# --- 1 ----------------------------------------------------------------------

def test_c1_linear_mna_oracle(report):
    sys_ = build_system(elaborate(parse_netlist((FIXTURES / "fig1.cir").read_text())))
    g1 = g2 = 1.0
    vs = 1.0
    # KCL at 1, KCL at 2, source row; unknowns V1, V2, I_Vsrc
    A = np.array([[g1, -g1, 1.0], [-g1, g1 + g2, 0.0], [1.0, 0.0, 0.0]])
    oracle = np.linalg.solve(A, np.array([0.0, 0.0, vs]))
    t0 = time.perf_counter()
    res = newton_solve(sys_, np.zeros(3), 0.0, 0.0, None, SolverOptions())
    elapsed = time.perf_counter() - t0
    err = float(np.max(np.abs(res.x - oracle)))
    ok = err <= 1e-12 and res.iterations == 1 and np.allclose(oracle, [1, 0.5, -0.5])
    report(1, ok, f"x={res.x.round(12).tolist()} err={err:.1e} iterations={res.iterations} "
                  f"({elapsed * 1e3:.2f} ms)")
    assert ok


# --- 2 ----------------------------------------------------------------------

def rc_decay(h: float) -> tuple[np.ndarray, np.ndarray]:
    sys_ = build_system(elaborate(parse_netlist("rc\nC1 1 0 1\nR1 1 0 1\n")))
    opts = SolverOptions(step_h=h, t_stop=1.0, newton_tol=1e-12, abs_tol=1e-12)
    w = run_transient(sys_, opts, ["V(1)"], x0=np.array([1.0]))
    return np.asarray(w.times), w.column("V(1)")


def test_c2_bdf1_order(report):
    t0 = time.perf_counter()
    recurrence_err, global_err = [], []
    for h in (0.1, 0.05, 0.025):
        t, v = rc_decay(h)
        n = np.arange(len(t))
        recurrence_err.append(float(np.max(np.abs(v - (1 + h) ** (-n.astype(float))))))
        global_err.append(float(np.max(np.abs(v - np.exp(-t)))))
    elapsed = time.perf_counter() - t0
    ratios = [global_err[k + 1] / global_err[k] for k in range(2)]
    ok = max(recurrence_err) <= 1e-9 and all(0.4 <= r <= 0.6 for r in ratios)
    report(2, ok, f"recurrence err={max(recurrence_err):.1e} error ratios="
                  f"{[round(r, 4) for r in ratios]} ({elapsed * 1e3:.1f} ms)")
    assert ok


# --- 3 ----------------------------------------------------------------------

def cpl_circuit(v_mag: float, v_ang: float):
    return system_of([slack_line(SlackSpec(BUS_A, v_mag, v_ang), "XSlack"),
                      branch_line(BranchSpec(BUS_A, BUS_B, 0.1), "XBr"),
                      cpl_line(CplSpec(BUS_B, 0.9, 0.49), "XLoad")])


def load_power(sys_, x, bus: BusPair, load="XLoad") -> complex:
    lay = sys_.layout
    v = complex(x[lay.index(f"V({bus.node_r})")], x[lay.index(f"V({bus.node_i})")])
    i = complex(x[lay.index(f"I({load}.VammR)")], x[lay.index(f"I({load}.VammI)")])
    return v * i.conjugate()


def test_c3_cpl_contract(report):
    t0 = time.perf_counter()
    worst = 0.0
    points = 0
    for v_mag in (0.95, 1.0, 1.05, 1.1):
        for v_ang in (-0.3, 0.0, 0.2):
            sys_ = cpl_circuit(v_mag, v_ang)
            x = dc_operating_point(sys_, SolverOptions(newton_tol=1e-10, abs_tol=1e-10))
            worst = max(worst, abs(load_power(sys_, x, BUS_B) - complex(0.9, 0.49)))
            points += 1
    # a forced bus voltage of 1e-6 drives the load into its current limiter
    sys_ = system_of([slack_line(SlackSpec(BUS_B, 1e-6, 0.0), "XSlack"),
                      cpl_line(CplSpec(BUS_B, 0.9, 0.49), "XLoad")])
    x = dc_operating_point(sys_, SolverOptions())
    lay = sys_.layout
    i_r, i_i = x[lay.index("I(XLoad.VammR)")], x[lay.index("I(XLoad.VammI)")]
    clamped = max(abs(i_r), abs(i_i))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-6 and abs(clamped - 1000.0) < 1e-9 and abs(i_r) <= 1000 and abs(i_i) <= 1000
    report(3, ok, f"max |VI*-S|={worst:.1e} over {points} points, clamped I=({i_r:g}, {i_i:g}) "
                  f"({elapsed * 1e3:.1f} ms over {points + 1} solves)")
    assert ok


# --- 4 ----------------------------------------------------------------------

def test_c4_converter_algebra(report):
    p = HvdcParams()
    e0 = rectifier_algebra(1.0, 1.0, 0.0, 0.0, p)[0]
    e_oracle = 3 * math.sqrt(2) / math.pi
    mu = rectifier_algebra(1.0, 1.0, 0.21, 1.0, p)[2]
    # the commutating EMF at unit voltage is e_oracle, so this is the stated formula
    mu_oracle = math.acos(math.cos(0.21) - math.sqrt(2) * 0.2 / 1.35047) - 0.21
    rng = np.random.default_rng(7)
    worst = 0.0
    valid = 0
    while valid < 1000:
        v = rng.uniform(0.8, 1.2)
        k = rng.uniform(0.9, 1.1)
        beta = rng.uniform(0.3, 1.2)
        i = rng.uniform(0.0, 1.2)
        xc = rng.uniform(0.05, 0.25)
        if math.cos(beta) + math.sqrt(2) * i * xc * k / (K_BRIDGE * v) > 1.0:
            continue  # no extinction angle exists: commutation fails
        valid += 1
        _, _, gamma, mu_i, _ = inverter_algebra(v, k, beta, i, replace(p, x_ci=xc))
        # overlap from the commutation relation, computed independently
        e_aci = K_BRIDGE * v / k
        mu_ind = math.acos(math.cos(gamma) - math.sqrt(2) * i * xc / e_aci) - gamma
        worst = max(worst, abs(beta - (gamma + mu_ind)), abs(mu_i - mu_ind))
    ok = abs(e0 - e_oracle) <= 1e-5 and abs(e0 - 1.35047) <= 1e-5 \
        and abs(mu - mu_oracle) <= 1e-4 and worst <= 1e-9
    report(4, ok, f"E={e0:.6f} mu={mu:.6f} (formula {mu_oracle:.6f}; quoted 0.48397 "
                  f"differs by {abs(mu - 0.48397):.1e}) max|beta-gamma-mu|={worst:.1e}")
    assert ok


# --- 5 ----------------------------------------------------------------------

def isolated_link(i_ref: float):
    return system_of([slack_line(SlackSpec(BUS_A, 1.0, 0.0), "XSA"),
                      slack_line(SlackSpec(BUS_B, 1.0, 0.0), "XSB"),
                      hvdc_line(HvdcParams(), HvdcControlParams(i_dc_ref=i_ref), BUS_A, BUS_B)])


def test_c5_dc_link_steady_state(report):
    target = isolated_link(1.0)
    x_target = dc_operating_point(target, SolverOptions())
    # start from the 0.9 pu operating point, then step the order to 1.0 pu
    x0 = dc_operating_point(isolated_link(0.9), SolverOptions())
    k = target.layout.index("V(XHvdc.bhold)")
    x0[k] = x_target[k]
    names = ["I(XHvdc.Lr)", "V(XHvdc.Pac_rec)", "V(XHvdc.Pac_inv)"]
    w = run_transient(target, SolverOptions(t_stop=5.0), names, x0=x0)
    i = w.column(names[0])
    t = np.asarray(w.times)
    settled = t[np.argmax(np.abs(i - 1.0) <= 0.02)] if np.any(np.abs(i - 1.0) <= 0.02) else None
    audit = float(w.column(names[1])[-1] - w.column(names[2])[-1] - 0.1 * i[-1] ** 2)
    ok = settled is not None and abs(i[-1] - 1.0) <= 0.02 and abs(audit) <= 1e-3 \
        and abs(i[0] - 0.9) < 1e-6
    report(5, ok, f"i_dc 0.9 -> {i[-1]:.5f} pu, within 0.02 from t={settled} s, "
                  f"p_rec-p_inv-R*i^2={audit:.1e}")
    assert ok


# --- 6, 7 -------------------------------------------------------------------

CASE_VARS = ("VM(Bus1)", "V(Bus2R)", "V(Bus2I)", "V(XHvdc.beta)", "I(XHvdc.Lr)")


@pytest.fixture(scope="module")
def case_runs():
    runs = {}
    for mode in (False, True):
        cfg = RunConfig("case4bus", t_stop=200.0, step_h=0.01, rel_tol=1e-1, abs_tol=1e-3,
                        print_vars=CASE_VARS, extinction_control=mode)
        t0 = time.perf_counter()
        w, _, _ = simulate(cfg)
        runs[mode] = (w, time.perf_counter() - t0)
    return runs


def test_c6_case_study_trends(report, case_runs):
    off, _ = case_runs[False]
    on, _ = case_runs[True]
    v1_off = off.column("VM(Bus1)")[-1]
    v1_on = on.column("VM(Bus1)")[-1]
    beta_on = on.column("V(XHvdc.beta)")[-1]
    bus2 = max(float(np.max(np.abs(w.column("V(Bus2R)") - 1.0))) for w in (off, on))
    bus2 = max(bus2, *(float(np.max(np.abs(w.column("V(Bus2I)")))) for w in (off, on)))
    checks = {"a": v1_off < 1.0, "b": v1_on >= 1.0, "c": abs(beta_on - 0.349) <= 0.01,
              "d": bus2 <= 1e-9}
    checks = {k: bool(v) for k, v in checks.items()}
    ok = all(checks.values()) and len(off.times) == 20001 and len(on.times) == 20001
    report(6, ok, f"|V1| off={v1_off:.4f} on={v1_on:.4f}, beta on={beta_on:.4f}, "
                  f"bus2 deviation={bus2:.1e}, checks={checks}")
    assert ok


def test_c7_performance(report, case_runs):
    times = {("on" if k else "off"): round(v[1], 2) for k, v in case_runs.items()}
    sys_ = build_system(elaborate(load_document(RunConfig("case4bus"))))
    ok = max(times.values()) <= 60.0
    report(7, ok, f"200 s runs took {times} s wall clock, {sys_.layout.total} variables")
    assert ok


# --- 8 ----------------------------------------------------------------------

def test_c8_parser_corpus(report):
    sizes = {}
    for name in ("appendix_a", "appendix_b", "appendix_c"):
        doc = parse_netlist((FIXTURES / f"{name}.cir").read_text())
        sys_ = build_system(elaborate(doc))
        sizes[name] = sys_.layout.total
    flat = elaborate(parse_netlist((FIXTURES / "appendix_b.cir").read_text()))
    loads = {c.name: c for c in flat.instances if c.name.startswith("Xload1.")}
    real = loads["Xload1.BloadR"].params["i"]
    imag = loads["Xload1.BloadI"].params["i"]
    # recover P, Q and CurrLim from the substituted expressions
    p = eval_expr(real, {"V(bus1R)": 1.0, "V(bus1I)": 0.0})
    q = eval_expr(real, {"V(bus1R)": 0.0, "V(bus1I)": 1.0})
    lim = eval_expr(real, {"V(bus1R)": 1e-9, "V(bus1I)": 0.0})
    q_check = -eval_expr(imag, {"V(bus1R)": 1.0, "V(bus1I)": 0.0})
    params = {"P": p, "Q": q, "CurrLim": lim}
    ok = (set(loads) == {"Xload1.BloadR", "Xload1.BloadI", "Xload1.VammR", "Xload1.VammI"}
          and loads["Xload1.BloadR"].nodes == ("bus1R", "Xload1.ammR")
          and abs(p - 0.9) < 1e-15 and abs(q - 0.49) < 1e-15 and abs(q_check - 0.49) < 1e-15
          and lim == 1000.0)
    report(8, ok, f"fixtures stamp to {sizes} variables; Xload1 elaborates to {params}")
    assert ok


# --- 9 ----------------------------------------------------------------------

def fd_jacobian(sys_, x, step=1e-6):
    n = len(x)
    J = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = step
        J[:, j] = (sys_.f_static(x + e) - sys_.f_static(x - e)) / (2 * step)
    return J


def near_kink(sys_, x, step=1e-6) -> bool:
    # one-sided slopes disagree where a limiter or abs switches branch
    n = len(x)
    f0 = sys_.f_static(x)
    for j in range(n):
        e = np.zeros(n)
        e[j] = step
        fwd = (sys_.f_static(x + e) - f0) / step
        bwd = (f0 - sys_.f_static(x - e)) / step
        if np.max(np.abs(fwd - bwd)) > 1e-3 * max(1.0, float(np.max(np.abs(fwd)))):
            return True
    return False


def device_cases():
    machine = MachineSpec(BUS_B, e_mag=1.1, p_mech=0.5)
    return {
        "CPL": [slack_line(SlackSpec(BUS_A)), branch_line(BranchSpec(BUS_A, BUS_B, 0.1)),
                cpl_line(CplSpec(BUS_B, 0.9, 0.49))],
        "ACBRANCH": [slack_line(SlackSpec(BUS_A)), branch_line(BranchSpec(BUS_A, BUS_B, 0.2)),
                     cpl_line(CplSpec(BUS_B, 0.3, 0.1))],
        "MACHINE": [slack_line(SlackSpec(BUS_A)), branch_line(BranchSpec(BUS_A, BUS_B, 0.2)),
                    machine_line(machine)],
        "CHVDC2-off": [slack_line(SlackSpec(BUS_A), "XSA"), slack_line(SlackSpec(BUS_B), "XSB"),
                       hvdc_line(HvdcParams(), HvdcControlParams(), BUS_A, BUS_B)],
        "CHVDC2-on": [slack_line(SlackSpec(BUS_A), "XSA"), slack_line(SlackSpec(BUS_B), "XSB"),
                      hvdc_line(HvdcParams(), HvdcControlParams(extinction_control=True),
                                BUS_A, BUS_B)],
    }


def test_c9_jacobian_vs_finite_differences(report):
    rng = np.random.default_rng(2024)
    worst = {}
    for name, lines in device_cases().items():
        sys_ = system_of(lines)
        base = dc_operating_point(sys_, SolverOptions())
        checked, tries = 0, 0
        worst[name] = 0.0
        while checked < 10 and tries < 200:
            tries += 1
            x = base + rng.normal(0.0, 0.05, base.shape)
            if near_kink(sys_, x):
                continue
            J = sys_.g_jacobian(x)
            Jfd = fd_jacobian(sys_, x)
            rel = np.abs(J - Jfd) / np.maximum(np.abs(J), 1.0)
            worst[name] = max(worst[name], float(np.max(rel)))
            checked += 1
        assert checked == 10, f"{name}: only {checked} well-conditioned points"
    ok = max(worst.values()) <= 1e-5
    report(9, ok, "max relative deviation " + ", ".join(f"{k}={v:.1e}" for k, v in worst.items()))
    assert ok


# --- 10 ---------------------------------------------------------------------

def test_c10_determinism(report):
    cfgs = [RunConfig(str(FIXTURES / "rc.cir")),
            RunConfig("case4bus", t_stop=20.0, extinction_control=True)]
    same = []
    for cfg in cfgs:
        a, b = csv_text(cfg), csv_text(cfg)
        same.append(a.encode() == b.encode() and len(a) > 0)
    ok = all(same)
    report(10, ok, f"byte-identical CSV for rc.cir and case4bus (20 s): {same}")
    assert ok
