"""``gridflux`` command line: run a netlist or the built-in four-bus system."""

from __future__ import annotations

import argparse
import fnmatch
import io
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path

from .acgrid import library
from .hvdc import HvdcError
from .mna import DaeSystem, EmptyCircuitError, build_system
from .netlist.elaborate import ElaborationError, elaborate
from .netlist.expr import ExprError, eval_expr, parse_number
from .netlist.parser import NetlistDocument, NetlistSyntaxError, parse_netlist
from .plot import emit_plot
from .scenario import ScenarioConfig, build_case4bus
from .solver import SolverError, SolverOptions, WaveformSet, run_transient

log = logging.getLogger("gridflux")

SCENARIOS = ("case4bus",)
CASE4BUS_PRINT = ("VM(Bus1)", "VM(Bus2)", "VM(Bus3)", "VM(Bus4)", "V(XHvdc.alpha)",
                  "V(XHvdc.beta)", "V(XHvdc.gamma)", "I(XHvdc.Lr)")


class InputError(Exception):
    """Bad input file, option or variable selection (exit code 2)."""


@dataclass(frozen=True)
class RunConfig:
    input: str
    t_stop: float | None = None
    step_h: float | None = None
    rel_tol: float | None = None
    abs_tol: float | None = None
    print_vars: tuple[str, ...] = ()
    out_csv: str | None = None
    out_plot: str | None = None
    extinction_control: bool = False
    appendix_c_scaling: bool = True


# --- inputs -----------------------------------------------------------------

def with_library(doc: NetlistDocument) -> NetlistDocument:
    """Add shipped SUBCKTs the document uses but does not define."""
    defs = dict(library().subckt_defs)
    defs.update(doc.subckt_defs)
    return replace(doc, subckt_defs=defs)


def load_document(cfg: RunConfig) -> NetlistDocument:
    if cfg.input.lower() in SCENARIOS:
        sc = ScenarioConfig().with_extinction_control(cfg.extinction_control)
        if not cfg.appendix_c_scaling:
            sc = replace(sc, hvdc=replace(sc.hvdc, scaling="eq13"))
        return build_case4bus(sc)
    path = Path(cfg.input)
    if not path.is_file():
        raise InputError(f"{cfg.input}: file not found")
    text = path.read_text(encoding="utf-8")
    return with_library(parse_netlist(text))


def solver_options(doc: NetlistDocument, cfg: RunConfig) -> SolverOptions:
    """Command-line values override ``.TRAN`` / ``.OPTIONS`` from the netlist."""
    kw: dict[str, float] = {}
    for d in doc.directives:
        if d.name == ".tran":
            kw["step_h"] = parse_number(d.args[0])
            kw["t_stop"] = parse_number(d.args[1])
        elif d.name == ".options":
            for k, e in d.params.items():
                if k in ("reltol", "abstol"):
                    kw[{"reltol": "rel_tol", "abstol": "abs_tol"}[k]] = eval_expr(e, {})
    for field_name in ("t_stop", "step_h", "rel_tol", "abs_tol"):
        v = getattr(cfg, field_name)
        if v is not None:
            kw[field_name] = v
    if kw.get("t_stop", 0.0) <= 0:
        raise InputError("t_stop must be > 0 (give --tstop or a .TRAN card)")
    try:
        return SolverOptions(**kw)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def print_patterns(doc: NetlistDocument, cfg: RunConfig) -> list[str]:
    if cfg.print_vars:
        return list(cfg.print_vars)
    pats = [a for d in doc.directives if d.name == ".print"
            for a in d.args if a.lower() != "tran"]
    if pats:
        return pats
    if cfg.input.lower() == "case4bus":
        return list(CASE4BUS_PRINT)
    return ["*"]


# --- column selection -------------------------------------------------------

@dataclass(frozen=True)
class Column:
    name: str
    indices: tuple[int, ...]  # one index: plain variable; two: VM of a rail pair


def _vm_columns(sys: DaeSystem, pattern: str) -> list[Column]:
    inner = pattern[3:-1]
    lay = sys.layout
    lower = {n.lower(): i for i, n in enumerate(lay.node_names)}
    out = []
    for name in lay.node_names:
        if name[-1:] not in ("R", "r"):
            continue
        if "." in name and "." not in inner:
            continue  # subcircuit internals only when asked for by path
        bus = name[:-1]
        partner = lower.get(bus.lower() + "i")
        if partner is not None and fnmatch.fnmatchcase(bus.lower(), inner.lower()):
            out.append(Column(f"VM({bus})", (lower[name.lower()], partner)))
    return out


def select_columns(sys: DaeSystem, patterns) -> list[Column]:
    """Expand glob patterns over variable names and ``VM(bus)`` magnitudes."""
    cols: list[Column] = []
    seen: set[str] = set()
    for pat in patterns:
        p = pat.replace(" ", "")
        if p.lower().startswith("vm(") and p.endswith(")"):
            found = _vm_columns(sys, p)
        else:
            found = [Column(v, (i,)) for i, v in enumerate(sys.layout.var_names)
                     if fnmatch.fnmatchcase(v.lower(), p.lower())]
        if not found:
            raise InputError(f"print pattern {pat} matches no variable")
        for c in found:
            if c.name.lower() not in seen:
                seen.add(c.name.lower())
                cols.append(c)
    return cols


def write_csv(w: WaveformSet, names, stream) -> None:
    stream.write(",".join(["time", *names]) + "\n")
    cols = [w.columns[n] for n in names]
    for k, t in enumerate(w.times):
        stream.write(",".join([f"{t:.9g}"] + [f"{c[k]:.9g}" for c in cols]) + "\n")


# --- run --------------------------------------------------------------------

def simulate(cfg: RunConfig) -> tuple[WaveformSet, list[str], float]:
    """Parse, elaborate, stamp and integrate. Returns waveforms, column names
    and the wall-clock time of the transient phase."""
    try:
        doc = load_document(cfg)
        opts = solver_options(doc, cfg)
        sys_ = build_system(elaborate(doc))
        cols = select_columns(sys_, print_patterns(doc, cfg))
    except (NetlistSyntaxError, ElaborationError, EmptyCircuitError, ExprError,
            HvdcError, OSError, UnicodeDecodeError) as exc:
        raise InputError(str(exc)) from None
    t0 = time.perf_counter()
    w = run_columns(sys_, opts, cols)
    return w, [c.name for c in cols], time.perf_counter() - t0


def run_columns(sys_: DaeSystem, opts: SolverOptions, cols: list[Column]) -> WaveformSet:
    # record the underlying variables, then derive the requested columns
    needed = sorted({i for c in cols for i in c.indices})
    names = [sys_.layout.var_names[i] for i in needed]
    raw = run_transient(sys_, opts, names)
    pos = {i: raw.columns[sys_.layout.var_names[i]] for i in needed}
    out = WaveformSet(list(raw.times), {})
    for c in cols:
        if len(c.indices) == 1:
            out.columns[c.name] = list(pos[c.indices[0]])
        else:
            a, b = (pos[i] for i in c.indices)
            out.columns[c.name] = [math.hypot(u, v) for u, v in zip(a, b)]
    return out


def run(cfg: RunConfig, stdout=None, stderr=None) -> int:
    """Execute one run. Exit code 0 on success, 1 on solver failure, 2 on bad input."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        w, names, elapsed = simulate(cfg)
    except InputError as exc:
        print(f"gridflux: error: {exc}", file=stderr)
        return 2
    except (SolverError, ExprError) as exc:
        print(f"gridflux: solver failure: {exc}", file=stderr)
        return 1
    try:
        if cfg.out_csv:
            with open(cfg.out_csv, "w", encoding="utf-8", newline="\n") as fh:
                write_csv(w, names, fh)
        else:
            write_csv(w, names, stdout)
        if cfg.out_plot:
            emit_plot(w, names, cfg.out_plot, title=cfg.input)
    except OSError as exc:
        print(f"gridflux: error: {exc}", file=stderr)
        return 2
    steps = len(w.times) - 1
    timing = stdout if cfg.out_csv else stderr
    print(f"transient: {steps} steps, {len(names)} columns, {elapsed:.3f} s wall clock",
          file=timing)
    return 0


# --- argument parsing -------------------------------------------------------

def _on_off(text: str) -> bool:
    t = text.lower()
    if t in ("on", "yes", "true", "1"):
        return True
    if t in ("off", "no", "false", "0"):
        return False
    raise argparse.ArgumentTypeError("expected on or off")


def _number(text: str) -> float:
    try:
        return parse_number(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gridflux", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a netlist file or a built-in scenario")
    r.add_argument("input", help="netlist path or scenario name (case4bus)")
    r.add_argument("--tstop", type=_number, help="stop time in seconds")
    r.add_argument("--step", type=_number, help="fixed step in seconds")
    r.add_argument("--reltol", type=_number)
    r.add_argument("--abstol", type=_number)
    r.add_argument("--print", dest="print_vars", action="append", default=[],
                   metavar="PATTERN", help="variable glob, e.g. 'V(Bus*)' or 'VM(*)'")
    r.add_argument("--out", help="CSV path (default: standard output)")
    r.add_argument("--plot", help="SVG chart path")
    r.add_argument("--extinction-control", type=_on_off, default=False, metavar="on|off")
    scale = r.add_mutually_exclusive_group()
    scale.add_argument("--appendix-c-scaling", dest="appendix_c", action="store_true",
                       default=True, help="bridge count scales the whole converter "
                       "voltage (default)")
    scale.add_argument("--eq13-scaling", dest="appendix_c", action="store_false",
                       help="bridge count scales only the commutation drop")
    return ap


def _setup_logging() -> None:
    level = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING,
             "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("GRIDFLUX_LOG", "warn").lower(), logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    cfg = RunConfig(
        input=args.input, t_stop=args.tstop, step_h=args.step, rel_tol=args.reltol,
        abs_tol=args.abstol, print_vars=tuple(args.print_vars), out_csv=args.out,
        out_plot=args.plot, extinction_control=args.extinction_control,
        appendix_c_scaling=args.appendix_c)
    return run(cfg)


def csv_text(cfg: RunConfig) -> str:
    """CSV of one run as a string (raises on failure)."""
    w, names, _ = simulate(cfg)
    buf = io.StringIO()
    write_csv(w, names, buf)
    return buf.getvalue()


if __name__ == "__main__":
    sys.exit(main())
