"""SPICE-subset netlist parser.

Accepted cards::

    Vname n+ n- [DC] value
    Rname a b value          Cname a b value          Lname a b value
    Bname a b I={expr}       Bname a b V={expr}
    Xname n1 ... nk SUBCKT [PARAMS:] name=value ...

and the directives ``.SUBCKT/.ENDS/.PARAM/.TRAN/.PRINT/.OPTIONS/.END``.
Anything else is rejected with the line number of the offending card.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .expr import Expr, ExprError, Num, format_expr, parse_expr, parse_number

DEVICE_KINDS = {"V": "V", "B": "B", "R": "R", "C": "C", "L": "L", "X": "X"}
DIRECTIVES = {".subckt", ".ends", ".param", ".tran", ".print", ".options", ".end"}


class NetlistSyntaxError(Exception):
    """Parse failure, with the 1-based source line and offending token."""

    def __init__(self, message: str, line: int | None = None, token: str | None = None):
        self.line = line
        self.token = token
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")


@dataclass(frozen=True)
class DeviceCard:
    kind: str
    name: str
    nodes: tuple[str, ...]
    value: float | Expr | None = None
    params: dict[str, Expr] = field(default_factory=dict)
    subckt: str | None = None
    line: int | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Directive:
    name: str
    args: tuple[str, ...] = ()
    params: dict[str, Expr] = field(default_factory=dict)
    line: int | None = field(default=None, compare=False)


@dataclass(frozen=True)
class SubcktDef:
    name: str
    ports: tuple[str, ...]
    param_defaults: dict[str, float]
    body: tuple[DeviceCard, ...]
    local_params: tuple[tuple[str, Expr], ...] = ()
    line: int | None = field(default=None, compare=False)


@dataclass(frozen=True)
class NetlistDocument:
    title: str = ""
    devices: tuple[DeviceCard, ...] = ()
    subckt_defs: dict[str, SubcktDef] = field(default_factory=dict)
    directives: tuple[Directive, ...] = ()

    def subckt(self, name: str) -> SubcktDef | None:
        return self.subckt_defs.get(name.lower())


# ----------------------------------------------------------------------
# lexing
# ----------------------------------------------------------------------

_CARD_TOKEN_RE = re.compile(r"\{[^{}]*\}|=|[^\s=,{}]+")


def _strip_inline_comment(text: str) -> str:
    depth = 0
    for i, ch in enumerate(text):
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
        elif ch == ";" and depth == 0:
            return text[:i]
    return text


def logical_lines(source: str) -> list[tuple[int, str]]:
    """Join ``+`` continuations and drop comments; returns (line_no, text)."""
    out: list[tuple[int, str]] = []
    for no, raw in enumerate(source.replace("\r\n", "\n").split("\n"), start=1):
        line = raw.strip()
        if not line or line.startswith("*"):
            continue
        line = _strip_inline_comment(line).strip()
        if not line:
            continue
        if line.startswith("+"):
            if not out:
                raise NetlistSyntaxError("continuation line with nothing to continue", no, "+")
            prev_no, prev = out[-1]
            out[-1] = (prev_no, prev + " " + line[1:].strip())
            continue
        out.append((no, line))
    return out


def _tokens(text: str, line: int) -> list[str]:
    toks = _CARD_TOKEN_RE.findall(text)
    if text.count("{") != text.count("}"):
        raise NetlistSyntaxError("unbalanced braces", line, text)
    return toks


def _value_expr(tok: str, line: int) -> Expr:
    """Numeric literal, ``{expr}`` or a bare expression such as ``-CurrLim``."""
    try:
        if tok.startswith("{"):
            return parse_expr(tok[1:-1])
        try:
            return Num(parse_number(tok))
        except ValueError:
            return parse_expr(tok)
    except ExprError as exc:
        raise NetlistSyntaxError(str(exc), line, tok) from None


def _assignments(toks: list[str], line: int) -> dict[str, Expr]:
    """Parse ``a = 1 b = {x}`` token runs into a dict (keys lowercased)."""
    params: dict[str, Expr] = {}
    i = 0
    while i < len(toks):
        if i + 2 >= len(toks) or toks[i + 1] != "=":
            raise NetlistSyntaxError("expected name=value", line, toks[i])
        name = toks[i]
        if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", name):
            raise NetlistSyntaxError("bad parameter name", line, name)
        params[name.lower()] = _value_expr(toks[i + 2], line)
        i += 3
    return params


# ----------------------------------------------------------------------
# card parsing
# ----------------------------------------------------------------------

def parse_card(text: str, line: int = 1) -> DeviceCard:
    toks = _tokens(text, line)
    name = toks[0]
    letter = name[0].upper()
    if letter not in DEVICE_KINDS:
        raise NetlistSyntaxError(f"unknown device letter {name[0]!r}", line, name)
    kind = DEVICE_KINDS[letter]

    if kind == "X":
        split = len(toks)
        for i, t in enumerate(toks):
            if t.lower() == "params:" or t == "=":
                split = i if t.lower() == "params:" else i - 1
                break
        head, rest = toks[1:split], toks[split:]
        if rest and rest[0].lower() == "params:":
            rest = rest[1:]
        if len(head) < 1:
            raise NetlistSyntaxError("subcircuit instance needs a SUBCKT name", line, name)
        params = _assignments(rest, line)
        return DeviceCard("X", name, tuple(head[:-1]), None, params, head[-1], line)

    if "=" in toks[:3]:
        raise NetlistSyntaxError(f"{name}: expected 2 nodes", line, name)
    if len(toks) < 3:
        raise NetlistSyntaxError(f"{name}: expected 2 nodes", line, toks[-1])
    nodes = (toks[1], toks[2])
    rest = toks[3:]

    if kind == "B":
        params = _assignments(rest, line)
        which = [k for k in ("i", "v") if k in params]
        extra = set(params) - {"i", "v"}
        if len(which) != 1 or extra:
            raise NetlistSyntaxError(
                f"{name}: B-source needs exactly one of I= or V=", line, name)
        return DeviceCard("B", name, nodes, None, {which[0]: params[which[0]]}, None, line)

    if kind == "V" and rest and rest[0].lower() == "dc":
        rest = rest[1:]
    extra: dict[str, Expr] = {}
    if kind == "C" and len(rest) > 1:
        # capacitor initial voltage: C1 a b 1u IC=0.5
        extra = _assignments(rest[1:], line)
        if set(extra) != {"ic"}:
            raise NetlistSyntaxError(f"{name}: only IC= may follow the value", line, name)
        rest = rest[:1]
    if len(rest) != 1:
        tok = rest[1] if len(rest) > 1 else name
        raise NetlistSyntaxError(f"{name}: expected a single value", line, tok)
    tok = rest[0]
    if tok.startswith("{"):
        value: float | Expr = _value_expr(tok, line)
    else:
        try:
            value = parse_number(tok)
        except ValueError:
            raise NetlistSyntaxError(f"{name}: bad value", line, tok) from None
    return DeviceCard(kind, name, nodes, value, extra, None, line)


def _parse_directive(text: str, line: int) -> Directive:
    toks = _tokens(text, line)
    name = toks[0].lower()
    if name not in DIRECTIVES:
        raise NetlistSyntaxError(f"unsupported directive {toks[0]}", line, toks[0])
    args = toks[1:]
    if name in (".param", ".options"):
        return Directive(name, (), _assignments(args, line), line)
    if name == ".tran":
        if len(args) < 2:
            raise NetlistSyntaxError(".TRAN needs step and stop time", line, toks[0])
        for a in args:
            try:
                parse_number(a)
            except ValueError:
                raise NetlistSyntaxError("bad .TRAN value", line, a) from None
    return Directive(name, tuple(args), {}, line)


def _looks_like_card(text: str, line: int) -> bool:
    """Whether the first line is a card rather than a title.

    Valid cards and directives are never titles. A line whose first word is a
    device letter followed by a digit (``R1 n1``) is treated as a broken card
    so its error surfaces; anything else is a title.
    """
    if text.startswith("."):
        return True
    try:
        parse_card(text, line)
        return True
    except NetlistSyntaxError:
        pass
    return re.match(r"[VvBbRrCcLlXx][A-Za-z_]*\d", text.split()[0]) is not None


def parse_netlist(source: str) -> NetlistDocument:
    """Parse netlist text into a :class:`NetlistDocument`."""
    lines = logical_lines(source)
    title = ""
    if lines and not _looks_like_card(lines[0][1], lines[0][0]):
        title = lines[0][1]
        lines = lines[1:]

    devices: list[DeviceCard] = []
    directives: list[Directive] = []
    subckts: dict[str, SubcktDef] = {}
    current: dict | None = None  # open .SUBCKT being collected

    def add_device(card: DeviceCard, scope: list[DeviceCard]):
        if any(d.name.lower() == card.name.lower() for d in scope):
            raise NetlistSyntaxError(f"duplicate device name {card.name}", card.line, card.name)
        scope.append(card)

    for no, text in lines:
        if text.startswith("."):
            head = text.split()[0].lower()
            if head == ".subckt":
                if current is not None:
                    raise NetlistSyntaxError("nested .SUBCKT definition", no, text.split()[0])
                current = _open_subckt(text, no)
                continue
            if head == ".ends":
                if current is None:
                    raise NetlistSyntaxError(".ENDS without .SUBCKT", no, text.split()[0])
                key = current["name"].lower()
                if key in subckts:
                    raise NetlistSyntaxError(f"duplicate SUBCKT {current['name']}", no,
                                             current["name"])
                subckts[key] = SubcktDef(current["name"], current["ports"],
                                         current["defaults"], tuple(current["body"]),
                                         tuple(current["local"]), current["line"])
                current = None
                continue
            d = _parse_directive(text, no)
            if d.name == ".end":
                break
            if current is not None:
                if d.name != ".param":
                    raise NetlistSyntaxError(f"{text.split()[0]} not allowed inside .SUBCKT",
                                             no, text.split()[0])
                current["local"].extend(d.params.items())
                continue
            directives.append(d)
            continue
        card = parse_card(text, no)
        add_device(card, current["body"] if current is not None else devices)

    if current is not None:
        raise NetlistSyntaxError(f".SUBCKT {current['name']} missing .ENDS",
                                 current["line"], current["name"])
    return NetlistDocument(title, tuple(devices), subckts, tuple(directives))


def _open_subckt(text: str, line: int) -> dict:
    toks = _tokens(text, line)
    if len(toks) < 2:
        raise NetlistSyntaxError(".SUBCKT needs a name", line, toks[0])
    name = toks[1]
    split = len(toks)
    for i, t in enumerate(toks):
        if t.lower() == "params:":
            split = i
            break
        if t == "=":
            split = i - 1
            break
    ports = tuple(toks[2:split])
    rest = toks[split:]
    if rest and rest[0].lower() == "params:":
        rest = rest[1:]
    if len({p.lower() for p in ports}) != len(ports):
        raise NetlistSyntaxError(f"duplicate port in SUBCKT {name}", line, name)
    defaults = {}
    for key, e in _assignments(rest, line).items():
        if not isinstance(e, Num):
            raise NetlistSyntaxError(f"default of {key} must be numeric", line, key)
        defaults[key] = e.value
    return {"name": name, "ports": ports, "defaults": defaults, "body": [],
            "local": [], "line": line}


# ----------------------------------------------------------------------
# pretty printer
# ----------------------------------------------------------------------

def _fmt_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return "{" + format_expr(v) + "}"


def format_card(card: DeviceCard) -> str:
    if card.kind == "X":
        parts = [card.name, *card.nodes, card.subckt]
        if card.params:
            parts.append("PARAMS:")
            parts += [f"{k}={_fmt_value(v) if not isinstance(v, Num) else repr(v.value)}"
                      for k, v in card.params.items()]
        return " ".join(parts)
    if card.kind == "B":
        (k, e), = card.params.items()
        return f"{card.name} {card.nodes[0]} {card.nodes[1]} {k.upper()}={{{format_expr(e)}}}"
    text = f"{card.name} {card.nodes[0]} {card.nodes[1]} {_fmt_value(card.value)}"
    if "ic" in card.params:
        text += f" IC={_fmt_value(card.params['ic'])}"
    return text


def format_netlist(doc: NetlistDocument) -> str:
    """Render a document back to netlist text (re-parses to an equal document)."""
    out = [f"* {doc.title}" if doc.title else "* gridflux netlist"]
    if doc.title:
        out = [doc.title]
    for sub in doc.subckt_defs.values():
        head = f".SUBCKT {sub.name} {' '.join(sub.ports)}"
        if sub.param_defaults:
            head += " PARAMS: " + " ".join(f"{k}={v!r}" for k, v in sub.param_defaults.items())
        out.append(head)
        for k, e in sub.local_params:
            out.append(f".PARAM {k}={{{format_expr(e)}}}")
        out += [format_card(c) for c in sub.body]
        out.append(".ENDS")
    out += [format_card(c) for c in doc.devices]
    for d in doc.directives:
        if d.params:
            out.append(f"{d.name.upper()} " + " ".join(
                f"{k}={{{format_expr(e)}}}" for k, e in d.params.items()))
        else:
            out.append(" ".join([d.name.upper(), *d.args]))
    out.append(".END")
    return "\n".join(out) + "\n"
