"""SPICE-subset netlist front end: parsing, expressions, elaboration."""

from .elaborate import ElaborationError, FlatCircuit, elaborate
from .expr import (Expr, ExprDomainError, ExprError, compile_exprs, diff, eval_expr,
                   format_expr, parse_expr, parse_number)
from .parser import (DeviceCard, Directive, NetlistDocument, NetlistSyntaxError, SubcktDef,
                     format_card, format_netlist, parse_card, parse_netlist)

__all__ = [
    "DeviceCard", "Directive", "ElaborationError", "Expr", "ExprDomainError", "ExprError",
    "FlatCircuit", "NetlistDocument", "NetlistSyntaxError", "SubcktDef", "compile_exprs",
    "diff", "elaborate", "eval_expr", "format_card", "format_expr", "format_netlist",
    "parse_card", "parse_expr", "parse_netlist", "parse_number",
]
