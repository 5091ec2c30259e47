"""Subcircuit expansion and parameter substitution."""

from __future__ import annotations

from dataclasses import dataclass, field

from .expr import (GROUND_NAMES, Curr, Expr, ExprError, Num, Param, Volt,
                   eval_expr, transform)
from .parser import DeviceCard, NetlistDocument

MAX_DEPTH = 32


class ElaborationError(Exception):
    """Undefined subcircuit, bad override, unresolved reference, runaway nesting."""


@dataclass(frozen=True)
class FlatCircuit:
    node_index: dict[str, int]
    instances: tuple[DeviceCard, ...]
    num_aux: int
    node_names: tuple[str, ...] = field(default=())

    @property
    def nodes(self) -> tuple[str, ...]:
        """Non-ground node names in index order."""
        return self.node_names


def _eval_params(items, scope: dict[str, float], where: str) -> dict[str, float]:
    scope = dict(scope)
    for name, e in items:
        try:
            scope[name.lower()] = eval_expr(e, scope)
        except ExprError as exc:
            raise ElaborationError(f"{where}: parameter {name}: {exc}") from None
    return scope


def _numeric(value, scope: dict[str, float], card: DeviceCard) -> float:
    if isinstance(value, float):
        return value
    try:
        return eval_expr(value, scope)
    except ExprError as exc:
        raise ElaborationError(f"{card.name}: {exc}") from None


class _Elaborator:
    def __init__(self, doc: NetlistDocument):
        self.doc = doc
        self.display: dict[str, str] = {}  # lowercase node -> display spelling
        self.order: list[str] = []
        self.instances: list[DeviceCard] = []

    def node(self, name: str) -> str:
        key = name.lower()
        if key in GROUND_NAMES:
            return "0"
        if key not in self.display:
            self.display[key] = name
            self.order.append(name)
        return self.display[key]

    def expand(self, cards, node_map, dev_map, scope, prefix, depth, path):
        for card in cards:
            if card.kind == "X":
                self.instance(card, node_map, scope, prefix, depth, path)
                continue
            nodes = tuple(self.node(node_map(n)) for n in card.nodes)
            name = prefix + card.name
            if card.kind == "B":
                (k, e), = card.params.items()
                e = self._close(e, node_map, dev_map, scope, card)
                self.instances.append(DeviceCard("B", name, nodes, None, {k: e}, None, card.line))
            else:
                value = _numeric(card.value, scope, card)
                extra = {k: Num(_numeric(e, scope, card)) for k, e in card.params.items()}
                self.instances.append(
                    DeviceCard(card.kind, name, nodes, value, extra, None, card.line))

    def _close(self, e: Expr, node_map, dev_map, scope, card) -> Expr:
        def fn(leaf):
            if isinstance(leaf, Param):
                try:
                    return Num(scope[leaf.name.lower()])
                except KeyError:
                    raise ElaborationError(
                        f"{card.name}: unbound parameter {leaf.name}") from None
            if isinstance(leaf, Volt):
                n2 = None if leaf.node2 is None else node_map(leaf.node2)
                return Volt(node_map(leaf.node), n2)
            if isinstance(leaf, Curr):
                return Curr(dev_map(leaf.device))
            return None
        return transform(e, fn)

    def instance(self, card, node_map, scope, prefix, depth, path):
        sub = self.doc.subckt(card.subckt)
        if sub is None:
            raise ElaborationError(f"undefined subcircuit {card.subckt} (instance {card.name})")
        if depth >= MAX_DEPTH:
            raise ElaborationError(
                f"subcircuit nesting deeper than {MAX_DEPTH} at {prefix + card.name} "
                f"(cycle through {' -> '.join(path)}?)")
        if len(card.nodes) != len(sub.ports):
            raise ElaborationError(
                f"{card.name}: SUBCKT {sub.name} has {len(sub.ports)} ports, "
                f"instance connects {len(card.nodes)}")
        child_scope = dict(scope)
        child_scope.update(sub.param_defaults)
        for k, e in card.params.items():
            if k not in sub.param_defaults:
                raise ElaborationError(
                    f"{card.name}: parameter {k} is not declared by SUBCKT {sub.name}")
            try:
                child_scope[k] = eval_expr(e, scope)
            except ExprError as exc:
                raise ElaborationError(f"{card.name}: parameter {k}: {exc}") from None
        inst = prefix + card.name
        child_scope = _eval_params(sub.local_params, child_scope, inst)

        outer = {p.lower(): node_map(n) for p, n in zip(sub.ports, card.nodes)}
        local_devs = {c.name.lower() for c in sub.body if c.kind != "X"}

        def child_nodes(n: str) -> str:
            key = n.lower()
            if key in GROUND_NAMES:
                return "0"
            if key in outer:
                return outer[key]
            return f"{inst}.{n}"

        def child_devs(d: str) -> str:
            if d.lower() in local_devs:
                return f"{inst}.{d}"
            raise ElaborationError(f"{inst}: I({d}) does not name a device of SUBCKT {sub.name}")

        self.expand(sub.body, child_nodes, child_devs, child_scope, inst + ".",
                    depth + 1, path + [sub.name])


def elaborate(doc: NetlistDocument) -> FlatCircuit:
    """Flatten ``doc``: inline subcircuits and substitute parameters numerically.

    Internal subcircuit nodes and devices are renamed ``<instance>.<name>``;
    ground ``0`` is never renamed.
    """
    scope = _eval_params(
        [(k, e) for d in doc.directives if d.name == ".param" for k, e in d.params.items()],
        {}, "top level")
    el = _Elaborator(doc)
    top_devs = {c.name.lower(): c.name for c in doc.devices}

    def top_dev(d: str) -> str:
        if d.lower() in top_devs:
            return top_devs[d.lower()]
        raise ElaborationError(f"I({d}) does not name a device")

    el.expand(doc.devices, lambda n: n, top_dev, scope, "", 0, [])

    node_index = {"0": 0}
    for i, n in enumerate(el.order, start=1):
        node_index[n] = i
    instances = _check_references(el.instances, el.display)
    num_aux = sum(1 for c in instances
                  if c.kind in ("V", "L") or (c.kind == "B" and "v" in c.params))
    return FlatCircuit(node_index, tuple(instances), num_aux, tuple(el.order))


def _check_references(instances, display) -> list[DeviceCard]:
    """Validate V()/I() references and rewrite node names to their display spelling."""
    aux_devs = {c.name.lower() for c in instances
                if c.kind in ("V", "L") or (c.kind == "B" and "v" in c.params)}
    out = []
    for c in instances:
        if c.kind != "B":
            out.append(c)
            continue
        (k, e), = c.params.items()

        def canon(n):
            if n is None or n.lower() in GROUND_NAMES:
                return None if n is None else "0"
            if n.lower() not in display:
                raise ElaborationError(f"{c.name}: V({n}) references an unknown node")
            return display[n.lower()]

        def fn(leaf):
            if isinstance(leaf, Volt):
                return Volt(canon(leaf.node), canon(leaf.node2))
            if isinstance(leaf, Curr) and leaf.device.lower() not in aux_devs:
                raise ElaborationError(
                    f"{c.name}: I({leaf.device}) must name a V-source, B V-source or inductor")
            return None

        out.append(DeviceCard("B", c.name, c.nodes, None, {k: transform(e, fn)}, None, c.line))
    return out
