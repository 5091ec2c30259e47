import pytest

from gridflux.netlist import ElaborationError, elaborate, eval_expr, parse_netlist

from .conftest import FIXTURES


def test_cpl_instance_elaborates_with_overrides():
    flat = elaborate(parse_netlist((FIXTURES / "appendix_b.cir").read_text()))
    cards = {c.name: c for c in flat.instances}
    real = cards["Xload1.BloadR"]
    assert real.nodes == ("bus1R", "Xload1.ammR")
    assert cards["Xload1.BloadI"].nodes == ("bus1I", "Xload1.ammI")
    e = real.params["i"]
    assert eval_expr(e, {"V(bus1R)": 1.0, "V(bus1I)": 0.0}) == pytest.approx(0.9)
    assert eval_expr(e, {"V(bus1R)": 0.0, "V(bus1I)": 1.0}) == pytest.approx(0.49)
    assert eval_expr(e, {"V(bus1R)": 1e-9, "V(bus1I)": 0.0}) == 1000.0


def test_no_instances_is_identity():
    doc = parse_netlist((FIXTURES / "fig1.cir").read_text())
    flat = elaborate(doc)
    assert flat.instances == doc.devices
    assert flat.node_index == {"0": 0, "1": 1, "2": 2}
    assert flat.num_aux == 1


def test_undefined_subcircuit():
    with pytest.raises(ElaborationError, match="undefined subcircuit FOO"):
        elaborate(parse_netlist("t\nX1 a b FOO\n"))


def test_undeclared_override():
    src = "t\n.SUBCKT A x PARAMS: g=1\nR1 x 0 {g}\n.ENDS\nX1 n A PARAMS: h=2\n"
    with pytest.raises(ElaborationError, match="h"):
        elaborate(parse_netlist(src))


def test_recursion_guard():
    src = "t\n.SUBCKT A x\nX1 x A\n.ENDS\nXtop n A\n"
    with pytest.raises(ElaborationError, match="deeper than 32"):
        elaborate(parse_netlist(src))


def test_port_count_mismatch():
    src = "t\n.SUBCKT A x y\nR1 x y 1\n.ENDS\nX1 n A\n"
    with pytest.raises(ElaborationError, match="ports"):
        elaborate(parse_netlist(src))


def test_nested_renaming_and_parameters():
    src = """t
.SUBCKT INNER p PARAMS: r=1
R1 p mid {r}
R2 mid 0 {2*r}
.ENDS
.SUBCKT OUTER q PARAMS: r=5
Xi q INNER PARAMS: r={r+1}
L1 q 0 1m
.ENDS
Xo top OUTER
"""
    flat = elaborate(parse_netlist(src))
    cards = {c.name: c for c in flat.instances}
    assert set(cards) == {"Xo.Xi.R1", "Xo.Xi.R2", "Xo.L1"}
    assert cards["Xo.Xi.R1"].nodes == ("top", "Xo.Xi.mid")
    assert cards["Xo.Xi.R2"].nodes == ("Xo.Xi.mid", "0")
    assert cards["Xo.Xi.R2"].value == 12.0
    assert flat.num_aux == 1
    assert flat.node_index["0"] == 0


def test_current_references_are_renamed():
    src = """t
.SUBCKT M a
Vamm a s 0
B1 s 0 I={2*I(Vamm)}
.ENDS
Xm n M
Vn n 0 1
"""
    flat = elaborate(parse_netlist(src))
    b = next(c for c in flat.instances if c.kind == "B")
    assert "Xm.Vamm" in repr(b.params["i"])


def test_unknown_node_reference():
    with pytest.raises(ElaborationError, match="unknown node"):
        elaborate(parse_netlist("t\nB1 a 0 I={V(zz)}\n"))


def test_current_reference_must_have_aux():
    with pytest.raises(ElaborationError):
        elaborate(parse_netlist("t\nR1 a 0 1\nB1 a 0 I={I(R1)}\n"))


def test_top_level_param():
    flat = elaborate(parse_netlist("t\n.PARAM g={2*3}\nR1 a 0 {g}\n"))
    assert flat.instances[0].value == 6.0


@pytest.mark.parametrize("name", ["appendix_a", "appendix_b", "appendix_c"])
def test_aux_count(name):
    flat = elaborate(parse_netlist((FIXTURES / f"{name}.cir").read_text()))
    expected = sum(1 for c in flat.instances
                   if c.kind in ("V", "L") or (c.kind == "B" and "v" in c.params))
    assert flat.num_aux == expected
    assert set(flat.node_index.values()) == set(range(len(flat.node_index)))
