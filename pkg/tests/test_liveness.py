import pytest

from replaycache.isa import linearize, parse_assembly, v
from replaycache.liveness import UseBeforeDef, compute_live_intervals


def _intervals(src):
    fn = linearize(parse_assembly(src)).functions[0]
    return {iv.vreg: iv for iv in compute_live_intervals(fn)}


def test_interval_spans_def_to_last_use():
    ivs = _intervals("""
fn main {
b0:
  li v1, 5
  li v2, 1
  add v2, v2, v2
  add v3, v1, v2
  halt
}
""")
    assert ivs[v(1)].start == 0
    assert ivs[v(1)].end == 12


def test_dead_def_is_a_point_interval():
    ivs = _intervals("fn main { b0:\n li v7, 3\n halt\n}")
    assert ivs[v(7)].start == ivs[v(7)].end == 0


def test_store_and_branch_operand_flags():
    ivs = _intervals("""
fn main {
b0:
  li v1, 5
  li v2, 9
  st v1 -> [r13-8]
  blt v1, v2, b1
b1:
  halt
}
""")
    assert ivs[v(1)].is_store_operand and ivs[v(1)].is_branch_operand
    assert ivs[v(2)].is_branch_operand and not ivs[v(2)].is_store_operand


def test_fig5_interval_overlaps(fig5_source):
    # x and y overlap in the first block; z overlaps neither
    ivs = _intervals(fig5_source)
    x, y, z = ivs[v(1)], ivs[v(2)], ivs[v(3)]
    assert x.overlaps(y)
    assert not x.overlaps(z)
    assert not y.overlaps(z)


def test_loop_carried_value_covers_whole_loop():
    ivs = _intervals("""
fn main {
b0:
  li v1, 0
  li v2, 3
  jmp b1
b1:
  add v1, v1, 1
  blt v1, v2, b1
b2:
  halt
}
""")
    # v2 is only read at the branch but must stay live through the loop body
    fn_src_end = ivs[v(2)].end
    assert fn_src_end >= ivs[v(1)].end - 4


def test_use_before_def_rejected():
    with pytest.raises(UseBeforeDef):
        _intervals("fn main { b0:\n add v1, v2, v2\n halt\n}")
