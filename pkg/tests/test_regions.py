from replaycache.isa import Op, Program, linearize, parse_assembly, v
from replaycache.liveness import compute_live_intervals
from replaycache.regions import (BoundaryOrigin, PartitionOptions,
                                 available_registers, boundary_pcs_of,
                                 insert_clwb, materialize_boundaries,
                                 partition_regions, preserve_store_registers)


def _prepare(src):
    fn = linearize(parse_assembly(src)).functions[0]
    return fn, compute_live_intervals(fn)


def _materialized(fn, bset):
    fn2 = materialize_boundaries(fn, bset)
    return linearize(Program((fn2,))).functions[0]


def test_available_registers_reserves_sp_lr_region():
    assert available_registers(16) == 13
    assert available_registers(2) == 2


def test_fig5_partition_two_boundaries_exactly(fig5_source):
    fn, ivs = _prepare(fig5_source)
    bset = partition_regions(fn, ivs, 2, PartitionOptions(cut_at_merges=False))
    z_def_pc = next(i.pc for i in fn.instructions()
                    if i.op is Op.LI and i.args[0] == v(3))
    entry_pc = fn.entry.instrs[0].pc
    assert bset.boundary_pcs == [entry_pc, z_def_pc]
    assert bset.origins[entry_pc] is BoundaryOrigin.INITIAL_CALL
    assert bset.origins[z_def_pc] is BoundaryOrigin.PRESSURE


def test_fig5_extension_reaches_mid_join_boundary(fig5_source):
    fn, ivs = _prepare(fig5_source)
    bset = partition_regions(fn, ivs, 2, PartitionOptions(cut_at_merges=False))
    fn2 = _materialized(fn, bset)
    ivs2 = preserve_store_registers(fn2, compute_live_intervals(fn2))
    bpcs = boundary_pcs_of(fn2)
    mid_join = bpcs[1]
    by = {iv.vreg: iv for iv in ivs2}
    assert by[v(1)].extended_end == mid_join
    assert by[v(2)].extended_end == mid_join
    # the non-flagged interval shape is untouched
    assert by[v(3)].extended_end is not None  # v3 is itself a store operand


def test_no_pressure_cut_when_registers_suffice():
    fn, ivs = _prepare("""
fn main {
b0:
  li v1, 1
  li v2, 2
  li v3, 3
  st v1 -> [r13-8]
  halt
}
""")
    bset = partition_regions(fn, ivs, 16)
    assert [bset.origins[p] for p in bset.boundary_pcs] == [BoundaryOrigin.INITIAL_CALL]


def test_loop_back_edge_always_cut():
    fn, ivs = _prepare("""
fn main {
b0:
  li v1, 0
  li v2, 3
  li v3, 4096
  jmp b1
b1:
  st v1 -> [v3+0]
  add v1, v1, 1
  blt v1, v2, b1
b2:
  halt
}
""")
    bset = partition_regions(fn, ivs, 16)
    header_pc = fn.block("b1").instrs[0].pc
    assert bset.origins[header_pc] is BoundaryOrigin.LOOP_BACK_EDGE


def test_branch_successors_start_regions():
    fn, ivs = _prepare("""
fn main {
b0:
  li v1, 1
  li v2, 2
  st v1 -> [r13-8]
  blt v1, v2, b2
b1:
  st v2 -> [r13-16]
  jmp b3
b2:
  st v2 -> [r13-24]
  jmp b3
b3:
  halt
}
""")
    bset = partition_regions(fn, ivs, 16)
    for label in ("b1", "b2"):
        pc = fn.block(label).instrs[0].pc
        assert bset.origins[pc] is BoundaryOrigin.INITIAL_BRANCH_END, label


def test_call_gets_boundaries_on_both_sides():
    fn, ivs = _prepare("""
fn main {
b0:
  li v1, 1
  call helper
  li v2, 2
  halt
}
fn helper {
b0:
  ret
}
""")
    bset = partition_regions(fn, ivs, 16)
    call_pc = next(i.pc for i in fn.instructions() if i.op is Op.CALL)
    assert call_pc in bset.origins
    assert call_pc + 4 in bset.origins


def test_extension_zero_length_when_store_abuts_boundary():
    fn, ivs = _prepare("""
fn main {
b0:
  li v1, 1
  st v1 -> [r13-8]
  call helper
  halt
}
fn helper {
b0:
  ret
}
""")
    bset = partition_regions(fn, ivs, 16)
    fn2 = _materialized(fn, bset)
    ivs2 = preserve_store_registers(fn2, compute_live_intervals(fn2))
    iv = next(i for i in ivs2 if i.vreg == v(1))
    # last use is the store right before the pre-call boundary
    assert iv.extended_end == iv.end + 4


def test_two_stores_sharing_address_register_extend_once():
    fn, ivs = _prepare("""
fn main {
b0:
  li v1, 4096
  li v2, 5
  st v2 -> [v1+0]
  li v3, 6
  st v3 -> [v1+8]
  call helper
  halt
}
fn helper {
b0:
  ret
}
""")
    bset = partition_regions(fn, ivs, 16)
    fn2 = _materialized(fn, bset)
    ivs2 = preserve_store_registers(fn2, compute_live_intervals(fn2))
    iv = next(i for i in ivs2 if i.vreg == v(1))
    bpcs = boundary_pcs_of(fn2)
    pre_call = next(p for p in bpcs if p > iv.end)
    assert iv.extended_end == pre_call


def test_insert_clwb_pairs_and_is_idempotent():
    fn, _ = _prepare("""
fn main {
b0:
  li v1, 4096
  li v2, 1
  st v2 -> [v1+0]
  st v2 -> [v1+8]
  st v2 -> [v1+16]
  halt
}
""")
    once = insert_clwb(fn)
    stores = sum(1 for i in once.instructions() if i.op is Op.ST)
    clwbs = sum(1 for i in once.instructions() if i.op is Op.CLWB)
    assert stores == clwbs == 3
    assert len(list(once.instructions())) == len(list(fn.instructions())) + 3
    twice = insert_clwb(once)
    assert list(twice.instructions()) == list(once.instructions())


def test_clwb_inserted_before_terminator_stays_adjacent():
    fn, _ = _prepare("""
fn main {
b0:
  li v1, 4096
  li v2, 1
  st v2 -> [v1+0]
  jmp b1
b1:
  halt
}
""")
    out = insert_clwb(fn)
    instrs = list(out.block("b0").instrs)
    ops = [i.op for i in instrs]
    assert ops[-3:] == [Op.ST, Op.CLWB, Op.JMP]
    assert instrs[-2].args == (instrs[-3].args[1], instrs[-3].args[2])
