import pytest

from replaycache import isa
from replaycache.isa import (AsmSyntaxError, Instruction, Op, UnknownOpcode,
                             UnresolvedLabel, flatten, linearize,
                             parse_assembly, print_assembly, r, v, validate)


def test_minimal_program_parses():
    p = parse_assembly("fn main { entry: li r1, 5 \n halt }")
    assert len(p.functions) == 1
    fn = p.functions[0]
    assert fn.name == "main"
    assert [i.op for i in fn.instructions()] == [Op.LI, Op.HALT]


def test_store_grammar_shape():
    p = parse_assembly("fn main { b0:\n st r1 -> [r2+4]\n clwb [r2+4]\n halt\n}")
    st = p.functions[0].entry.instrs[0]
    assert st.op is Op.ST
    assert st.args == (r(1), r(2), 4)


def test_negative_offset_and_hex_imm():
    p = parse_assembly("fn main { b0:\n li v1, 0x10\n st v1 -> [r13-8]\n halt\n}")
    li, st, _ = p.functions[0].entry.instrs
    assert li.args[1] == 16
    assert st.args[2] == -8


def test_roundtrip_identity(corpus_sources):
    for name, src in corpus_sources.items():
        p = parse_assembly(src)
        assert parse_assembly(print_assembly(p)) == p, name


def test_roundtrip_survives_linearization(fig5_source):
    p = parse_assembly(fig5_source)
    lp = linearize(p)
    assert parse_assembly(print_assembly(lp)) == p  # pc is not part of equality


def test_linearize_assigns_4_byte_pcs():
    p = linearize(parse_assembly("fn main { b0: li r1, 5 \n halt }"))
    assert [i.pc for i in flatten(p)] == [0, 4]


def test_linearize_diamond_layout_order(fig5_source):
    p = linearize(parse_assembly(fig5_source))
    labels = [blk.label for _, blk in isa.program_layout(p)]
    assert labels == ["b_a", "b_b", "b_c", "b_d"]


def test_linearize_canonical_under_block_permutation(fig5_source):
    # declaring blocks in a different order must not move any instruction
    shuffled = """
fn main {
b_a:
  li v1, 10
  li v2, 20
  bne v1, v2, b_c
b_d:
  li v3, 1
  st v3 -> [r13-24]
  halt
b_c:
  st v1 -> [r13-16]
  jmp b_d
b_b:
  st v2 -> [r13-8]
  jmp b_d
}
"""
    a = {i.format(): i.pc for i in flatten(linearize(parse_assembly(fig5_source)))}
    b = {i.format(): i.pc for i in flatten(linearize(parse_assembly(shuffled)))}
    assert a == b


def test_unknown_opcode():
    with pytest.raises(UnknownOpcode):
        parse_assembly("fn main { b0: frobnicate r1 \n halt }")


def test_syntax_error_carries_line():
    with pytest.raises(AsmSyntaxError) as err:
        parse_assembly("fn main { b0:\n li r1 5\n halt }")
    assert err.value.line == 2


def test_unresolved_label():
    with pytest.raises(UnresolvedLabel):
        parse_assembly("fn main { b0: jmp nowhere \n halt }")
    with pytest.raises(UnresolvedLabel):
        parse_assembly("fn main { b0: call missing \n halt }")


def test_validate_clwb_must_match_preceding_store():
    p = linearize(parse_assembly(
        "fn main { b0:\n st r1 -> [r2+4]\n clwb [r2+8]\n halt\n}"))
    rules = [x.rule for x in validate(p)]
    assert "clwb-address-mismatch" in rules


def test_validate_clean_on_corpus(corpus_sources):
    for name, src in corpus_sources.items():
        assert validate(linearize(parse_assembly(src))) == [], name


def test_validate_terminator_must_be_last():
    from replaycache.isa import Block, Function, Program
    blk = Block("b0", (Instruction(Op.JMP, ("b0",)), Instruction(Op.HALT)))
    p = linearize(Program((Function("main", (blk,)),)))
    rules = [x.rule for x in validate(p)]
    assert "terminator-not-last" in rules


def test_validate_reserved_region_register():
    p = linearize(parse_assembly("fn main { b0:\n li r15, 1\n halt\n}"))
    assert any(x.rule == "reserved-region-register" for x in validate(p))


def test_physical_register_range():
    with pytest.raises(Exception):
        parse_assembly("fn main { b0: li r16, 1 \n halt }")
