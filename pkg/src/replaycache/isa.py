"""Miniature RISC IR: registers, instructions, CFG containers, and the text assembly format.

Conventions fixed here and relied on everywhere downstream:

* 16 physical registers r0..r15.  r13 is the stack pointer, r14 the link
  register, r15 the region register; none of the three is ever allocated to
  program values.  Virtual registers are written ``v<N>`` before allocation.
* Instructions occupy 4 bytes; data words are 8 bytes and accesses must be
  8-byte aligned.
* Every basic block ends with a terminator (branch, jmp, ret, halt).  A
  conditional branch falls through to the next block in declaration order.
* Linearization lays out blocks entry-first then label-lexicographic, and
  functions in declaration order, assigning unique increasing PCs.

All containers are immutable values; passes build new ones.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterator, Optional, Union

PHYS_REGS = 16
WORD_BYTES = 8
INSTR_BYTES = 4

SP = 13
LR = 14
REGION_REG = 15

#: registers the allocator may hand to program values
ALLOCATABLE = tuple(range(PHYS_REGS - 3))


class AsmError(Exception):
    """Base for assembler and IR construction errors."""


class AsmSyntaxError(AsmError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class UnknownOpcode(AsmSyntaxError):
    pass


class UnresolvedLabel(AsmError):
    pass


@dataclass(frozen=True, order=True)
class Reg:
    virtual: bool
    n: int

    def __str__(self) -> str:
        return f"{'v' if self.virtual else 'r'}{self.n}"


def v(n: int) -> Reg:
    return Reg(True, n)


def r(n: int) -> Reg:
    if not 0 <= n < PHYS_REGS:
        raise AsmError(f"physical register index out of range: r{n}")
    return Reg(False, n)


Operand = Union[Reg, int, str]


class Op(Enum):
    LI = "li"
    MOV = "mov"
    ADD = "add"
    SUB = "sub"
    MUL = "mul"
    SHL = "shl"
    LD = "ld"
    ST = "st"
    CLWB = "clwb"
    BEQ = "beq"
    BNE = "bne"
    BLT = "blt"
    JMP = "jmp"
    CALL = "call"
    RET = "ret"
    RBOUNDARY = "rboundary"
    HALT = "halt"


ALU_OPS = {Op.ADD, Op.SUB, Op.MUL, Op.SHL}
BRANCH_OPS = {Op.BEQ, Op.BNE, Op.BLT}
TERMINATORS = BRANCH_OPS | {Op.JMP, Op.RET, Op.HALT}


@dataclass(frozen=True)
class Instruction:
    """One instruction.  ``pc`` is assigned by linearize and ignored by equality,
    as are the spill marker and the boundary origin tag."""

    op: Op
    args: tuple = ()
    pc: int = field(default=-1, compare=False)
    spill: bool = field(default=False, compare=False)
    origin: str = field(default="", compare=False)

    # canonical argument orders:
    #   LI(dst, imm)  MOV(dst, src)  ALU(dst, a, b_or_imm)
    #   LD(addr, off, dst)  ST(val, addr, off)  CLWB(addr, off)
    #   Bxx(a, b_or_imm, label)  JMP(label)  CALL(name)

    def defs(self) -> tuple[Reg, ...]:
        if self.op in (Op.LI, Op.MOV) or self.op in ALU_OPS:
            return (self.args[0],)
        if self.op is Op.LD:
            return (self.args[2],)
        if self.op is Op.CALL:
            return (r(LR),)
        return ()

    def uses(self) -> tuple[Reg, ...]:
        if self.op is Op.MOV:
            return (self.args[1],)
        if self.op in ALU_OPS:
            return tuple(a for a in self.args[1:] if isinstance(a, Reg))
        if self.op is Op.LD:
            return (self.args[0],)
        if self.op is Op.ST:
            return (self.args[0], self.args[1])
        if self.op is Op.CLWB:
            return (self.args[0],)
        if self.op in BRANCH_OPS:
            return tuple(a for a in self.args[:2] if isinstance(a, Reg))
        if self.op is Op.RET:
            return (r(LR),)
        return ()

    def is_terminator(self) -> bool:
        return self.op in TERMINATORS

    def format(self) -> str:
        a = self.args
        if self.op is Op.LI:
            return f"li {a[0]}, {a[1]}"
        if self.op is Op.MOV:
            return f"mov {a[0]}, {a[1]}"
        if self.op in ALU_OPS:
            return f"{self.op.value} {a[0]}, {a[1]}, {a[2]}"
        if self.op is Op.LD:
            return f"ld [{a[0]}{_off(a[1])}] -> {a[2]}"
        if self.op is Op.ST:
            return f"st {a[0]} -> [{a[1]}{_off(a[2])}]"
        if self.op is Op.CLWB:
            return f"clwb [{a[0]}{_off(a[1])}]"
        if self.op in BRANCH_OPS:
            return f"{self.op.value} {a[0]}, {a[1]}, {a[2]}"
        if self.op is Op.JMP:
            return f"jmp {a[0]}"
        if self.op is Op.CALL:
            return f"call {a[0]}"
        return self.op.value


def _off(imm: int) -> str:
    return f"+{imm}" if imm >= 0 else str(imm)


@dataclass(frozen=True)
class Violation:
    pc: int
    rule: str
    detail: str = ""


@dataclass(frozen=True)
class Block:
    label: str
    instrs: tuple[Instruction, ...]


@dataclass(frozen=True)
class Function:
    name: str
    blocks: tuple[Block, ...]
    recovery: bool = False

    @property
    def entry(self) -> Block:
        return self.blocks[0]

    def block(self, label: str) -> Block:
        for b in self.blocks:
            if b.label == label:
                return b
        raise KeyError(label)

    def decl_next(self, label: str) -> Optional[str]:
        for i, b in enumerate(self.blocks):
            if b.label == label:
                return self.blocks[i + 1].label if i + 1 < len(self.blocks) else None
        raise KeyError(label)

    def successors(self, block: Block) -> tuple[str, ...]:
        if not block.instrs:
            return ()
        last = block.instrs[-1]
        if last.op in BRANCH_OPS:
            fall = self.decl_next(block.label)
            return (last.args[2],) if fall is None else (last.args[2], fall)
        if last.op is Op.JMP:
            return (last.args[0],)
        return ()

    def predecessors(self) -> dict[str, list[str]]:
        preds: dict[str, list[str]] = {b.label: [] for b in self.blocks}
        for b in self.blocks:
            for s in self.successors(b):
                if s in preds:
                    preds[s].append(b.label)
        return preds

    def instructions(self) -> Iterator[Instruction]:
        for b in self.blocks:
            yield from b.instrs


@dataclass(frozen=True)
class Program:
    functions: tuple[Function, ...]
    data: tuple[tuple[int, int], ...] = ()  # (address, byte) pairs

    @property
    def entry_name(self) -> str:
        for f in self.functions:
            if f.name == "main":
                return f.name
        return self.functions[0].name

    def function(self, name: str) -> Function:
        for f in self.functions:
            if f.name == name:
                return f
        raise KeyError(name)

    def instructions(self) -> Iterator[Instruction]:
        for f in self.functions:
            yield from f.instructions()


def layout_blocks(fn: Function) -> list[Block]:
    """Deterministic block layout: entry first, then label-lexicographic."""
    rest = sorted((b for b in fn.blocks[1:]), key=lambda b: b.label)
    return [fn.blocks[0], *rest]


def linearize(prog: Program) -> Program:
    """Assign unique, strictly increasing PCs in canonical layout order."""
    pc = 0
    new_fns = []
    for fn in prog.functions:
        new_blocks = {}
        for blk in layout_blocks(fn):
            instrs = []
            for ins in blk.instrs:
                instrs.append(replace(ins, pc=pc))
                pc += INSTR_BYTES
            new_blocks[blk.label] = Block(blk.label, tuple(instrs))
        # preserve declaration order in the container
        new_fns.append(Function(fn.name, tuple(new_blocks[b.label] for b in fn.blocks),
                                fn.recovery))
    return Program(tuple(new_fns), prog.data)


def program_layout(prog: Program) -> list[tuple[Function, Block]]:
    out = []
    for fn in prog.functions:
        for blk in layout_blocks(fn):
            out.append((fn, blk))
    return out


def flatten(prog: Program) -> list[Instruction]:
    """Instructions in layout (PC) order; call after linearize."""
    out = []
    for _, blk in program_layout(prog):
        out.extend(blk.instrs)
    return out


# ---------------------------------------------------------------- parsing

_REG_RE = r"[vr]\d+"
_IMM_RE = r"-?(?:0x[0-9a-fA-F]+|\d+)"
_NAME_RE = r"[A-Za-z_]\w*"

_PATTERNS = {
    Op.LI: re.compile(rf"^li\s+({_REG_RE})\s*,\s*({_IMM_RE})$"),
    Op.MOV: re.compile(rf"^mov\s+({_REG_RE})\s*,\s*({_REG_RE})$"),
    "alu": re.compile(rf"^(add|sub|mul|shl)\s+({_REG_RE})\s*,\s*({_REG_RE})\s*,\s*({_REG_RE}|{_IMM_RE})$"),
    Op.LD: re.compile(rf"^ld\s+\[\s*({_REG_RE})\s*([+-]\s*{_IMM_RE})?\s*\]\s*->\s*({_REG_RE})$"),
    Op.ST: re.compile(rf"^st\s+({_REG_RE})\s*->\s*\[\s*({_REG_RE})\s*([+-]\s*{_IMM_RE})?\s*\]$"),
    Op.CLWB: re.compile(rf"^clwb\s+\[\s*({_REG_RE})\s*([+-]\s*{_IMM_RE})?\s*\]$"),
    "branch": re.compile(rf"^(beq|bne|blt)\s+({_REG_RE})\s*,\s*({_REG_RE}|{_IMM_RE})\s*,\s*({_NAME_RE})$"),
    Op.JMP: re.compile(rf"^jmp\s+({_NAME_RE})$"),
    Op.CALL: re.compile(rf"^call\s+({_NAME_RE})$"),
}

_FN_RE = re.compile(rf"^fn\s+({_NAME_RE})\s*\{{\s*(.*)$")
_LABEL_RE = re.compile(rf"^({_NAME_RE})\s*:\s*(.*)$")


def _parse_reg(tok: str) -> Reg:
    n = int(tok[1:])
    if tok[0] == "r":
        return r(n)
    return v(n)


def _parse_imm(tok: str) -> int:
    return int(tok.replace(" ", ""), 0)


def _parse_offset(tok: Optional[str]) -> int:
    if tok is None:
        return 0
    return _parse_imm(tok)


def _parse_reg_or_imm(tok: str) -> Operand:
    if tok[0] in "vr" and tok[1:].isdigit():
        return _parse_reg(tok)
    return _parse_imm(tok)


def _parse_instruction(text: str, lineno: int) -> Instruction:
    mnemonic = text.split(None, 1)[0]
    if m := _PATTERNS["alu"].match(text):
        return Instruction(Op(m.group(1)),
                           (_parse_reg(m.group(2)), _parse_reg(m.group(3)),
                            _parse_reg_or_imm(m.group(4))))
    if m := _PATTERNS["branch"].match(text):
        return Instruction(Op(m.group(1)),
                           (_parse_reg(m.group(2)), _parse_reg_or_imm(m.group(3)),
                            m.group(4)))
    for op in (Op.LI, Op.MOV, Op.LD, Op.ST, Op.CLWB, Op.JMP, Op.CALL):
        if m := _PATTERNS[op].match(text):
            g = m.groups()
            if op is Op.LI:
                return Instruction(op, (_parse_reg(g[0]), _parse_imm(g[1])))
            if op is Op.MOV:
                return Instruction(op, (_parse_reg(g[0]), _parse_reg(g[1])))
            if op is Op.LD:
                return Instruction(op, (_parse_reg(g[0]), _parse_offset(g[1]),
                                        _parse_reg(g[2])))
            if op is Op.ST:
                return Instruction(op, (_parse_reg(g[0]), _parse_reg(g[1]),
                                        _parse_offset(g[2])))
            if op is Op.CLWB:
                return Instruction(op, (_parse_reg(g[0]), _parse_offset(g[1])))
            return Instruction(op, (g[0],))
    if mnemonic in ("ret", "rboundary", "halt") and text == mnemonic:
        return Instruction(Op(mnemonic))
    if mnemonic not in {o.value for o in Op}:
        raise UnknownOpcode(lineno, f"unknown opcode {mnemonic!r}")
    raise AsmSyntaxError(lineno, f"malformed {mnemonic!r} instruction: {text!r}")


def parse_assembly(text: str) -> Program:
    """Parse the line-oriented assembly grammar into an (unlinearized) Program.

    A ``#`` starts a comment.  Labels and the function header may share a line
    with an instruction, and a closing ``}`` may trail the final instruction.
    """
    functions: list[Function] = []
    fn_name: Optional[str] = None
    blocks: list[Block] = []
    cur_label: Optional[str] = None
    cur_instrs: list[Instruction] = []

    def close_block():
        nonlocal cur_label, cur_instrs
        if cur_label is not None:
            blocks.append(Block(cur_label, tuple(cur_instrs)))
            cur_label, cur_instrs = None, []

    def close_fn(lineno: int):
        nonlocal fn_name, blocks
        close_block()
        if not blocks:
            raise AsmSyntaxError(lineno, f"function {fn_name!r} has no blocks")
        if any(f.name == fn_name for f in functions):
            raise AsmSyntaxError(lineno, f"duplicate function {fn_name!r}")
        recovery = fn_name.startswith("__rc_")
        functions.append(Function(fn_name, tuple(blocks), recovery))
        fn_name, blocks = None, []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        while line:
            if fn_name is None:
                m = _FN_RE.match(line)
                if not m:
                    raise AsmSyntaxError(lineno, f"expected 'fn NAME {{', got {line!r}")
                fn_name = m.group(1)
                line = m.group(2).strip()
                continue
            if m := _LABEL_RE.match(line):
                close_block()
                cur_label = m.group(1)
                if any(b.label == cur_label for b in blocks):
                    raise AsmSyntaxError(lineno, f"duplicate label {cur_label!r}")
                line = m.group(2).strip()
                continue
            if line == "}":
                close_fn(lineno)
                line = ""
                continue
            closing = False
            body = line
            if body.endswith("}"):
                closing = True
                body = body[:-1].strip()
            if cur_label is None:
                raise AsmSyntaxError(lineno, f"instruction before any label: {body!r}")
            if body:
                cur_instrs.append(_parse_instruction(body, lineno))
            if closing:
                close_fn(lineno)
            line = ""
    if fn_name is not None:
        raise AsmSyntaxError(len(text.splitlines()), f"unterminated function {fn_name!r}")
    if not functions:
        raise AsmSyntaxError(1, "no functions defined")
    prog = Program(tuple(functions))
    _resolve(prog)
    return prog


def _resolve(prog: Program):
    names = {f.name for f in prog.functions}
    for fn in prog.functions:
        labels = {b.label for b in fn.blocks}
        for blk in fn.blocks:
            for ins in blk.instrs:
                if ins.op in BRANCH_OPS and ins.args[2] not in labels:
                    raise UnresolvedLabel(f"{fn.name}: branch to unknown label {ins.args[2]!r}")
                if ins.op is Op.JMP and ins.args[0] not in labels:
                    raise UnresolvedLabel(f"{fn.name}: jump to unknown label {ins.args[0]!r}")
                if ins.op is Op.CALL and ins.args[0] not in names:
                    raise UnresolvedLabel(f"{fn.name}: call to unknown function {ins.args[0]!r}")


def print_assembly(prog: Program) -> str:
    """Canonical text form; parse(print(p)) == p for any valid program."""
    lines = []
    for fn in prog.functions:
        lines.append(f"fn {fn.name} {{")
        for blk in fn.blocks:
            lines.append(f"{blk.label}:")
            for ins in blk.instrs:
                lines.append(f"  {ins.format()}")
        lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- validation

def validate(prog: Program) -> list[Violation]:
    """Structural invariant check; violations are data, not exceptions."""
    out: list[Violation] = []
    names = [f.name for f in prog.functions]
    if len(set(names)) != len(names):
        out.append(Violation(-1, "duplicate-function"))
    for fn in prog.functions:
        labels = {b.label for b in fn.blocks}
        for blk in fn.blocks:
            if not blk.instrs:
                out.append(Violation(-1, "empty-block", f"{fn.name}:{blk.label}"))
                continue
            for i, ins in enumerate(blk.instrs):
                last = i == len(blk.instrs) - 1
                if ins.is_terminator() and not last:
                    out.append(Violation(ins.pc, "terminator-not-last",
                                         f"{fn.name}:{blk.label}"))
                if last and not ins.is_terminator():
                    out.append(Violation(ins.pc, "missing-terminator",
                                         f"{fn.name}:{blk.label}"))
                out.extend(_check_instr(fn, blk, i, ins, labels, set(names)))
    return out


def _check_instr(fn: Function, blk: Block, i: int, ins: Instruction,
                 labels: set, names: set) -> list[Violation]:
    out = []
    if ins.op is Op.ST:
        val, addr, off = ins.args
        if not (isinstance(val, Reg) and isinstance(addr, Reg) and isinstance(off, int)):
            out.append(Violation(ins.pc, "store-shape"))
    if ins.op is Op.CLWB:
        addr, off = ins.args
        prev = blk.instrs[i - 1] if i > 0 else None
        if prev is None or prev.op is not Op.ST or prev.args[1] != addr or prev.args[2] != off:
            out.append(Violation(ins.pc, "clwb-address-mismatch",
                                 "clwb must reuse the address of the preceding store"))
    if ins.op in BRANCH_OPS:
        if ins.args[2] not in labels:
            out.append(Violation(ins.pc, "unresolved-label", str(ins.args[2])))
        if fn.decl_next(blk.label) is None and i == len(blk.instrs) - 1:
            out.append(Violation(ins.pc, "branch-missing-fallthrough",
                                 f"{fn.name}:{blk.label}"))
    if ins.op is Op.JMP and ins.args[0] not in labels:
        out.append(Violation(ins.pc, "unresolved-label", str(ins.args[0])))
    if ins.op is Op.CALL and ins.args[0] not in names:
        out.append(Violation(ins.pc, "unresolved-function", str(ins.args[0])))
    if not fn.recovery:
        for reg in (*ins.defs(), *ins.uses()):
            if not reg.virtual and reg.n == REGION_REG:
                out.append(Violation(ins.pc, "reserved-region-register",
                                     "r15 is reserved for the region register"))
                break
    return out
