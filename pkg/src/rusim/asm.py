"""Two-pass assembler, disassembler, and the RUB1 binary container.

`.rua` source: an optional `.lits` section of `name: term.` lines, then a
`.code` section with labels (`name:`) and one instruction per line; `;`
starts a comment. Literal-pool entries are deduplicated through the term
store, so two names bound to structurally equal terms share one pool slot.

`.rub` binary: magic "RUB1", u32 literal count, length-prefixed UTF-8
canonical term texts, u32 instruction count, then 64-bit little-endian
instruction words.
"""

from __future__ import annotations

import re
import struct

from .isa import (
    BANK_SIZES,
    Illegal,
    Imm,
    Instruction,
    IsaError,
    Kind,
    Lit,
    MESSAGE_KINDS,
    Opcode,
    Program,
    Reg,
    SIGNATURES,
    Target,
    check_instruction,
    decode,
    encode,
)
from .terms import TermStore, TermSyntaxError, term_text

MAGIC = b"RUB1"

_REG_RE = re.compile(r"^([BGCA])(\d+)$")
_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


class AsmError(Exception):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


def _strip(line: str) -> str:
    return line.split(";", 1)[0].strip()


def assemble(source: str, store: TermStore) -> Program:
    """Assemble `.rua` text into a Program (labels first, then encoding)."""
    lines = source.splitlines()
    literals: list = []
    lit_index: dict = {}  # term -> pool index
    lit_names: dict[str, int] = {}  # name -> pool index
    labels: dict[str, int] = {}
    code_lines: list[tuple[int, str]] = []

    section = None
    index = 0
    for lineno, raw in enumerate(lines, 1):
        line = _strip(raw)
        if not line:
            continue
        if line == ".lits":
            section = "lits"
            continue
        if line == ".code":
            section = "code"
            continue
        if section == "lits":
            if ":" not in line:
                raise AsmError("literal lines look like 'name: term.'", lineno)
            name, text = line.split(":", 1)
            name = name.strip()
            if not _NAME_RE.match(name):
                raise AsmError(f"bad literal name {name!r}", lineno)
            if name in lit_names:
                raise AsmError(f"duplicate literal name {name!r}", lineno)
            text = text.strip()
            if not text.endswith("."):
                raise AsmError("literal term must end with '.'", lineno)
            try:
                term = store.parse(text[:-1].strip())
            except TermSyntaxError as e:
                raise AsmError(f"bad literal term: {e}", lineno) from None
            idx = lit_index.get(term)
            if idx is None:
                idx = len(literals)
                literals.append(term)
                lit_index[term] = idx
            lit_names[name] = idx
        elif section == "code":
            # labels: one or more 'name:' prefixes, then optionally an instruction
            while True:
                m = re.match(r"^([A-Za-z_][A-Za-z0-9_]*):(?!-)\s*(.*)$", line)
                if not m:
                    break
                label, line = m.group(1), m.group(2).strip()
                if label in labels:
                    raise AsmError(f"duplicate label {label!r}", lineno)
                labels[label] = index
            if line:
                code_lines.append((lineno, line))
                index += 1
        else:
            raise AsmError("instructions must appear after a '.code' line", lineno)

    instructions = []
    for lineno, line in code_lines:
        parts = line.split(None, 1)
        mnemonic = parts[0].upper()
        try:
            opcode = Opcode[mnemonic]
        except KeyError:
            raise AsmError(f"unknown opcode {parts[0]!r}", lineno) from None
        operand_texts = (
            [p.strip() for p in parts[1].split(",")] if len(parts) > 1 else []
        )
        sig = SIGNATURES[opcode]
        if len(operand_texts) != len(sig):
            raise AsmError(
                f"{opcode.name} expects {len(sig)} operands, got {len(operand_texts)}",
                lineno,
            )
        operands = []
        for pos, (kind, text) in enumerate(zip(sig, operand_texts)):
            operands.append(
                _parse_operand(opcode, pos, kind, text, lit_names, labels, lineno)
            )
        instr = Instruction(opcode, tuple(operands))
        try:
            check_instruction(instr)
        except IsaError as e:
            raise AsmError(str(e), lineno) from None
        if opcode is Opcode.BELIEVE and instr.operands[1].value > 255:
            raise AsmError("BELIEVE confidence immediate must be 0..255", lineno)
        instructions.append(instr)

    program = Program(instructions=instructions, literals=literals, labels=dict(labels))
    try:
        program.validate()
    except IsaError as e:
        raise AsmError(str(e), 0) from None
    if len(instructions) > 0xFFFF or len(literals) > 0xFFFF:
        raise AsmError("program exceeds the 16-bit index space", 0)
    return program


def _parse_operand(opcode, pos, kind, text, lit_names, labels, lineno):
    if kind in (Kind.REG_B, Kind.REG_G, Kind.REG_C, Kind.REG_A, Kind.REG_BG,
                Kind.REG_BGA, Kind.REG_ANY):
        m = _REG_RE.match(text)
        if not m:
            raise AsmError(f"expected a register, got {text!r}", lineno)
        bank, idx = m.group(1), int(m.group(2))
        if idx >= BANK_SIZES[bank]:
            raise AsmError(f"bad register {text!r}: {bank} bank has "
                           f"{BANK_SIZES[bank]} registers", lineno)
        if bank not in kind.value:
            raise AsmError(
                f"{opcode.name} operand {pos + 1} must be in bank(s) {kind.value}, "
                f"got {text!r}",
                lineno,
            )
        return Reg(bank, idx)
    if kind is Kind.IMM:
        if opcode is Opcode.SEND and pos == 2 and text in MESSAGE_KINDS:
            return Imm(MESSAGE_KINDS.index(text))
        try:
            value = int(text, 0)
        except ValueError:
            raise AsmError(f"expected an immediate, got {text!r}", lineno) from None
        if not (0 <= value <= 0xFFFF):
            raise AsmError(f"immediate {value} out of range 0..65535", lineno)
        return Imm(value)
    if kind is Kind.LIT:
        idx = lit_names.get(text)
        if idx is None:
            raise AsmError(f"unknown literal {text!r}", lineno)
        return Lit(idx)
    if kind is Kind.LABEL:
        idx = labels.get(text)
        if idx is None:
            raise AsmError(f"unresolved label {text!r}", lineno)
        return Target(idx)
    raise AsmError(f"bad operand kind {kind}", lineno)


def disassemble(program: Program) -> str:
    """Text that re-assembles to a structurally identical Program."""
    lines = []
    if program.literals:
        lines.append(".lits")
        for i, term in enumerate(program.literals):
            lines.append(f"lit{i}: {term_text(term)}.")
    lines.append(".code")
    targets = sorted(
        {
            op.index
            for instr in program.instructions
            for op in instr.operands
            if isinstance(op, Target)
        }
    )
    label_at = {idx: f"L{idx}" for idx in targets}
    for idx, instr in enumerate(program.instructions):
        if idx in label_at:
            lines.append(f"{label_at[idx]}:")
        ops = []
        for pos, op in enumerate(instr.operands):
            if isinstance(op, Reg):
                ops.append(f"{op.bank}{op.index}")
            elif isinstance(op, Lit):
                ops.append(f"lit{op.index}")
            elif isinstance(op, Target):
                ops.append(label_at[op.index])
            elif instr.opcode is Opcode.SEND and pos == 2 and op.value < len(MESSAGE_KINDS):
                ops.append(MESSAGE_KINDS[op.value])
            else:
                ops.append(str(op.value))
        lines.append("  " + instr.opcode.name + ("  " + ", ".join(ops) if ops else ""))
    return "\n".join(lines) + "\n"


def save_rub(program: Program) -> bytes:
    out = [MAGIC, struct.pack("<I", len(program.literals))]
    for term in program.literals:
        text = term_text(term).encode("utf-8")
        out.append(struct.pack("<I", len(text)))
        out.append(text)
    words = program.words()
    out.append(struct.pack("<I", len(words)))
    for w in words:
        out.append(struct.pack("<Q", w))
    return b"".join(out)


class RubFormatError(Exception):
    pass


def load_rub(data: bytes, store: TermStore) -> Program:
    if data[:4] != MAGIC:
        raise RubFormatError("bad magic; not a RUB1 binary")
    off = 4

    def take(fmt):
        nonlocal off
        size = struct.calcsize(fmt)
        if off + size > len(data):
            raise RubFormatError("truncated binary")
        out = struct.unpack_from(fmt, data, off)
        off += size
        return out

    (nlits,) = take("<I")
    literals = []
    for _ in range(nlits):
        (length,) = take("<I")
        if off + length > len(data):
            raise RubFormatError("truncated literal pool")
        text = data[off : off + length].decode("utf-8")
        off += length
        try:
            literals.append(store.parse(text))
        except TermSyntaxError as e:
            raise RubFormatError(f"bad literal in pool: {e}") from None
    (ninstr,) = take("<I")
    instructions = []
    for i in range(ninstr):
        (word,) = take("<Q")
        instr = decode(word)
        if isinstance(instr, Illegal):
            raise RubFormatError(f"illegal instruction word at index {i}")
        instructions.append(instr)
    if off != len(data):
        raise RubFormatError("trailing bytes after code block")
    program = Program(instructions=instructions, literals=literals)
    try:
        program.validate()
    except IsaError as e:
        raise RubFormatError(str(e)) from None
    return program
