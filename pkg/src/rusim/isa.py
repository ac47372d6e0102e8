"""The cognitive instruction set: opcodes, operand signatures, register
banks, and the fixed-width 64-bit codec.

Word layout (little-endian): byte 0 opcode, bytes 1-3 operand descriptors,
bytes 4-7 two 16-bit payload slots. A register descriptor packs the bank in
the high nibble and the register index in the low nibble; immediate, literal
and branch-target descriptors put their payload-slot number in the low
nibble. decode(encode(i)) == i for every legal instruction, and any
non-canonical word decodes to the explicit Illegal value.
"""

from __future__ import annotations

import enum
import hashlib
import struct
from dataclasses import dataclass, field
from typing import Optional, Union

from .terms import Term, term_text


class Opcode(enum.IntEnum):
    PERCEIVE = 0x01
    INFER = 0x02
    UNIFY = 0x03
    PLAN = 0x04
    BELIEVE = 0x05
    COMMIT = 0x06
    LOADT = 0x07
    MOV = 0x08
    GPUSH = 0x09
    GPOP = 0x0A
    NEXT = 0x0B
    BRS = 0x0C
    BRK = 0x0D
    JMP = 0x0E
    SEND = 0x0F
    RECV = 0x10
    NEURAL = 0x11
    YIELD = 0x12
    HALT = 0x13


BANK_SIZES = {"B": 16, "G": 8, "C": 4, "A": 8}
_BANK_CODE = {"B": 1, "G": 2, "C": 3, "A": 4}
_CODE_BANK = {v: k for k, v in _BANK_CODE.items()}
_KIND_IMM = 5
_KIND_LIT = 6
_KIND_TARGET = 7


class Kind(enum.Enum):
    """Operand kinds used by the per-opcode signature table."""

    REG_B = "B"
    REG_G = "G"
    REG_C = "C"
    REG_A = "A"
    REG_BG = "BG"
    REG_BGA = "BGA"
    REG_ANY = "BGCA"
    IMM = "imm"
    LIT = "lit"
    LABEL = "label"


# exactly one signature per opcode; enforced at assemble and decode time
SIGNATURES: dict[Opcode, tuple[Kind, ...]] = {
    Opcode.PERCEIVE: (Kind.REG_B, Kind.IMM, Kind.LIT),
    Opcode.INFER: (Kind.REG_B, Kind.REG_B),
    Opcode.UNIFY: (Kind.REG_C, Kind.REG_B, Kind.REG_B),
    Opcode.PLAN: (Kind.REG_A, Kind.REG_G),
    Opcode.BELIEVE: (Kind.REG_B, Kind.IMM),
    Opcode.COMMIT: (Kind.REG_A,),
    Opcode.LOADT: (Kind.REG_BG, Kind.LIT),
    Opcode.MOV: (Kind.REG_ANY, Kind.REG_ANY),
    Opcode.GPUSH: (Kind.REG_G, Kind.IMM),
    Opcode.GPOP: (Kind.REG_G,),
    Opcode.NEXT: (Kind.REG_B,),
    Opcode.BRS: (Kind.LABEL,),
    Opcode.BRK: (Kind.LABEL,),
    Opcode.JMP: (Kind.LABEL,),
    Opcode.SEND: (Kind.IMM, Kind.REG_BGA, Kind.IMM),
    Opcode.RECV: (Kind.REG_B,),
    Opcode.NEURAL: (Kind.REG_B, Kind.REG_B, Kind.REG_B),
    Opcode.YIELD: (),
    Opcode.HALT: (),
}

# SEND message kinds, encoded in the third operand
MESSAGE_KINDS = ("belief", "goal", "action", "contract")

# MOV may cross between the two term-holding banks, otherwise same-bank only
_MOV_COMPAT = {("B", "B"), ("G", "G"), ("C", "C"), ("A", "A"), ("B", "G"), ("G", "B")}


@dataclass(frozen=True)
class Reg:
    bank: str
    index: int

    def __repr__(self):
        return f"{self.bank}{self.index}"


@dataclass(frozen=True)
class Imm:
    value: int

    def __repr__(self):
        return str(self.value)


@dataclass(frozen=True)
class Lit:
    index: int

    def __repr__(self):
        return f"lit:{self.index}"


@dataclass(frozen=True)
class Target:
    index: int

    def __repr__(self):
        return f"@{self.index}"


Operand = Union[Reg, Imm, Lit, Target]


@dataclass(frozen=True)
class Instruction:
    opcode: Opcode
    operands: tuple = ()

    def __repr__(self):
        if not self.operands:
            return self.opcode.name
        return "%s %s" % (self.opcode.name, ", ".join(map(repr, self.operands)))


@dataclass(frozen=True)
class Illegal:
    """Explicit illegal-instruction value produced by decode()."""

    word: int

    def __repr__(self):
        return f"ILLEGAL(0x{self.word:016x})"


class IsaError(Exception):
    pass


def kind_accepts(kind: Kind, operand: Operand) -> bool:
    if kind in (Kind.IMM,):
        return isinstance(operand, Imm)
    if kind is Kind.LIT:
        return isinstance(operand, Lit)
    if kind is Kind.LABEL:
        return isinstance(operand, Target)
    if not isinstance(operand, Reg):
        return False
    return operand.bank in kind.value and 0 <= operand.index < BANK_SIZES[operand.bank]


def check_instruction(instr: Instruction):
    sig = SIGNATURES.get(instr.opcode)
    if sig is None:
        raise IsaError(f"unknown opcode: {instr.opcode!r}")
    if len(sig) != len(instr.operands):
        raise IsaError(
            f"{instr.opcode.name} expects {len(sig)} operands, got {len(instr.operands)}"
        )
    for kind, op in zip(sig, instr.operands):
        if not kind_accepts(kind, op):
            raise IsaError(f"{instr.opcode.name}: operand {op!r} does not fit {kind}")
        if isinstance(op, (Imm, Lit, Target)):
            value = op.value if isinstance(op, Imm) else op.index
            if not (0 <= value <= 0xFFFF):
                raise IsaError(f"{instr.opcode.name}: operand value {value} out of range")
    if instr.opcode is Opcode.MOV:
        d, s = instr.operands
        if (d.bank, s.bank) not in _MOV_COMPAT:
            raise IsaError(f"MOV between incompatible banks {d.bank} and {s.bank}")


def encode(instr: Instruction) -> int:
    """Encode a legal instruction into its canonical 64-bit word."""
    check_instruction(instr)
    descriptors = [0, 0, 0]
    slots = [0, 0]
    slot = 0
    for i, op in enumerate(instr.operands):
        if isinstance(op, Reg):
            descriptors[i] = (_BANK_CODE[op.bank] << 4) | op.index
        else:
            if isinstance(op, Imm):
                kind_code, value = _KIND_IMM, op.value
            elif isinstance(op, Lit):
                kind_code, value = _KIND_LIT, op.index
            else:
                kind_code, value = _KIND_TARGET, op.index
            descriptors[i] = (kind_code << 4) | slot
            slots[slot] = value
            slot += 1
    word = int(instr.opcode)
    word |= descriptors[0] << 8
    word |= descriptors[1] << 16
    word |= descriptors[2] << 24
    word |= slots[0] << 32
    word |= slots[1] << 48
    return word


def decode(word: int) -> Union[Instruction, Illegal]:
    """Decode a 64-bit word; non-canonical words yield Illegal."""
    if not (0 <= word < 1 << 64):
        return Illegal(word)
    opbyte = word & 0xFF
    try:
        opcode = Opcode(opbyte)
    except ValueError:
        return Illegal(word)
    sig = SIGNATURES[opcode]
    descriptors = [(word >> 8) & 0xFF, (word >> 16) & 0xFF, (word >> 24) & 0xFF]
    slots = [(word >> 32) & 0xFFFF, (word >> 48) & 0xFFFF]
    operands = []
    next_slot = 0
    used_slots = 0
    for i in range(3):
        desc = descriptors[i]
        if i >= len(sig):
            if desc != 0:
                return Illegal(word)
            continue
        kind = sig[i]
        code = desc >> 4
        low = desc & 0x0F
        if kind in (Kind.IMM, Kind.LIT, Kind.LABEL):
            want = {Kind.IMM: _KIND_IMM, Kind.LIT: _KIND_LIT, Kind.LABEL: _KIND_TARGET}[kind]
            if code != want or low != next_slot:
                return Illegal(word)
            value = slots[low]
            operands.append(
                Imm(value) if kind is Kind.IMM else Lit(value) if kind is Kind.LIT else Target(value)
            )
            next_slot += 1
            used_slots += 1
        else:
            bank = _CODE_BANK.get(code)
            if bank is None or bank not in kind.value or low >= BANK_SIZES[bank]:
                return Illegal(word)
            operands.append(Reg(bank, low))
    for s in range(used_slots, 2):
        if slots[s] != 0:
            return Illegal(word)
    instr = Instruction(opcode, tuple(operands))
    try:
        check_instruction(instr)
    except IsaError:
        return Illegal(word)
    return instr


@dataclass
class Program:
    """Assembled code plus its deduplicated term-literal pool."""

    instructions: list = field(default_factory=list)
    literals: list = field(default_factory=list)  # Terms, hash-consed
    labels: dict = field(default_factory=dict)  # name -> instruction index
    entry: int = 0

    def validate(self):
        n = len(self.instructions)
        for idx, instr in enumerate(self.instructions):
            if isinstance(instr, Illegal):
                raise IsaError(f"instruction {idx} is illegal")
            check_instruction(instr)
            for op in instr.operands:
                if isinstance(op, Target) and not (0 <= op.index < n):
                    raise IsaError(f"instruction {idx}: branch target {op.index} out of range")
                if isinstance(op, Lit) and not (0 <= op.index < len(self.literals)):
                    raise IsaError(f"instruction {idx}: literal index {op.index} out of range")

    def words(self) -> list[int]:
        return [encode(i) for i in self.instructions]

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for w in self.words():
            h.update(struct.pack("<Q", w))
        for lit in self.literals:
            h.update(term_text(lit).encode("utf-8"))
            h.update(b"\x00")
        return h.hexdigest()

    def uses_opcode(self, *opcodes) -> bool:
        wanted = set(opcodes)
        return any(i.opcode in wanted for i in self.instructions)
