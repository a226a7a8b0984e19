"""JVM instruction decoding.

``OPCODES`` maps each opcode to its mnemonic, operand layout and a compact
stack signature used by the symbolic interpreter. Signatures read
``pops>pushes`` with one letter per value: ``I``/``F``/``A`` occupy one
stack word, ``J``/``D`` two. Opcodes whose effect depends on operands
(invokes, field access, ``ldc``, stack shuffles, ...) have ``None`` and are
handled individually by the interpreter.
"""
from __future__ import annotations

import struct
from typing import NamedTuple

__all__ = ["Instruction", "OPCODES", "UndecodableInstruction", "decode"]


class UndecodableInstruction(ValueError):
    """Bytecode contains an unknown opcode or runs past the end of the code."""


class OpInfo(NamedTuple):
    mnemonic: str
    operands: str  # struct codes after the opcode; "" for none, special cases below
    stack: str | None


def _table() -> dict[int, OpInfo]:
    t: dict[int, OpInfo] = {}

    def op(code, name, operands="", stack=""):
        t[code] = OpInfo(name, operands, stack)

    op(0x00, "nop")
    op(0x01, "aconst_null", stack=">A")
    for i, n in enumerate(["m1", "0", "1", "2", "3", "4", "5"]):
        op(0x02 + i, f"iconst_{n}", stack=">I")
    op(0x09, "lconst_0", stack=">J")
    op(0x0A, "lconst_1", stack=">J")
    for i in range(3):
        op(0x0B + i, f"fconst_{i}", stack=">F")
    op(0x0E, "dconst_0", stack=">D")
    op(0x0F, "dconst_1", stack=">D")
    op(0x10, "bipush", "b", ">I")
    op(0x11, "sipush", "h", ">I")
    op(0x12, "ldc", "B", None)
    op(0x13, "ldc_w", "H", None)
    op(0x14, "ldc2_w", "H", None)

    kinds = "ilfda"
    types = "IJFDA"
    for i, (k, ty) in enumerate(zip(kinds, types)):
        op(0x15 + i, f"{k}load", "B", None if k == "a" else ">" + ty)
        for n in range(4):
            op(0x1A + 4 * i + n, f"{k}load_{n}", "", None if k == "a" else ">" + ty)
        op(0x36 + i, f"{k}store", "B", None if k == "a" else ty + ">")
        for n in range(4):
            op(0x3B + 4 * i + n, f"{k}store_{n}", "", None if k == "a" else ty + ">")

    for i, (k, ty) in enumerate(zip("ilfdabcs", "IJFDAIII")):
        op(0x2E + i, f"{k}aload", "", "AI>" + ty)
        op(0x4F + i, f"{k}astore", "", "AI" + ty + ">")

    op(0x57, "pop", stack=None)
    op(0x58, "pop2", stack=None)
    op(0x59, "dup", stack=None)
    op(0x5A, "dup_x1", stack=None)
    op(0x5B, "dup_x2", stack=None)
    op(0x5C, "dup2", stack=None)
    op(0x5D, "dup2_x1", stack=None)
    op(0x5E, "dup2_x2", stack=None)
    op(0x5F, "swap", stack=None)

    for i, name in enumerate(["add", "sub", "mul", "div", "rem"]):
        for j, (k, ty) in enumerate(zip("ilfd", "IJFD")):
            op(0x60 + 4 * i + j, f"{k}{name}", "", ty + ty + ">" + ty)
    for j, (k, ty) in enumerate(zip("ilfd", "IJFD")):
        op(0x74 + j, f"{k}neg", "", ty + ">" + ty)
    for i, name in enumerate(["shl", "shr", "ushr"]):
        op(0x78 + 2 * i, f"i{name}", "", "II>I")
        op(0x79 + 2 * i, f"l{name}", "", "JI>J")
    for i, name in enumerate(["and", "or", "xor"]):
        op(0x7E + 2 * i, f"i{name}", "", "II>I")
        op(0x7F + 2 * i, f"l{name}", "", "JJ>J")
    op(0x84, "iinc", "Bb", "")

    conversions = ["i2l", "i2f", "i2d", "l2i", "l2f", "l2d", "f2i", "f2l", "f2d", "d2i", "d2l", "d2f"]
    for i, name in enumerate(conversions):
        src, dst = name[0].upper(), name[2].upper()
        src = {"L": "J"}.get(src, src)
        dst = {"L": "J"}.get(dst, dst)
        op(0x85 + i, name, "", src + ">" + dst)
    op(0x91, "i2b", "", "I>I")
    op(0x92, "i2c", "", "I>I")
    op(0x93, "i2s", "", "I>I")
    op(0x94, "lcmp", "", "JJ>I")
    op(0x95, "fcmpl", "", "FF>I")
    op(0x96, "fcmpg", "", "FF>I")
    op(0x97, "dcmpl", "", "DD>I")
    op(0x98, "dcmpg", "", "DD>I")

    for i, name in enumerate(["eq", "ne", "lt", "ge", "gt", "le"]):
        op(0x99 + i, f"if{name}", "h", "I>")
        op(0x9F + i, f"if_icmp{name}", "h", "II>")
    op(0xA5, "if_acmpeq", "h", "AA>")
    op(0xA6, "if_acmpne", "h", "AA>")
    op(0xA7, "goto", "h", "")
    op(0xA8, "jsr", "h", ">A")
    op(0xA9, "ret", "B", "")
    op(0xAA, "tableswitch", "", "I>")
    op(0xAB, "lookupswitch", "", "I>")
    for i, ty in enumerate("IJFDA"):
        op(0xAC + i, "ilfda"[i] + "return", "", ty + ">")
    op(0xB1, "return", "", "")
    op(0xB2, "getstatic", "H", None)
    op(0xB3, "putstatic", "H", None)
    op(0xB4, "getfield", "H", None)
    op(0xB5, "putfield", "H", None)
    op(0xB6, "invokevirtual", "H", None)
    op(0xB7, "invokespecial", "H", None)
    op(0xB8, "invokestatic", "H", None)
    op(0xB9, "invokeinterface", "HBB", None)
    op(0xBA, "invokedynamic", "HBB", None)
    op(0xBB, "new", "H", None)
    op(0xBC, "newarray", "B", "I>A")
    op(0xBD, "anewarray", "H", "I>A")
    op(0xBE, "arraylength", "", "A>I")
    op(0xBF, "athrow", "", "A>")
    op(0xC0, "checkcast", "H", None)
    op(0xC1, "instanceof", "H", "A>I")
    op(0xC2, "monitorenter", "", "A>")
    op(0xC3, "monitorexit", "", "A>")
    op(0xC4, "wide", "", None)
    op(0xC5, "multianewarray", "HB", None)
    op(0xC6, "ifnull", "h", "A>")
    op(0xC7, "ifnonnull", "h", "A>")
    op(0xC8, "goto_w", "i", "")
    op(0xC9, "jsr_w", "i", ">A")
    return t


OPCODES = _table()
BY_NAME = {info.mnemonic: code for code, info in OPCODES.items()}

CONDITIONAL_BRANCHES = frozenset(
    BY_NAME[n]
    for n in [
        "ifeq", "ifne", "iflt", "ifge", "ifgt", "ifle",
        "if_icmpeq", "if_icmpne", "if_icmplt", "if_icmpge", "if_icmpgt", "if_icmple",
        "if_acmpeq", "if_acmpne", "ifnull", "ifnonnull",
    ]
)
UNCONDITIONAL_JUMPS = frozenset(BY_NAME[n] for n in ["goto", "goto_w", "jsr", "jsr_w"])
SWITCHES = frozenset(BY_NAME[n] for n in ["tableswitch", "lookupswitch"])
TERMINATORS = frozenset(
    BY_NAME[n] for n in ["ireturn", "lreturn", "freturn", "dreturn", "areturn", "return", "athrow", "ret"]
)
BRANCHES = CONDITIONAL_BRANCHES | UNCONDITIONAL_JUMPS | SWITCHES

# Opcodes that may be prefixed by ``wide``.
_WIDENABLE = frozenset(
    BY_NAME[n]
    for n in [
        "iload", "lload", "fload", "dload", "aload",
        "istore", "lstore", "fstore", "dstore", "astore",
        "ret", "iinc",
    ]
)


class Instruction(NamedTuple):
    pc: int
    opcode: int
    operands: tuple
    length: int
    targets: tuple[int, ...] = ()  # absolute branch/switch targets

    @property
    def mnemonic(self) -> str:
        return OPCODES[self.opcode].mnemonic

    @property
    def next_pc(self) -> int:
        return self.pc + self.length


def _unpack(fmt: str, code: bytes, pos: int) -> tuple:
    try:
        return struct.unpack_from(">" + fmt, code, pos)
    except struct.error:
        raise UndecodableInstruction(f"instruction at {pos} runs past end of code") from None


def decode(code: bytes) -> list[Instruction]:
    """Decode a method's bytecode into instructions in pc order."""
    out = []
    pc = 0
    n = len(code)
    while pc < n:
        opcode = code[pc]
        info = OPCODES.get(opcode)
        if info is None:
            raise UndecodableInstruction(f"unknown opcode 0x{opcode:02x} at pc {pc}")
        if opcode == 0xC4:  # wide
            if pc + 1 >= n:
                raise UndecodableInstruction(f"truncated wide at pc {pc}")
            inner = code[pc + 1]
            if inner not in _WIDENABLE:
                raise UndecodableInstruction(f"wide cannot prefix opcode 0x{inner:02x} at pc {pc}")
            if OPCODES[inner].mnemonic == "iinc":
                operands = _unpack("Hh", code, pc + 2)
                length = 6
            else:
                operands = _unpack("H", code, pc + 2)
                length = 4
            out.append(Instruction(pc, inner, operands, length))
        elif info.mnemonic in ("tableswitch", "lookupswitch"):
            base = pc + 1 + (-(pc + 1) % 4)
            if info.mnemonic == "tableswitch":
                default, low, high = _unpack("iii", code, base)
                if high < low:
                    raise UndecodableInstruction(f"tableswitch with high < low at pc {pc}")
                offsets = _unpack("%di" % (high - low + 1), code, base + 12)
                length = base + 12 + 4 * len(offsets) - pc
                operands = (default, low, high, offsets)
            else:
                default, npairs = _unpack("ii", code, base)
                if npairs < 0:
                    raise UndecodableInstruction(f"negative lookupswitch size at pc {pc}")
                flat = _unpack("%di" % (2 * npairs), code, base + 8)
                offsets = flat[1::2]
                length = base + 8 + 8 * npairs - pc
                operands = (default, tuple(zip(flat[0::2], offsets)))
            targets = tuple(sorted({pc + default, *(pc + o for o in offsets)}))
            out.append(Instruction(pc, opcode, operands, length, targets))
        else:
            operands = _unpack(info.operands, code, pc + 1) if info.operands else ()
            length = 1 + struct.calcsize(">" + info.operands) if info.operands else 1
            targets = (pc + operands[0],) if opcode in CONDITIONAL_BRANCHES | UNCONDITIONAL_JUMPS else ()
            out.append(Instruction(pc, opcode, operands, length, targets))
        pc += out[-1].length
    return out
