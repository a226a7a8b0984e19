"""Type-usage extraction from method bytecode.

Each basic block is interpreted once, in pc order, over a symbolic operand
stack whose entries remember where a value came from (a local slot, a field
of ``this``, a ``new`` site, ...). Receiver-taking invokes whose receiver
has a known origin are recorded against that variable. The stack starts
empty at every block entry (a single unknown value at exception handlers);
values that flow across blocks degrade to ``Unknown`` and are never
attributed to the wrong variable.
"""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import NamedTuple, Union

from .classfile import (
    ClassFile,
    CodeBody,
    LocalVariable,
    MalformedClassFile,
    MethodInfo,
    descriptor_class_name,
    parse_descriptor,
    type_width,
)
from .opcodes import (
    BRANCHES,
    OPCODES,
    SWITCHES,
    TERMINATORS,
    Instruction,
    UndecodableInstruction,
    decode,
)

__all__ = [
    "ExtractConfig",
    "ExtractStats",
    "TypeUsageInstance",
    "UndecodableInstruction",
    "call_name",
    "extract_class",
    "render_call",
    "simulate_method",
    "split_basic_blocks",
]

log = logging.getLogger(__name__)

FIELDS_SCOPE = "<fields>"
KINDS = ("local", "param", "field", "temp")


def render_call(name: str, descriptor: str) -> str:
    """Canonical call rendering: name immediately followed by descriptor."""
    return name + descriptor


def call_name(call: str) -> str:
    return call[: call.index("(")]


@dataclass(frozen=True)
class ExtractConfig:
    include_this: bool = False
    include_temps: bool = False


@dataclass
class ExtractStats:
    classes: int = 0
    methods: int = 0
    methods_skipped: int = 0
    instances: int = 0


@dataclass(frozen=True)
class TypeUsageInstance:
    project_id: str
    class_name: str
    enclosing_method: str
    kind: str
    variable_id: str
    receiver_type: str
    type_inferred: bool
    calls: tuple[str, ...]

    def __post_init__(self):
        if not self.calls:
            raise ValueError("a type-usage needs at least one call")
        if self.kind not in KINDS:
            raise ValueError(f"unknown variable kind {self.kind!r}")
        if list(self.calls) != sorted(set(self.calls)):
            object.__setattr__(self, "calls", tuple(sorted(set(self.calls))))

    def to_record(self) -> dict:
        return {
            "jar": self.project_id,
            "class": self.class_name,
            "method": self.enclosing_method,
            "kind": self.kind,
            "var": self.variable_id,
            "type": self.receiver_type,
            "typeInferred": self.type_inferred,
            "calls": list(self.calls),
        }


# -- symbolic values ---------------------------------------------------------

class LocalSlot(NamedTuple):
    slot: int
    variable: LocalVariable | None  # debug-info entry live at the load, if any
    width: int = 1


class FieldRef(NamedTuple):
    owner: str
    name: str
    descriptor: str
    width: int = 1


class NewSite(NamedTuple):
    pc: int
    class_name: str
    width: int = 1


class ReturnValue(NamedTuple):
    width: int = 1


class Constant(NamedTuple):
    width: int = 1


class Unknown(NamedTuple):
    width: int = 1


ValueOrigin = Union[LocalSlot, FieldRef, NewSite, ReturnValue, Constant, Unknown]


# -- basic blocks ------------------------------------------------------------

def _leaders(instructions: list[Instruction], code: CodeBody) -> set[int]:
    end = len(code.bytecode)
    boundaries = {ins.pc for ins in instructions}
    leaders = {0}
    for ins in instructions:
        if ins.opcode in BRANCHES or ins.opcode in TERMINATORS:
            for target in ins.targets:
                if target not in boundaries:
                    raise UndecodableInstruction(f"branch at pc {ins.pc} targets {target}, not an instruction")
                leaders.add(target)
            if ins.next_pc < end:
                leaders.add(ins.next_pc)
    for handler in code.exception_handlers:
        if handler.handler_pc not in boundaries:
            raise UndecodableInstruction(f"exception handler pc {handler.handler_pc} is not an instruction")
        leaders.add(handler.handler_pc)
    return leaders


def split_basic_blocks(code: CodeBody) -> list[tuple[int, int]]:
    """Partition bytecode into basic blocks as ``(start_pc, end_pc)``, end exclusive.

    A block starts at pc 0, at every branch or switch target, after every
    branch, return or throw, and at every exception-handler entry.
    """
    instructions = decode(code.bytecode)
    starts = sorted(_leaders(instructions, code))
    ends = starts[1:] + [len(code.bytecode)]
    return [(s, e) for s, e in zip(starts, ends) if s < e]


# -- interpretation ----------------------------------------------------------

_CONSTANT_OPS = frozenset(
    code
    for code, info in OPCODES.items()
    if "const" in info.mnemonic or info.mnemonic in ("bipush", "sipush")
)
_ALOAD = {code: int(info.mnemonic[-1]) for code, info in OPCODES.items() if info.mnemonic.startswith("aload_")}
_ALOAD[0x19] = None
_ASTORE = {code: int(info.mnemonic[-1]) for code, info in OPCODES.items() if info.mnemonic.startswith("astore_")}
_ASTORE[0x3A] = None
_RECEIVER_INVOKES = frozenset((0xB6, 0xB7, 0xB9))  # virtual, special, interface
_SHUFFLES = {
    # mnemonic -> (words duplicated from the top, words they are inserted below)
    "dup": (1, 0),
    "dup_x1": (1, 1),
    "dup_x2": (1, 2),
    "dup2": (2, 0),
    "dup2_x1": (2, 1),
    "dup2_x2": (2, 2),
}
_WIDTH = {"I": 1, "F": 1, "A": 1, "J": 2, "D": 2}


def _split_signature(sig: str) -> tuple[tuple[int, ...], tuple[int, ...]]:
    pops, _, pushes = sig.partition(">")
    return tuple(_WIDTH[c] for c in pops), tuple(_WIDTH[c] for c in pushes)


_GENERIC = {code: _split_signature(info.stack) for code, info in OPCODES.items() if info.stack is not None}


@dataclass
class _Variable:
    calls: set[str] = field(default_factory=set)
    owners: Counter = field(default_factory=Counter)
    first_pc: int = -1

    def record(self, call: str, owner: str, pc: int) -> None:
        self.calls.add(call)
        self.owners[owner] += 1
        if self.first_pc < 0 or pc < self.first_pc:
            self.first_pc = pc

    def absorb(self, other: _Variable) -> None:
        self.calls |= other.calls
        self.owners.update(other.owners)
        if other.first_pc >= 0 and (self.first_pc < 0 or other.first_pc < self.first_pc):
            self.first_pc = other.first_pc


class _MethodSimulation:
    def __init__(self, cls: ClassFile, method: MethodInfo):
        if method.code is None:
            raise ValueError(f"{method.signature} has no code")
        self.cls = cls
        self.method = method
        self.code = method.code
        self.is_instance = not method.is_static
        desc = parse_descriptor(method.descriptor)
        self.param_types: dict[int, str] = {}
        slot = 0
        if self.is_instance:
            self.param_types[0] = "L" + cls.binary_name + ";"
            slot = 1
        for ptype in desc.param_types:
            self.param_types[slot] = ptype
            slot += type_width(ptype)
        self.first_local = slot

        self.lvt: dict[int, list[LocalVariable]] = {}
        for entry in method.local_variable_table or ():
            self.lvt.setdefault(entry.slot, []).append(entry)

        # variable key -> accumulated calls. Keys: ("slot", slot, lvt entry),
        # ("field", name, descriptor), ("new", pc, class name).
        self.variables: dict[tuple, _Variable] = {}
        self.stored_sites: dict[tuple, tuple] = {}  # new-site key -> last variable bound

    # stack helpers

    @staticmethod
    def _pop_words(stack: list, words: int) -> list:
        """Pop entries totalling ``words`` stack words; returned bottom-first."""
        taken = []
        total = 0
        while total < words:
            entry = stack.pop() if stack else Unknown()
            taken.append(entry)
            total += entry.width
        taken.reverse()
        return taken

    def _pop(self, stack: list, width: int = 1):
        entries = self._pop_words(stack, width)
        return entries[-1] if len(entries) == 1 else Unknown(width)

    def _variable_at(self, slot: int, *pcs: int) -> LocalVariable | None:
        for pc in pcs:
            for entry in self.lvt.get(slot, ()):
                if entry.covers(pc):
                    return entry
        return None

    def _var(self, key: tuple) -> _Variable:
        var = self.variables.get(key)
        if var is None:
            var = self.variables[key] = _Variable()
        return var

    def _receiver_key(self, origin) -> tuple | None:
        if isinstance(origin, LocalSlot):
            return ("slot", origin.slot, origin.variable)
        if isinstance(origin, FieldRef):
            return ("field", origin.name, origin.descriptor)
        if isinstance(origin, NewSite):
            key = ("new", origin.pc, origin.class_name)
            return self.stored_sites.get(key, key)
        return None

    def run(self) -> None:
        instructions = decode(self.code.bytecode)
        handlers = {h.handler_pc for h in self.code.exception_handlers}
        leaders = _leaders(instructions, self.code)
        stack: list = []
        for ins in instructions:
            if ins.pc in leaders:
                stack = [Unknown()] if ins.pc in handlers else []
            self._step(ins, stack)

    def _step(self, ins: Instruction, stack: list) -> None:
        op = ins.opcode
        generic = _GENERIC.get(op)
        if generic is not None:
            pops, pushes = generic
            for width in reversed(pops):
                self._pop_words(stack, width)
            make = Constant if op in _CONSTANT_OPS else Unknown
            stack.extend(make(w) for w in pushes)
            return

        if op in _ALOAD:
            slot = _ALOAD[op] if _ALOAD[op] is not None else ins.operands[0]
            stack.append(LocalSlot(slot, self._variable_at(slot, ins.pc)))
            return
        if op in _ASTORE:
            slot = _ASTORE[op] if _ASTORE[op] is not None else ins.operands[0]
            value = self._pop(stack)
            if isinstance(value, NewSite):
                self._bind_new_site(value, slot, ins)
            return

        name = OPCODES[op].mnemonic
        if name in ("ldc", "ldc_w"):
            stack.append(Constant())
        elif name == "ldc2_w":
            stack.append(Constant(2))
        elif name in ("invokevirtual", "invokespecial", "invokeinterface", "invokestatic"):
            self._invoke(ins, stack)
        elif name == "invokedynamic":
            _, descriptor = self.cls.dynamic_ref(ins.operands[0])
            desc = parse_descriptor(descriptor)
            for width in reversed(desc.param_widths):
                self._pop_words(stack, width)
            if desc.return_width:
                stack.append(Unknown(desc.return_width))
        elif name == "getfield":
            owner, fname, fdesc = self.cls.member_ref(ins.operands[0])
            receiver = self._pop(stack)
            width = type_width(fdesc)
            if (
                self.is_instance
                and isinstance(receiver, LocalSlot)
                and receiver.slot == 0
                and fdesc[0] in "L["
            ):
                declared = self.cls.field_descriptor(fname) or fdesc
                stack.append(FieldRef(self.cls.binary_name, fname, declared))
            else:
                stack.append(Unknown(width))
        elif name == "putfield":
            _, _, fdesc = self.cls.member_ref(ins.operands[0])
            self._pop_words(stack, type_width(fdesc))
            self._pop(stack)
        elif name == "getstatic":
            _, _, fdesc = self.cls.member_ref(ins.operands[0])
            stack.append(Unknown(type_width(fdesc)))
        elif name == "putstatic":
            _, _, fdesc = self.cls.member_ref(ins.operands[0])
            self._pop_words(stack, type_width(fdesc))
        elif name == "new":
            stack.append(NewSite(ins.pc, self.cls.class_name(ins.operands[0])))
        elif name == "checkcast":
            self.cls.class_name(ins.operands[0])
            stack.append(self._pop(stack))
        elif name == "multianewarray":
            self._pop_words(stack, ins.operands[1])
            stack.append(Unknown())
        elif name == "pop":
            self._pop_words(stack, 1)
        elif name == "pop2":
            self._pop_words(stack, 2)
        elif name == "swap":
            top = self._pop_words(stack, 1)
            below = self._pop_words(stack, 1)
            stack.extend(top + below)
        elif name in _SHUFFLES:
            copied, depth = _SHUFFLES[name]
            top = self._pop_words(stack, copied)
            below = self._pop_words(stack, depth)
            stack.extend(top + below + top)
        else:  # pragma: no cover - every opcode is handled above
            raise UndecodableInstruction(f"no stack model for {name} at pc {ins.pc}")

    def _invoke(self, ins: Instruction, stack: list) -> None:
        owner, mname, descriptor = self.cls.member_ref(ins.operands[0])
        desc = parse_descriptor(descriptor)
        for width in reversed(desc.param_widths):
            self._pop_words(stack, width)
        if ins.opcode in _RECEIVER_INVOKES:
            receiver = self._pop(stack)
            key = self._receiver_key(receiver)
            if key is not None:
                self._var(key).record(render_call(mname, descriptor), owner, ins.pc)
        if desc.return_width:
            stack.append(ReturnValue(desc.return_width))

    def _bind_new_site(self, site: NewSite, slot: int, ins: Instruction) -> None:
        site_key = ("new", site.pc, site.class_name)
        target = ("slot", slot, self._variable_at(slot, ins.next_pc, ins.pc))
        pending = self.variables.pop(site_key, None)
        if pending is not None:
            self._var(target).absorb(pending)
        elif site_key in self.stored_sites:
            # stored twice (x = y = new T()): both variables saw the constructor
            previous = self.variables.get(self.stored_sites[site_key])
            if previous is not None:
                self._var(target).calls |= {c for c in previous.calls if c.startswith("<init>")}
        self.stored_sites[site_key] = target

    # results

    def instances(self, config: ExtractConfig, project_id: str) -> list[TypeUsageInstance]:
        out = []
        method_id = self.method.signature
        for key, var in sorted(self.variables.items(), key=lambda kv: (kv[1].first_pc, _key_order(kv[0]))):
            if not var.calls:
                continue
            kind_tag = key[0]
            if kind_tag == "slot":
                slot, entry = key[1], key[2]
                if self.is_instance and slot == 0 and not config.include_this:
                    continue
                kind = "param" if slot < self.first_local else "local"
                if entry is not None:
                    var_id = f"{slot}:{entry.name}@{entry.start_pc}-{entry.start_pc + entry.length}"
                    rtype, inferred = descriptor_class_name(entry.descriptor), False
                elif slot in self.param_types and slot < self.first_local:
                    var_id = str(slot)
                    rtype, inferred = descriptor_class_name(self.param_types[slot]), False
                else:
                    var_id = str(slot)
                    rtype, inferred = _plurality_owner(var.owners), True
                out.append(
                    TypeUsageInstance(
                        project_id, self.cls.binary_name, method_id, kind, var_id,
                        rtype, inferred, tuple(sorted(var.calls)),
                    )
                )
            elif kind_tag == "field":
                out.append(
                    TypeUsageInstance(
                        project_id, self.cls.binary_name, FIELDS_SCOPE, "field", key[1],
                        descriptor_class_name(key[2]), False, tuple(sorted(var.calls)),
                    )
                )
            elif kind_tag == "new" and config.include_temps:
                out.append(
                    TypeUsageInstance(
                        project_id, self.cls.binary_name, method_id, "temp", f"new@{key[1]}",
                        key[2], False, tuple(sorted(var.calls)),
                    )
                )
        return out


def _key_order(key: tuple) -> tuple:
    tag, first = key[0], key[1]
    entry = key[2] if tag == "slot" else None
    return (tag, str(first), entry.start_pc if entry is not None else -1)


def _plurality_owner(owners: Counter) -> str:
    best = max(owners.values())
    return min(owner for owner, n in owners.items() if n == best)


def simulate_method(
    cls: ClassFile, method: MethodInfo, config: ExtractConfig = ExtractConfig(), project_id: str = ""
) -> list[TypeUsageInstance]:
    """Extract the type-usages of one code-bearing method.

    Field-keyed records are returned per method; ``extract_class`` merges
    them class-wide. Raises ``UndecodableInstruction`` on bytecode the
    decoder cannot handle.
    """
    sim = _MethodSimulation(cls, method)
    sim.run()
    return sim.instances(config, project_id)


def extract_class(
    cls: ClassFile,
    project_id: str = "",
    config: ExtractConfig = ExtractConfig(),
    stats: ExtractStats | None = None,
) -> list[TypeUsageInstance]:
    """Extract all type-usages of a class.

    Locals and parameters are scoped to their method; calls on fields of
    ``this`` are pooled over the whole class into one instance per field.
    Methods that fail to decode are skipped and counted in ``stats``.
    """
    stats = stats if stats is not None else ExtractStats()
    stats.classes += 1
    per_method: list[TypeUsageInstance] = []
    fields: dict[str, TypeUsageInstance] = {}
    for method in cls.methods:
        if method.code is None:
            continue
        stats.methods += 1
        try:
            found = simulate_method(cls, method, config, project_id)
        except (UndecodableInstruction, MalformedClassFile) as exc:
            log.warning("skipping %s.%s: %s", cls.binary_name, method.signature, exc)
            stats.methods_skipped += 1
            continue
        for inst in found:
            if inst.kind != "field":
                per_method.append(inst)
                continue
            prior = fields.get(inst.variable_id)
            if prior is not None:
                inst = TypeUsageInstance(
                    prior.project_id, prior.class_name, FIELDS_SCOPE, "field", prior.variable_id,
                    prior.receiver_type, False, tuple(sorted(set(prior.calls) | set(inst.calls))),
                )
            fields[inst.variable_id] = inst
    result = per_method + [fields[name] for name in sorted(fields)]
    stats.instances += len(result)
    return result
