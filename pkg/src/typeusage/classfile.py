"""Reader for JVM class files and Jar archives.

Only what extraction needs is decoded: the constant pool, fields, methods,
and the ``Code`` / ``LocalVariableTable`` attributes of each method. Every
other attribute is skipped by length.
"""
from __future__ import annotations

import logging
import struct
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

__all__ = [
    "ACC_STATIC",
    "ACC_NATIVE",
    "ACC_ABSTRACT",
    "BadDescriptor",
    "ClassFile",
    "CodeBody",
    "ExceptionHandler",
    "JarContents",
    "LocalVariable",
    "MalformedClassFile",
    "MethodDescriptor",
    "MethodInfo",
    "UnreadableArchive",
    "parse_class",
    "parse_descriptor",
    "parse_jar",
]

log = logging.getLogger(__name__)

MAGIC = 0xCAFEBABE
# Highest class-file major version accepted (Java SE 27).
MAX_MAJOR_VERSION = 71

ACC_STATIC = 0x0008
ACC_NATIVE = 0x0100
ACC_ABSTRACT = 0x0400

# Constant pool tags.
CONSTANT_Utf8 = 1
CONSTANT_Integer = 3
CONSTANT_Float = 4
CONSTANT_Long = 5
CONSTANT_Double = 6
CONSTANT_Class = 7
CONSTANT_String = 8
CONSTANT_Fieldref = 9
CONSTANT_Methodref = 10
CONSTANT_InterfaceMethodref = 11
CONSTANT_NameAndType = 12
CONSTANT_MethodHandle = 15
CONSTANT_MethodType = 16
CONSTANT_Dynamic = 17
CONSTANT_InvokeDynamic = 18
CONSTANT_Module = 19
CONSTANT_Package = 20

# tag -> struct format of the payload
_POOL_LAYOUT = {
    CONSTANT_Integer: ">i",
    CONSTANT_Float: ">f",
    CONSTANT_Long: ">q",
    CONSTANT_Double: ">d",
    CONSTANT_Class: ">H",
    CONSTANT_String: ">H",
    CONSTANT_Fieldref: ">HH",
    CONSTANT_Methodref: ">HH",
    CONSTANT_InterfaceMethodref: ">HH",
    CONSTANT_NameAndType: ">HH",
    CONSTANT_MethodHandle: ">BH",
    CONSTANT_MethodType: ">H",
    CONSTANT_Dynamic: ">HH",
    CONSTANT_InvokeDynamic: ">HH",
    CONSTANT_Module: ">H",
    CONSTANT_Package: ">H",
}

# tag -> positions of payload values that are pool indices (MethodHandle's
# first value is a reference kind, not an index)
_POOL_REFS = {
    CONSTANT_Class: (0,),
    CONSTANT_String: (0,),
    CONSTANT_Fieldref: (0, 1),
    CONSTANT_Methodref: (0, 1),
    CONSTANT_InterfaceMethodref: (0, 1),
    CONSTANT_NameAndType: (0, 1),
    CONSTANT_MethodHandle: (1,),
    CONSTANT_MethodType: (0,),
    CONSTANT_Dynamic: (1,),
    CONSTANT_InvokeDynamic: (1,),
    CONSTANT_Module: (0,),
    CONSTANT_Package: (0,),
}


class MalformedClassFile(ValueError):
    """The bytes are not a well-formed class file."""


class BadDescriptor(ValueError):
    """A string does not follow the JVM descriptor grammar."""


class UnreadableArchive(OSError):
    """A Jar could not be opened as a zip archive."""


# -- descriptors -------------------------------------------------------------

_BASE_TYPES = frozenset("BCDFIJSZ")


def _field_type_end(text: str, pos: int) -> int:
    """Return the index just past the field type starting at ``pos``."""
    start = pos
    while pos < len(text) and text[pos] == "[":
        pos += 1
    if pos - start > 255:
        raise BadDescriptor(f"too many array dimensions in {text!r}")
    if pos >= len(text):
        raise BadDescriptor(f"truncated type in {text!r}")
    c = text[pos]
    if c in _BASE_TYPES:
        return pos + 1
    if c == "L":
        end = text.find(";", pos)
        if end <= pos + 1:
            raise BadDescriptor(f"unterminated class type in {text!r}")
        name = text[pos + 1 : end]
        if any(ch in name for ch in ".[") or "//" in name or name.startswith("/") or name.endswith("/"):
            raise BadDescriptor(f"bad class name {name!r} in {text!r}")
        return end + 1
    raise BadDescriptor(f"unexpected {c!r} at {pos} in {text!r}")


def type_width(descriptor: str) -> int:
    """Operand-stack width of a field type: 2 for long/double, else 1."""
    return 2 if descriptor in ("J", "D") else 1


@dataclass(frozen=True)
class MethodDescriptor:
    param_types: tuple[str, ...]
    return_type: str  # "V" for void

    def __str__(self) -> str:
        return "(" + "".join(self.param_types) + ")" + self.return_type

    @property
    def param_widths(self) -> tuple[int, ...]:
        return tuple(type_width(t) for t in self.param_types)

    @property
    def param_slots(self) -> int:
        return sum(self.param_widths)

    @property
    def return_width(self) -> int:
        return 0 if self.return_type == "V" else type_width(self.return_type)


def parse_descriptor(text: str) -> MethodDescriptor:
    """Split a method descriptor such as ``(JD)I`` into its parts."""
    if not text.startswith("("):
        raise BadDescriptor(f"method descriptor must start with '(': {text!r}")
    pos = 1
    params = []
    while True:
        if pos >= len(text):
            raise BadDescriptor(f"missing ')' in {text!r}")
        if text[pos] == ")":
            break
        end = _field_type_end(text, pos)
        params.append(text[pos:end])
        pos = end
    pos += 1
    if text[pos:] == "V":
        ret = "V"
    else:
        end = _field_type_end(text, pos)
        if end != len(text):
            raise BadDescriptor(f"trailing characters in {text!r}")
        ret = text[pos:end]
    return MethodDescriptor(tuple(params), ret)


def parse_field_descriptor(text: str) -> str:
    if _field_type_end(text, 0) != len(text):
        raise BadDescriptor(f"trailing characters in {text!r}")
    return text


def descriptor_class_name(descriptor: str) -> str:
    """``Ljava/io/File;`` -> ``java/io/File``; arrays and primitives are kept as-is."""
    if descriptor.startswith("L") and descriptor.endswith(";"):
        return descriptor[1:-1]
    return descriptor


# -- class file structures ---------------------------------------------------

class ExceptionHandler(NamedTuple):
    start_pc: int
    end_pc: int
    handler_pc: int
    catch_type: str | None


class LocalVariable(NamedTuple):
    slot: int
    start_pc: int
    length: int
    name: str
    descriptor: str

    def covers(self, pc: int) -> bool:
        return self.start_pc <= pc < self.start_pc + self.length


@dataclass(frozen=True)
class CodeBody:
    max_stack: int
    max_locals: int
    bytecode: bytes
    exception_handlers: tuple[ExceptionHandler, ...] = ()


@dataclass(frozen=True)
class MethodInfo:
    name: str
    descriptor: str
    access_flags: int
    code: CodeBody | None = None
    local_variable_table: tuple[LocalVariable, ...] | None = None

    @property
    def is_static(self) -> bool:
        return bool(self.access_flags & ACC_STATIC)

    @property
    def signature(self) -> str:
        return self.name + self.descriptor


@dataclass(frozen=True)
class ClassFile:
    binary_name: str
    super_name: str | None
    access_flags: int
    version: tuple[int, int]
    constant_pool: tuple = field(repr=False)
    methods: tuple[MethodInfo, ...] = ()
    fields: tuple[tuple[str, str], ...] = ()

    # Pool accessors. Indices are validated at parse time, so lookups only
    # fail on entries of the wrong kind.

    def utf8(self, index: int) -> str:
        tag, value = self._entry(index, CONSTANT_Utf8)
        return value

    def class_name(self, index: int) -> str:
        _, (name_index,) = self._entry(index, CONSTANT_Class)
        return self.utf8(name_index)

    def member_ref(self, index: int) -> tuple[str, str, str]:
        """Resolve a Field/Method/InterfaceMethod ref to (owner, name, descriptor)."""
        tag, (class_index, nat_index) = self._entry(
            index, CONSTANT_Fieldref, CONSTANT_Methodref, CONSTANT_InterfaceMethodref
        )
        name, descriptor = self.name_and_type(nat_index)
        return self.class_name(class_index), name, descriptor

    def name_and_type(self, index: int) -> tuple[str, str]:
        _, (name_index, desc_index) = self._entry(index, CONSTANT_NameAndType)
        return self.utf8(name_index), self.utf8(desc_index)

    def dynamic_ref(self, index: int) -> tuple[str, str]:
        """(name, descriptor) of an InvokeDynamic or Dynamic constant."""
        _, (_, nat_index) = self._entry(index, CONSTANT_InvokeDynamic, CONSTANT_Dynamic)
        return self.name_and_type(nat_index)

    def tag(self, index: int) -> int:
        if not 0 < index < len(self.constant_pool) or self.constant_pool[index] is None:
            raise MalformedClassFile(f"constant pool index {index} out of range")
        return self.constant_pool[index][0]

    def _entry(self, index: int, *tags: int):
        entry = self.constant_pool[index] if 0 < index < len(self.constant_pool) else None
        if entry is None:
            raise MalformedClassFile(f"constant pool index {index} out of range")
        if entry[0] not in tags:
            raise MalformedClassFile(f"constant pool entry {index} has tag {entry[0]}, expected {tags}")
        return entry

    def field_descriptor(self, name: str) -> str | None:
        for fname, fdesc in self.fields:
            if fname == name:
                return fdesc
        return None


def decode_modified_utf8(raw: bytes) -> str:
    # Modified UTF-8 encodes NUL as C0 80 and supplementary characters as
    # surrogate pairs.
    text = raw.replace(b"\xc0\x80", b"\x00").decode("utf-8", "surrogatepass")
    if any("\ud800" <= ch <= "\udfff" for ch in text):
        text = text.encode("utf-16-le", "surrogatepass").decode("utf-16-le", "replace")
    return text


class _Reader:
    __slots__ = ("data", "pos")

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def unpack(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise MalformedClassFile(f"truncated class file at offset {self.pos}")
        values = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return values

    def u1(self) -> int:
        return self.unpack(">B")[0]

    def u2(self) -> int:
        return self.unpack(">H")[0]

    def u4(self) -> int:
        return self.unpack(">I")[0]

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise MalformedClassFile(f"truncated class file at offset {self.pos}")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk


def _read_pool(r: _Reader) -> list:
    count = r.u2()
    pool: list = [None] * count
    i = 1
    while i < count:
        tag = r.u1()
        if tag == CONSTANT_Utf8:
            length = r.u2()
            try:
                pool[i] = (tag, decode_modified_utf8(r.take(length)))
            except UnicodeDecodeError as exc:
                raise MalformedClassFile(f"bad utf8 constant at {i}: {exc}") from None
        elif tag in _POOL_LAYOUT:
            pool[i] = (tag, r.unpack(_POOL_LAYOUT[tag]))
        else:
            raise MalformedClassFile(f"unknown constant pool tag {tag} at index {i}")
        # long and double take two slots
        i += 2 if tag in (CONSTANT_Long, CONSTANT_Double) else 1
    if i != count:
        raise MalformedClassFile("8-byte constant overruns the constant pool")

    for index, entry in enumerate(pool):
        if entry is None:
            continue
        tag, values = entry
        for pos in _POOL_REFS.get(tag, ()):
            ref = values[pos]
            if not 0 < ref < count or pool[ref] is None:
                raise MalformedClassFile(f"constant {index} references invalid index {ref}")
    return pool


def _utf8_at(pool: list, index: int) -> str:
    entry = pool[index] if 0 < index < len(pool) else None
    if entry is None or entry[0] != CONSTANT_Utf8:
        raise MalformedClassFile(f"expected a utf8 constant at index {index}")
    return entry[1]


def _class_at(pool: list, index: int) -> str:
    entry = pool[index] if 0 < index < len(pool) else None
    if entry is None or entry[0] != CONSTANT_Class:
        raise MalformedClassFile(f"expected a class constant at index {index}")
    return _utf8_at(pool, entry[1][0])


def _read_code(r: _Reader, pool: list) -> tuple[CodeBody, tuple[LocalVariable, ...] | None]:
    max_stack, max_locals, code_length = r.unpack(">HHI")
    bytecode = bytes(r.take(code_length))
    handlers = []
    for _ in range(r.u2()):
        start, end, handler, catch_index = r.unpack(">HHHH")
        if not (start < end <= code_length and handler < code_length):
            raise MalformedClassFile(f"exception handler range {start}-{end}->{handler} outside code")
        catch = _class_at(pool, catch_index) if catch_index else None
        handlers.append(ExceptionHandler(start, end, handler, catch))

    lvt: list[LocalVariable] | None = None
    for _ in range(r.u2()):
        name = _utf8_at(pool, r.u2())
        body = r.take(r.u4())
        if name != "LocalVariableTable":
            continue
        sub = _Reader(body)
        lvt = lvt or []
        for _ in range(sub.u2()):
            start, length, name_index, desc_index, slot = sub.unpack(">HHHHH")
            lvt.append(
                LocalVariable(slot, start, length, _utf8_at(pool, name_index), _utf8_at(pool, desc_index))
            )
    code = CodeBody(max_stack, max_locals, bytecode, tuple(handlers))
    return code, tuple(lvt) if lvt is not None else None


def parse_class(data: bytes) -> ClassFile:
    """Parse a complete class-file image.

    Raises ``MalformedClassFile`` on a bad magic number, truncation, unknown
    constant-pool tags or pool indices that do not resolve.
    """
    r = _Reader(bytes(data))
    if r.u4() != MAGIC:
        raise MalformedClassFile("bad magic number")
    minor, major = r.unpack(">HH")
    if major > MAX_MAJOR_VERSION:
        raise MalformedClassFile(f"unsupported class file version {major}.{minor}")
    pool = _read_pool(r)

    access, this_index, super_index = r.unpack(">HHH")
    this_name = _class_at(pool, this_index)
    super_name = _class_at(pool, super_index) if super_index else None
    for _ in range(r.u2()):
        _class_at(pool, r.u2())

    fields = []
    for _ in range(r.u2()):
        _, name_index, desc_index = r.unpack(">HHH")
        name = _utf8_at(pool, name_index)
        descriptor = _utf8_at(pool, desc_index)
        try:
            parse_field_descriptor(descriptor)
        except BadDescriptor as exc:
            raise MalformedClassFile(str(exc)) from None
        for _ in range(r.u2()):
            r.u2()
            r.take(r.u4())
        fields.append((name, descriptor))

    methods = []
    for _ in range(r.u2()):
        flags, name_index, desc_index = r.unpack(">HHH")
        name = _utf8_at(pool, name_index)
        descriptor = _utf8_at(pool, desc_index)
        try:
            parse_descriptor(descriptor)
        except BadDescriptor as exc:
            raise MalformedClassFile(f"method {name}: {exc}") from None
        code = lvt = None
        for _ in range(r.u2()):
            attr_name = _utf8_at(pool, r.u2())
            body = r.take(r.u4())
            if attr_name == "Code":
                code, lvt = _read_code(_Reader(body), pool)
        if (code is None) != bool(flags & (ACC_ABSTRACT | ACC_NATIVE)):
            raise MalformedClassFile(f"method {name}{descriptor}: Code attribute presence contradicts flags")
        methods.append(MethodInfo(name, descriptor, flags, code, lvt))

    for _ in range(r.u2()):
        r.u2()
        r.take(r.u4())

    return ClassFile(
        binary_name=this_name,
        super_name=super_name,
        access_flags=access,
        version=(major, minor),
        constant_pool=tuple(pool),
        methods=tuple(methods),
        fields=tuple(fields),
    )


# -- jars --------------------------------------------------------------------

@dataclass
class JarContents:
    path: Path
    classes: list[tuple[str, ClassFile]] = field(default_factory=list)
    skipped: list[tuple[str, str]] = field(default_factory=list)  # (entry, reason)

    @property
    def skip_count(self) -> int:
        return len(self.skipped)


def class_entry_names(path: str | Path) -> list[str]:
    """Names of the ``.class`` entries of a Jar, in archive order."""
    try:
        with zipfile.ZipFile(path) as zf:
            return [info.filename for info in zf.infolist() if _is_class_entry(info)]
    except (zipfile.BadZipFile, OSError) as exc:
        raise UnreadableArchive(f"{path}: {exc}") from exc


def _is_class_entry(info: zipfile.ZipInfo) -> bool:
    return not info.is_dir() and info.filename.endswith(".class")


def parse_jar(path: str | Path) -> JarContents:
    """Parse every ``.class`` entry of a Jar in archive order.

    Malformed entries are skipped and reported in ``skipped``; nested
    archives are not opened.
    """
    path = Path(path)
    result = JarContents(path)
    try:
        with zipfile.ZipFile(path) as zf:
            for info in zf.infolist():
                if not _is_class_entry(info):
                    continue
                try:
                    data = zf.read(info)
                    result.classes.append((info.filename, parse_class(data)))
                except (MalformedClassFile, zipfile.BadZipFile, EOFError, OSError) as exc:
                    log.warning("skipping %s!%s: %s", path, info.filename, exc)
                    result.skipped.append((info.filename, str(exc)))
    except (zipfile.BadZipFile, OSError) as exc:
        raise UnreadableArchive(f"{path}: {exc}") from exc
    return result
