"""Dalvik executable parsing and API call-sequence extraction.

The parser reads just enough of a DEX file to resolve invoke targets: the
string, type, proto and method pools, class definitions with their encoded
methods, and (for invoke-custom) call sites and method handles.  Code items
are swept linearly; every instruction that is not an invoke is skipped by
width.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

from . import opcodes
from .errors import BadMagicError, IndexOutOfPoolError, MalformedCodeItemError, TruncatedFileError

HEADER_SIZE = 0x70
ENDIAN_CONSTANT = 0x12345678
SUPPORTED_VERSIONS = ("035", "037", "038", "039")

NO_INDEX = 0xFFFFFFFF

TYPE_CALL_SITE_ID_ITEM = 0x0007
TYPE_METHOD_HANDLE_ITEM = 0x0008
VALUE_METHOD_HANDLE = 0x16


@dataclass(frozen=True)
class MethodRef:
    class_descriptor: str
    method_name: str


@dataclass(frozen=True)
class ClassDef:
    class_type_idx: int
    # (method_ids index, code_item offset or None) in encoded order: direct then virtual
    methods: tuple[tuple[int, int | None], ...]


@dataclass
class DexFile:
    version: str
    strings: list[str]
    type_descriptors: list[int]
    protos: list[tuple[int, int, int]]
    method_refs: list[tuple[int, int, int]]
    class_defs: list[ClassDef]
    call_site_methods: list[int | None] = field(default_factory=list)
    data: bytes = field(default=b"", repr=False)

    def type_name(self, type_idx: int) -> str:
        return self.strings[self.type_descriptors[type_idx]]

    def method_ref(self, method_idx: int) -> MethodRef:
        class_idx, _, name_idx = self.method_refs[method_idx]
        return MethodRef(self.type_name(class_idx), self.strings[name_idx])

    @property
    def n_methods(self) -> int:
        return sum(len(c.methods) for c in self.class_defs)


@dataclass
class ApiCallSequence:
    calls: list[str]
    source_id: str = ""

    def __len__(self):
        return len(self.calls)


def format_method_ref(ref: MethodRef) -> str:
    """``Lpkg/Cls;`` + ``name`` -> ``pkg/Cls;->name`` (prototype dropped)."""
    desc = ref.class_descriptor
    if desc.startswith("L"):
        desc = desc[1:]
    return f"{desc}->{ref.method_name}"


def read_uleb128(buf: bytes, pos: int) -> tuple[int, int]:
    result = 0
    shift = 0
    while True:
        if pos >= len(buf):
            raise TruncatedFileError("uleb128 runs past end of file")
        b = buf[pos]
        pos += 1
        result |= (b & 0x7F) << shift
        if b < 0x80:
            return result, pos
        shift += 7
        if shift > 35:
            raise TruncatedFileError("uleb128 longer than 5 bytes")


def decode_mutf8(raw: bytes) -> str:
    """Decode modified UTF-8; invalid sequences become U+FFFD instead of failing."""
    raw = raw.replace(b"\xc0\x80", b"\x00")
    try:
        s = raw.decode("utf-8", "surrogatepass")
        # recombine surrogate pairs that MUTF-8 encodes as two 3-byte units
        return s.encode("utf-16-le", "surrogatepass").decode("utf-16-le", "replace")
    except UnicodeDecodeError:
        return raw.decode("utf-8", "replace")


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf

    def table(self, fmt: str, count: int, offset: int, what: str) -> list[tuple]:
        size = struct.calcsize(fmt)
        if count and (offset < 0 or offset + count * size > len(self.buf)):
            raise TruncatedFileError(f"{what} table runs past end of file")
        return [struct.unpack_from(fmt, self.buf, offset + i * size) for i in range(count)]

    def u32(self, offset: int) -> int:
        if offset + 4 > len(self.buf):
            raise TruncatedFileError(f"read past end of file at {offset:#x}")
        return struct.unpack_from("<I", self.buf, offset)[0]


def _check(idx: int, pool_size: int, what: str) -> int:
    if not 0 <= idx < pool_size:
        raise IndexOutOfPoolError(f"{what} index {idx} outside pool of {pool_size}")
    return idx


def parse_dex(buf: bytes) -> DexFile:
    buf = bytes(buf)
    if len(buf) < HEADER_SIZE:
        if len(buf) >= 4 and not buf.startswith(b"dex\n"):
            raise BadMagicError(f"not a dex file: {buf[:8]!r}")
        raise TruncatedFileError(f"{len(buf)} bytes is smaller than the dex header")
    magic = buf[:8]
    version = magic[4:7].decode("ascii", "replace")
    if magic[:4] != b"dex\n" or magic[7] != 0 or version not in SUPPORTED_VERSIONS:
        raise BadMagicError(f"bad dex magic {magic!r}")
    (file_size, header_size, endian, _link_size, _link_off, map_off,
     n_strings, strings_off, n_types, types_off, n_protos, protos_off,
     _n_fields, _fields_off, n_methods, methods_off, n_classes, classes_off,
     _data_size, _data_off) = struct.unpack_from("<20I", buf, 0x20)
    if file_size != len(buf):
        raise TruncatedFileError(f"header declares {file_size} bytes, buffer holds {len(buf)}")
    if endian != ENDIAN_CONSTANT:
        raise BadMagicError(f"unsupported endian tag {endian:#x}")
    if header_size < HEADER_SIZE:
        raise BadMagicError(f"header size {header_size} too small")

    r = _Reader(buf)
    strings = []
    for (off,) in r.table("<I", n_strings, strings_off, "string_ids"):
        if off >= len(buf):
            raise TruncatedFileError("string data offset past end of file")
        _, start = read_uleb128(buf, off)
        end = buf.find(b"\x00", start)
        if end < 0:
            raise TruncatedFileError("unterminated string data")
        strings.append(decode_mutf8(buf[start:end]))

    types = [_check(d, n_strings, "string") for (d,) in r.table("<I", n_types, types_off, "type_ids")]

    protos = []
    for shorty, ret, params in r.table("<III", n_protos, protos_off, "proto_ids"):
        protos.append((_check(shorty, n_strings, "string"), _check(ret, n_types, "type"), params))

    method_refs = []
    for cls, proto, name in r.table("<HHI", n_methods, methods_off, "method_ids"):
        method_refs.append((_check(cls, n_types, "type"), _check(proto, n_protos, "proto"),
                            _check(name, n_strings, "string")))

    class_defs = []
    for row in r.table("<8I", n_classes, classes_off, "class_defs"):
        class_idx, class_data_off = row[0], row[6]
        _check(class_idx, n_types, "type")
        methods = _parse_class_data(buf, class_data_off, n_methods) if class_data_off else ()
        class_defs.append(ClassDef(class_idx, methods))

    call_sites = _parse_call_sites(r, map_off, n_methods) if map_off else []
    return DexFile(version, strings, types, protos, method_refs, class_defs, call_sites, buf)


def _parse_class_data(buf: bytes, off: int, n_methods: int) -> tuple[tuple[int, int | None], ...]:
    if off >= len(buf):
        raise TruncatedFileError("class_data offset past end of file")
    n_static, pos = read_uleb128(buf, off)
    n_instance, pos = read_uleb128(buf, pos)
    n_direct, pos = read_uleb128(buf, pos)
    n_virtual, pos = read_uleb128(buf, pos)
    for _ in range(n_static + n_instance):
        _, pos = read_uleb128(buf, pos)
        _, pos = read_uleb128(buf, pos)
    methods = []
    for count in (n_direct, n_virtual):
        idx = 0
        for _ in range(count):
            diff, pos = read_uleb128(buf, pos)
            _, pos = read_uleb128(buf, pos)  # access flags
            code_off, pos = read_uleb128(buf, pos)
            idx += diff
            _check(idx, n_methods, "method")
            if code_off and code_off >= len(buf):
                raise TruncatedFileError("code_item offset past end of file")
            methods.append((idx, code_off or None))
    return tuple(methods)


def _parse_call_sites(r: _Reader, map_off: int, n_methods: int) -> list[int | None]:
    buf = r.buf
    n_items = r.u32(map_off)
    sections = {}
    for typ, _, size, off in r.table("<HHII", n_items, map_off + 4, "map_list"):
        sections[typ] = (size, off)
    if TYPE_CALL_SITE_ID_ITEM not in sections:
        return []
    n_handles, handles_off = sections.get(TYPE_METHOD_HANDLE_ITEM, (0, 0))
    handles = r.table("<HHHH", n_handles, handles_off, "method_handles")
    resolved = []
    n_sites, sites_off = sections[TYPE_CALL_SITE_ID_ITEM]
    for (site_off,) in r.table("<I", n_sites, sites_off, "call_site_ids"):
        _, pos = read_uleb128(buf, site_off)
        if pos >= len(buf):
            raise TruncatedFileError("call site runs past end of file")
        head = buf[pos]
        target = None
        if head & 0x1F == VALUE_METHOD_HANDLE:
            width = (head >> 5) + 1
            handle_idx = int.from_bytes(buf[pos + 1:pos + 1 + width], "little")
            kind, _, member, _ = handles[_check(handle_idx, n_handles, "method_handle")]
            if kind >= 0x04:  # invoke-* handles; lower kinds are field accessors
                target = _check(member, n_methods, "method")
        resolved.append(target)
    return resolved


def method_calls(dex: DexFile, code_off: int) -> list[int]:
    """Method-pool indices referenced by invoke instructions, in instruction order."""
    buf = dex.data
    if code_off + 16 > len(buf):
        raise MalformedCodeItemError(f"code_item at {code_off:#x} truncated")
    n_units = struct.unpack_from("<I", buf, code_off + 12)[0]
    start = code_off + 16
    if start + 2 * n_units > len(buf):
        raise MalformedCodeItemError(f"code_item at {code_off:#x} overruns the file")
    units = struct.unpack_from(f"<{n_units}H", buf, start)
    widths = opcodes.WIDTHS
    method_ops = opcodes.METHOD_REF_OPS
    custom_ops = opcodes.INVOKE_CUSTOM
    n_refs = len(dex.method_refs)
    out = []
    pos = 0
    while pos < n_units:
        unit = units[pos]
        op = unit & 0xFF
        width = widths[op]
        if op == 0 and unit:
            if pos + 1 >= n_units:
                raise MalformedCodeItemError(f"payload header at unit {pos} truncated")
            if unit == opcodes.FILL_ARRAY_DATA_PAYLOAD and pos + 3 >= n_units:
                raise MalformedCodeItemError(f"payload header at unit {pos} truncated")
            width = opcodes.payload_width(units, pos) or 1
        if pos + width > n_units:
            raise MalformedCodeItemError(f"instruction at unit {pos} overruns insns_size {n_units}")
        if op in method_ops:
            out.append(_check(units[pos + 1], n_refs, "method"))
        elif op in custom_ops:
            site = _check(units[pos + 1], len(dex.call_site_methods), "call_site")
            target = dex.call_site_methods[site]
            if target is not None:
                out.append(target)
        pos += width
    return out


def extract_call_sequence(dex: DexFile, source_id: str = "", prefixes: tuple[str, ...] | None = None) -> ApiCallSequence:
    """Merged invoke-target sequence: classes in file order, methods in encoded order.

    ``prefixes`` optionally keeps only calls whose canonical string starts with
    one of them; by default nothing is filtered.
    """
    cache: dict[int, str] = {}
    calls = []
    for cls in dex.class_defs:
        for _, code_off in cls.methods:
            if code_off is None:
                continue
            for idx in method_calls(dex, code_off):
                s = cache.get(idx)
                if s is None:
                    s = cache[idx] = format_method_ref(dex.method_ref(idx))
                calls.append(s)
    if prefixes:
        calls = [c for c in calls if c.startswith(tuple(prefixes))]
    return ApiCallSequence(calls, source_id)
