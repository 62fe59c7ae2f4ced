"""Write small but well-formed DEX files and APKs from call sequences.

Used to turn synthetic corpora into real archives so that training, scanning
and benchmarking run through the same ingest path as genuine apps.  Each
method body is a run of ``invoke-static {}`` instructions (optionally padded
with ``const/4``) followed by ``return-void``.
"""
from __future__ import annotations

import hashlib
import struct
import zipfile
import zlib
from collections.abc import Sequence

ACC_PUBLIC = 0x1
ACC_STATIC = 0x8
ACC_ABSTRACT = 0x400

OP_INVOKE_STATIC = 0x71
OP_CONST4 = 0x12
OP_RETURN_VOID = 0x0E

FIXED_DATE = (1980, 1, 1, 0, 0, 0)

# (method name, canonical call strings or None for an abstract method)
MethodSpec = tuple[str, Sequence[str] | None]
ClassSpec = tuple[str, Sequence[MethodSpec]]


def split_call(call: str) -> tuple[str, str]:
    cls, _, name = call.partition("->")
    if not name:
        raise ValueError(f"not a canonical call string: {call!r}")
    return (cls if cls.startswith("[") else "L" + cls), name


def _uleb(value: int) -> bytes:
    out = bytearray()
    while True:
        b = value & 0x7F
        value >>= 7
        if value:
            out.append(b | 0x80)
        else:
            out.append(b)
            return bytes(out)


def _utf16_key(s: str):
    return s.encode("utf-16-be")


def _mutf8(s: str) -> bytes:
    raw = s.encode("utf-16-le", "surrogatepass")
    out = bytearray()
    for unit in struct.unpack(f"<{len(raw) // 2}H", raw):
        if 0 < unit < 0x80:
            out.append(unit)
        elif unit < 0x800:
            out += bytes((0xC0 | (unit >> 6), 0x80 | (unit & 0x3F)))
        else:
            out += bytes((0xE0 | (unit >> 12), 0x80 | ((unit >> 6) & 0x3F), 0x80 | (unit & 0x3F)))
    return bytes(out)


def _align(buf: bytearray, n: int = 4) -> None:
    while len(buf) % n:
        buf.append(0)


def build_dex(classes: Sequence[ClassSpec], filler: int = 0) -> bytes:
    """Assemble a version-035 DEX.

    ``classes`` holds ``(descriptor, methods)`` pairs in the order they should
    appear in ``class_defs``.  Within a class, concrete methods are emitted as
    direct methods and abstract ones as virtual methods, each list sorted by
    method index, so callers wanting a particular order should name methods so
    that it sorts (``m0000``, ``m0001``, ...).  ``filler`` inserts that many
    ``const/4`` instructions before every invoke.
    """
    own = [(desc, name) for desc, methods in classes for name, _ in methods]
    targets = [split_call(c) for _, methods in classes for _, calls in methods for c in (calls or ())]
    descs = {"V", "Ljava/lang/Object;"} | {d for d, _ in own} | {d for d, _ in targets}
    strings = sorted(descs | {n for _, n in own} | {n for _, n in targets}, key=_utf16_key)
    sidx = {s: i for i, s in enumerate(strings)}
    types = sorted(descs, key=lambda d: sidx[d])
    tidx = {d: i for i, d in enumerate(types)}
    mkeys = sorted(set(own) | set(targets), key=lambda m: (tidx[m[0]], sidx[m[1]]))
    midx = {m: i for i, m in enumerate(mkeys)}

    n_str, n_type, n_meth, n_cls = len(strings), len(types), len(mkeys), len(classes)
    off_strings = 0x70
    off_types = off_strings + 4 * n_str
    off_protos = off_types + 4 * n_type
    off_methods = off_protos + 12
    off_classes = off_methods + 8 * n_meth
    data_off = off_classes + 32 * n_cls

    data = bytearray()

    def here() -> int:
        return data_off + len(data)

    code_offs: dict[tuple[str, str], int] = {}
    n_code = 0
    _align(data)
    code_start = here()
    for desc, methods in classes:
        for name, calls in methods:
            if calls is None:
                continue
            _align(data)
            insns = []
            for c in calls:
                insns += [OP_CONST4] * filler
                insns += [OP_INVOKE_STATIC, midx[split_call(c)], 0]
            insns.append(OP_RETURN_VOID)
            code_offs[(desc, name)] = here()
            data += struct.pack("<HHHHII", 1 if filler else 0, 0, 0, 0, 0, len(insns))
            data += struct.pack(f"<{len(insns)}H", *insns)
            n_code += 1

    string_data_start = here()
    string_offs = []
    for s in strings:
        string_offs.append(here())
        data += _uleb(len(s.encode("utf-16-le", "surrogatepass")) // 2) + _mutf8(s) + b"\x00"

    class_data_start = here()
    class_data_offs = []
    for desc, methods in classes:
        direct = sorted((midx[(desc, n)], code_offs[(desc, n)]) for n, calls in methods if calls is not None)
        virtual = sorted(midx[(desc, n)] for n, calls in methods if calls is None)
        if not direct and not virtual:
            class_data_offs.append(0)
            continue
        class_data_offs.append(here())
        data += _uleb(0) + _uleb(0) + _uleb(len(direct)) + _uleb(len(virtual))
        prev = 0
        for idx, off in direct:
            data += _uleb(idx - prev) + _uleb(ACC_PUBLIC | ACC_STATIC) + _uleb(off)
            prev = idx
        prev = 0
        for idx in virtual:
            data += _uleb(idx - prev) + _uleb(ACC_PUBLIC | ACC_ABSTRACT) + _uleb(0)
            prev = idx

    _align(data)
    map_off = here()
    sections = [
        (0x0000, 1, 0),
        (0x0001, n_str, off_strings),
        (0x0002, n_type, off_types),
        (0x0003, 1, off_protos),
        (0x0005, n_meth, off_methods),
        (0x0006, n_cls, off_classes),
        (0x2001, n_code, code_start),
        (0x2002, n_str, string_data_start),
        (0x2000, sum(1 for o in class_data_offs if o), class_data_start),
        (0x1000, 1, map_off),
    ]
    sections = [s for s in sections if s[1]]
    data += struct.pack("<I", len(sections))
    for typ, size, off in sections:
        data += struct.pack("<HHII", typ, 0, size, off)

    body = bytearray()
    body += b"".join(struct.pack("<I", o) for o in string_offs)
    body += b"".join(struct.pack("<I", sidx[d]) for d in types)
    body += struct.pack("<III", sidx["V"], tidx["V"], 0)
    body += b"".join(struct.pack("<HHI", tidx[d], 0, sidx[n]) for d, n in mkeys)
    obj = tidx["Ljava/lang/Object;"]
    for (desc, _), cd_off in zip(classes, class_data_offs):
        body += struct.pack("<8I", tidx[desc], ACC_PUBLIC, obj, 0, 0xFFFFFFFF, 0, cd_off, 0)

    file_size = data_off + len(data)
    header = bytearray(b"dex\n035\x00" + bytes(24))
    header += struct.pack(
        "<20I", file_size, 0x70, 0x12345678, 0, 0, map_off,
        n_str, off_strings, n_type, off_types, 1, off_protos, 0, 0,
        n_meth, off_methods, n_cls, off_classes, len(data), data_off,
    )
    out = header + body + data
    out[12:32] = hashlib.sha1(bytes(out[32:])).digest()
    out[8:12] = struct.pack("<I", zlib.adler32(bytes(out[12:])))
    return bytes(out)


def sequence_to_classes(calls: Sequence[str], calls_per_method: int = 16,
                        methods_per_class: int = 8, package: str = "app") -> list[ClassSpec]:
    """Chunk a flat call sequence into classes/methods whose merged order reproduces it."""
    chunks = [list(calls[i:i + calls_per_method]) for i in range(0, len(calls), calls_per_method)]
    classes = []
    for ci in range(0, len(chunks), methods_per_class):
        methods = [(f"m{j:04d}", chunk) for j, chunk in enumerate(chunks[ci:ci + methods_per_class])]
        classes.append((f"L{package}/C{ci // methods_per_class:04d};", methods))
    return classes


MANIFEST_STUB = b'<?xml version="1.0" encoding="utf-8"?>\n<manifest package="synth.app"/>\n'


def write_apk(path, dex_files: dict[str, bytes] | bytes, resources: dict[str, bytes] | None = None) -> None:
    """Write a deterministic APK (fixed timestamps, stable entry order).

    Dex entries are deflated; resources are stored uncompressed so that their
    size shows up one-for-one in the archive size.
    """
    if isinstance(dex_files, (bytes, bytearray)):
        dex_files = {"classes.dex": bytes(dex_files)}
    with zipfile.ZipFile(path, "w") as zf:
        def put(name, payload, method):
            info = zipfile.ZipInfo(name, FIXED_DATE)
            info.compress_type = method
            info.external_attr = 0o644 << 16
            zf.writestr(info, payload)

        put("AndroidManifest.xml", MANIFEST_STUB, zipfile.ZIP_STORED)
        for name in sorted(dex_files):
            put(name, dex_files[name], zipfile.ZIP_DEFLATED)
        for name in sorted(resources or {}):
            put(name, resources[name], zipfile.ZIP_STORED)
