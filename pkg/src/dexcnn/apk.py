"""Minimal APK (ZIP) reader: central directory parsing and classes.dex extraction.

Only what the pipeline needs: the end-of-central-directory record, the
central directory itself, and stored/deflated entry bodies.  No ZIP64.
"""
from __future__ import annotations

import os
import struct
import warnings
import zlib
from dataclasses import dataclass, field

from .errors import ApkNotFoundError, DecompressFailedError, MalformedArchiveError, NoDexError

EOCD_SIG = 0x06054B50
CENTRAL_SIG = 0x02014B50
LOCAL_SIG = 0x04034B50

EOCD_SIZE = 22
CENTRAL_SIZE = 46
LOCAL_SIZE = 30
MAX_COMMENT = 0xFFFF

STORED = 0
DEFLATED = 8

PRIMARY_DEX = "classes.dex"


class MultidexWarning(UserWarning):
    """Secondary classesN.dex entries were present and ignored."""


@dataclass(frozen=True)
class ZipEntry:
    name: str
    compressed_size: int
    uncompressed_size: int
    offset: int  # of the local file header
    method: int = STORED
    crc32: int = 0


@dataclass
class ApkPackage:
    source_path: str
    entries: list[ZipEntry]
    file_size: int
    # bytes pulled from disk while parsing the directory
    bytes_read: int = field(default=0, compare=False)

    def names(self) -> list[str]:
        return [e.name for e in self.entries]

    def entry(self, name: str) -> ZipEntry | None:
        for e in self.entries:
            if e.name == name:
                return e
        return None


class _CountingReader:
    def __init__(self, fh):
        self._fh = fh
        self.count = 0

    def read_at(self, offset: int, size: int) -> bytes:
        self._fh.seek(offset)
        data = self._fh.read(size)
        self.count += len(data)
        return data


def _find_eocd(reader: _CountingReader, file_size: int) -> tuple[int, bytes]:
    if file_size < EOCD_SIZE:
        raise MalformedArchiveError("file too small to hold an end-of-central-directory record")
    # fast path: no archive comment
    tail = reader.read_at(file_size - EOCD_SIZE, EOCD_SIZE)
    if struct.unpack_from("<I", tail)[0] == EOCD_SIG:
        return file_size - EOCD_SIZE, tail
    span = min(file_size, EOCD_SIZE + MAX_COMMENT)
    tail = reader.read_at(file_size - span, span)
    pos = tail.rfind(struct.pack("<I", EOCD_SIG), 0, span - EOCD_SIZE + 1)
    while pos >= 0:
        comment_len = struct.unpack_from("<H", tail, pos + 20)[0]
        if pos + EOCD_SIZE + comment_len == span:
            return file_size - span + pos, tail[pos:pos + EOCD_SIZE]
        pos = tail.rfind(struct.pack("<I", EOCD_SIG), 0, pos)
    raise MalformedArchiveError("no end-of-central-directory signature")


def open_apk(path: str | os.PathLike) -> ApkPackage:
    """Parse the entry table of an APK without touching any entry body."""
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise ApkNotFoundError(path)
    file_size = os.path.getsize(path)
    with open(path, "rb") as fh:
        reader = _CountingReader(fh)
        eocd_off, eocd = _find_eocd(reader, file_size)
        (_, disk, cd_disk, n_here, n_total, cd_size, cd_off, _) = struct.unpack("<IHHHHIIH", eocd)
        if disk != 0 or cd_disk != 0 or n_here != n_total:
            raise MalformedArchiveError("multi-disk archives are not supported")
        if cd_off + cd_size > eocd_off:
            raise MalformedArchiveError("central directory overlaps end record")
        cd = reader.read_at(cd_off, cd_size)
        entries = _parse_central_directory(cd, n_total, file_size)
        return ApkPackage(path, entries, file_size, reader.count)


def _parse_central_directory(cd: bytes, count: int, file_size: int) -> list[ZipEntry]:
    entries = []
    seen = set()
    pos = 0
    for _ in range(count):
        if pos + CENTRAL_SIZE > len(cd):
            raise MalformedArchiveError("central directory truncated")
        fields = struct.unpack_from("<IHHHHHHIIIHHHHHII", cd, pos)
        sig, method, crc, csize, usize = fields[0], fields[4], fields[7], fields[8], fields[9]
        name_len, extra_len, comment_len, offset = fields[10], fields[11], fields[12], fields[16]
        if sig != CENTRAL_SIG:
            raise MalformedArchiveError(f"bad central header signature at {pos}")
        flags = fields[3]
        raw_name = cd[pos + CENTRAL_SIZE:pos + CENTRAL_SIZE + name_len]
        if len(raw_name) != name_len:
            raise MalformedArchiveError("central directory truncated")
        name = raw_name.decode("utf-8" if flags & 0x800 else "cp437")
        if name in seen:
            raise MalformedArchiveError(f"duplicate entry name {name!r}")
        if offset + LOCAL_SIZE + csize > file_size:
            raise MalformedArchiveError(f"entry {name!r} extends past end of file")
        seen.add(name)
        entries.append(ZipEntry(name, csize, usize, offset, method, crc))
        pos += CENTRAL_SIZE + name_len + extra_len + comment_len
    return entries


def read_entry(pkg: ApkPackage, entry: ZipEntry) -> bytes:
    """Decompress one entry body and check its CRC."""
    with open(pkg.source_path, "rb") as fh:
        fh.seek(entry.offset)
        header = fh.read(LOCAL_SIZE)
        if len(header) < LOCAL_SIZE or struct.unpack_from("<I", header)[0] != LOCAL_SIG:
            raise MalformedArchiveError(f"bad local header for {entry.name!r}")
        name_len, extra_len = struct.unpack_from("<HH", header, 26)
        fh.seek(entry.offset + LOCAL_SIZE + name_len + extra_len)
        raw = fh.read(entry.compressed_size)
    if len(raw) != entry.compressed_size:
        raise DecompressFailedError(f"{entry.name!r}: short read")
    if entry.method == STORED:
        data = raw
    elif entry.method == DEFLATED:
        try:
            d = zlib.decompressobj(-15)
            data = d.decompress(raw) + d.flush()
        except zlib.error as exc:
            raise DecompressFailedError(f"{entry.name!r}: {exc}") from exc
    else:
        raise DecompressFailedError(f"{entry.name!r}: unsupported compression method {entry.method}")
    if len(data) != entry.uncompressed_size or zlib.crc32(data) != entry.crc32:
        raise DecompressFailedError(f"{entry.name!r}: size or CRC mismatch")
    return data


def extract_dex(pkg: ApkPackage) -> bytes:
    """Return the bytes of ``classes.dex``; secondary dex files only raise a warning."""
    entry = pkg.entry(PRIMARY_DEX)
    if entry is None:
        raise NoDexError(f"{pkg.source_path}: no {PRIMARY_DEX} entry")
    extra = sorted(n for n in pkg.names() if n.startswith("classes") and n.endswith(".dex") and n != PRIMARY_DEX)
    if extra:
        warnings.warn(f"{pkg.source_path}: ignoring secondary dex files {extra}", MultidexWarning, stacklevel=2)
    return read_entry(pkg, entry)


def dex_from_path(path: str | os.PathLike) -> bytes:
    """APK path or bare .dex file -> dex bytes."""
    path = os.fspath(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head.startswith(b"dex\n"):
        with open(path, "rb") as fh:
            return fh.read()
    return extract_dex(open_apk(path))
