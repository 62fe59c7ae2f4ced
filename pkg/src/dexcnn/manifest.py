"""Labeled corpus manifests: one TAB-separated record per line.

    app-path <TAB> label <TAB> family <TAB> year

``label`` is ``benign`` or ``malware``; ``family`` and ``year`` use ``-`` when
absent.  Lines starting with ``#`` are comments.
"""
from __future__ import annotations

import os
import re
from dataclasses import dataclass, field

from .errors import DuplicatePathError, ManifestSchemaError

LABELS = ("benign", "malware")
_YEAR = re.compile(r"^\d{4}$")


@dataclass(frozen=True)
class AppRecord:
    app_path: str
    label: str
    family: str | None = None
    year: int | None = None

    @property
    def is_malware(self) -> bool:
        return self.label == "malware"


@dataclass
class CorpusManifest:
    records: list[AppRecord]
    base_dir: str = field(default=".", compare=False)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def resolve(self, rec: AppRecord) -> str:
        if os.path.isabs(rec.app_path):
            return rec.app_path
        return os.path.join(self.base_dir, rec.app_path)

    def families(self) -> list[str]:
        return sorted({r.family for r in self.records if r.family is not None})

    def years(self) -> list[int]:
        return sorted({r.year for r in self.records if r.year is not None})

    def subset(self, indices) -> "CorpusManifest":
        return CorpusManifest([self.records[i] for i in indices], self.base_dir)


def parse_manifest(lines, require_family: bool = False, base_dir: str = ".") -> CorpusManifest:
    records = []
    seen = set()
    for lineno, line in enumerate(lines, start=1):
        line = line.rstrip("\r\n")
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise ManifestSchemaError(lineno, f"expected 4 TAB-separated fields, got {len(parts)}")
        path, label, family, year = parts
        if not path:
            raise ManifestSchemaError(lineno, "empty app-path")
        if label not in LABELS:
            raise ManifestSchemaError(lineno, f"label must be benign or malware, got {label!r}")
        fam = None if family == "-" else family
        if fam is not None and label != "malware":
            raise ManifestSchemaError(lineno, "family given for a benign app")
        if fam is None and label == "malware" and require_family:
            raise ManifestSchemaError(lineno, "malware record lacks a family")
        if year == "-":
            yr = None
        elif _YEAR.match(year):
            yr = int(year)
        else:
            raise ManifestSchemaError(lineno, f"year must be '-' or 4 digits, got {year!r}")
        if path in seen:
            raise DuplicatePathError(f"line {lineno}: duplicate app-path {path!r}")
        seen.add(path)
        records.append(AppRecord(path, label, fam, yr))
    return CorpusManifest(records, base_dir)


def load_manifest(path, require_family: bool = False) -> CorpusManifest:
    path = os.fspath(path)
    with open(path, encoding="utf-8") as fh:
        return parse_manifest(fh, require_family, os.path.dirname(os.path.abspath(path)))


def format_manifest(manifest: CorpusManifest) -> str:
    out = []
    for r in manifest.records:
        out.append("\t".join([
            r.app_path,
            r.label,
            r.family if r.family is not None else "-",
            str(r.year) if r.year is not None else "-",
        ]))
    return "".join(line + "\n" for line in out)


def save_manifest(manifest: CorpusManifest, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_manifest(manifest))
