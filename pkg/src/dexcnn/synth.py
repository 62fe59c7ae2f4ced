"""Planted-motif synthetic corpora standing in for real app collections.

Benign apps are draws from a Zipf-shaped background over the API vocabulary.
Each malware family owns one or more ordered 3-call motifs (built from
ordinary vocabulary tokens, so single-token counts do not give them away)
which are written into the sequence at random positions.  An optional shared
motif, common to all families, stands in for generic malicious behaviour and
lets a model catch families it never saw.  Year drift reshuffles part of the
background ranking and swaps out whole motifs from one year to the next.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import dexgen
from .dex import ApiCallSequence
from .errors import SpecInfeasibleError
from .manifest import AppRecord, CorpusManifest, save_manifest


@dataclass(frozen=True)
class SynthSpec:
    n_families: int = 1
    motifs_per_family: int = 1
    vocab_size: int = 400
    seq_len_range: tuple[int, int] = (200, 480)
    samples_per_class: int = 500     # benign count, and malware count per family
    noise_rate: float = 0.05         # per-token replacement probability
    year_drift: float = 0.0
    years: tuple[int, ...] = ()
    plants_per_seq: int = 4
    shared_motif_rate: float = 0.0   # chance a malware app carries the cross-family motif instead of its own
    motif_len: int = 3
    zipf_exponent: float = 1.0
    benign: bool = True


def token_name(v: int) -> str:
    return f"android/synth/Api{v // 8:03d};->call{v % 8}"


@dataclass
class SyntheticCorpus:
    manifest: CorpusManifest
    sequences: list[ApiCallSequence]
    motifs: dict[str, list[np.ndarray]]   # family -> motifs as token-id arrays (year 0)
    shared_motif: np.ndarray | None


def contains_motif(ids: np.ndarray, motif: np.ndarray) -> bool:
    """Direct substring scan for an ordered motif."""
    m = len(motif)
    if len(ids) < m:
        return False
    windows = np.lib.stride_tricks.sliding_window_view(ids, m)
    return bool((windows == motif).all(axis=1).any())


def _scrub(ids: np.ndarray, motif: np.ndarray, replacement: int) -> None:
    m = len(motif)
    while True:
        windows = np.lib.stride_tricks.sliding_window_view(ids, m)
        hits = np.flatnonzero((windows == motif).all(axis=1))
        if not len(hits):
            return
        ids[hits[0] + m // 2] = replacement


def generate_synthetic_corpus(spec: SynthSpec, seed: int) -> SyntheticCorpus:
    n_motif_tokens = spec.n_families * spec.motifs_per_family * spec.motif_len
    if spec.shared_motif_rate > 0:
        n_motif_tokens += spec.motif_len
    if spec.vocab_size <= n_motif_tokens or spec.vocab_size < 4:
        raise SpecInfeasibleError(
            f"vocab_size {spec.vocab_size} must exceed the {n_motif_tokens} tokens needed for motifs")
    lo, hi = spec.seq_len_range
    if lo > hi or lo < spec.plants_per_seq * spec.motif_len * 2:
        raise SpecInfeasibleError(f"sequence length range {spec.seq_len_range} cannot hold the planted motifs")
    if not 0.0 <= spec.noise_rate < 1.0 or spec.n_families < 1 or spec.samples_per_class < 1:
        raise SpecInfeasibleError("noise_rate must lie in [0, 1); families and samples must be >= 1")

    rng = np.random.default_rng(seed)
    V = spec.vocab_size
    years = list(spec.years) or [None]

    # motif tokens are distinct across motifs, drawn from the ordinary vocabulary
    motif_pool = rng.permutation(V)[:n_motif_tokens]
    families = [f"fam{k:02d}" for k in range(spec.n_families)]
    chunks = iter(motif_pool.reshape(-1, spec.motif_len))
    motifs = {f: [next(chunks).copy() for _ in range(spec.motifs_per_family)] for f in families}
    shared = next(chunks).copy() if spec.shared_motif_rate > 0 else None
    reserved = set(int(t) for t in motif_pool)
    free_tokens = np.array([v for v in range(V) if v not in reserved])

    # per-year background ranking and motif variants
    weights = 1.0 / np.arange(1, V + 1) ** spec.zipf_exponent
    weights /= weights.sum()
    ranking = rng.permutation(V)
    year_bg, year_motifs, year_shared = [], [], []
    cur_motifs = {f: [m.copy() for m in ms] for f, ms in motifs.items()}
    cur_shared = None if shared is None else shared.copy()
    for t in range(len(years)):
        if t:
            n_swap = int(round(spec.year_drift * V / 2))
            for _ in range(n_swap):
                a, b = rng.integers(V, size=2)
                ranking[a], ranking[b] = ranking[b], ranking[a]
            for ms in cur_motifs.values():
                for m in ms:
                    if rng.random() < spec.year_drift:
                        m[:] = rng.choice(free_tokens, size=len(m), replace=False)
        probs = np.empty(V)
        probs[ranking] = weights
        year_bg.append(probs)
        year_motifs.append({f: [m.copy() for m in ms] for f, ms in cur_motifs.items()})
        year_shared.append(cur_shared)

    all_motifs = [m for ym in year_motifs for ms in ym.values() for m in ms]
    if shared is not None:
        all_motifs.append(shared)

    records, seqs = [], []
    plan = []
    for yi, year in enumerate(years):
        if spec.benign:
            plan += [("benign", None, yi)] * spec.samples_per_class
        for f in families:
            plan += [("malware", f, yi)] * spec.samples_per_class

    for i, (label, fam, yi) in enumerate(plan):
        length = int(rng.integers(lo, hi + 1))
        ids = rng.choice(V, size=length, p=year_bg[yi])
        if label == "malware":
            own = list(year_motifs[yi][fam])
            if year_shared[yi] is not None and rng.random() < spec.shared_motif_rate:
                plants = [year_shared[yi]] * spec.plants_per_seq
            else:
                plants = [own[int(rng.integers(len(own)))] for _ in range(spec.plants_per_seq)]
            slots = rng.choice(length // spec.motif_len, size=len(plants), replace=False)
            for slot, motif in zip(slots, plants):
                ids[slot * spec.motif_len:(slot + 1) * spec.motif_len] = motif
        if spec.noise_rate > 0:
            hit = rng.random(length) < spec.noise_rate
            ids[hit] = rng.choice(V, size=int(hit.sum()), p=year_bg[yi])
        keep = own if label == "malware" else []
        for m in all_motifs:
            if any(np.array_equal(m, k) for k in keep):
                continue
            if label == "malware" and year_shared[yi] is not None and np.array_equal(m, year_shared[yi]):
                continue
            _scrub(ids, m, int(free_tokens[int(rng.integers(len(free_tokens)))]))
        path = f"apps/{i:05d}.apk"
        year = years[yi]
        records.append(AppRecord(path, label, fam, year))
        seqs.append(ApiCallSequence([token_name(int(v)) for v in ids], path))
    return SyntheticCorpus(CorpusManifest(records), seqs, motifs, shared)


def write_corpus(corpus: SyntheticCorpus, out_dir, pad_resources: int = 0, seed: int = 0,
                 filler: int = 0) -> str:
    """Materialize APKs plus ``manifest.tsv`` under ``out_dir``; returns the manifest path.

    ``pad_resources`` > 0 adds an incompressible stored resource of random size
    up to that many bytes to each APK, decoupling archive size from dex size.
    """
    os.makedirs(os.path.join(out_dir, "apps"), exist_ok=True)
    rng = np.random.default_rng(seed)
    for rec, seq in zip(corpus.manifest.records, corpus.sequences):
        dex_bytes = dexgen.build_dex(dexgen.sequence_to_classes(seq.calls), filler=filler)
        resources = None
        if pad_resources:
            size = int(rng.integers(0, pad_resources + 1))
            resources = {"res/raw/blob.bin": rng.bytes(size)}
        dexgen.write_apk(os.path.join(out_dir, rec.app_path), dex_bytes, resources)
    path = os.path.join(out_dir, "manifest.tsv")
    save_manifest(corpus.manifest, path)
    return path
