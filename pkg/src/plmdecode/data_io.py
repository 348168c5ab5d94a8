"""Corpus ingestion, splitting, file formats and synthetic posteriorgrams.

Formats
-------
Transcripts / corpora
    ``utt-id<TAB>word word ...`` per line, UTF-8.
Text posteriorgram
    A header ``CTCPOST v1 T=<int> L=<int> blank=<int> labels=<comma-list>``
    followed by ``T`` lines of ``L`` space-separated log-probabilities.
Binary posteriorgram
    ``CTCP``, then little-endian uint32 ``T``, ``L``, ``blank`` and
    ``n`` (byte length of the UTF-8 comma-joined labels), the label bytes,
    and ``T*L`` float64 values row-major.
Checkpoint
    ``PLMCKPT\\0``, three uint16 version fields, uint64 header length, a
    canonical JSON header (meta, alphabet, config, seed, word counts, block
    layout) and every block as row-major float64, little-endian.
"""

from __future__ import annotations

import io
import json
import logging
import math
import os
import struct
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .alphabet import PHONEME, SPACE, Alphabet, encode_utterance
from .ctc import BLANK, BOUNDARY, Posteriorgram
from .errors import ConfigError, FormatError, OOVError
from .lm import LMParams

log = logging.getLogger(__name__)

POST_MAGIC = b"CTCP"
TEXT_HEADER = b"CTCPOST "   # shares its first four bytes with the binary magic
CKPT_MAGIC = b"PLMCKPT\x00"
CKPT_VERSION = (1, 0, 0)


# ---------------------------------------------------------------- transcripts

def parse_transcripts(stream) -> dict[str, list[str]]:
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    out: dict[str, list[str]] = {}
    for lineno, raw in enumerate(stream, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            continue
        utt, sep, text = line.partition("\t")
        utt = utt.strip()
        if not utt or (not sep and " " in utt):
            raise FormatError(f"line {lineno}: expected 'utt-id<TAB>words'")
        if utt in out:
            raise FormatError(f"line {lineno}: duplicate utterance id {utt!r}")
        out[utt] = text.split()
    return out


def read_transcripts(path) -> dict[str, list[str]]:
    with open(path, encoding="utf-8") as f:
        return parse_transcripts(f)


def format_transcripts(items: Iterable[tuple[str, Sequence[str]]]) -> str:
    return "".join(f"{u}\t{' '.join(ws)}\n" for u, ws in items)


def write_transcripts(path, items) -> None:
    Path(path).write_text(format_transcripts(items), encoding="utf-8")


def join_ref_hyp(ref: Mapping[str, list[str]], hyp: Mapping[str, list[str]]):
    """Pairs in reference order; a missing hypothesis counts as empty."""
    return [(ref[u], hyp.get(u, [])) for u in ref]


# ---------------------------------------------------------------- corpora

@dataclass
class Utterance:
    utt_id: str
    language: str
    words: list[str]
    symbols: list[int]


@dataclass
class Corpus:
    utterances: list[Utterance]
    provenance: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.utterances)

    def __iter__(self):
        return iter(self.utterances)

    def sequences(self) -> list[tuple[str, list[int]]]:
        return [(u.language, u.symbols) for u in self.utterances]

    def word_counts(self) -> Counter:
        c = Counter()
        for u in self.utterances:
            c.update(u.words)
        return c

    def vocabulary(self) -> set[str]:
        return {w for u in self.utterances for w in u.words}

    def __add__(self, other: "Corpus") -> "Corpus":
        ids = {u.utt_id for u in self.utterances}
        clash = [u.utt_id for u in other.utterances if u.utt_id in ids]
        if clash:
            raise FormatError(f"duplicate utterance id {clash[0]!r}")
        return Corpus(self.utterances + other.utterances,
                      {"parts": [self.provenance, other.provenance]})


def encode_corpus(transcripts: Mapping[str, list[str]], lang: str, lexicon,
                  alphabet: Alphabet, oov_policy: str = "skip",
                  source: str = "<memory>") -> Corpus:
    if oov_policy not in ("skip", "strict"):
        raise ConfigError(f"unknown OOV policy {oov_policy!r}")
    utts = []
    skipped = []
    for utt_id, words in transcripts.items():
        try:
            seq = encode_utterance(alphabet, lang, words, lexicon)
        except OOVError:
            if oov_policy == "strict":
                raise
            skipped.append(utt_id)
            continue
        utts.append(Utterance(utt_id, lang, list(words), seq))
    n = len(transcripts)
    if skipped:
        log.warning("%s: skipped %d of %d utterances containing OOV words",
                    source, len(skipped), n)
    prov = {"source": source, "language": lang, "read": n,
            "skipped_oov": len(skipped), "skipped_ids": skipped,
            "skipped_fraction": len(skipped) / n if n else 0.0}
    return Corpus(utts, prov)


def load_corpus(path, lang: str, lexicon, alphabet: Alphabet,
                oov_policy: str = "skip") -> Corpus:
    """Read a transcript file and encode it; OOV utterances skipped or fatal."""
    return encode_corpus(read_transcripts(path), lang, lexicon, alphabet,
                         oov_policy, source=str(path))


def split_corpus(c: Corpus, fraction: float, seed: int = 0) -> tuple[Corpus, Corpus]:
    """Seeded subset of ``floor(fraction * N)`` utterances and its complement.

    Subsets are prefixes of one seeded permutation, so smaller fractions
    nest inside larger ones for the same seed.  Both parts keep corpus order.
    """
    if not 0.0 < fraction <= 1.0:
        raise ConfigError("fraction must lie in (0, 1]")
    n = len(c)
    k = int(math.floor(fraction * n + 1e-9))
    perm = np.random.default_rng(seed).permutation(n)
    chosen = np.zeros(n, dtype=bool)
    chosen[perm[:k]] = True
    sub = [u for u, keep in zip(c.utterances, chosen) if keep]
    rest = [u for u, keep in zip(c.utterances, chosen) if not keep]
    prov = {"split_of": c.provenance.get("source"), "fraction": fraction, "seed": seed}
    return Corpus(sub, {**prov, "part": "subset"}), Corpus(rest, {**prov, "part": "remainder"})


# ---------------------------------------------------------------- posteriorgrams

def reference_labels(alphabet: Alphabet, seq: Sequence[int]) -> list[str]:
    """Acoustic label sequence of an encoded utterance: phonemes and boundaries."""
    out = []
    for sid in seq:
        kind = alphabet.kind(sid)
        if kind == PHONEME:
            out.append(alphabet.text(sid))
        elif kind == SPACE:
            out.append(BOUNDARY)
    return out


def default_labels(phonemes: Iterable[str]) -> list[str]:
    return [BLANK, *sorted(set(phonemes)), BOUNDARY]


def similarity_confusion(labels: Sequence[str], classes: Mapping[str, str],
                         leak: float = 0.05) -> np.ndarray:
    """Confusion weights: 1 between labels of the same class, ``leak`` otherwise."""
    L = len(labels)
    w = np.full((L, L), leak)
    for i, a in enumerate(labels):
        for j, b in enumerate(labels):
            if a in classes and classes.get(a) == classes.get(b):
                w[i, j] = 1.0
    np.fill_diagonal(w, 0.0)
    return w


def synth_posteriors(ref: Sequence[str], labels: Sequence[str] | None = None,
                     frames_per_symbol: int = 3, noise: float = 0.0,
                     blank_mass: float = 0.05, confusion: np.ndarray | None = None,
                     seed: int = 0, concentration: float = 2.0,
                     spread: float = 0.3, floor: float = 1e-20) -> Posteriorgram:
    """Synthetic CTC output for a reference label sequence.

    Every reference label gets ``frames_per_symbol`` frames.  Per frame a
    noise share ``eta ~ Beta`` with mean ``noise`` is moved off the true
    label onto a Dirichlet draw over the confusable labels (weights from
    ``confusion``, uniform by default), and ``blank_mass`` goes to blank.
    Repeated labels are separated by one blank-dominated frame.  At
    ``noise == 0`` the per-frame argmax is the reference.
    """
    if frames_per_symbol < 1:
        raise ConfigError("frames_per_symbol must be >= 1")
    if not 0.0 <= noise < 1.0 or not 0.0 <= blank_mass < 1.0:
        raise ConfigError("noise and blank_mass must lie in [0, 1)")
    if noise + blank_mass >= 1.0:
        raise ConfigError("noise + blank_mass must be < 1")
    if blank_mass >= 0.5:
        raise ConfigError("blank_mass must be < 0.5 for the reference to dominate")
    if labels is None:
        labels = default_labels(l for l in ref if l != BOUNDARY)
    labels = list(labels)
    col = {lab: j for j, lab in enumerate(labels)}
    blank = col[BLANK]
    L = len(labels)
    if confusion is None:
        confusion = np.ones((L, L)) - np.eye(L)
    confusion = np.asarray(confusion, dtype=np.float64)
    if confusion.shape != (L, L) or (confusion < 0).any():
        raise ConfigError("confusion must be a non-negative L x L matrix")
    rng = np.random.default_rng(seed)
    targets: list[int] = []
    prev = None
    for lab in ref:
        if lab not in col:
            raise ConfigError(f"reference label {lab!r} is not in the label set")
        if lab == prev:
            targets.append(-1)
        targets.extend([col[lab]] * frames_per_symbol)
        prev = lab
    if not targets:
        targets = [blank]
    rows = np.zeros((len(targets), L))
    a = concentration * noise
    b = concentration * (1.0 - noise)
    for t, tgt in enumerate(targets):
        separator = tgt == -1 or tgt == blank
        true = blank if separator else tgt
        eta = rng.beta(a, b) if noise > 0 else 0.0
        p = np.zeros(L)
        w = confusion[true].copy()
        w[true] = 0.0
        w[blank] = 0.0
        off = np.flatnonzero(w > 0)
        if off.size == 0 or eta == 0.0:
            p[true] = 1.0
        else:
            q = rng.dirichlet(spread * w[off] / w[off].max())
            p[true] = 1.0 - eta
            p[off] += eta * q
        if not separator:
            p *= 1.0 - blank_mass
            p[blank] += blank_mass
        rows[t] = p
    rows = np.maximum(rows, floor)
    rows /= rows.sum(axis=1, keepdims=True)
    return Posteriorgram(np.log(rows), labels, blank)


def _format_float(v: float) -> str:
    return repr(float(v))


def format_posteriorgram(post: Posteriorgram) -> str:
    buf = [f"CTCPOST v1 T={post.T} L={post.L} blank={post.blank} "
           f"labels={','.join(post.labels)}\n"]
    for row in post.frames:
        buf.append(" ".join(_format_float(v) for v in row) + "\n")
    return "".join(buf)


def parse_posteriorgram(text: str) -> Posteriorgram:
    lines = text.splitlines()
    if not lines:
        raise FormatError("empty posteriorgram file")
    head = lines[0].split(" ")
    if len(head) != 6 or head[0] != "CTCPOST" or head[1] != "v1":
        raise FormatError("bad posteriorgram header")
    fields = {}
    for item in head[2:]:
        key, sep, value = item.partition("=")
        if not sep:
            raise FormatError(f"bad header field {item!r}")
        fields[key] = value
    try:
        T, L, blank = int(fields["T"]), int(fields["L"]), int(fields["blank"])
        labels = fields["labels"].split(",")
    except (KeyError, ValueError) as e:
        raise FormatError(f"bad posteriorgram header: {e}") from None
    if len(labels) != L:
        raise FormatError("label count does not match L")
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != T:
        raise FormatError(f"expected {T} frame lines, found {len(body)}")
    try:
        frames = np.array([[float(v) for v in ln.split()] for ln in body])
    except ValueError as e:
        raise FormatError(f"bad log-probability: {e}") from None
    if frames.shape != (T, L):
        raise FormatError("frame lines do not all have L values")
    return Posteriorgram(frames, labels, blank)


def posteriorgram_to_bytes(post: Posteriorgram) -> bytes:
    lab = ",".join(post.labels).encode("utf-8")
    head = POST_MAGIC + struct.pack("<4I", post.T, post.L, post.blank, len(lab))
    return head + lab + post.frames.astype("<f8").tobytes(order="C")


def posteriorgram_from_bytes(data: bytes) -> Posteriorgram:
    if data[:4] != POST_MAGIC:
        raise FormatError("not a binary posteriorgram (bad magic)")
    if len(data) < 20:
        raise FormatError("truncated binary posteriorgram")
    T, L, blank, n = struct.unpack("<4I", data[4:20])
    end = 20 + n + 8 * T * L
    if len(data) != end:
        raise FormatError("truncated or oversized binary posteriorgram")
    labels = data[20:20 + n].decode("utf-8").split(",")
    frames = np.frombuffer(data[20 + n:], dtype="<f8").reshape(T, L).astype(np.float64)
    return Posteriorgram(frames, labels, blank)


def save_posteriorgram(post: Posteriorgram, path, binary: bool | None = None) -> None:
    path = Path(path)
    if binary is None:
        binary = path.suffix == ".ctcp"
    if binary:
        path.write_bytes(posteriorgram_to_bytes(post))
    else:
        path.write_text(format_posteriorgram(post), encoding="utf-8")


def load_posteriorgram(path) -> Posteriorgram:
    data = Path(path).read_bytes()
    if data[:4] == POST_MAGIC and data[:8] != TEXT_HEADER:
        return posteriorgram_from_bytes(data)
    try:
        return parse_posteriorgram(data.decode("utf-8"))
    except UnicodeDecodeError:
        raise FormatError(f"{path}: neither a text nor a binary posteriorgram") from None


POST_SUFFIXES = (".post", ".ctcp")


def list_posteriorgrams(directory) -> list[Path]:
    return sorted(p for p in Path(directory).iterdir() if p.suffix in POST_SUFFIXES)


# ---------------------------------------------------------------- checkpoints

@dataclass
class Checkpoint:
    alphabet: Alphabet
    params: LMParams
    config: dict = field(default_factory=dict)
    seed: int = 0
    word_counts: dict = field(default_factory=dict)
    version: tuple = CKPT_VERSION


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":")).encode("utf-8")


def checkpoint_to_bytes(ckpt: Checkpoint) -> bytes:
    if ckpt.params.alphabet_hash and ckpt.params.alphabet_hash != ckpt.alphabet.hash:
        raise FormatError("parameters were trained on a different alphabet")
    blocks = ckpt.params.blocks()
    header = {
        "meta": ckpt.params.meta,
        "alphabet": ckpt.alphabet.to_dict(),
        "config": ckpt.config,
        "seed": ckpt.seed,
        "word_counts": dict(sorted(ckpt.word_counts.items())),
        "blocks": [[name, list(arr.shape)] for name, arr in blocks.items()],
    }
    head = _canonical_json(header)
    out = [CKPT_MAGIC, struct.pack("<3H", *CKPT_VERSION), struct.pack("<Q", len(head)), head]
    for arr in blocks.values():
        out.append(np.ascontiguousarray(arr, dtype="<f8").tobytes(order="C"))
    return b"".join(out)


def checkpoint_from_bytes(data: bytes, alphabet: Alphabet | None = None) -> Checkpoint:
    if data[:8] != CKPT_MAGIC:
        raise FormatError("not a checkpoint (bad magic)")
    if len(data) < 22:
        raise FormatError("truncated checkpoint")
    version = struct.unpack("<3H", data[8:14])
    if version[0] != CKPT_VERSION[0]:
        raise FormatError(f"unsupported checkpoint version {'.'.join(map(str, version))}")
    (n,) = struct.unpack("<Q", data[14:22])
    if len(data) < 22 + n:
        raise FormatError("truncated checkpoint header")
    try:
        header = json.loads(data[22:22 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"corrupt checkpoint header: {e}") from None
    alpha = Alphabet.from_dict(header["alphabet"])
    meta = header["meta"]
    if meta["alphabet_hash"] != alpha.hash:
        raise FormatError("checkpoint alphabet does not match its recorded hash")
    if alphabet is not None and alphabet.hash != alpha.hash:
        raise FormatError("checkpoint alphabet differs from the supplied alphabet")
    pos = 22 + n
    arrays = {}
    for name, shape in header["blocks"]:
        size = int(np.prod(shape)) * 8
        if pos + size > len(data):
            raise FormatError("truncated checkpoint data")
        arrays[name] = np.frombuffer(data[pos:pos + size], dtype="<f8").reshape(shape)
        pos += size
    if pos != len(data):
        raise FormatError("trailing bytes after checkpoint data")
    W = np.concatenate([arrays[f"W_{g}"] for g in "ifog"], axis=0).astype(np.float64)
    b = np.concatenate([arrays[f"b_{g}"] for g in "ifog"]).astype(np.float64)
    params = LMParams(arrays["emb"].astype(np.float64), W, b,
                      arrays["W_out"].astype(np.float64), arrays["b_out"].astype(np.float64),
                      meta["alphabet_hash"])
    return Checkpoint(alpha, params, header["config"], header["seed"],
                      header["word_counts"], tuple(version))


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    Path(path).write_bytes(checkpoint_to_bytes(ckpt))


def load_checkpoint(path, alphabet: Alphabet | None = None) -> Checkpoint:
    return checkpoint_from_bytes(Path(path).read_bytes(), alphabet)


# ---------------------------------------------------------------- validation

def validate_file(path, kind: str) -> dict:
    """Structured report of format checks for ``kind`` in
    {posteriorgram, checkpoint, transcripts, lexicon}."""
    report = {"path": str(path), "kind": kind, "ok": True, "errors": []}
    try:
        if kind == "posteriorgram":
            post = load_posteriorgram(path)
            report.update(T=post.T, L=post.L, blank=post.blank,
                          boundary=post.boundary, labels=list(post.labels))
        elif kind == "checkpoint":
            ck = load_checkpoint(path)
            report.update(meta=ck.params.meta, version=".".join(map(str, ck.version)),
                          languages=ck.alphabet.language_names,
                          finite=ck.params.all_finite())
            if not ck.params.all_finite():
                report["ok"] = False
                report["errors"].append("non-finite parameters")
        elif kind == "transcripts":
            tr = read_transcripts(path)
            report.update(utterances=len(tr), tokens=sum(len(w) for w in tr.values()))
        elif kind == "lexicon":
            from .lexicon import _iter_lines
            with open(path, encoding="utf-8") as f:
                entries = list(_iter_lines(f))
            report.update(entries=len(entries), words=len({w for _, w, _ in entries}),
                          phonemes=sorted({p for _, _, ps in entries for p in ps}))
        else:
            raise ConfigError(f"unknown file kind {kind!r}")
    except (FormatError, OSError, ValueError) as e:
        report["ok"] = False
        report["errors"].append(str(e))
    return report
