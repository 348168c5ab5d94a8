"""Union symbol inventory with language-tagged boundary symbols and masks.

Phonemes are shared between languages; every language additionally owns one
word-separator symbol (``<space>_<lang>``) and one sentence symbol
(``<sos>_<lang>``).  The sentence symbol doubles as the end-of-sentence
target, so an encoded utterance reads ``<sos> w1 <space> w2 ... wn <sos>``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InvalidLanguageError, OOVError

PHONEME = "phoneme"
SPACE = "space"
SOS = "sos"
BOUNDARY_LABEL = "boundary-label"


@dataclass(frozen=True)
class LanguageId:
    name: str
    index: int


@dataclass(frozen=True)
class Symbol:
    id: int
    text: str
    kind: str
    owner: str | None = None


def space_text(lang: str) -> str:
    return f"<space>_{lang}"


def sos_text(lang: str) -> str:
    return f"<sos>_{lang}"


@dataclass(frozen=True)
class Alphabet:
    """Immutable symbol table.

    ``masks[lang]`` is a boolean vector over symbol ids that is true for the
    language's phonemes and its own ``<space>``/``<sos>``.
    """

    symbols: tuple[Symbol, ...]
    languages: tuple[LanguageId, ...]
    phonemes_by_lang: Mapping[str, frozenset]
    _by_text: dict = field(init=False, repr=False, compare=False)
    _masks: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        by_text = {s.text: s.id for s in self.symbols}
        if len(by_text) != len(self.symbols):
            raise InvalidLanguageError("duplicate symbol text")
        object.__setattr__(self, "_by_text", by_text)
        masks = {}
        for lang in self.languages:
            m = np.zeros(len(self.symbols), dtype=bool)
            for ph in self.phonemes_by_lang[lang.name]:
                m[by_text[ph]] = True
            m[by_text[space_text(lang.name)]] = True
            m[by_text[sos_text(lang.name)]] = True
            m.setflags(write=False)
            masks[lang.name] = m
        object.__setattr__(self, "_masks", masks)

    def __len__(self) -> int:
        return len(self.symbols)

    @property
    def language_names(self) -> list[str]:
        return [lang.name for lang in self.languages]

    def language(self, name: str) -> LanguageId:
        for lang in self.languages:
            if lang.name == name:
                return lang
        raise InvalidLanguageError(f"unknown language {name!r}")

    def mask(self, lang: str) -> np.ndarray:
        try:
            return self._masks[lang]
        except KeyError:
            raise InvalidLanguageError(f"unknown language {lang!r}") from None

    @property
    def masks(self) -> dict[str, np.ndarray]:
        return dict(self._masks)

    def id_of(self, text: str) -> int:
        return self._by_text[text]

    def has(self, text: str) -> bool:
        return text in self._by_text

    def phoneme_id(self, text: str) -> int:
        sid = self._by_text.get(text)
        if sid is None or self.symbols[sid].kind != PHONEME:
            raise KeyError(text)
        return sid

    def space_id(self, lang: str) -> int:
        self.language(lang)
        return self._by_text[space_text(lang)]

    def sos_id(self, lang: str) -> int:
        self.language(lang)
        return self._by_text[sos_text(lang)]

    def text(self, sid: int) -> str:
        return self.symbols[sid].text

    def kind(self, sid: int) -> str:
        return self.symbols[sid].kind

    def is_boundary(self, sid: int) -> bool:
        return self.symbols[sid].kind in (SPACE, SOS)

    def to_tsv(self) -> str:
        lines = [
            f"{s.id}\t{s.text}\t{s.kind}\t{s.owner or ''}" for s in self.symbols
        ]
        return "\n".join(lines) + "\n"

    @property
    def hash(self) -> str:
        """Content hash of the id map, stable across processes."""
        return hashlib.sha256(self.to_tsv().encode("utf-8")).hexdigest()

    def to_dict(self) -> dict:
        return {
            "languages": [lang.name for lang in self.languages],
            "symbols": [[s.id, s.text, s.kind, s.owner] for s in self.symbols],
            "phonemes": {
                k: sorted(v) for k, v in sorted(self.phonemes_by_lang.items())
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Alphabet":
        languages = tuple(LanguageId(n, i) for i, n in enumerate(d["languages"]))
        symbols = tuple(Symbol(int(i), t, k, o) for i, t, k, o in d["symbols"])
        for i, s in enumerate(symbols):
            if s.id != i:
                raise InvalidLanguageError("symbol ids must be dense from 0")
        phon = {k: frozenset(v) for k, v in d["phonemes"].items()}
        return cls(symbols, languages, phon)


def _check_phoneme_set(name: str, phonemes) -> frozenset:
    phonemes = frozenset(phonemes)
    if not phonemes:
        raise InvalidLanguageError(f"language {name!r} has an empty phoneme set")
    for ph in phonemes:
        if not ph or any(c.isspace() for c in ph) or ph.startswith("<"):
            raise InvalidLanguageError(f"invalid phoneme {ph!r} in {name!r}")
    return phonemes


def build_alphabet(per_language_phonemes: Mapping[str, Iterable[str]]) -> Alphabet:
    """Build the union inventory.

    Languages are indexed in mapping order.  Sorted shared phonemes come
    first, followed by ``<space>``/``<sos>`` pairs in language order.
    """
    sets = {}
    for name, phonemes in per_language_phonemes.items():
        if not name or any(c.isspace() for c in name):
            raise InvalidLanguageError(f"invalid language name {name!r}")
        sets[name] = _check_phoneme_set(name, phonemes)
    if not sets:
        raise InvalidLanguageError("no languages given")
    union = sorted(set().union(*sets.values()))
    symbols = [Symbol(i, ph, PHONEME) for i, ph in enumerate(union)]
    languages = []
    for idx, name in enumerate(sets):
        languages.append(LanguageId(name, idx))
        symbols.append(Symbol(len(symbols), space_text(name), SPACE, name))
        symbols.append(Symbol(len(symbols), sos_text(name), SOS, name))
    return Alphabet(tuple(symbols), tuple(languages), sets)


def extend_alphabet(a: Alphabet, new_lang: str, phonemes: Iterable[str]) -> Alphabet:
    """Add a language; existing ids never move, new symbols are appended."""
    if new_lang in a.language_names:
        raise InvalidLanguageError(f"language {new_lang!r} already present")
    phonemes = _check_phoneme_set(new_lang, phonemes)
    symbols = list(a.symbols)
    for ph in sorted(phonemes):
        if not a.has(ph):
            symbols.append(Symbol(len(symbols), ph, PHONEME))
    symbols.append(Symbol(len(symbols), space_text(new_lang), SPACE, new_lang))
    symbols.append(Symbol(len(symbols), sos_text(new_lang), SOS, new_lang))
    languages = a.languages + (LanguageId(new_lang, len(a.languages)),)
    phon = dict(a.phonemes_by_lang)
    phon[new_lang] = phonemes
    return Alphabet(tuple(symbols), languages, phon)


def encode_utterance(
    a: Alphabet, lang: str, words: Sequence[str], lex
) -> list[int]:
    """Encode a word list as ``<sos> pron(w1) <space> ... pron(wn) <sos>``.

    The first pronunciation variant of each word is used.  Raises
    :class:`OOVError` for words missing from ``lex``.
    """
    sos = a.sos_id(lang)
    space = a.space_id(lang)
    out = [sos]
    for k, w in enumerate(words):
        prons = lex.entries.get(w)
        if not prons:
            raise OOVError(w)
        if k > 0:
            out.append(space)
        out.extend(prons[0])
    out.append(sos)
    return out


def decode_symbols(a: Alphabet, seq: Sequence[int]) -> list[list[str]]:
    """Split an encoded sequence into per-word phoneme-text lists."""
    words: list[list[str]] = []
    cur: list[str] = []
    for sid in seq:
        kind = a.kind(sid)
        if kind == PHONEME:
            cur.append(a.text(sid))
        elif cur:
            words.append(cur)
            cur = []
    if cur:
        words.append(cur)
    return words
