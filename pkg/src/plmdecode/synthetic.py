"""Toy language families for experiments without licensed speech corpora.

A proto-language supplies phoneme inventory, cognate word list and a sparse
word-bigram grammar.  Each daughter language applies a few sound changes
(a merger and one novel phoneme) to every proto word, so daughters share
most phonotactics and vocabulary shapes.  Words are spelled by joining
their phonemes, so open-vocabulary output is directly comparable with
reference transcripts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .alphabet import Alphabet, build_alphabet
from .data_io import Corpus, encode_corpus
from .lexicon import Lexicon, parse_lexicon

CONSONANTS = ["p", "t", "k", "b", "d", "g", "m", "n", "s", "l", "r", "w", "j",
              "f", "h", "ʃ", "tʃ", "ŋ", "z", "v"]
VOWELS = ["a", "e", "i", "o", "u", "ə"]
NOVEL = ["ɓ", "ɗ", "ʔ", "x", "ɣ", "ɲ", "ʒ", "θ", "ð", "ɬ", "q", "kʰ"]

# Broad IPA pool for inventory-size experiments.
IPA_POOL = (
    "p b t d ʈ ɖ c ɟ k g q ɢ ʔ m ɱ n ɳ ɲ ŋ ɴ ʙ r ʀ ⱱ ɾ ɽ ɸ β f v θ ð s z ʃ ʒ ʂ ʐ "
    "ç ʝ x ɣ χ ʁ ħ ʕ h ɦ ɬ ɮ ʋ ɹ ɻ j ɰ l ɭ ʎ ʟ ɓ ɗ ʄ ɠ ʛ tʃ dʒ ts dz "
    "i y ɨ ʉ ɯ u ɪ ʏ ʊ e ø ɘ ɵ ɤ o ə ɛ œ ɜ ɞ ʌ ɔ æ ɐ a ɶ ɑ ɒ"
).split()

# phoneme inventory sizes of six real languages, used to size the toy family
INVENTORY_SIZES = (31, 25, 29, 39, 37, 44)


def toy_inventories(sizes: Sequence[int] = INVENTORY_SIZES, core: int = 20,
                    seed: int = 0) -> dict[str, set[str]]:
    """Inventories of the given sizes sharing a common core of phonemes."""
    rng = np.random.default_rng(seed)
    pool = list(IPA_POOL)
    order = rng.permutation(len(pool))
    core_set = [pool[i] for i in order[:core]]
    rest = [pool[i] for i in order[core:]]
    out = {}
    for k, n in enumerate(sizes):
        extra = rng.choice(len(rest), size=n - core, replace=False)
        out[f"L{k}"] = set(core_set) | {rest[i] for i in extra}
    return out


@dataclass
class ToyLanguage:
    name: str
    words: list[tuple[str, ...]]           # pronunciation of every proto word
    family: "LanguageFamily" = field(repr=False)

    @property
    def phonemes(self) -> set[str]:
        return {p for w in self.words for p in w}

    def spelling(self, k: int) -> str:
        return "".join(self.words[k])

    @property
    def vocabulary(self) -> list[str]:
        return [self.spelling(k) for k in range(len(self.words))]

    def lexicon_tsv(self, indices: Iterable[int] | None = None) -> str:
        idx = range(len(self.words)) if indices is None else indices
        seen = set()
        lines = []
        for k in idx:
            w = self.spelling(k)
            if w in seen:
                continue
            seen.add(w)
            lines.append(f"{w}\t{' '.join(self.words[k])}\n")
        return "".join(lines)

    def lexicon(self, alphabet: Alphabet, indices: Iterable[int] | None = None) -> Lexicon:
        return parse_lexicon(self.lexicon_tsv(indices), alphabet)

    def sentences(self, n: int, seed: int, vocab: Sequence[int] | None = None) -> list[list[str]]:
        return [[self.spelling(k) for k in s]
                for s in self.family.index_sentences(n, seed, vocab)]

    def transcripts(self, n: int, seed: int, prefix: str | None = None,
                    vocab: Sequence[int] | None = None) -> dict[str, list[str]]:
        prefix = prefix or self.name
        return {f"{prefix}-{seed}-{i:05d}": s
                for i, s in enumerate(self.sentences(n, seed, vocab))}

    def corpus(self, alphabet: Alphabet, n: int, seed: int,
               vocab: Sequence[int] | None = None, lexicon: Lexicon | None = None) -> Corpus:
        lex = lexicon or self.lexicon(alphabet)
        return encode_corpus(self.transcripts(n, seed, vocab=vocab), self.name, lex,
                             alphabet, "strict", source=f"synthetic:{self.name}:{seed}")


class LanguageFamily:
    """Proto-language plus daughters derived by regular sound change."""

    def __init__(self, n_languages: int = 7, n_words: int = 40, seed: int = 0,
                 successors: int = 3, min_len: int = 3, max_len: int = 6):
        self.rng = np.random.default_rng(seed)
        rng = self.rng
        self.seed = seed
        self.min_len, self.max_len = min_len, max_len
        self.proto = self._proto_words(n_words)
        n = len(self.proto)
        self.unigram = 1.0 / np.arange(1, n + 1)
        self.unigram /= self.unigram.sum()
        self.successors = [rng.choice(n, size=successors, replace=False) for _ in range(n)]
        self.languages = []
        novel = list(NOVEL)
        rng.shuffle(novel)
        for k in range(n_languages):
            self.languages.append(self._daughter(f"L{k}", novel[k % len(novel)]))

    def _proto_words(self, n: int) -> list[tuple[str, ...]]:
        rng = self.rng
        words: set[tuple[str, ...]] = set()
        out = []
        while len(out) < n:
            syll = int(rng.integers(1, 4))
            w: list[str] = []
            for _ in range(syll):
                w.append(str(rng.choice(CONSONANTS)))
                w.append(str(rng.choice(VOWELS)))
                if rng.random() < 0.25:
                    w.append(str(rng.choice(CONSONANTS)))
            t = tuple(w)
            if t not in words:
                words.add(t)
                out.append(t)
        return out

    def _daughter(self, name: str, novel: str) -> ToyLanguage:
        rng = self.rng
        cons = list(CONSONANTS)
        a, b, c = (cons[i] for i in rng.choice(len(cons), size=3, replace=False))
        v1, v2 = (VOWELS[i] for i in rng.choice(len(VOWELS), size=2, replace=False))
        change = {a: b, c: novel, v1: v2}   # merger, novel phoneme, vowel shift
        words = [tuple(change.get(p, p) for p in w) for w in self.proto]
        return ToyLanguage(name, words, self)

    def index_sentences(self, n: int, seed: int,
                        vocab: Sequence[int] | None = None) -> list[list[int]]:
        rng = np.random.default_rng([self.seed, seed])
        allowed = None if vocab is None else set(vocab)
        out = []
        for _ in range(n):
            length = int(rng.integers(self.min_len, self.max_len + 1))
            s = [self._draw_start(rng, allowed)]
            while len(s) < length:
                succ = self.successors[s[-1]]
                if allowed is not None:
                    succ = [x for x in succ if x in allowed] or None
                if succ is None or rng.random() < 0.2:
                    s.append(self._draw_start(rng, allowed))
                else:
                    s.append(int(rng.choice(succ)))
            out.append(s)
        return out

    def _draw_start(self, rng, allowed) -> int:
        probs = self.unigram
        if allowed is not None:
            probs = probs * np.isin(np.arange(len(probs)), list(allowed))
            probs = probs / probs.sum()
        return int(rng.choice(len(probs), p=probs))

    def alphabet(self, names: Sequence[str] | None = None) -> Alphabet:
        langs = [l for l in self.languages if names is None or l.name in names]
        return build_alphabet({l.name: l.phonemes for l in langs})

    def language(self, name: str) -> ToyLanguage:
        for l in self.languages:
            if l.name == name:
                return l
        raise KeyError(name)

    def phoneme_classes(self) -> dict[str, str]:
        """Broad classes for a similarity-based confusion matrix."""
        classes = {}
        for l in self.languages:
            for p in l.phonemes:
                classes[p] = "V" if p in VOWELS else "C"
        return classes
