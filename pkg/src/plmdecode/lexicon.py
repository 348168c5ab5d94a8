"""Pronunciation lexicons and the prefix tree used for constrained search.

Lexicon files are UTF-8 TSV, one ``word<TAB>ph ph ...`` entry per line;
lines starting with ``#`` and blank lines are ignored.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, TextIO

from .alphabet import Alphabet
from .errors import LexiconParseError


@dataclass
class Lexicon:
    """``entries`` maps a word to its pronunciation variants (tuples of
    phoneme ids) in first-seen order."""

    entries: dict[str, list[tuple[int, ...]]] = field(default_factory=dict)

    def __len__(self):
        return len(self.entries)

    def __contains__(self, word):
        return word in self.entries

    @property
    def words(self) -> list[str]:
        return list(self.entries)

    def add(self, word: str, pron: Sequence[int]) -> None:
        pron = tuple(pron)
        if not pron:
            raise ValueError(f"empty pronunciation for {word!r}")
        variants = self.entries.setdefault(word, [])
        if pron not in variants:
            variants.append(pron)

    def pairs(self) -> Iterable[tuple[str, tuple[int, ...]]]:
        for w, prons in self.entries.items():
            for p in prons:
                yield w, p


def _iter_lines(stream):
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    for lineno, raw in enumerate(stream, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0].strip():
            raise LexiconParseError("expected 'word<TAB>phonemes'", lineno)
        phones = parts[1].split()
        if not phones:
            raise LexiconParseError("empty pronunciation", lineno)
        yield lineno, parts[0].strip(), phones


def read_lexicon_phonemes(stream: TextIO | str) -> set[str]:
    """Phoneme inventory of a lexicon file, without an alphabet."""
    out: set[str] = set()
    for _, _, phones in _iter_lines(stream):
        out.update(phones)
    return out


def parse_lexicon(stream: TextIO | str, a: Alphabet) -> Lexicon:
    lex = Lexicon()
    for lineno, word, phones in _iter_lines(stream):
        ids = []
        for ph in phones:
            try:
                ids.append(a.phoneme_id(ph))
            except KeyError:
                raise LexiconParseError(f"unknown phoneme {ph!r}", lineno) from None
        lex.add(word, ids)
    return lex


def format_lexicon(lex: Lexicon, a: Alphabet) -> str:
    return "".join(
        f"{w}\t{' '.join(a.text(s) for s in p)}\n" for w, p in lex.pairs()
    )


class PrefixTree:
    """Deterministic trie over phoneme ids.

    Nodes live in flat arrays; node 0 is the root.  ``terminals(n)`` lists
    the word ids ending at ``n`` best-ranked first (higher corpus frequency,
    then lexicographic).
    """

    ROOT = 0

    def __init__(self, lex: Lexicon, word_counts: Mapping[str, int] | None = None):
        if not lex.entries:
            raise ValueError("cannot build a prefix tree from an empty lexicon")
        counts = word_counts or {}
        self.word_table: list[str] = sorted(
            lex.entries, key=lambda w: (-counts.get(w, 0), w)
        )
        # word id order == homophone rank order
        self._word_id = {w: i for i, w in enumerate(self.word_table)}
        self._children: list[dict[int, int]] = [{}]
        term: list[list[int]] = [[]]
        for w, pron in lex.pairs():
            node = self.ROOT
            for s in pron:
                nxt = self._children[node].get(s)
                if nxt is None:
                    nxt = len(self._children)
                    self._children[node][s] = nxt
                    self._children.append({})
                    term.append([])
                node = nxt
            wid = self._word_id[w]
            if wid not in term[node]:
                term[node].append(wid)
        self._terminals = [tuple(sorted(t)) for t in term]

    def __len__(self) -> int:
        return len(self._children)

    @property
    def root(self) -> int:
        return self.ROOT

    def step(self, node: int, symbol: int) -> int | None:
        return self._children[node].get(symbol)

    def children(self, node: int) -> dict[int, int]:
        return self._children[node]

    def terminals(self, node: int) -> tuple[int, ...]:
        return self._terminals[node]

    def is_terminal(self, node: int) -> bool:
        return bool(self._terminals[node])

    def best_word(self, node: int) -> int:
        return self._terminals[node][0]

    def word_rank(self, word: str) -> int:
        return self._word_id[word]

    def walk(self, pron: Sequence[int]) -> int | None:
        node = self.ROOT
        for s in pron:
            node = self.step(node, s)
            if node is None:
                return None
        return node


def build_prefix_tree(
    lex: Lexicon, word_counts: Mapping[str, int] | None = None
) -> PrefixTree:
    return PrefixTree(lex, word_counts)


def step(t: PrefixTree, n: int, s: int) -> int | None:
    return t.step(n, s)
