"""CTC decoding over posteriorgrams.

Three strategies share one scoring convention.  For a squashed label
sequence ``y`` (phonemes and word-boundary labels, no blanks)::

    score(y) = log P_ctc(y | X)
             + lm_weight * (sum_k log P_lm(y_k | <sos>, y_<k) + log P_lm(<sos> | y))
             + ins_penalty * n_words(y)

The boundary label is scored by the language model as the language's
``<space>``; the trailing ``<sos>`` term is the sentence terminator.  Word
boundaries are only admitted between two non-empty words, so every label
sequence corresponds to exactly one word sequence.

``beam_search_open`` lets any phoneme follow any other;
``beam_search_lexicon`` only extends a hypothesis along the prefix tree and
only closes a word at a terminal node.  ``brute_force_decode`` enumerates
the same search space exhaustively and serves as an oracle on small inputs.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import lm as lmmod
from .errors import ConfigError, EnumerationTooLarge, FormatError

BLANK = "<blank>"
BOUNDARY = "<wb>"

NEG_INF = -math.inf


def _lae(a: float, b: float) -> float:
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


@dataclass(frozen=True, eq=False)
class Posteriorgram:
    """``frames[t, j]`` is the log-probability of label ``labels[j]`` at frame ``t``."""

    frames: np.ndarray
    labels: tuple[str, ...]
    blank: int

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "labels", tuple(self.labels))
        if frames.ndim != 2 or frames.shape[0] < 1:
            raise FormatError("posteriorgram must be a non-empty T x L matrix")
        if frames.shape[1] != len(self.labels):
            raise FormatError("label count does not match the number of columns")
        if len(set(self.labels)) != len(self.labels):
            raise FormatError("duplicate posteriorgram labels")
        if not 0 <= self.blank < len(self.labels) or self.labels[self.blank] != BLANK:
            raise FormatError(f"blank column must carry the {BLANK} label")
        if self.labels.count(BLANK) != 1 or self.labels.count(BOUNDARY) > 1:
            raise FormatError("need exactly one blank and at most one boundary column")
        if np.isnan(frames).any() or (frames == np.inf).any():
            raise FormatError("posteriorgram contains NaN or +inf")
        err = np.abs(np.logaddexp.reduce(frames, axis=1)).max()
        if err > 1e-6:
            raise FormatError(f"rows do not normalise (max |logsumexp| = {err:.3g})")

    @property
    def T(self) -> int:
        return self.frames.shape[0]

    @property
    def L(self) -> int:
        return self.frames.shape[1]

    @property
    def boundary(self) -> int | None:
        try:
            return self.labels.index(BOUNDARY)
        except ValueError:
            return None

    def column(self, label: str) -> int:
        return self.labels.index(label)


@dataclass
class DecodeConfig:
    beam: int = 40
    lm_weight: float = 1.0
    ins_penalty: float = 0.35     # added per output word; negative values penalise
    mode: str = "lexicon"         # greedy | open | lexicon
    prune_floor: float | None = -30.0

    def __post_init__(self):
        if self.beam < 1:
            raise ConfigError("beam must be >= 1")
        if self.mode == "open-vocab":
            self.mode = "open"
        if self.mode not in ("greedy", "open", "lexicon"):
            raise ConfigError(f"unknown decode mode {self.mode!r}")


@dataclass
class DecodeResult:
    words: list[str]
    score: float
    labels: tuple[int, ...] = ()
    failed: bool = False      # no hypothesis survived (distinct from an empty transcript)


# ---------------------------------------------------------------- basic CTC

def squash(labels: Sequence, blank=BLANK) -> list:
    """Collapse adjacent repeats, then drop blanks."""
    out = []
    prev = object()
    for x in labels:
        if x != prev and x != blank:
            out.append(x)
        prev = x
    return out


def greedy_decode(post: Posteriorgram) -> list[int]:
    """Per-frame argmax (lowest column on ties) followed by squash; column ids."""
    best = np.argmax(post.frames, axis=1)
    return squash(best.tolist(), blank=post.blank)


def split_words(labels: Sequence[int], post: Posteriorgram) -> list[list[int]]:
    words, cur = [], []
    for c in labels:
        if c == post.boundary:
            if cur:
                words.append(cur)
            cur = []
        else:
            cur.append(c)
    if cur:
        words.append(cur)
    return words


def spell(post: Posteriorgram, cols: Sequence[int]) -> str:
    return "".join(post.labels[c] for c in cols)


def greedy_words(post: Posteriorgram) -> list[str]:
    return [spell(post, w) for w in split_words(greedy_decode(post), post)]


def seq_log_prob(post: Posteriorgram, target: Sequence[int]) -> float:
    """log P(target | frames) by the CTC forward recursion; ``-inf`` if infeasible.

    ``target`` lists non-blank column ids.
    """
    x = post.frames
    blank = post.blank
    T = x.shape[0]
    n = len(target)
    if n == 0:
        return float(x[:, blank].sum())
    ext = np.full(2 * n + 1, blank, dtype=np.int64)
    ext[1::2] = target
    S = ext.size
    # skip transition s-2 -> s allowed onto a label that differs from the previous label
    skip = np.zeros(S, dtype=bool)
    skip[3::2] = ext[3::2] != ext[1:-2:2]
    alpha = np.full(S, NEG_INF)
    alpha[0] = x[0, blank]
    alpha[1] = x[0, ext[1]]
    for t in range(1, T):
        prev1 = np.concatenate(([NEG_INF], alpha[:-1]))
        prev2 = np.concatenate(([NEG_INF, NEG_INF], alpha[:-2]))
        prev2 = np.where(skip, prev2, NEG_INF)
        with np.errstate(invalid="ignore"):
            alpha = np.logaddexp(np.logaddexp(alpha, prev1), prev2) + x[t, ext]
    return float(np.logaddexp(alpha[-1], alpha[-2]))


# ---------------------------------------------------------------- LM binding

class BoundLM:
    """An LM (or none) bound to one language and one posteriorgram label set.

    Resolves posteriorgram columns to alphabet ids: phoneme labels by text,
    the boundary label to the language's ``<space>``.
    """

    def __init__(self, params: lmmod.LMParams | None, alphabet, lang: str):
        if params is not None and params.vocab_size != len(alphabet):
            raise ConfigError("LM vocabulary does not match the alphabet")
        self.params = params
        self.alphabet = alphabet
        self.lang = lang
        self.mask = alphabet.mask(lang)
        self.sos = alphabet.sos_id(lang)
        self.space = alphabet.space_id(lang)

    def column_symbols(self, post: Posteriorgram) -> list[int | None]:
        out: list[int | None] = []
        for j, lab in enumerate(post.labels):
            if j == post.blank:
                out.append(None)
            elif lab == BOUNDARY:
                out.append(self.space)
            else:
                try:
                    sid = self.alphabet.phoneme_id(lab)
                except KeyError:
                    raise ConfigError(f"label {lab!r} is not a phoneme of the LM alphabet") from None
                if not self.mask[sid]:
                    raise ConfigError(f"label {lab!r} is outside the {self.lang!r} mask")
                out.append(sid)
        return out

    def initial(self):
        """(state, next-symbol log-probs) after consuming ``<sos>``."""
        if self.params is None:
            return None, None
        return self.advance(lmmod.zero_state(self.params), self.sos)

    def advance(self, state, sym: int):
        logits, state = lmmod.forward_step(self.params, state, sym)
        return state, lmmod.masked_log_probs(logits, self.mask)

    def sequence_log_prob(self, syms: Sequence[int]) -> float:
        """log P(syms, terminator | <sos>) computed by a full teacher-forced pass."""
        if self.params is None:
            return 0.0
        total, _ = lmmod.utterance_nll(self.params, [self.sos, *syms, self.sos], self.mask)
        return -total


def score_labels(post: Posteriorgram, lm: BoundLM, labels: Sequence[int],
                 cfg: DecodeConfig) -> float:
    """Independent recomputation of the fused score of a label sequence."""
    cols = lm.column_symbols(post)
    ctc = seq_log_prob(post, labels)
    lm_lp = lm.sequence_log_prob([cols[c] for c in labels]) if cfg.lm_weight else 0.0
    n_words = len(split_words(labels, post))
    return ctc + cfg.lm_weight * lm_lp + cfg.ins_penalty * n_words


# ---------------------------------------------------------------- beam search

class _Prefix:
    """Static, prefix-determined part of a beam hypothesis.

    Prefixes form a tree; ``children`` caches extensions so a prefix that is
    pruned and later re-created keeps its LM computation.
    """

    __slots__ = ("parent", "label", "depth", "serial", "sym", "lm_lp", "_state",
                 "_next", "node", "pending", "words", "children")

    def __init__(self, parent, label, sym, lm_lp, node, pending, words, serial):
        self.parent = parent
        self.label = label
        self.depth = 0 if parent is None else parent.depth + 1
        self.serial = serial
        self.sym = sym
        self.lm_lp = lm_lp
        self._state = None
        self._next = None
        self.node = node          # trie node (lexicon) or None (open)
        self.pending = pending    # columns of the word being spelled
        self.words = words        # committed words
        self.children = {}

    def labels(self) -> tuple[int, ...]:
        out = []
        p = self
        while p.parent is not None:
            out.append(p.label)
            p = p.parent
        return tuple(reversed(out))

    def next_lp(self, lm: BoundLM):
        if self._next is None:
            self._state, self._next = lm.advance(self.parent._lm_state(lm), self.sym)
        return self._next

    def _lm_state(self, lm: BoundLM):
        if self._state is None:
            self.next_lp(lm)
        return self._state


class _Search:
    def __init__(self, post: Posteriorgram, lm: BoundLM, cfg: DecodeConfig,
                 trie=None, spelling: Mapping[tuple[int, ...], str] | None = None):
        if post.boundary is None:
            raise ConfigError("posteriorgram has no word-boundary label")
        self.post = post
        self.lm = lm
        self.cfg = cfg
        self.trie = trie
        self.spelling = spelling or {}
        self.use_lm = cfg.lm_weight != 0.0 and lm.params is not None
        if cfg.lm_weight != 0.0 and lm.params is None:
            raise ConfigError("non-zero lm_weight requires LM parameters")
        self.cols = lm.column_symbols(post)
        self.serial = itertools.count()
        root_node = trie.root if trie is not None else None
        self.root = _Prefix(None, None, None, 0.0, root_node, (), (), next(self.serial))
        if self.use_lm:
            self.root._state, self.root._next = lm.initial()

    def word_text(self, pending: tuple[int, ...]) -> str:
        syms = tuple(self.cols[c] for c in pending)
        w = self.spelling.get(syms)
        return w if w is not None else spell(self.post, pending)

    def extend(self, pre: _Prefix, c: int) -> _Prefix | None:
        child = pre.children.get(c, False)
        if child is not False:
            return child
        child = self._make_child(pre, c)
        pre.children[c] = child
        return child

    def _make_child(self, pre: _Prefix, c: int) -> _Prefix | None:
        sym = self.cols[c]
        is_boundary = c == self.post.boundary
        trie = self.trie
        node, pending, words = pre.node, pre.pending, pre.words
        if trie is not None:
            if is_boundary:
                if not trie.is_terminal(node):
                    return None
                words = words + (trie.word_table[trie.best_word(node)],)
                node = trie.root
                pending = ()
            else:
                node = trie.step(node, sym)
                if node is None:
                    return None
                pending = pending + (c,)
        else:
            if is_boundary:
                if not pending:
                    return None
                words = words + (self.word_text(pending),)
                pending = ()
            else:
                pending = pending + (c,)
        lm_lp = pre.lm_lp + pre.next_lp(self.lm)[sym] if self.use_lm else 0.0
        return _Prefix(pre, c, sym, lm_lp, node, pending, words, next(self.serial))

    def final_words(self, pre: _Prefix) -> tuple[str, ...] | None:
        """Committed word sequence at end of utterance, or None if invalid."""
        if pre.parent is None:
            return ()
        if pre.label == self.post.boundary:
            return None
        if self.trie is not None:
            if not self.trie.is_terminal(pre.node):
                return None
            return pre.words + (self.trie.word_table[self.trie.best_word(pre.node)],)
        return pre.words + (self.word_text(pre.pending),)

    def run(self) -> DecodeResult:
        post, cfg = self.post, self.cfg
        x = post.frames
        blank = post.blank
        alpha, beta = cfg.lm_weight, cfg.ins_penalty
        nonblank = [j for j in range(post.L) if j != blank]
        # masses: prefix -> [log P(prefix, ends in blank), log P(prefix, ends in label)]
        beams: dict[_Prefix, list[float]] = {self.root: [0.0, NEG_INF]}
        for t in range(post.T):
            row = x[t]
            cand = nonblank
            if cfg.prune_floor is not None:
                cand = [j for j in nonblank if row[j] >= cfg.prune_floor]
            nxt: dict[_Prefix, list[float]] = {}
            for pre, (lp_b, lp_nb) in beams.items():
                tot = _lae(lp_b, lp_nb)
                m = nxt.get(pre)
                if m is None:
                    m = nxt[pre] = [NEG_INF, NEG_INF]
                # blank keeps the prefix
                m[0] = _lae(m[0], tot + row[blank])
                # repeating the last label collapses onto the same prefix
                if pre.label is not None:
                    m[1] = _lae(m[1], lp_nb + row[pre.label])
                for c in cand:
                    child = self.extend(pre, c)
                    if child is None:
                        continue
                    # a repeated label only starts a new symbol after a blank
                    mass = (lp_b if c == pre.label else tot) + row[c]
                    mc = nxt.get(child)
                    if mc is None:
                        mc = nxt[child] = [NEG_INF, NEG_INF]
                    mc[1] = _lae(mc[1], mass)
            if len(nxt) > cfg.beam:
                ranked = sorted(
                    nxt.items(),
                    key=lambda kv: (-(_lae(*kv[1]) + alpha * kv[0].lm_lp
                                      + beta * len(kv[0].words)),
                                    len(kv[0].words), kv[0].serial),
                )
                nxt = dict(ranked[:cfg.beam])
            beams = nxt
        return self._finish(beams)

    def _finish(self, beams) -> DecodeResult:
        cfg = self.cfg
        best = None
        for pre, masses in beams.items():
            if _lae(*masses) == NEG_INF:
                continue
            words = self.final_words(pre)
            if words is None:
                continue
            labels = pre.labels()
            # exact CTC mass: pruning may have dropped alignments of this prefix
            ctc = seq_log_prob(self.post, labels)
            lm_part = 0.0
            if self.use_lm:
                lm_part = pre.lm_lp + pre.next_lp(self.lm)[self.lm.sos]
            score = ctc + cfg.lm_weight * lm_part + cfg.ins_penalty * len(words)
            key = (-score, len(words), self._rank_key(words))
            if best is None or key < best[0]:
                best = (key, DecodeResult(list(words), score, labels))
        if best is None:
            return DecodeResult([], NEG_INF, (), failed=True)
        return best[1]

    def _rank_key(self, words):
        if self.trie is not None:
            return tuple(self.trie.word_rank(w) for w in words)
        return tuple(words)


def beam_search_open(post: Posteriorgram, lm: BoundLM, cfg: DecodeConfig,
                     spelling: Mapping[tuple[int, ...], str] | None = None) -> DecodeResult:
    """Open-vocabulary prefix beam search with per-symbol LM fusion.

    Words are spelled by concatenating phoneme labels, unless ``spelling``
    maps the phoneme-id tuple to a word.
    """
    return _Search(post, lm, cfg, None, spelling).run()


def beam_search_lexicon(post: Posteriorgram, lm: BoundLM, trie, cfg: DecodeConfig) -> DecodeResult:
    """Prefix beam search restricted to words of ``trie``."""
    return _Search(post, lm, cfg, trie).run()


def decode(post: Posteriorgram, lm: BoundLM | None, cfg: DecodeConfig, trie=None,
           spelling=None) -> DecodeResult:
    if cfg.mode == "greedy":
        labels = tuple(greedy_decode(post))
        return DecodeResult(greedy_words(post), seq_log_prob(post, labels), labels)
    if cfg.mode == "open":
        return beam_search_open(post, lm, cfg, spelling)
    if trie is None:
        raise ConfigError("lexicon mode needs a prefix tree")
    return beam_search_lexicon(post, lm, trie, cfg)


# ---------------------------------------------------------------- exact oracle

def _enumerate_lexicon(trie, boundary: int, sym_to_col: dict, T: int, limit: int):
    prons: list[tuple[str, tuple[int, ...]]] = []

    def walk(node, path):
        for w in trie.terminals(node):
            prons.append((trie.word_table[w], tuple(path)))
        for s, child in sorted(trie.children(node).items()):
            walk(child, path + [s])

    walk(trie.root, [])
    prons = [(w, tuple(sym_to_col[s] for s in p)) for w, p in prons
             if all(s in sym_to_col for s in p)]
    count = 0

    def rec(words, labels):
        nonlocal count
        count += 1
        if count > limit:
            raise EnumerationTooLarge(f"more than {limit} candidate word sequences")
        yield words, labels
        for w, p in prons:
            new = labels + ((boundary,) if labels else ()) + p
            if len(new) <= T:
                yield from rec(words + (w,), new)

    yield from rec((), ())


def _enumerate_open(phone_cols: list[int], boundary: int, T: int, limit: int):
    count = 0

    def rec(labels, last_boundary):
        nonlocal count
        count += 1
        if count > limit:
            raise EnumerationTooLarge(f"more than {limit} candidate label sequences")
        if not last_boundary:
            yield labels
        if len(labels) >= T:
            return
        for c in phone_cols:
            yield from rec(labels + (c,), False)
        if labels and not last_boundary:
            yield from rec(labels + (boundary,), True)

    yield from rec((), False)


def brute_force_decode(post: Posteriorgram, lm: BoundLM, trie, cfg: DecodeConfig,
                       limit: int = 10**6) -> DecodeResult:
    """Exhaustive argmax over every admissible output of at most ``T`` labels.

    ``trie=None`` enumerates the open-vocabulary space.  Ties go to fewer
    words, then to the lexicographic (homophone-rank) word order.
    """
    if post.boundary is None:
        raise ConfigError("posteriorgram has no word-boundary label")
    cols = lm.column_symbols(post)
    boundary = post.boundary
    best = None

    def consider(words, labels, rank):
        nonlocal best
        ctc = seq_log_prob(post, labels)
        if ctc == NEG_INF:
            return
        lm_lp = lm.sequence_log_prob([cols[c] for c in labels]) if cfg.lm_weight else 0.0
        score = ctc + cfg.lm_weight * lm_lp + cfg.ins_penalty * len(words)
        key = (-score, len(words), rank)
        if best is None or key < best[0]:
            best = (key, DecodeResult(list(words), score, tuple(labels)))

    if trie is not None:
        sym_to_col = {s: j for j, s in enumerate(cols) if s is not None and j != boundary}
        for words, labels in _enumerate_lexicon(trie, boundary, sym_to_col, post.T, limit):
            consider(words, labels, tuple(trie.word_rank(w) for w in words))
    else:
        phone_cols = [j for j in range(post.L) if j not in (post.blank, boundary)]
        for labels in _enumerate_open(phone_cols, boundary, post.T, limit):
            words = tuple(spell(post, w) for w in split_words(labels, post))
            consider(words, labels, words)
    if best is None:
        return DecodeResult([], NEG_INF, (), failed=True)
    return best[1]
