"""Transcript scoring: edit distance, WER, OOV rate and paired bootstrap."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class UttErrors:
    substitutions: int
    deletions: int
    insertions: int
    ref_length: int

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions


def edit_distance(ref: Sequence[str], hyp: Sequence[str]) -> UttErrors:
    """Levenshtein alignment counts.

    Among minimum-cost alignments the one with the most substitutions
    (fewest insertion/deletion pairs) is reported.
    """
    n, m = len(ref), len(hyp)
    # cost[i][j] = (total edits, insertions + deletions); lexicographic min
    cost = [[(0, 0)] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        cost[i][0] = (i, i)
    for j in range(1, m + 1):
        cost[0][j] = (j, j)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            t, g = cost[i - 1][j - 1]
            diag = (t, g) if ref[i - 1] == hyp[j - 1] else (t + 1, g)
            t, g = cost[i - 1][j]
            up = (t + 1, g + 1)
            t, g = cost[i][j - 1]
            left = (t + 1, g + 1)
            cost[i][j] = min(diag, up, left)
    s = d = ins = 0
    i, j = n, m
    while i > 0 or j > 0:
        here = cost[i][j]
        if i > 0 and j > 0:
            t, g = cost[i - 1][j - 1]
            same = ref[i - 1] == hyp[j - 1]
            if here == ((t, g) if same else (t + 1, g)):
                s += 0 if same else 1
                i, j = i - 1, j - 1
                continue
        if i > 0 and here == (cost[i - 1][j][0] + 1, cost[i - 1][j][1] + 1):
            d += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return UttErrors(s, d, ins, n)


def wer(pairs: Iterable[tuple[Sequence[str], Sequence[str]]]) -> float:
    """Pooled word error rate in percent."""
    errs = 0
    total = 0
    for ref, hyp in pairs:
        e = edit_distance(ref, hyp)
        errs += e.errors
        total += e.ref_length
    if total == 0:
        raise ConfigError("reference transcripts contain no words")
    return 100.0 * errs / total


def wer_from_errors(errors: Iterable[UttErrors]) -> float:
    errors = list(errors)
    total = sum(e.ref_length for e in errors)
    if total == 0:
        raise ConfigError("reference transcripts contain no words")
    return 100.0 * sum(e.errors for e in errors) / total


def format_wer(value: float) -> str:
    return f"{value:.1f}"


def bootstrap_compare(sys1: Sequence[UttErrors], sys2: Sequence[UttErrors],
                      resamples: int = 10_000, seed: int = 0,
                      chunk: int = 1000) -> float:
    """Probability that system 1 has the lower WER under paired resampling.

    Utterance indices are drawn with replacement; each replicate credits 1
    if system 1's pooled WER is strictly lower, 0.5 on a tie.
    """
    if len(sys1) != len(sys2):
        raise ConfigError("systems must score the same utterances")
    if not sys1:
        raise ConfigError("no utterances to compare")
    if resamples < 1:
        raise ConfigError("resamples must be >= 1")
    e1 = np.array([e.errors for e in sys1], dtype=np.int64)
    e2 = np.array([e.errors for e in sys2], dtype=np.int64)
    r1 = np.array([e.ref_length for e in sys1], dtype=np.int64)
    r2 = np.array([e.ref_length for e in sys2], dtype=np.int64)
    rng = np.random.default_rng(seed)
    n = len(sys1)
    credit = 0.0
    done = 0
    while done < resamples:
        k = min(chunk, resamples - done)
        idx = rng.integers(0, n, size=(k, n))
        a, ra = e1[idx].sum(axis=1), r1[idx].sum(axis=1)
        b, rb = e2[idx].sum(axis=1), r2[idx].sum(axis=1)
        # compare a/ra < b/rb without division; empty references tie
        lhs = a * rb
        rhs = b * ra
        valid = (ra > 0) & (rb > 0)
        better = valid & (lhs < rhs)
        tie = ~valid | (lhs == rhs)
        credit += better.sum() + 0.5 * tie.sum()
        done += k
    return float(credit / resamples)


def oov_rate(train_vocab: Iterable[str], eval_corpus: Iterable[Sequence[str]]) -> float:
    vocab = set(train_vocab)
    total = 0
    oov = 0
    for words in eval_corpus:
        for w in words:
            total += 1
            oov += w not in vocab
    if total == 0:
        raise ConfigError("evaluation corpus has no tokens")
    return 100.0 * oov / total
