"""Answer-overlap metrics (Rouge-L, BLEU, EM, F1) and the bootstrap test.

All metric functions are pure and operate on token sequences; callers are
expected to normalize with normalize_answer / normalize_tokens first.  The
normalization convention is: lowercase, strip punctuation characters,
whitespace-split.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import PUNCT_CHARS

METRIC_NAMES = ("rouge_l", "bleu1", "bleu4", "em", "f1")

_PUNCT_TABLE = {ord(c): None for c in PUNCT_CHARS}


def normalize_answer(text: str) -> list[str]:
    """Lowercase, delete punctuation characters, split on whitespace."""
    return text.lower().translate(_PUNCT_TABLE).split()


def normalize_tokens(tokens: Iterable[str]) -> list[str]:
    """Apply the answer normalization to an already-tokenized sequence.

    Tokens that are pure punctuation vanish; word-internal punctuation is
    stripped in place (O'Brien's -> obriens) so both sides of any comparison
    go through the identical rule.
    """
    out = []
    for tok in tokens:
        t = tok.lower().translate(_PUNCT_TABLE)
        if t:
            out.extend(t.split())
    return out


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Longest common subsequence length, O(|a|*|b|) one-row DP."""
    if not a or not b:
        return 0
    if len(b) > len(a):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        append = cur.append
        left = 0  # cur[j-1]
        for j, y in enumerate(b, start=1):
            if x == y:
                left = prev[j - 1] + 1
            else:
                up = prev[j]
                if up > left:
                    left = up
            append(left)
        prev = cur
    return prev[-1]


def rouge_l(candidate: Sequence[str], reference: Sequence[str],
            beta: float | None = 1.2) -> float:
    """LCS F-measure.

    beta weights recall over precision: F = (1+beta^2)PR / (R + beta^2 P).
    beta=None selects the dynamic beta = P/R variant.  Either side empty
    scores 0.
    """
    if not candidate or not reference:
        return 0.0
    lcs = lcs_length(candidate, reference)
    if lcs == 0:
        return 0.0
    p = lcs / len(candidate)
    r = lcs / len(reference)
    if beta is None:
        beta = p / r
    b2 = beta * beta
    return (1 + b2) * p * r / (r + b2 * p)


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidate: Sequence[str], references: Sequence[Sequence[str]],
         max_n: int = 4, smooth_eps: float | None = None) -> float:
    """Sentence BLEU with clipped counts against the max over references.

    Orders above the candidate length are dropped (so a short candidate equal
    to its reference still scores 1.0).  With smooth_eps set, zero clipped
    counts are floored at eps instead of zeroing the whole score; corpus
    means in reports always use the per-sentence values.
    """
    if max_n < 1:
        raise ValueError(f"max_n must be >= 1, got {max_n}")
    c = len(candidate)
    if c == 0 or not references or all(len(r) == 0 for r in references):
        return 0.0
    log_p_sum = 0.0
    orders = min(max_n, c)
    for n in range(1, orders + 1):
        cand_counts = _ngram_counts(candidate, n)
        total = sum(cand_counts.values())
        clipped = 0
        for ng, cnt in cand_counts.items():
            best_ref = max(_ngram_counts(ref, n)[ng] for ref in references)
            clipped += min(cnt, best_ref)
        if clipped == 0:
            if smooth_eps is None:
                return 0.0
            clipped = smooth_eps
        log_p_sum += np.log(clipped / total)
    # brevity penalty against the reference length closest to the candidate
    r = min((len(ref) for ref in references), key=lambda L: (abs(L - c), L))
    bp = 1.0 if c >= r else float(np.exp(1 - r / c))
    return bp * float(np.exp(log_p_sum / orders))


def em(candidate: Sequence[str], reference: Sequence[str]) -> int:
    """Exact match of normalized token sequences; both empty counts as match."""
    return int(list(candidate) == list(reference))


def f1(candidate: Sequence[str], reference: Sequence[str]) -> float:
    """Token-multiset overlap F1; both empty scores 1.0 by convention."""
    if not candidate and not reference:
        return 1.0
    if not candidate or not reference:
        return 0.0
    common = Counter(candidate) & Counter(reference)
    overlap = sum(common.values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(candidate)
    recall = overlap / len(reference)
    return 2 * precision * recall / (precision + recall)


def score_against_references(candidate: Sequence[str],
                             references: Sequence[Sequence[str]]) -> dict[str, float]:
    """All report metrics for one example, max over the reference answers."""
    refs = list(references)
    return {
        "rouge_l": max((rouge_l(candidate, r) for r in refs), default=0.0),
        "bleu1": bleu(candidate, refs, max_n=1),
        "bleu4": bleu(candidate, refs, max_n=4, smooth_eps=1e-9),
        "em": float(max((em(candidate, r) for r in refs), default=0)),
        "f1": max((f1(candidate, r) for r in refs), default=0.0),
    }


@dataclass
class MetricReport:
    """Per-example scores plus their arithmetic means."""
    per_example: dict[str, dict[str, float]]
    means: dict[str, float]
    count: int
    missing: int = 0
    notes: dict[str, str] = field(default_factory=dict)

    @classmethod
    def from_examples(cls, per_example: Mapping[str, Mapping[str, float]],
                      missing: int = 0) -> "MetricReport":
        per = {qid: dict(scores) for qid, scores in per_example.items()}
        n = len(per)
        means = {m: (sum(s[m] for s in per.values()) / n if n else 0.0) for m in METRIC_NAMES}
        report = cls(per, means, n, missing)
        report.notes["meteor"] = "not implemented (requires external linguistic resources)"
        return report


def bootstrap_test(scores_a: Sequence[float], scores_b: Sequence[float],
                   n_subsets: int = 10_000, subset_size: int = 1_000,
                   seed: int = 0) -> float:
    """One-sided paired bootstrap testing a > b.

    Samples n_subsets index subsets (with replacement) of the paired
    per-question scores; the p-value is the fraction of subsets where
    mean(a) <= mean(b).  Ties count toward the p-value.
    """
    a = np.asarray(scores_a, dtype=float)
    b = np.asarray(scores_b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("bootstrap_test requires non-empty score lists")
    if a.shape != b.shape:
        raise ValueError(f"paired score lists must match: {a.shape} vs {b.shape}")
    rng = np.random.default_rng(seed)
    hits = 0
    remaining = n_subsets
    while remaining > 0:
        block = min(remaining, 2_000)  # bound the index matrix to ~16 MB
        idx = rng.integers(0, a.size, size=(block, subset_size))
        hits += int(np.count_nonzero(a[idx].mean(axis=1) <= b[idx].mean(axis=1)))
        remaining -= block
    return hits / n_subsets
