"""Inverse-cloze-task training data with a book-affinity sentence filter.

A pseudo-question is the sentence of a passage whose summed word-book PMI is
highest; the passage with that sentence removed is the positive, and the
most TF-IDF-similar passages of the same book are the negatives.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import Book, CorpusStats, Token
from .index import cosine, tfidf_similarity, tfidf_vector

NEG_INF = float("-inf")

# Tokens preceding a '.' that do not end a sentence.
ABBREVIATIONS = frozenset(
    "mr mrs ms dr st prof sr jr vs etc col gen lt sgt capt rev hon no".split()
)
_TERMINALS = frozenset(".!?")
_CLOSERS = frozenset("\"'’”)")


def pmi(word: str, book_id: str, stats: CorpusStats) -> float:
    """log of the word's in-book relative frequency over its corpus frequency.

    Words absent from the book get -inf (never predictive of it); words
    absent from the corpus are an error.
    """
    w = word.lower()
    n_w = stats.global_counts[w]
    if n_w == 0:
        raise ValueError(f"unknown word {word!r}")
    n_wb = stats.book_counts.get(book_id, {}).get(w, 0)
    if n_wb == 0:
        return NEG_INF
    t_b = stats.book_totals[book_id]
    return math.log((n_wb / t_b) / (n_w / stats.total_tokens))


def sentence_affinity(sentence: Sequence[Token], book_id: str, stats: CorpusStats) -> float:
    """Sum of PMI over the sentence's content tokens (stopwords and
    punctuation filtered out); -inf when nothing remains."""
    total = 0.0
    content = 0
    for tok in sentence:
        if tok.is_punct or tok.is_stopword:
            continue
        content += 1
        val = pmi(tok.surface, book_id, stats)
        if val == NEG_INF:
            return NEG_INF
        total += val
    return total if content else NEG_INF


def split_sentences(tokens: Sequence[Token]) -> list[tuple[int, int]]:
    """Rule-based sentence spans over a token sequence.

    A sentence ends at . ! ? (with an abbreviation guard for periods);
    trailing closing quotes/parens attach to the finished sentence.
    """
    spans = []
    n = len(tokens)
    start = 0
    i = 0
    while i < n:
        surface = tokens[i].surface
        if surface in _TERMINALS:
            if surface == "." and i > start and tokens[i - 1].surface.lower() in ABBREVIATIONS:
                i += 1
                continue
            end = i + 1
            while end < n and (tokens[end].surface in _TERMINALS or tokens[end].surface in _CLOSERS):
                end += 1
            spans.append((start, end))
            start = end
            i = end
        else:
            i += 1
    if start < n:
        spans.append((start, n))
    return spans


def content_word_count(tokens: Sequence[Token]) -> int:
    return sum(1 for t in tokens if not t.is_punct and not t.is_stopword)


def is_instructive(tokens: Sequence[Token], caps_threshold: float = 0.8) -> bool:
    """Stage-direction heuristic: mostly-uppercase alphabetic sentence."""
    alpha = 0
    upper = 0
    for tok in tokens:
        for ch in tok.surface:
            if ch.isalpha():
                alpha += 1
                if ch.isupper():
                    upper += 1
    return alpha > 0 and upper / alpha >= caps_threshold


@dataclass(frozen=True)
class PseudoQuestion:
    start: int  # token span within the passage
    end: int
    affinity: float


def select_pseudo_question(passage_tokens: Sequence[Token], book: Book,
                           stats: CorpusStats, min_content_words: int = 3,
                           caps_threshold: float = 0.8) -> PseudoQuestion | None:
    """Highest-affinity eligible sentence of the passage, or None.

    Eligible: at least min_content_words non-stopwords, and (in movie
    scripts) not an all-caps instructive line.  Ties go to the earlier
    sentence.
    """
    best: PseudoQuestion | None = None
    for start, end in split_sentences(passage_tokens):
        sent = passage_tokens[start:end]
        if content_word_count(sent) < min_content_words:
            continue
        if book.kind == "movie_script" and is_instructive(sent, caps_threshold):
            continue
        score = sentence_affinity(sent, book.id, stats)
        if score == NEG_INF:
            continue
        if best is None or score > best.affinity:
            best = PseudoQuestion(start, end, score)
    return best


@dataclass
class IctExample:
    book_id: str
    source_index: int  # passage the pseudo-question came from
    pq: tuple[str, ...]
    positive: tuple[str, ...]  # source passage with the pq sentence removed
    negatives: tuple[int, ...]  # passage indices, most TF-IDF-similar first
    affinity: float


def ict_examples(book: Book, stats: CorpusStats, max_negatives: int = 500,
                 min_content_words: int = 3, caps_threshold: float = 0.8) -> list[IctExample]:
    """One example per passage with an eligible pseudo-question.

    Negatives are the top-min(max_negatives, |passages|-1) passages of the
    same book by TF-IDF similarity to the pseudo-question, source excluded.
    """
    if len(book.passages) < 2:
        raise ValueError(f"book {book.id!r} needs >= 2 passages for ICT examples")
    passage_vectors = [tfidf_vector(book.passage_tokens(p.index), stats) for p in book.passages]
    examples = []
    for passage in book.passages:
        tokens = book.passage_tokens(passage.index)
        pq = select_pseudo_question(tokens, book, stats, min_content_words, caps_threshold)
        if pq is None:
            continue
        pq_tokens = tokens[pq.start:pq.end]
        positive = tokens[:pq.start] + tokens[pq.end:]
        pq_vec = tfidf_vector(pq_tokens, stats)
        sims = []
        for other in book.passages:
            if other.index == passage.index:
                continue
            sims.append((-cosine(pq_vec, passage_vectors[other.index]), other.index))
        sims.sort()
        negatives = tuple(idx for _, idx in sims[:max_negatives])
        examples.append(IctExample(
            book_id=book.id,
            source_index=passage.index,
            pq=tuple(t.surface for t in pq_tokens),
            positive=tuple(t.surface for t in positive),
            negatives=negatives,
            affinity=pq.affinity,
        ))
    return examples


def ict_softmax(scores: Sequence[float]) -> np.ndarray:
    """Numerically stable softmax over retrieval scores."""
    if len(scores) == 0:
        raise ValueError("softmax requires at least one candidate score")
    arr = np.asarray(scores, dtype=float)
    arr = arr - arr.max()
    e = np.exp(arr)
    return e / e.sum()


def positive_probability(example: IctExample, book: Book, stats: CorpusStats) -> float:
    """Softmax probability of the positive under the lexical TF-IDF scorer.

    Sanity check for example quality: the positive's remainder should beat
    the sampled negatives.
    """
    pq = list(example.pq)
    scores = [tfidf_similarity(pq, list(example.positive), stats)]
    for idx in example.negatives:
        scores.append(tfidf_similarity(pq, book.passage_tokens(idx), stats))
    return float(ict_softmax(scores)[0])


def export_ict(examples: Iterable[IctExample], path: str | Path) -> int:
    """TSV rows: book id, source passage, pq text, negative indices."""
    rows = 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# bookqa-ict-examples v1\n")
        for ex in examples:
            negs = ",".join(str(i) for i in ex.negatives)
            fh.write(f"{ex.book_id}\t{ex.source_index}\t{' '.join(ex.pq)}\t{negs}\n")
            rows += 1
    return rows
