"""Fixed-length maximum-Rouge-L span search and extractive weak labels.

A weak span label is the passage window of exactly the answer's length whose
Rouge-L score against the answer is maximal.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .corpus import Book, QaPair
from .index import RankedList
from .metrics import rouge_l


@dataclass(frozen=True, slots=True)
class SpanLabel:
    passage_ref: str  # "book_id:passage_index", empty when scored standalone
    start: int  # half-open token interval within the passage
    end: int
    score: float


def best_span(passage_tokens: Sequence[str], answer_tokens: Sequence[str],
              passage_ref: str = "", beta: float | None = 1.2) -> SpanLabel:
    """Max-Rouge-L window of length |answer| over the passage.

    Scans all |passage|-|answer|+1 windows; ties go to the earliest window.
    Token comparison is exact: normalize or case-fold before calling.
    """
    m = len(answer_tokens)
    n = len(passage_tokens)
    if m < 1:
        raise ValueError("answer must be non-empty")
    if m > n:
        raise ValueError(f"answer length {m} exceeds passage length {n}")
    answer = list(answer_tokens)
    if m == 1:
        # a length-1 window scores 1.0 on match, 0.0 otherwise
        target = answer[0]
        for i, tok in enumerate(passage_tokens):
            if tok == target:
                return SpanLabel(passage_ref, i, i + 1, 1.0)
        return SpanLabel(passage_ref, 0, 1, 0.0)
    answer_set = set(answer)
    # only windows containing at least one answer token can score above zero
    hits = [i for i, tok in enumerate(passage_tokens) if tok in answer_set]
    best_start, best_score = 0, 0.0
    seen: set[int] = set()
    for h in hits:
        for start in range(max(0, h - m + 1), min(h, n - m) + 1):
            if start in seen:
                continue
            seen.add(start)
            score = rouge_l(passage_tokens[start:start + m], answer, beta)
            if score > best_score or (score == best_score and best_score > 0.0 and start < best_start):
                best_start, best_score = start, score
    return SpanLabel(passage_ref, best_start, best_start + m, best_score)


def weak_label(qa: QaPair, candidates: RankedList, books: Mapping[str, Book],
               all_answers: bool = False, beta: float | None = 1.2) -> SpanLabel:
    """Global best span over every candidate passage.

    Ties go to the higher-ranked passage.  Matching is case-folded with
    punctuation tokens kept in place so span offsets stay valid against the
    raw passage.  Candidates shorter than the answer are skipped; if all are,
    this raises.
    """
    if not candidates.entries:
        raise ValueError("weak_label requires a non-empty candidate list")
    book = books[candidates.book_id]
    answers = qa.answers if all_answers else qa.answers[:1]
    answers = [[t.lower() for t in a] for a in answers if a]
    best: SpanLabel | None = None
    for pidx, _ in candidates.entries:
        passage = [t.surface.lower() for t in book.passage_tokens(pidx)]
        for answer in answers:
            if len(answer) > len(passage):
                continue
            label = best_span(passage, answer, f"{book.id}:{pidx}", beta)
            if best is None or label.score > best.score:
                best = label
    if best is None:
        raise ValueError(f"{qa.qid}: every candidate passage is shorter than the answer")
    return best
