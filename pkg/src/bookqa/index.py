"""Per-book lexical retrieval: Okapi BM25 ranking and TF-IDF cosine.

Retrieval is always within one book.  Indexed terms are case-folded with
punctuation excluded; query-side term frequency is ignored (classic Okapi
query simplification) and query terms are deduplicated.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .corpus import Book, CorpusStats, Token, is_punct_token

DEFAULT_K1 = 1.2
DEFAULT_B = 0.75

_MAGIC = b"BQIX"
_VERSION = 1


@dataclass
class Bm25Index:
    book_id: str
    k1: float
    b: float
    postings: dict[str, list[tuple[int, int]]]  # term -> [(passage index, tf)]
    passage_lengths: list[int]  # indexed (non-punctuation) token counts

    @property
    def n_passages(self) -> int:
        return len(self.passage_lengths)

    @property
    def avg_length(self) -> float:
        return sum(self.passage_lengths) / len(self.passage_lengths)

    def idf(self, term: str) -> float:
        df = len(self.postings.get(term, ()))
        if df == 0:
            return 0.0
        n = self.n_passages
        return math.log(1 + (n - df + 0.5) / (df + 0.5))


@dataclass
class RankedList:
    """Ordered (passage index, score) entries, scores non-increasing."""
    query: str
    book_id: str
    entries: list[tuple[int, float]] = field(default_factory=list)

    def passages(self) -> list[int]:
        return [idx for idx, _ in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


def _term_of(token: Token | str) -> str | None:
    if isinstance(token, Token):
        if token.is_punct:
            return None
        return token.surface.lower()
    if is_punct_token(token):
        return None
    return token.lower()


def build_index(book: Book, k1: float = DEFAULT_K1, b: float = DEFAULT_B) -> Bm25Index:
    """Build the complete inverted index for one book's passages."""
    if not book.passages:
        raise ValueError(f"cannot index empty book {book.id!r}")
    postings: dict[str, dict[int, int]] = {}
    lengths = []
    for passage in book.passages:
        length = 0
        for tok in book.tokens[passage.start:passage.end]:
            term = _term_of(tok)
            if term is None:
                continue
            length += 1
            by_passage = postings.setdefault(term, {})
            by_passage[passage.index] = by_passage.get(passage.index, 0) + 1
        lengths.append(length)
    return Bm25Index(
        book_id=book.id,
        k1=k1,
        b=b,
        postings={t: sorted(d.items()) for t, d in postings.items()},
        passage_lengths=lengths,
    )


def query_terms(tokens: Sequence[Token | str], drop_stopwords: bool = False,
                stopwords: frozenset[str] | None = None) -> list[str]:
    """Case-folded, punctuation-free, deduplicated query terms in first-seen order."""
    seen: dict[str, None] = {}
    for tok in tokens:
        term = _term_of(tok)
        if term is None:
            continue
        if drop_stopwords:
            if isinstance(tok, Token):
                if tok.is_stopword:
                    continue
            elif stopwords is not None and term in stopwords:
                continue
        seen.setdefault(term)
    return list(seen)


def _scores(index: Bm25Index, terms: Sequence[str]) -> list[float]:
    scores = [0.0] * index.n_passages
    avg = index.avg_length
    k1, b = index.k1, index.b
    for term in terms:
        plist = index.postings.get(term)
        if not plist:
            continue
        idf = index.idf(term)
        for pidx, tf in plist:
            norm = tf + k1 * (1 - b + b * index.passage_lengths[pidx] / avg)
            scores[pidx] += idf * tf * (k1 + 1) / norm
    return scores


def score_passage(index: Bm25Index, terms: Sequence[str], passage_index: int) -> float:
    """BM25 score of a single passage for pre-extracted query terms."""
    score = 0.0
    avg = index.avg_length
    for term in terms:
        for pidx, tf in index.postings.get(term, ()):
            if pidx == passage_index:
                norm = tf + index.k1 * (1 - index.b + index.b * index.passage_lengths[pidx] / avg)
                score += index.idf(term) * tf * (index.k1 + 1) / norm
                break
    return score


def retrieve(index: Bm25Index, query_tokens: Sequence[Token | str], k: int,
             drop_stopwords: bool = False,
             stopwords: frozenset[str] | None = None) -> RankedList:
    """Top-min(k, |passages|) passages by BM25; ties broken by ascending index.

    Zero-score passages fill up the list so the requested depth is honored.
    An empty query yields an empty list (unanswerable retrieval, not a crash).
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    query_text = " ".join(t.surface if isinstance(t, Token) else t for t in query_tokens)
    terms = query_terms(query_tokens, drop_stopwords, stopwords)
    if not terms:
        return RankedList(query_text, index.book_id, [])
    scores = _scores(index, terms)
    order = sorted(range(index.n_passages), key=lambda i: (-scores[i], i))
    top = order[:min(k, index.n_passages)]
    return RankedList(query_text, index.book_id, [(i, scores[i]) for i in top])


def oracle_retrieve(index: Bm25Index, question: Sequence[Token | str],
                    answer: Sequence[Token | str], k: int,
                    drop_stopwords: bool = False,
                    stopwords: frozenset[str] | None = None) -> RankedList:
    """retrieve() over the concatenated query question + answer."""
    return retrieve(index, list(question) + list(answer), k, drop_stopwords, stopwords)


def tfidf_vector(tokens: Sequence[Token | str], stats: CorpusStats) -> dict[str, float]:
    """Raw-tf x smoothed-idf vector over non-punctuation terms.

    idf = ln((1+N)/(1+df)) + 1 with passage-granularity document frequencies.
    """
    tf: dict[str, int] = {}
    for tok in tokens:
        term = _term_of(tok)
        if term is None:
            continue
        tf[term] = tf.get(term, 0) + 1
    n = stats.passage_count
    return {t: c * (math.log((1 + n) / (1 + stats.passage_df[t])) + 1) for t, c in tf.items()}


def cosine(va: dict[str, float], vb: dict[str, float]) -> float:
    if not va or not vb:
        return 0.0
    if len(vb) < len(va):
        va, vb = vb, va
    dot = sum(w * vb.get(t, 0.0) for t, w in va.items())
    if dot == 0.0:
        return 0.0
    na = math.sqrt(sum(w * w for w in va.values()))
    nb = math.sqrt(sum(w * w for w in vb.values()))
    return dot / (na * nb)


def tfidf_similarity(tokens_a: Sequence[Token | str], tokens_b: Sequence[Token | str],
                     stats: CorpusStats) -> float:
    """Cosine of TF-IDF vectors; 0.0 when either side is all punctuation."""
    return cosine(tfidf_vector(tokens_a, stats), tfidf_vector(tokens_b, stats))


def save_index(index: Bm25Index, path: str | Path) -> None:
    """Serialize to the versioned little-endian binary format (see docs)."""
    book_id = index.book_id.encode("utf-8")
    parts = [
        _MAGIC,
        struct.pack("<H", _VERSION),
        struct.pack("<dd", index.k1, index.b),
        struct.pack("<I", len(book_id)), book_id,
        struct.pack("<I", index.n_passages),
        struct.pack(f"<{index.n_passages}I", *index.passage_lengths),
        struct.pack("<I", len(index.postings)),
    ]
    for term in sorted(index.postings):
        tb = term.encode("utf-8")
        plist = index.postings[term]
        parts.append(struct.pack("<I", len(tb)))
        parts.append(tb)
        parts.append(struct.pack("<I", len(plist)))
        parts.append(struct.pack(f"<{2 * len(plist)}I", *(v for pair in plist for v in pair)))
    Path(path).write_bytes(b"".join(parts))


class IndexFormatError(Exception):
    pass


def load_index(path: str | Path) -> Bm25Index:
    data = Path(path).read_bytes()
    view = memoryview(data)
    pos = 0

    def take(fmt: str):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(data):
            raise IndexFormatError(f"{path}: truncated at byte {pos}")
        vals = struct.unpack_from(fmt, view, pos)
        pos += size
        return vals

    def take_bytes(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise IndexFormatError(f"{path}: truncated at byte {pos}")
        out = bytes(view[pos:pos + n])
        pos += n
        return out

    if take_bytes(4) != _MAGIC:
        raise IndexFormatError(f"{path}: not a bookqa index (bad magic)")
    (version,) = take("<H")
    if version != _VERSION:
        raise IndexFormatError(f"{path}: unsupported index version {version}")
    k1, b = take("<dd")
    (id_len,) = take("<I")
    book_id = take_bytes(id_len).decode("utf-8")
    (n_passages,) = take("<I")
    lengths = list(take(f"<{n_passages}I"))
    (n_terms,) = take("<I")
    postings: dict[str, list[tuple[int, int]]] = {}
    for _ in range(n_terms):
        (t_len,) = take("<I")
        term = take_bytes(t_len).decode("utf-8")
        (n_post,) = take("<I")
        flat = take(f"<{2 * n_post}I")
        postings[term] = [(flat[2 * i], flat[2 * i + 1]) for i in range(n_post)]
    return Bm25Index(book_id, k1, b, postings, lengths)
