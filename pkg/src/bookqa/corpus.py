"""Dataset ingestion: tokenization, passage chunking and corpus statistics.

Documents are plain-text stories referenced from a comma-separated documents
table; questions come from a parallel QA table.  Tokenization is a
self-contained rule (whitespace split + punctuation detachment) so that every
downstream artifact is reproducible byte-for-byte.
"""
from __future__ import annotations

import csv
import html
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

DEFAULT_CHUNK_SIZE = 200

# ASCII punctuation plus the typographic characters common in e-book dumps.
_EXTRA_PUNCT = "‘’“”–—…«»·"
PUNCT_CHARS = frozenset("!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~" + _EXTRA_PUNCT)


def _load_wordlist(name: str) -> frozenset[str]:
    text = resources.files("bookqa.data").joinpath(name).read_text(encoding="utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip())


STOPWORDS = _load_wordlist("stopwords.txt")


def is_punct_token(surface: str) -> bool:
    return bool(surface) and all(c in PUNCT_CHARS or unicodedata.category(c).startswith("P") for c in surface)


@dataclass(frozen=True, slots=True)
class Token:
    surface: str
    is_stopword: bool
    is_punct: bool


def _make_token(surface: str, stopwords: frozenset[str]) -> Token:
    punct = is_punct_token(surface)
    return Token(surface, not punct and surface.lower() in stopwords, punct)


def _split_chunk(chunk: str) -> list[str]:
    """Peel leading/trailing punctuation characters off a whitespace chunk."""
    head: list[str] = []
    tail: list[str] = []
    i, j = 0, len(chunk)
    while i < j and chunk[i] in PUNCT_CHARS:
        head.append(chunk[i])
        i += 1
    while j > i and chunk[j - 1] in PUNCT_CHARS:
        tail.append(chunk[j - 1])
        j -= 1
    if i < j:
        head.append(chunk[i:j])
    head.extend(reversed(tail))
    return head


def tokenize(text: str, stopwords: frozenset[str] = STOPWORDS) -> list[Token]:
    """Deterministic rule-based tokenizer.

    Splits on whitespace, detaches leading/trailing punctuation characters as
    separate tokens and preserves case.  Word-internal punctuation (O'Brien,
    self-made) is kept.
    """
    out: list[Token] = []
    for chunk in text.split():
        for surface in _split_chunk(chunk):
            out.append(_make_token(surface, stopwords))
    return out


def surfaces(tokens: Iterable[Token]) -> list[str]:
    return [t.surface for t in tokens]


@dataclass(frozen=True, slots=True)
class Passage:
    book_id: str
    index: int
    start: int  # half-open token interval [start, end) into Book.tokens
    end: int

    def __len__(self) -> int:
        return self.end - self.start

    @property
    def ref(self) -> str:
        return f"{self.book_id}:{self.index}"


def chunk_book(tokens: Sequence[Token], chunk_size: int = DEFAULT_CHUNK_SIZE, book_id: str = "") -> list[Passage]:
    """Greedy left-to-right partition into non-overlapping fixed-size passages.

    The final passage keeps the remainder and may be shorter than chunk_size.
    """
    if chunk_size < 1:
        raise ValueError(f"chunk_size must be >= 1, got {chunk_size}")
    passages = []
    for idx, start in enumerate(range(0, len(tokens), chunk_size)):
        passages.append(Passage(book_id, idx, start, min(start + chunk_size, len(tokens))))
    return passages


@dataclass
class Book:
    id: str
    kind: str  # "book" | "movie_script"
    tokens: list[Token]
    passages: list[Passage]

    @property
    def token_count(self) -> int:
        return len(self.tokens)

    @classmethod
    def from_text(cls, book_id: str, kind: str, text: str,
                  chunk_size: int = DEFAULT_CHUNK_SIZE,
                  stopwords: frozenset[str] = STOPWORDS) -> "Book":
        tokens = tokenize(text, stopwords)
        return cls(book_id, kind, tokens, chunk_book(tokens, chunk_size, book_id))

    def passage_tokens(self, index: int) -> list[Token]:
        p = self.passages[index]
        return self.tokens[p.start:p.end]


@dataclass(frozen=True, slots=True)
class QaPair:
    qid: str
    book_id: str
    split: str  # "train" | "valid" | "test"
    question: tuple[str, ...]
    answers: tuple[tuple[str, ...], ...]  # 1-2 reference answers
    question_text: str = ""
    answer_texts: tuple[str, ...] = ()


class DatasetError(Exception):
    """Fatal problem in a dataset table (malformed row, missing column)."""


# Gutenberg dumps wrap the story in START/END marker lines; HTML dumps are
# detected by an <html or <body tag near the top.
_GUTENBERG_START = re.compile(r"\*{3}\s*START OF (?:TH(?:E|IS) )?PROJECT GUTENBERG.*?\*{3}", re.IGNORECASE)
_GUTENBERG_END = re.compile(r"\*{3}\s*END OF (?:TH(?:E|IS) )?PROJECT GUTENBERG.*?\*{3}", re.IGNORECASE)
_HTML_TAG = re.compile(r"<[^>]+>")


def strip_boilerplate(text: str) -> str:
    """Best-effort removal of Gutenberg banners and HTML markup.

    Returns the input unchanged when no pattern applies; never raises.
    """
    m_start = _GUTENBERG_START.search(text)
    m_end = _GUTENBERG_END.search(text)
    if m_start and m_end and m_start.end() < m_end.start():
        text = text[m_start.end():m_end.start()]
    head = text[:2000].lower()
    if "<html" in head or "<body" in head or head.count("<") > 20:
        text = html.unescape(_HTML_TAG.sub(" ", text))
    return text


@dataclass
class DocumentRecord:
    book_id: str
    split: str
    kind: str
    story_path: Path


@dataclass
class LoadResult:
    books: list[Book]
    qa_pairs: list[QaPair]
    errors: list[str] = field(default_factory=list)


def _require(row: dict, key: str, line_no: int, table: str) -> str:
    val = (row.get(key) or "").strip()
    if not val and key != "answer2":
        raise DatasetError(f"{table} row {line_no}: missing required field '{key}'")
    return val


def load_document_table(path: Path) -> list[DocumentRecord]:
    table = path / "documents.csv"
    records = []
    with open(table, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "document_id" not in reader.fieldnames:
            raise DatasetError(f"{table}: missing header with document_id column")
        for line_no, row in enumerate(reader, start=2):
            doc_id = _require(row, "document_id", line_no, "documents.csv")
            split = _require(row, "set", line_no, "documents.csv")
            kind = _require(row, "kind", line_no, "documents.csv")
            if kind not in ("book", "movie_script", "movie", "gutenberg"):
                raise DatasetError(f"documents.csv row {line_no}: unknown kind '{kind}'")
            if kind in ("movie", "movie_script"):
                kind = "movie_script"
            else:
                kind = "book"
            story = (row.get("story_file") or "").strip()
            story_path = path / story if story else path / "stories" / f"{doc_id}.content"
            records.append(DocumentRecord(doc_id, split, kind, story_path))
    return records


def load_qa_table(path: Path) -> list[QaPair]:
    table = path / "qaps.csv"
    qa_pairs = []
    per_book: Counter[str] = Counter()
    with open(table, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        needed = {"document_id", "set", "question", "answer1"}
        if reader.fieldnames is None or not needed.issubset(reader.fieldnames):
            raise DatasetError(f"{table}: header must contain {sorted(needed)}")
        for line_no, row in enumerate(reader, start=2):
            doc_id = _require(row, "document_id", line_no, "qaps.csv")
            split = _require(row, "set", line_no, "qaps.csv")
            question = _require(row, "question", line_no, "qaps.csv")
            answer1 = _require(row, "answer1", line_no, "qaps.csv")
            answer2 = (row.get("answer2") or "").strip()
            answers_text = tuple(a for a in (answer1, answer2) if a)
            qid = f"{doc_id}:{per_book[doc_id]}"
            per_book[doc_id] += 1
            qa_pairs.append(QaPair(
                qid=qid,
                book_id=doc_id,
                split=split,
                question=tuple(surfaces(tokenize(question))),
                answers=tuple(tuple(surfaces(tokenize(a))) for a in answers_text),
                question_text=question,
                answer_texts=answers_text,
            ))
    return qa_pairs


def load_book(record: DocumentRecord, chunk_size: int = DEFAULT_CHUNK_SIZE,
              strip: bool = True, stopwords: frozenset[str] = STOPWORDS) -> Book:
    text = record.story_path.read_text(encoding="utf-8", errors="replace")
    if strip:
        text = strip_boilerplate(text)
    return Book.from_text(record.book_id, record.kind, text, chunk_size, stopwords)


def load_dataset(path: str | Path, chunk_size: int = DEFAULT_CHUNK_SIZE,
                 splits: Iterable[str] | None = None, strip: bool = True,
                 stopwords: frozenset[str] = STOPWORDS) -> LoadResult:
    """Load the documents + QA tables and tokenize every story.

    Missing story files are collected as per-book errors; malformed table rows
    raise DatasetError.  QA pairs whose book failed to load are kept (their ids
    remain resolvable against the table).
    """
    path = Path(path)
    wanted = set(splits) if splits else None
    records = [r for r in load_document_table(path) if wanted is None or r.split in wanted]
    qa_pairs = [q for q in load_qa_table(path) if wanted is None or q.split in wanted]
    books, errors = [], []
    for rec in records:
        if not rec.story_path.exists():
            errors.append(f"{rec.book_id}: story file not found: {rec.story_path}")
            continue
        books.append(load_book(rec, chunk_size, strip, stopwords))
    known = {r.book_id for r in records}
    for qa in qa_pairs:
        if qa.book_id not in known:
            errors.append(f"{qa.qid}: references unknown document {qa.book_id}")
    return LoadResult(books, [q for q in qa_pairs if q.book_id in known], errors)


@dataclass
class CorpusStats:
    """Word counts at book and corpus granularity, punctuation excluded.

    Terms are case-folded.  Stopwords are counted (totals include them) and
    callers filter with the stopword set when needed.  Document frequencies
    are at passage granularity over all books.
    """
    book_counts: dict[str, Counter]
    global_counts: Counter
    book_totals: dict[str, int]
    total_tokens: int
    passage_df: Counter
    passage_count: int
    stopwords: frozenset[str]

    def count(self, word: str, book_id: str | None = None) -> int:
        if book_id is None:
            return self.global_counts[word]
        return self.book_counts.get(book_id, Counter())[word]


def build_corpus_stats(books: Iterable[Book], stopwords: frozenset[str] = STOPWORDS) -> CorpusStats:
    book_counts: dict[str, Counter] = {}
    global_counts: Counter = Counter()
    book_totals: dict[str, int] = {}
    passage_df: Counter = Counter()
    passage_count = 0
    n_books = 0
    for book in books:
        n_books += 1
        counts: Counter = Counter()
        for tok in book.tokens:
            if tok.is_punct:
                continue
            counts[tok.surface.lower()] += 1
        book_counts[book.id] = counts
        book_totals[book.id] = sum(counts.values())
        global_counts.update(counts)
        for p in book.passages:
            passage_count += 1
            passage_df.update({t.surface.lower() for t in book.tokens[p.start:p.end] if not t.is_punct})
    if n_books == 0:
        raise ValueError("build_corpus_stats requires at least one book")
    return CorpusStats(book_counts, global_counts, book_totals,
                       sum(book_totals.values()), passage_df, passage_count, stopwords)
