"""Distant-supervision ranker labels from two-ranker candidate agreement.

Positives are sampled from the intersection of question-only and
question+answer retrieval; negatives from the remaining candidates at the
configured positive/negative ratio.  A span-Rouge filter then tightens both
sets.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import Book, QaPair
from .index import Bm25Index, RankedList, oracle_retrieve, retrieve
from .metrics import normalize_answer, normalize_tokens
from .seeding import derive_seed
from .spanlabel import best_span

EXPORT_HEADER = "# bookqa-ds-labels v1"


@dataclass
class DsConfig:
    k_q: int = 32
    k_qa: int = 32
    sigma: float = 1.0  # target |positives| / |negatives|
    alpha: float = 0.5  # positives kept when span score > alpha
    beta: float = 0.2  # negatives kept when span score < beta
    seed: int = 0
    negatives_from_union: bool = True  # pool = (C_Q u C_QA) \ intersection, else C_Q \ intersection
    use_all_answers: bool = False  # oracle query uses every reference answer

    def __post_init__(self) -> None:
        if not (0.0 <= self.beta <= self.alpha <= 1.0):
            raise ValueError(f"thresholds must satisfy 0 <= beta <= alpha <= 1, got alpha={self.alpha} beta={self.beta}")
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.k_q < 1 or self.k_qa < 1:
            raise ValueError("retrieval depths must be >= 1")


@dataclass
class DsLabels:
    qid: str
    book_id: str
    positives: list[int]  # sampled set, ascending passage index
    negatives: list[int]
    pos_filtered: list[int] = field(default_factory=list)
    neg_filtered: list[int] = field(default_factory=list)
    pos_scores: dict[int, float] = field(default_factory=dict)
    neg_scores: dict[int, float] = field(default_factory=dict)
    dropped: bool = False  # empty intersection, question yields no labels


def ds_candidates(index: Bm25Index, qa: QaPair, cfg: DsConfig) -> tuple[RankedList, RankedList]:
    """Question-only and question+answer candidate lists."""
    c_q = retrieve(index, qa.question, cfg.k_q)
    if cfg.use_all_answers:
        answer: list[str] = [t for a in qa.answers for t in a]
    else:
        answer = list(qa.answers[0])
    c_qa = oracle_retrieve(index, qa.question, answer, cfg.k_qa)
    return c_q, c_qa


def ds_sample(c_q: RankedList, c_qa: RankedList, cfg: DsConfig, qid: str) -> DsLabels:
    """Sample positives from the candidate intersection, negatives from the rest.

    The negative count targets round(|positives| / sigma); when the pool is
    too small the positive count shrinks toward sigma * |pool| instead.  An
    empty intersection yields no labels and flags the question as dropped.
    Sampling is seeded per question id, so generation order never matters.
    """
    inter = set(c_q.passages()) & set(c_qa.passages())
    if cfg.negatives_from_union:
        pool = (set(c_q.passages()) | set(c_qa.passages())) - inter
    else:
        pool = set(c_q.passages()) - inter
    if not inter:
        return DsLabels(qid, c_q.book_id, [], [], dropped=True)
    n_pos = len(inter)
    n_neg = round(n_pos / cfg.sigma)
    if n_neg > len(pool):
        n_neg = len(pool)
        if n_neg > 0:
            n_pos = min(len(inter), max(1, round(cfg.sigma * n_neg)))
    rng = random.Random(derive_seed(cfg.seed, "ds", qid))
    positives = sorted(rng.sample(sorted(inter), n_pos))
    negatives = sorted(rng.sample(sorted(pool), n_neg))
    return DsLabels(qid, c_q.book_id, positives, negatives)


def _max_span_score(passage_tokens: Sequence[str], answers: Sequence[Sequence[str]]) -> float:
    """Best window Rouge-L over the reference answers; 0.0 for too-short passages."""
    best = 0.0
    for answer in answers:
        if not answer or len(answer) > len(passage_tokens):
            continue
        best = max(best, best_span(passage_tokens, answer).score)
    return best


def rouge_filter(labels: DsLabels, qa: QaPair, book: Book,
                 alpha: float, beta: float) -> DsLabels:
    """Tighten sampled sets: keep positives scoring > alpha, negatives < beta.

    Scores are max-over-references best-span Rouge-L on normalized tokens.
    Passages shorter than every answer score 0 (dropped from positives for
    any alpha >= 0, kept in negatives whenever beta > 0).
    """
    answers = [normalize_answer(" ".join(a)) for a in qa.answers]
    cache: dict[int, float] = {}

    def score(pidx: int) -> float:
        if pidx not in cache:
            passage = normalize_tokens(t.surface for t in book.passage_tokens(pidx))
            cache[pidx] = _max_span_score(passage, answers)
        return cache[pidx]

    labels.pos_scores = {p: score(p) for p in labels.positives}
    labels.neg_scores = {p: score(p) for p in labels.negatives}
    labels.pos_filtered = [p for p in labels.positives if labels.pos_scores[p] > alpha]
    labels.neg_filtered = [p for p in labels.negatives if labels.neg_scores[p] < beta]
    return labels


def generate_ds_labels(index: Bm25Index, book: Book, qa_pairs: Iterable[QaPair],
                       cfg: DsConfig) -> list[DsLabels]:
    """Full per-question pipeline: candidates -> sample -> Rouge filter."""
    out = []
    for qa in qa_pairs:
        c_q, c_qa = ds_candidates(index, qa, cfg)
        labels = ds_sample(c_q, c_qa, cfg, qa.qid)
        if not labels.dropped:
            rouge_filter(labels, qa, book, cfg.alpha, cfg.beta)
        out.append(labels)
    return out


def export_ds(labels: Iterable[DsLabels], path: str | Path, stage: str = "filtered") -> int:
    """Write line-oriented records: qid, passage ref, pos|neg, span score.

    Stage selects the sampled or filtered sets.  Returns the number of rows.
    Ordering is stable: input order, positives before negatives, ascending
    passage index.
    """
    if stage not in ("sampled", "filtered"):
        raise ValueError(f"stage must be 'sampled' or 'filtered', got {stage!r}")
    rows = 0
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(EXPORT_HEADER + "\n")
            for lab in labels:
                pos = lab.positives if stage == "sampled" else lab.pos_filtered
                neg = lab.negatives if stage == "sampled" else lab.neg_filtered
                for pidx in pos:
                    fh.write(f"{lab.qid}\t{lab.book_id}:{pidx}\tpos\t{lab.pos_scores.get(pidx, 0.0):.6f}\n")
                    rows += 1
                for pidx in neg:
                    fh.write(f"{lab.qid}\t{lab.book_id}:{pidx}\tneg\t{lab.neg_scores.get(pidx, 0.0):.6f}\n")
                    rows += 1
    except OSError as exc:
        raise OSError(f"cannot write DS labels to {path}: {exc}") from exc
    return rows


def load_ds(path: str | Path) -> list[tuple[str, str, str, float]]:
    """Round-trip reader for exported label rows."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            qid, ref, label, score = line.split("\t")
            records.append((qid, ref, label, float(score)))
    return records
