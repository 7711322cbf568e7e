"""Question-text features: TF-IDF over a fitted vocabulary plus structured slots.

Tokenization is lowercasing plus whitespace splitting; punctuation stays
attached to tokens and there is no stemming or stopword removal. The sparse
block uses raw term counts weighted by a smoothed idf and is L2-normalized;
the structured block appends lexical statistics and coarse question-type
indicators at fixed trailing columns so downstream trees see a stable layout.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

WH_WORDS = ("what", "where", "when", "who", "why", "how", "which")
YES_NO_OPENERS = frozenset(
    {"is", "are", "was", "were", "do", "does", "did",
     "can", "could", "will", "would", "has", "have"}
)
COLOR_TOKENS = frozenset({"color", "colour"})
SPATIAL_TOKENS = frozenset(
    {"where", "left", "right", "behind", "front", "above", "below", "under"}
)

STRUCTURED_SLOTS: tuple[str, ...] = (
    ("token_length", "has_numeric")
    + tuple(f"wh_{w}" for w in WH_WORDS)
    + ("wh_none", "type_yes_no", "type_counting", "type_color", "type_spatial")
)
STRUCTURED_DIM = len(STRUCTURED_SLOTS)
_WH_NONE_SLOT = 2 + len(WH_WORDS)


def tokenize(text: str) -> list[str]:
    """Lowercase and split on whitespace runs; punctuation stays in tokens."""
    return text.lower().split()


@dataclass(frozen=True)
class Vocabulary:
    """Term-to-column mapping with document frequencies from the fitting set."""

    term_index: dict[str, int]
    doc_freq: dict[str, int]
    n_docs: int

    def __len__(self) -> int:
        return len(self.term_index)

    def __contains__(self, term: str) -> bool:
        return term in self.term_index

    def idf(self, term: str) -> float:
        return math.log((1 + self.n_docs) / (1 + self.doc_freq[term])) + 1.0

    def idf_by_index(self) -> np.ndarray:
        out = np.empty(len(self.term_index))
        for term, i in self.term_index.items():
            out[i] = self.idf(term)
        return out

    def to_json_dict(self) -> dict:
        terms = sorted(self.term_index, key=self.term_index.get)
        return {
            "n_docs": self.n_docs,
            "terms": [{"t": t, "df": self.doc_freq[t]} for t in terms],
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "Vocabulary":
        term_index = {entry["t"]: i for i, entry in enumerate(obj["terms"])}
        doc_freq = {entry["t"]: int(entry["df"]) for entry in obj["terms"]}
        return cls(term_index=term_index, doc_freq=doc_freq, n_docs=int(obj["n_docs"]))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))


def fit_vocabulary(questions: Sequence[str], max_terms: int | None = None) -> Vocabulary:
    """Index every distinct token lexicographically; doc_freq counts documents.

    With ``max_terms`` set, the highest-df terms are kept (ties broken
    lexicographically) and the survivors are re-indexed lexicographically.
    """
    questions = list(questions)
    if not questions:
        raise ValueError("fit_vocabulary requires at least one question")
    df: Counter[str] = Counter()
    for q in questions:
        df.update(set(tokenize(q)))
    terms = sorted(df)
    if max_terms is not None and len(terms) > max_terms:
        kept = sorted(terms, key=lambda t: (-df[t], t))[:max_terms]
        terms = sorted(kept)
    return Vocabulary(
        term_index={t: i for i, t in enumerate(terms)},
        doc_freq={t: df[t] for t in terms},
        n_docs=len(questions),
    )


@dataclass(frozen=True)
class FeatureVector:
    """Sparse TF-IDF pairs (strictly increasing indices) plus structured slots."""

    sparse_tfidf: tuple[tuple[int, float], ...]
    structured: np.ndarray

    @property
    def token_length(self) -> int:
        return int(self.structured[0])

    def to_dense(self, vocab_size: int) -> np.ndarray:
        out = np.zeros(vocab_size + STRUCTURED_DIM)
        for i, v in self.sparse_tfidf:
            out[i] = v
        out[vocab_size:] = self.structured
        return out


def _has_ascii_digit(token: str) -> bool:
    return any("0" <= c <= "9" for c in token)


def _structured_slots(text: str, tokens: list[str]) -> np.ndarray:
    out = np.zeros(STRUCTURED_DIM)
    out[0] = len(tokens)
    out[1] = 1.0 if any(_has_ascii_digit(t) for t in tokens) else 0.0
    wh_slot = _WH_NONE_SLOT
    for tok in tokens:
        if tok in WH_WORDS:
            wh_slot = 2 + WH_WORDS.index(tok)
            break
    out[wh_slot] = 1.0
    lowered = text.lower()
    if tokens and tokens[0] in YES_NO_OPENERS:
        out[_WH_NONE_SLOT + 1] = 1.0
    if "how many" in lowered or "how much" in lowered:
        out[_WH_NONE_SLOT + 2] = 1.0
    if any(t in COLOR_TOKENS for t in tokens):
        out[_WH_NONE_SLOT + 3] = 1.0
    if any(t in SPATIAL_TOKENS for t in tokens) or "on top" in lowered:
        out[_WH_NONE_SLOT + 4] = 1.0
    return out


def _sparse_tfidf(tokens: list[str], vocab: Vocabulary) -> tuple[tuple[int, float], ...]:
    counts = Counter(t for t in tokens if t in vocab.term_index)
    if not counts:
        return ()
    items = sorted((vocab.term_index[t], c * vocab.idf(t)) for t, c in counts.items())
    norm = math.sqrt(sum(w * w for _, w in items))
    return tuple((i, w / norm) for i, w in items)


def featurize(question: str, vocab: Vocabulary) -> FeatureVector:
    """TF-IDF over the fitted vocabulary plus structured slots; pure."""
    tokens = tokenize(question)
    return FeatureVector(
        sparse_tfidf=_sparse_tfidf(tokens, vocab),
        structured=_structured_slots(question, tokens),
    )


class QuestionFeaturizer(BaseEstimator, TransformerMixin):
    """Fits a vocabulary on training questions and maps questions to dense rows.

    Column layout: vocabulary TF-IDF columns first, then the structured slots.
    Transforming never mutates the vocabulary; out-of-vocabulary tokens
    contribute nothing.
    """

    def __init__(self, max_terms: int | None = None):
        self.max_terms = max_terms

    def fit(self, questions: Sequence[str], y=None) -> "QuestionFeaturizer":
        self.vocabulary_ = fit_vocabulary(questions, max_terms=self.max_terms)
        self._idf = self.vocabulary_.idf_by_index()
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "vocabulary_"):
            raise NotFittedError("QuestionFeaturizer is not fitted yet")

    @property
    def n_features_(self) -> int:
        self._check_fitted()
        return len(self.vocabulary_) + STRUCTURED_DIM

    def featurize(self, question: str) -> FeatureVector:
        self._check_fitted()
        return featurize(question, self.vocabulary_)

    def transform(self, questions: Sequence[str]) -> np.ndarray:
        self._check_fitted()
        vocab = self.vocabulary_
        term_index = vocab.term_index
        idf = self._idf
        n_vocab = len(vocab)
        out = np.zeros((len(questions), n_vocab + STRUCTURED_DIM))
        for row, question in enumerate(questions):
            tokens = tokenize(question)
            counts: dict[int, int] = {}
            for tok in tokens:
                idx = term_index.get(tok)
                if idx is not None:
                    counts[idx] = counts.get(idx, 0) + 1
            if counts:
                cols = np.fromiter(counts, dtype=np.intp, count=len(counts))
                weights = np.fromiter(counts.values(), dtype=float, count=len(counts))
                weights *= idf[cols]
                weights /= math.sqrt(float(weights @ weights))
                out[row, cols] = weights
            out[row, n_vocab:] = _structured_slots(question, tokens)
        return out
