"""Correctness-log ingestion and question-level cross-validation folds.

The canonical log format is JSON lines, one record per line:

    {"qid": "<id>", "question": "<text>", "fidelity": "<level id>", "correct": 0|1}

Unknown extra keys are ignored; field names are exact and case-sensitive.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np


class CorpusError(ValueError):
    """Malformed record, duplicate (qid, fidelity) pair, or inconsistent text."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class CorrectnessRecord:
    """One logged (question, fidelity, correct?) outcome."""

    qid: str
    question_text: str
    fidelity_id: str
    correct: int

    def __post_init__(self) -> None:
        if not self.qid:
            raise CorpusError("qid must be non-empty")
        if not self.question_text:
            raise CorpusError(f"qid {self.qid!r}: question text must be non-empty")
        if not self.fidelity_id:
            raise CorpusError(f"qid {self.qid!r}: fidelity id must be non-empty")
        if self.correct not in (0, 1) or isinstance(self.correct, bool):
            raise CorpusError(
                f"qid {self.qid!r}: correct must be exactly 0 or 1, got {self.correct!r}"
            )


class Dataset:
    """Immutable collection of records indexed by question id.

    A (qid, fidelity) pair appears at most once and all records of one qid
    share identical question text; violations raise CorpusError.
    """

    def __init__(self, records: Iterable[CorrectnessRecord]):
        self._records = tuple(records)
        index: dict[str, list[CorrectnessRecord]] = {}
        seen_pairs: set[tuple[str, str]] = set()
        for rec in self._records:
            key = (rec.qid, rec.fidelity_id)
            if key in seen_pairs:
                raise CorpusError(f"duplicate (qid, fidelity) pair: {key!r}")
            seen_pairs.add(key)
            bucket = index.setdefault(rec.qid, [])
            if bucket and bucket[0].question_text != rec.question_text:
                raise CorpusError(
                    f"qid {rec.qid!r} has conflicting question texts"
                )
            bucket.append(rec)
        self._index = {qid: tuple(recs) for qid, recs in index.items()}

    @property
    def records(self) -> tuple[CorrectnessRecord, ...]:
        return self._records

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[CorrectnessRecord]:
        return iter(self._records)

    @property
    def qids(self) -> tuple[str, ...]:
        """Distinct question ids in first-seen order."""
        return tuple(self._index)

    def records_for(self, qid: str) -> tuple[CorrectnessRecord, ...]:
        try:
            return self._index[qid]
        except KeyError:
            raise CorpusError(f"unknown qid {qid!r}") from None

    def question_text(self, qid: str) -> str:
        return self.records_for(qid)[0].question_text

    def label(self, qid: str, fidelity_id: str) -> int:
        for rec in self.records_for(qid):
            if rec.fidelity_id == fidelity_id:
                return rec.correct
        raise CorpusError(f"no logged label for pair {(qid, fidelity_id)!r}")

    def subset(self, qids: Iterable[str]) -> "Dataset":
        wanted = set(qids)
        return Dataset(rec for rec in self._records if rec.qid in wanted)


def _parse_line(obj: dict, line_no: int) -> CorrectnessRecord:
    if not isinstance(obj, dict):
        raise CorpusError("record must be a JSON object", line_no)
    missing = [k for k in ("qid", "question", "fidelity", "correct") if k not in obj]
    if missing:
        raise CorpusError(f"missing field(s) {missing}", line_no)
    qid, question, fidelity, correct = (
        obj["qid"],
        obj["question"],
        obj["fidelity"],
        obj["correct"],
    )
    for name, value in (("qid", qid), ("question", question), ("fidelity", fidelity)):
        if not isinstance(value, str):
            raise CorpusError(f"field {name!r} must be a string", line_no)
    if isinstance(correct, bool) or not isinstance(correct, int) or correct not in (0, 1):
        raise CorpusError(f"field 'correct' must be exactly 0 or 1, got {correct!r}", line_no)
    try:
        return CorrectnessRecord(qid, question, fidelity, correct)
    except CorpusError as exc:
        raise CorpusError(str(exc), line_no) from None


def load_records(path: str | Path) -> Dataset:
    """Read a JSONL correctness log; errors cite the offending line number."""
    records: list[CorrectnessRecord] = []
    seen: set[tuple[str, str]] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"invalid JSON ({exc.msg})", line_no) from None
            rec = _parse_line(obj, line_no)
            key = (rec.qid, rec.fidelity_id)
            if key in seen:
                raise CorpusError(f"duplicate (qid, fidelity) pair: {key!r}", line_no)
            seen.add(key)
            records.append(rec)
    return Dataset(records)


def write_records(records: Iterable[CorrectnessRecord], path: str | Path) -> int:
    """Write records in the canonical JSONL format; returns the record count."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(
                json.dumps(
                    {
                        "qid": rec.qid,
                        "question": rec.question_text,
                        "fidelity": rec.fidelity_id,
                        "correct": rec.correct,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
            n += 1
    return n


@dataclass(frozen=True)
class FoldAssignment:
    """Partition of question ids into k folds, balanced within one qid."""

    k: int
    assignment: dict[str, int]

    def fold_qids(self, fold: int) -> tuple[str, ...]:
        return tuple(q for q, f in self.assignment.items() if f == fold)

    def train_qids(self, fold: int) -> tuple[str, ...]:
        return tuple(q for q, f in self.assignment.items() if f != fold)


def assign_folds(dataset: Dataset, k: int, seed: int) -> FoldAssignment:
    """Deterministic question-level folds.

    Distinct qids are sorted lexicographically, shuffled with a seeded
    generator, then dealt round-robin, so the assignment is independent of
    record order and balanced within one question.
    """
    if k < 2:
        raise ValueError(f"fold count must be >= 2, got {k}")
    qids = sorted(set(dataset.qids))
    if len(qids) < k:
        raise ValueError(f"need at least {k} distinct qids for {k} folds, got {len(qids)}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(qids))
    assignment = {qids[j]: i % k for i, j in enumerate(order)}
    return FoldAssignment(k=k, assignment=assignment)
