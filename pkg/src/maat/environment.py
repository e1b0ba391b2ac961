"""Static testing environment (questions, concepts, records) and per-test status.

The on-disk format is a directory with two CSV files:

* ``records.csv``  -- columns ``examinee_id,question_id,answer``
* ``concepts.csv`` -- columns ``question_id,concept_id``

Both require a header row.  After loading, all identifiers are re-indexed to
dense non-negative integers; the original ids are kept in side maps for
reporting.
"""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractViolationError, DataFormatError, DataValidationError, UnknownConceptError

logger = logging.getLogger(__name__)

QuestionId = int
ConceptId = int
ExamineeId = int

DEFAULT_SEED = 42


def default_seed() -> int:
    """Engine-wide default RNG seed; the MAAT_SEED env var overrides it."""
    return int(os.environ.get("MAAT_SEED", DEFAULT_SEED))


@dataclass(frozen=True, order=True)
class Record:
    """One answer event: examinee answered question, 1 = correct."""

    examinee: ExamineeId
    question: QuestionId
    answer: int

    def __post_init__(self):
        if self.answer not in (0, 1):
            raise DataValidationError(f"answer must be 0 or 1, got {self.answer!r}")


class ConceptGraph:
    """Immutable binary relation between questions and knowledge concepts.

    Every question links to at least one concept and every concept to at
    least one question; lookups in either direction are O(1).
    """

    def __init__(self, relation: Iterable[tuple[QuestionId, ConceptId]],
                 n_questions: int, n_concepts: int):
        pairs = set()
        q_to_k: list[set[int]] = [set() for _ in range(n_questions)]
        k_to_q: list[set[int]] = [set() for _ in range(n_concepts)]
        for q, k in relation:
            if not (0 <= q < n_questions and 0 <= k < n_concepts):
                raise DataValidationError(f"relation pair ({q}, {k}) out of range")
            pairs.add((q, k))
            q_to_k[q].add(k)
            k_to_q[k].add(q)
        for q, ks in enumerate(q_to_k):
            if not ks:
                raise DataValidationError(f"question {q} has no linked concept")
        for k, qs in enumerate(k_to_q):
            if not qs:
                raise DataValidationError(f"concept {k} has no linked question")
        self._pairs = frozenset(pairs)
        self._q_to_k = tuple(frozenset(ks) for ks in q_to_k)
        self._k_to_q = tuple(frozenset(qs) for qs in k_to_q)
        self.n_questions = n_questions
        self.n_concepts = n_concepts

    def concepts_of(self, question: QuestionId) -> frozenset[ConceptId]:
        return self._q_to_k[question]

    def questions_of(self, concept: ConceptId) -> frozenset[QuestionId]:
        if not (0 <= concept < self.n_concepts):
            raise UnknownConceptError(concept)
        return self._k_to_q[concept]

    def __contains__(self, pair: tuple[QuestionId, ConceptId]) -> bool:
        return pair in self._pairs

    @property
    def pairs(self) -> frozenset[tuple[QuestionId, ConceptId]]:
        return self._pairs

    def __eq__(self, other) -> bool:
        return (isinstance(other, ConceptGraph)
                and self.n_questions == other.n_questions
                and self.n_concepts == other.n_concepts
                and self._pairs == other._pairs)

    def __repr__(self) -> str:
        return (f"ConceptGraph(|Q|={self.n_questions}, |K|={self.n_concepts}, "
                f"|G|={len(self._pairs)})")


@dataclass(frozen=True)
class Environment:
    """Immutable environment: the concept graph plus all answer records.

    ``*_original_ids`` map each dense index back to the id found on disk.
    ``dropped_*`` count entities removed while restoring invariants at load.
    """

    graph: ConceptGraph
    records: tuple[Record, ...]
    n_examinees: int
    question_original_ids: tuple[int, ...] = ()
    concept_original_ids: tuple[int, ...] = ()
    examinee_original_ids: tuple[int, ...] = ()
    dropped_questions: int = 0
    dropped_concepts: int = 0
    dropped_records: int = 0

    @property
    def n_questions(self) -> int:
        return self.graph.n_questions

    @property
    def n_concepts(self) -> int:
        return self.graph.n_concepts

    def records_of(self, examinee: ExamineeId) -> list[Record]:
        return [r for r in self.records if r.examinee == examinee]


@dataclass(frozen=True)
class DatasetSplit:
    """Historical records feed pretraining; testing records replay as the answer oracle."""

    historical_examinees: frozenset[ExamineeId]
    historical_records: tuple[Record, ...]
    testing_examinees: frozenset[ExamineeId]
    testing_records: tuple[Record, ...]


@dataclass
class SessionState:
    """Per-examinee dynamic test status: the tested/untested partition.

    Single-writer: exactly one owner mutates a session.  ``selectable``
    optionally restricts selection to questions whose answer the replay
    oracle knows; it never changes the tested/untested partition itself.
    """

    examinee: ExamineeId
    tested: list[QuestionId] = field(default_factory=list)
    untested: set[QuestionId] = field(default_factory=set)
    records: list[Record] = field(default_factory=list)
    step: int = 0
    selectable: frozenset[QuestionId] | None = None

    @classmethod
    def fresh(cls, examinee: ExamineeId, n_questions: int,
              selectable: Iterable[QuestionId] | None = None) -> "SessionState":
        return cls(examinee=examinee,
                   untested=set(range(n_questions)),
                   selectable=None if selectable is None else frozenset(selectable))

    @property
    def selectable_untested(self) -> set[QuestionId]:
        if self.selectable is None:
            return self.untested
        return self.untested & self.selectable

    def administer(self, record: Record) -> None:
        if record.examinee != self.examinee:
            raise ContractViolationError(
                f"record belongs to examinee {record.examinee}, session is {self.examinee}")
        if record.question not in self.untested:
            raise ContractViolationError(f"question {record.question} is not untested")
        self.untested.remove(record.question)
        self.tested.append(record.question)
        self.records.append(record)
        self.step += 1


def _read_csv_rows(path: Path, expected_header: Sequence[str]) -> list[tuple[int, list[str]]]:
    if not path.exists():
        raise DataFormatError("file not found", path=str(path))
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError("missing header row", path=str(path), line=1) from None
        if [h.strip() for h in header] != list(expected_header):
            raise DataFormatError(
                f"expected header {','.join(expected_header)!r}, got {','.join(header)!r}",
                path=str(path), line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            rows.append((lineno, row))
    return rows


def _parse_int(cell: str, what: str, path: Path, lineno: int) -> int:
    try:
        value = int(cell.strip())
    except ValueError:
        raise DataFormatError(f"{what} is not an integer: {cell!r}",
                              path=str(path), line=lineno) from None
    if value < 0:
        raise DataFormatError(f"{what} must be non-negative, got {value}",
                              path=str(path), line=lineno)
    return value


def load_dataset(path: str | Path, format: str = "csv") -> Environment:
    """Load ``records.csv`` + ``concepts.csv`` from a directory.

    Questions without concepts and concepts without questions are dropped
    (counted on the returned environment); duplicate (examinee, question)
    records keep the first occurrence.  Ids are densely re-indexed in
    ascending original-id order.
    """
    if format != "csv":
        raise DataFormatError(f"unsupported dataset format {format!r}; only csv exists")
    root = Path(path)
    records_path = root / "records.csv"
    concepts_path = root / "concepts.csv"

    raw_records: list[tuple[int, int, int]] = []
    for lineno, row in _read_csv_rows(records_path, ("examinee_id", "question_id", "answer")):
        if len(row) != 3:
            raise DataFormatError(f"expected 3 columns, got {len(row)}",
                                  path=str(records_path), line=lineno)
        e = _parse_int(row[0], "examinee_id", records_path, lineno)
        q = _parse_int(row[1], "question_id", records_path, lineno)
        a = _parse_int(row[2], "answer", records_path, lineno)
        if a not in (0, 1):
            raise DataFormatError(f"answer must be 0 or 1, got {a}",
                                  path=str(records_path), line=lineno)
        raw_records.append((e, q, a))

    raw_relation: list[tuple[int, int]] = []
    for lineno, row in _read_csv_rows(concepts_path, ("question_id", "concept_id")):
        if len(row) != 2:
            raise DataFormatError(f"expected 2 columns, got {len(row)}",
                                  path=str(concepts_path), line=lineno)
        q = _parse_int(row[0], "question_id", concepts_path, lineno)
        k = _parse_int(row[1], "concept_id", concepts_path, lineno)
        raw_relation.append((q, k))

    if not raw_records:
        raise DataValidationError(f"no records in {records_path}")
    if not raw_relation:
        raise DataValidationError(f"no relation pairs in {concepts_path}")

    return _build_environment(raw_records, raw_relation)


def _build_environment(raw_records: list[tuple[int, int, int]],
                       raw_relation: list[tuple[int, int]]) -> Environment:
    """Dense re-indexing plus invariant restoration, shared by load and filter."""
    relation = set(raw_relation)
    linked_questions = {q for q, _ in relation}

    # The pool is the set of linked questions; record-only questions fail
    # the >=1-concept invariant and are dropped with their records.
    record_questions = {q for _, q, _ in raw_records}
    kept_questions = sorted(linked_questions)
    question_index = {orig: i for i, orig in enumerate(kept_questions)}
    dropped_questions = len(record_questions | linked_questions) - len(kept_questions)

    kept_pairs = [(q, k) for q, k in relation if q in question_index]
    kept_concepts = sorted({k for _, k in kept_pairs})
    concept_index = {orig: i for i, orig in enumerate(kept_concepts)}
    all_concepts = {k for _, k in relation}
    dropped_concepts = len(all_concepts) - len(kept_concepts)

    seen_pairs: set[tuple[int, int]] = set()
    dense_records: list[Record] = []
    kept_examinees: list[int] = []
    examinee_index: dict[int, int] = {}
    dropped_records = 0
    for e, q, a in raw_records:
        if q not in question_index:
            dropped_records += 1
            continue
        if (e, q) in seen_pairs:
            dropped_records += 1
            continue
        seen_pairs.add((e, q))
        if e not in examinee_index:
            examinee_index[e] = -1  # placeholder, renumbered below
            kept_examinees.append(e)
        dense_records.append(Record(e, q, a))  # original ids for now

    if not dense_records:
        raise DataValidationError("no records survive invariant restoration")

    kept_examinees.sort()
    examinee_index = {orig: i for i, orig in enumerate(kept_examinees)}
    dense_records = [Record(examinee_index[r.examinee], question_index[r.question], r.answer)
                     for r in dense_records]
    dense_records.sort(key=lambda r: (r.examinee, r.question))

    graph = ConceptGraph(
        [(question_index[q], concept_index[k]) for q, k in kept_pairs],
        n_questions=len(kept_questions), n_concepts=len(kept_concepts))

    if dropped_questions or dropped_concepts or dropped_records:
        logger.warning("dropped %d questions, %d concepts, %d records while restoring invariants",
                       dropped_questions, dropped_concepts, dropped_records)

    return Environment(
        graph=graph,
        records=tuple(dense_records),
        n_examinees=len(kept_examinees),
        question_original_ids=tuple(kept_questions),
        concept_original_ids=tuple(kept_concepts),
        examinee_original_ids=tuple(kept_examinees),
        dropped_questions=dropped_questions,
        dropped_concepts=dropped_concepts,
        dropped_records=dropped_records,
    )


def save_dataset(env: Environment, path: str | Path) -> None:
    """Write the environment back to ``records.csv`` + ``concepts.csv``.

    Original ids are used when side maps are present so that save->load
    round-trips to an identical in-memory value.
    """
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    qmap = env.question_original_ids or tuple(range(env.n_questions))
    kmap = env.concept_original_ids or tuple(range(env.n_concepts))
    emap = env.examinee_original_ids or tuple(range(env.n_examinees))

    with open(root / "records.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["examinee_id", "question_id", "answer"])
        for r in env.records:
            writer.writerow([emap[r.examinee], qmap[r.question], r.answer])
    with open(root / "concepts.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["question_id", "concept_id"])
        for q, k in sorted(env.graph.pairs):
            writer.writerow([qmap[q], kmap[k]])


def filter_dataset(env: Environment,
                   min_questions_per_concept: int = 0,
                   min_records_per_question: int = 0,
                   min_records_per_examinee: int = 0) -> Environment:
    """Iteratively drop under-threshold entities until a fixed point.

    Removing a concept can orphan questions, removing questions can push
    examinees below threshold, and so on; one pass is not enough, so the
    passes repeat until nothing changes.
    """
    for threshold in (min_questions_per_concept, min_records_per_question,
                      min_records_per_examinee):
        if threshold < 0:
            raise ContractViolationError("thresholds must be >= 0")

    qmap = env.question_original_ids or tuple(range(env.n_questions))
    kmap = env.concept_original_ids or tuple(range(env.n_concepts))
    emap = env.examinee_original_ids or tuple(range(env.n_examinees))

    records = {(emap[r.examinee], qmap[r.question]): r.answer for r in env.records}
    relation = {(qmap[q], kmap[k]) for q, k in env.graph.pairs}

    while True:
        q_links: dict[int, int] = {}
        k_links: dict[int, int] = {}
        for q, k in relation:
            q_links[q] = q_links.get(q, 0) + 1
            k_links[k] = k_links.get(k, 0) + 1
        q_records: dict[int, int] = {}
        e_records: dict[int, int] = {}
        for (e, q) in records:
            q_records[q] = q_records.get(q, 0) + 1
            e_records[e] = e_records.get(e, 0) + 1

        bad_concepts = {k for k, n in k_links.items() if n < min_questions_per_concept}
        bad_questions = {q for q in q_links
                         if q_records.get(q, 0) < min_records_per_question}
        bad_examinees = {e for e, n in e_records.items() if n < min_records_per_examinee}

        if not bad_concepts and not bad_questions and not bad_examinees:
            break

        relation = {(q, k) for q, k in relation
                    if k not in bad_concepts and q not in bad_questions}
        # Records of questions orphaned in this pass go with them; examinee
        # counts are re-checked on the next pass.
        surviving_questions = {q for q, _ in relation}
        records = {(e, q): a for (e, q), a in records.items()
                   if q in surviving_questions and e not in bad_examinees}
        if not records or not relation:
            raise DataValidationError("filtering removed the entire dataset")

    raw_records = [(e, q, a) for (e, q), a in sorted(records.items())]
    env2 = _build_environment(raw_records, sorted(relation))
    # Dropped counts describe load-time repairs, not filtering.
    return replace(env2, dropped_questions=0, dropped_concepts=0, dropped_records=0)


def split_dataset(env: Environment, min_testing_records: int,
                  seed: int | None = None,
                  max_testing: int | None = None) -> DatasetSplit:
    """Partition examinees: enough records -> testing side, rest -> historical.

    ``max_testing`` caps the testing side by seeded subsampling (surplus
    examinees fall back to historical); without it the split is a pure
    deterministic threshold rule.
    """
    if seed is None:
        seed = default_seed()
    counts: dict[int, int] = {}
    for r in env.records:
        counts[r.examinee] = counts.get(r.examinee, 0) + 1

    testing = sorted(e for e, n in counts.items() if n >= min_testing_records)
    if not testing:
        raise DataValidationError(
            f"no examinee has >= {min_testing_records} records; cannot form testing data")
    if max_testing is not None and len(testing) > max_testing:
        rng = np.random.default_rng(seed)
        keep = rng.choice(len(testing), size=max_testing, replace=False)
        testing = sorted(testing[i] for i in keep)

    testing_set = frozenset(testing)
    historical_set = frozenset(range(env.n_examinees)) - testing_set
    historical_records = tuple(r for r in env.records if r.examinee in historical_set)
    testing_records = tuple(r for r in env.records if r.examinee in testing_set)
    return DatasetSplit(
        historical_examinees=historical_set,
        historical_records=historical_records,
        testing_examinees=testing_set,
        testing_records=testing_records,
    )
