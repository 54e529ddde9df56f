"""Instance-level evaluation of a detected log against a reference log.

A detected instance matches a reference instance when it falls inside the
reference's temporal boundaries on the same resource.  Unmatched detections
count as NOT_EXISTING, unmatched reference instances as NOT_OBSERVED; both
extend the confusion matrix by one row/column.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .errors import AmbiguousMatchError, EmptyMatrixError, OverlappingTruthError
from .model import ActivityInstance, EventLog, Trace

NOT_OBSERVED = "NOT_OBSERVED"
NOT_EXISTING = "NOT_EXISTING"

CORRECT = "correct"
MISCLASSIFIED = "misclassified"
OUTCOME_NOT_OBSERVED = "not_observed"
OUTCOME_NOT_EXISTING = "not_existing"


@dataclass(frozen=True)
class MatchRecord:
    """One matching outcome: a (reference, detected) instance pairing."""

    true_instance: ActivityInstance | None
    extracted_instance: ActivityInstance | None
    outcome: str

    def __post_init__(self) -> None:
        if self.outcome == OUTCOME_NOT_OBSERVED and self.extracted_instance is not None:
            raise ValueError("not_observed records carry no extracted instance")
        if self.outcome == OUTCOME_NOT_EXISTING and self.true_instance is not None:
            raise ValueError("not_existing records carry no true instance")
        if self.outcome == CORRECT:
            if (
                self.true_instance is None
                or self.extracted_instance is None
                or self.true_instance.class_label != self.extracted_instance.class_label
            ):
                raise ValueError("correct records need both instances with equal class")

    @property
    def true_label(self) -> str:
        return self.true_instance.class_label if self.true_instance else NOT_EXISTING

    @property
    def detected_label(self) -> str:
        return self.extracted_instance.class_label if self.extracted_instance else NOT_OBSERVED


def match_instances(true_log: EventLog, extracted_log: EventLog) -> list[MatchRecord]:
    """Match detected instances into reference instances by containment.

    A detected instance matches the unique reference instance of the same
    resource whose closed interval contains it.  Every detected instance
    yields one record; every reference instance without any match yields one
    NOT_OBSERVED record, and a reference instance may collect several
    matching detections.
    """
    true_by_resource: dict[str, list[ActivityInstance]] = {}
    for inst in true_log.instances():
        true_by_resource.setdefault(inst.resource, []).append(inst)
    for resource, insts in true_by_resource.items():
        insts.sort(key=lambda i: (i.start_ms, i.complete_ms))
        for earlier, later in zip(insts, insts[1:]):
            if later.start_ms < earlier.complete_ms:
                raise OverlappingTruthError(
                    f"reference instances of {resource!r} overlap: "
                    f"{earlier.signature} and {later.signature}"
                )

    extracted = sorted(
        extracted_log.instances(),
        key=lambda i: (i.resource, i.start_ms, i.complete_ms, i.class_label),
    )
    records: list[MatchRecord] = []
    matched: set[tuple[str, int]] = set()
    for det in extracted:
        candidates = [
            (idx, ref)
            for idx, ref in enumerate(true_by_resource.get(det.resource, []))
            if ref.start_ms <= det.start_ms and det.complete_ms <= ref.complete_ms
        ]
        if len(candidates) > 1:
            raise AmbiguousMatchError(
                f"detected instance {det.signature} is contained in "
                f"{len(candidates)} reference instances"
            )
        if candidates:
            idx, ref = candidates[0]
            matched.add((det.resource, idx))
            outcome = CORRECT if ref.class_label == det.class_label else MISCLASSIFIED
            records.append(MatchRecord(ref, det, outcome))
        else:
            records.append(MatchRecord(None, det, OUTCOME_NOT_EXISTING))
    for resource in sorted(true_by_resource):
        for idx, ref in enumerate(true_by_resource[resource]):
            if (resource, idx) not in matched:
                records.append(MatchRecord(ref, None, OUTCOME_NOT_OBSERVED))
    return records


@dataclass(frozen=True)
class ConfusionMatrix:
    """True-class x detected-class counts with NOT_EXISTING / NOT_OBSERVED margins."""

    classes: tuple[str, ...]
    counts: Mapping[tuple[str, str], int]

    def __post_init__(self) -> None:
        if NOT_OBSERVED in self.classes or NOT_EXISTING in self.classes:
            raise ValueError("sentinel labels cannot be activity classes")
        counts = dict(self.counts)
        for (row, col), count in counts.items():
            if count < 0:
                raise ValueError(f"negative count at ({row}, {col})")
            if row not in self.classes and row != NOT_EXISTING:
                raise ValueError(f"unknown row label {row!r}")
            if col not in self.classes and col != NOT_OBSERVED:
                raise ValueError(f"unknown column label {col!r}")
        if counts.get((NOT_EXISTING, NOT_OBSERVED), 0):
            raise ValueError("cell (NOT_EXISTING, NOT_OBSERVED) must stay 0")
        object.__setattr__(self, "classes", tuple(self.classes))
        object.__setattr__(self, "counts", counts)

    @property
    def row_labels(self) -> tuple[str, ...]:
        return self.classes + (NOT_EXISTING,)

    @property
    def col_labels(self) -> tuple[str, ...]:
        return self.classes + (NOT_OBSERVED,)

    def get(self, row: str, col: str) -> int:
        return self.counts.get((row, col), 0)

    def row_sum(self, row: str) -> int:
        return sum(self.get(row, col) for col in self.col_labels)

    def col_sum(self, col: str) -> int:
        return sum(self.get(row, col) for row in self.row_labels)

    @property
    def grand_total(self) -> int:
        return sum(self.counts.values())

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["true\\detected", *self.col_labels])
        for row in self.row_labels:
            writer.writerow([row, *(self.get(row, col) for col in self.col_labels)])
        return buffer.getvalue()

    def to_json_dict(self) -> dict:
        return {
            "classes": list(self.classes),
            "rows": {
                row: {col: self.get(row, col) for col in self.col_labels}
                for row in self.row_labels
            },
        }


def build_confusion_matrix(
    records: Iterable[MatchRecord],
    classes: Sequence[str] | None = None,
) -> ConfusionMatrix:
    """Aggregate match records into the extended confusion matrix."""
    records = list(records)
    if classes is None:
        labels = set()
        for record in records:
            if record.true_instance is not None:
                labels.add(record.true_instance.class_label)
            if record.extracted_instance is not None:
                labels.add(record.extracted_instance.class_label)
        classes = sorted(labels)
    counts: dict[tuple[str, str], int] = {}
    for record in records:
        key = (record.true_label, record.detected_label)
        counts[key] = counts.get(key, 0) + 1
    return ConfusionMatrix(tuple(classes), counts)


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    weighted_precision: float
    weighted_recall: float

    def to_json_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "weighted_precision": self.weighted_precision,
            "weighted_recall": self.weighted_recall,
        }


def compute_metrics(matrix: ConfusionMatrix) -> Metrics:
    """Accuracy plus recall/precision weighted by true-instance counts.

    Recall weights run over every row including NOT_EXISTING (whose recall is
    0 by definition), which makes weighted recall collapse to accuracy.
    Precision weights cover only true-class rows; a class that was never
    detected at all contributes precision 0.
    """
    total = matrix.grand_total
    if total == 0:
        raise EmptyMatrixError("cannot compute metrics for an empty confusion matrix")
    diagonal = sum(matrix.get(label, label) for label in matrix.classes)
    accuracy = diagonal / total

    recall_weighted = 0.0
    recall_weights = 0
    for row in matrix.row_labels:
        weight = matrix.row_sum(row)
        if weight == 0:
            continue
        recall = matrix.get(row, row) / weight if row != NOT_EXISTING else 0.0
        recall_weighted += weight * recall
        recall_weights += weight
    weighted_recall = recall_weighted / recall_weights if recall_weights else 0.0

    precision_weighted = 0.0
    precision_weights = 0
    for label in matrix.classes:
        weight = matrix.row_sum(label)
        if weight == 0:
            continue
        detected = matrix.col_sum(label)
        precision = matrix.get(label, label) / detected if detected else 0.0
        precision_weighted += weight * precision
        precision_weights += weight
    weighted_precision = precision_weighted / precision_weights if precision_weights else 0.0

    return Metrics(accuracy, weighted_precision, weighted_recall)


def filter_by_resources(log: EventLog, resources: Iterable[str]) -> EventLog:
    """Restrict a log to traces whose instances all belong to ``resources``."""
    wanted = frozenset(resources)
    traces: list[Trace] = []
    for trace in log.traces:
        instances = trace.instances()
        if instances and all(inst.resource in wanted for inst in instances):
            traces.append(trace)
    return EventLog(tuple(traces), log.log_attributes, log.class_registry)
