"""Event abstraction: lift per-second detections to business activities.

The processing chain is select (arg-max with threshold) -> segment (maximal
same-class runs become instances) -> merge (close small gaps) -> correlate
(split a resource's instances into cases at a marker activity).
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

from .errors import DuplicateKeyError
from .model import (
    UNDEFINED,
    ActivityInstance,
    EventLog,
    LowLevelEvent,
    Trace,
    class_registry,
    events_to_instances,
)

DEFAULT_DROP_CLASSES = frozenset({UNDEFINED})


@dataclass(frozen=True)
class AggregatorConfig:
    """Tuning of the abstraction chain.

    ``selection_threshold`` is the minimum arg-max score (below it a second is
    classed "undefined"); ``merge_gap_ms`` is the largest gap bridged when
    merging same-class instances; a new case opens at every ``case_marker``
    instance.
    """

    selection_threshold: float = 0.0
    merge_gap_ms: int = 0
    case_marker: str = "stir"
    drop_classes: frozenset[str] = DEFAULT_DROP_CLASSES

    def __post_init__(self) -> None:
        if not (0.0 <= self.selection_threshold <= 1.0):
            raise ValueError(f"selection threshold must lie in [0, 1], got {self.selection_threshold}")
        if self.merge_gap_ms < 0:
            raise ValueError(f"merge gap must be non-negative, got {self.merge_gap_ms}")
        if not self.case_marker:
            raise ValueError("case marker must be a non-empty class label")
        object.__setattr__(self, "drop_classes", frozenset(self.drop_classes))


def select_classes(
    stream: Iterable[LowLevelEvent],
    threshold: float = 0.0,
) -> dict[tuple[str, int], str]:
    """Pick one class per (resource, second): arg-max, or "undefined" below threshold.

    Ties break toward the lexicographically smallest label.  A resource can
    only act in one video at a time, so (resource, t) must be unique.
    """
    selected: dict[tuple[str, int], str] = {}
    for event in stream:
        key = (event.resource, event.t)
        if key in selected:
            raise DuplicateKeyError(
                f"resource {event.resource!r} has two detections at second {event.t}; "
                "streams spanning videos must use disjoint second indices per resource"
            )
        best_score = max(event.scores.values())
        best_label = min(label for label, score in event.scores.items() if score == best_score)
        selected[key] = best_label if best_score >= threshold else UNDEFINED
    return selected


def segment_instances(
    selected: Mapping[tuple[str, int], str],
    drop_classes: frozenset[str] = DEFAULT_DROP_CLASSES,
) -> list[ActivityInstance]:
    """Turn per-second class picks into instances, one per maximal run.

    A run is a maximal streak of consecutive seconds of one resource with the
    same class; it spans [first*1000, (last+1)*1000) ms.  Classes listed in
    ``drop_classes`` are excluded from the output.
    """
    per_resource: dict[str, list[tuple[int, str]]] = {}
    for (resource, t), label in selected.items():
        per_resource.setdefault(resource, []).append((t, label))
    instances: list[ActivityInstance] = []
    for resource in sorted(per_resource):
        seconds = sorted(per_resource[resource])
        first_t, last_t = seconds[0][0], seconds[0][0]
        run_label = seconds[0][1]
        for t, label in seconds[1:]:
            if t == last_t + 1 and label == run_label:
                last_t = t
                continue
            if run_label not in drop_classes:
                instances.append(ActivityInstance(run_label, resource, first_t * 1000, (last_t + 1) * 1000))
            first_t, last_t, run_label = t, t, label
        if run_label not in drop_classes:
            instances.append(ActivityInstance(run_label, resource, first_t * 1000, (last_t + 1) * 1000))
    instances.sort(key=lambda i: (i.resource, i.start_ms, i.complete_ms, i.class_label))
    return instances


def merge_adjacent(
    instances: Iterable[ActivityInstance],
    merge_gap_ms: int = 0,
) -> list[ActivityInstance]:
    """Merge same-class neighbours of one resource whose gap is <= merge_gap_ms.

    Only instances adjacent in the resource's time order merge, and never
    across different case assignments.  The operation is idempotent.
    """
    per_resource: dict[str, list[ActivityInstance]] = {}
    for inst in instances:
        per_resource.setdefault(inst.resource, []).append(inst)
    merged: list[ActivityInstance] = []
    for resource in sorted(per_resource):
        ordered = sorted(per_resource[resource], key=lambda i: (i.start_ms, i.complete_ms))
        current = ordered[0]
        for inst in ordered[1:]:
            if (
                inst.class_label == current.class_label
                and inst.case_id == current.case_id
                and inst.start_ms - current.complete_ms <= merge_gap_ms
            ):
                current = replace(current, complete_ms=max(current.complete_ms, inst.complete_ms))
            else:
                merged.append(current)
                current = inst
        merged.append(current)
    merged.sort(key=lambda i: (i.resource, i.start_ms, i.complete_ms, i.class_label))
    return merged


def merge_subsequent_in_trace(trace: Trace) -> Trace:
    """Collapse consecutive same-class instances of a trace into one pair.

    Works purely on trace order (timestamp gaps are ignored): a run of n
    same-class instances becomes one instance from the run's first start to
    its last complete.  Idempotent; AAABB becomes AB.
    """
    instances = events_to_instances(trace)
    merged: list[ActivityInstance] = []
    for inst in instances:
        if merged and merged[-1].class_label == inst.class_label:
            previous = merged[-1]
            merged[-1] = replace(
                previous, complete_ms=max(previous.complete_ms, inst.complete_ms)
            )
        else:
            merged.append(inst)
    return Trace.from_instances(trace.case_id, merged, trace.attributes)


def merge_log_subsequent(log: EventLog) -> EventLog:
    """Apply :func:`merge_subsequent_in_trace` to every trace of a log."""
    return EventLog(
        tuple(merge_subsequent_in_trace(trace) for trace in log.traces),
        log.log_attributes,
        log.class_registry,
    )


def correlate_cases(
    instances: Sequence[ActivityInstance],
    case_marker: str,
    registry: frozenset[str] | None = None,
    log_attributes: Mapping | None = None,
) -> EventLog:
    """Partition each resource's instances into cases at marker instances.

    A new case ``<resource>#<k>`` opens whenever the marker class occurs;
    instances seen before a resource's first marker land in a trace
    ``<resource>#0`` flagged ``unassigned``.
    """
    if registry is None:
        registry = class_registry(inst.class_label for inst in instances)
    per_resource: dict[str, list[ActivityInstance]] = {}
    for inst in instances:
        per_resource.setdefault(inst.resource, []).append(inst)
    traces: list[Trace] = []
    for resource in sorted(per_resource):
        ordered = sorted(per_resource[resource], key=lambda i: (i.start_ms, i.complete_ms, i.class_label))
        marker_count = 0
        buckets: dict[int, list[ActivityInstance]] = {}
        for inst in ordered:
            if inst.class_label == case_marker:
                marker_count += 1
            buckets.setdefault(marker_count, []).append(inst)
        for k, bucket in sorted(buckets.items()):
            attributes = {"unassigned": True} if k == 0 else {}
            traces.append(Trace.from_instances(f"{resource}#{k}", bucket, attributes))
    return EventLog(tuple(traces), log_attributes or {}, registry)


def default_trace_log(
    instances: Sequence[ActivityInstance],
    registry: frozenset[str] | None = None,
    case_id: str = "default",
) -> EventLog:
    """Put every instance into one default trace (the pre-correlation export)."""
    if registry is None:
        registry = class_registry(inst.class_label for inst in instances)
    return EventLog((Trace.from_instances(case_id, instances),), {}, registry)


def filter_class(log: EventLog, class_label: str) -> EventLog:
    """Drop every instance of one class from a log; empty traces disappear."""
    traces: list[Trace] = []
    for trace in log.traces:
        kept = [inst for inst in trace.instances() if inst.class_label != class_label]
        if kept:
            traces.append(Trace.from_instances(trace.case_id, kept, trace.attributes))
    return EventLog(tuple(traces), log.log_attributes, log.class_registry)
