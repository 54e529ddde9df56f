"""Core domain types for video-derived event logs.

Time is kept as integer milliseconds since a per-log stream epoch.  A
one-second detection index ``t`` covers the half-open interval
``[t * 1000, (t + 1) * 1000)`` milliseconds, so per-second detections map
losslessly onto event timestamps.
"""
from __future__ import annotations

import json
from collections import defaultdict, deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping, Sequence

from .errors import (
    DuplicateKeyError,
    MalformedBBoxError,
    ScoreOutOfRangeError,
    UnbalancedLifecycleError,
)

#: Reserved label marking process-unrelated behaviour.  It is a member of
#: every class registry and is removed from logs only by explicit filters.
UNDEFINED = "undefined"

START = "start"
COMPLETE = "complete"
LIFECYCLES = (START, COMPLETE)


def class_registry(labels: Iterable[str]) -> frozenset[str]:
    """Build a class registry from ``labels``, always including "undefined".

    Labels must be non-empty strings; duplicates collapse silently.
    """
    registry = {UNDEFINED}
    for label in labels:
        if not isinstance(label, str) or not label:
            raise ValueError(f"activity class labels must be non-empty strings, got {label!r}")
        registry.add(label)
    return frozenset(registry)


@dataclass(frozen=True)
class LowLevelEvent:
    """One second of detection output for one tracked actor.

    ``scores`` maps every known activity class to a score in [0, 1]; the
    optional ``bbox`` is a normalized (x1, y1, x2, y2) rectangle.
    """

    video_id: str
    t: int
    resource: str
    scores: Mapping[str, float]
    bbox: tuple[float, float, float, float] | None = None

    def __post_init__(self) -> None:
        if self.t < 0:
            raise ValueError(f"second index must be non-negative, got {self.t}")
        if not self.scores:
            raise ScoreOutOfRangeError("a low-level event needs at least one class score")
        for label, score in self.scores.items():
            if not (0.0 <= score <= 1.0):
                raise ScoreOutOfRangeError(
                    f"score for {label!r} at video={self.video_id!r} t={self.t} "
                    f"resource={self.resource!r} is {score}, outside [0, 1]"
                )
        if self.bbox is not None:
            box = tuple(self.bbox)
            if len(box) != 4:
                raise MalformedBBoxError(f"bbox must have 4 coordinates, got {self.bbox!r}")
            x1, y1, x2, y2 = box
            if not (0.0 <= x1 < x2 <= 1.0 and 0.0 <= y1 < y2 <= 1.0):
                raise MalformedBBoxError(f"bbox {box} violates 0 <= x1 < x2 <= 1, 0 <= y1 < y2 <= 1")
            object.__setattr__(self, "bbox", box)
        object.__setattr__(self, "scores", dict(self.scores))

    @property
    def key(self) -> tuple[str, int, str]:
        return (self.video_id, self.t, self.resource)


@dataclass(frozen=True)
class ActivityInstance:
    """One execution of an activity, spanning [start_ms, complete_ms)."""

    class_label: str
    resource: str
    start_ms: int
    complete_ms: int
    case_id: str | None = None

    def __post_init__(self) -> None:
        if not self.class_label:
            raise ValueError("activity instance needs a non-empty class label")
        if self.start_ms >= self.complete_ms:
            raise ValueError(
                f"instance of {self.class_label!r} must start before it completes "
                f"({self.start_ms} >= {self.complete_ms})"
            )

    @property
    def signature(self) -> tuple[str, str, int, int]:
        """Identity of the instance regardless of case assignment."""
        return (self.class_label, self.resource, self.start_ms, self.complete_ms)


@dataclass(frozen=True)
class HighLevelEvent:
    """A start or complete lifecycle event of a business activity."""

    class_label: str
    lifecycle: str
    timestamp_ms: int
    resource: str
    case_id: str | None = None
    attributes: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.lifecycle not in LIFECYCLES:
            raise ValueError(f"lifecycle must be one of {LIFECYCLES}, got {self.lifecycle!r}")
        if not self.class_label:
            raise ValueError("event needs a non-empty class label")
        object.__setattr__(self, "attributes", dict(self.attributes))

    @property
    def sort_key(self) -> tuple[int, int, str, str]:
        # Equal timestamps order start before complete, then by class label.
        return (self.timestamp_ms, 0 if self.lifecycle == START else 1, self.class_label, self.resource)


def _sorted_events(events: Iterable[HighLevelEvent]) -> tuple[HighLevelEvent, ...]:
    return tuple(sorted(events, key=lambda e: e.sort_key))


@dataclass(frozen=True)
class Trace:
    """Ordered event container for one case.

    The constructor normalizes event order; balanced start/complete pairing
    is guaranteed for aggregator-produced traces and checked on demand by
    :func:`events_to_instances`.
    """

    case_id: str
    events: tuple[HighLevelEvent, ...] = ()
    attributes: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "events", _sorted_events(self.events))
        object.__setattr__(self, "attributes", dict(self.attributes))

    @classmethod
    def from_instances(
        cls,
        case_id: str,
        instances: Iterable[ActivityInstance],
        attributes: Mapping[str, Any] | None = None,
    ) -> "Trace":
        rebased = [replace(inst, case_id=case_id) for inst in instances]
        return cls(case_id, instances_to_events(rebased), attributes or {})

    def instances(self) -> list[ActivityInstance]:
        return events_to_instances(self)

    def activity_sequence(self) -> tuple[str, ...]:
        """Class labels of the trace's instances in instance order."""
        return tuple(inst.class_label for inst in self.instances())


@dataclass(frozen=True)
class EventLog:
    """A set of traces with log-level attributes and a class registry."""

    traces: tuple[Trace, ...] = ()
    log_attributes: Mapping[str, Any] = field(default_factory=dict)
    class_registry: frozenset[str] = frozenset({UNDEFINED})

    def __post_init__(self) -> None:
        ordered = tuple(sorted(self.traces, key=lambda tr: tr.case_id))
        seen: set[str] = set()
        for trace in ordered:
            if trace.case_id in seen:
                raise DuplicateKeyError(f"duplicate case id {trace.case_id!r}")
            seen.add(trace.case_id)
        object.__setattr__(self, "traces", ordered)
        object.__setattr__(self, "log_attributes", dict(self.log_attributes))
        object.__setattr__(self, "class_registry", frozenset(self.class_registry))

    def instances(self) -> Iterator[ActivityInstance]:
        for trace in self.traces:
            yield from trace.instances()

    def instance_signatures(self) -> list[tuple[str, str, int, int]]:
        """Sorted (class, resource, start, complete) tuples of all instances."""
        return sorted(inst.signature for inst in self.instances())

    def activity_sequences(self) -> list[tuple[str, ...]]:
        return [trace.activity_sequence() for trace in self.traces]

    def resources(self) -> frozenset[str]:
        return frozenset(inst.resource for inst in self.instances())


@dataclass(frozen=True)
class GroundTruthAnnotation:
    """One second of ground-truth labelling for one resource."""

    video_id: str
    t: int
    resource: str
    case_id: str
    class_label: str

    def __post_init__(self) -> None:
        if self.t < 0:
            raise ValueError(f"second index must be non-negative, got {self.t}")
        if not self.class_label:
            raise ValueError("annotation needs a non-empty class label")


def validate_low_level_stream(events: Iterable[LowLevelEvent]) -> list[LowLevelEvent]:
    """Sort a detection stream by (video_id, t, resource), rejecting duplicates.

    Score and bounding-box invariants are enforced when events are built, so
    the remaining stream-level check is key uniqueness.
    """
    ordered = sorted(events, key=lambda e: e.key)
    previous: tuple[str, int, str] | None = None
    for event in ordered:
        if event.key == previous:
            raise DuplicateKeyError(
                f"duplicate low-level event for video={event.video_id!r} "
                f"t={event.t} resource={event.resource!r}"
            )
        previous = event.key
    return ordered


def instances_to_events(instances: Iterable[ActivityInstance]) -> tuple[HighLevelEvent, ...]:
    """Expand instances into one start and one complete event each, ordered."""
    events: list[HighLevelEvent] = []
    for inst in instances:
        events.append(
            HighLevelEvent(inst.class_label, START, inst.start_ms, inst.resource, inst.case_id)
        )
        events.append(
            HighLevelEvent(inst.class_label, COMPLETE, inst.complete_ms, inst.resource, inst.case_id)
        )
    return _sorted_events(events)


def events_to_instances(trace: Trace) -> list[ActivityInstance]:
    """Pair start/complete events of a trace back into activity instances.

    Starts are matched to the earliest later complete of the same class and
    resource (first-in, first-out), so the round trip through
    :func:`instances_to_events` reproduces the trace's event multiset.
    """
    pending: dict[tuple[str, str], deque[HighLevelEvent]] = defaultdict(deque)
    instances: list[ActivityInstance] = []
    for event in trace.events:
        key = (event.class_label, event.resource)
        if event.lifecycle == START:
            pending[key].append(event)
        else:
            if not pending[key]:
                raise UnbalancedLifecycleError(
                    f"complete without start for {event.class_label!r}/"
                    f"{event.resource!r} at {event.timestamp_ms} ms in case {trace.case_id!r}"
                )
            start_event = pending[key].popleft()
            instances.append(
                ActivityInstance(
                    event.class_label,
                    event.resource,
                    start_event.timestamp_ms,
                    event.timestamp_ms,
                    trace.case_id,
                )
            )
    unmatched = [key for key, queue in pending.items() if queue]
    if unmatched:
        label, resource = unmatched[0]
        raise UnbalancedLifecycleError(
            f"start without complete for {label!r}/{resource!r} in case {trace.case_id!r}"
        )
    instances.sort(key=lambda i: (i.start_ms, i.complete_ms, i.class_label, i.resource))
    return instances


# -- low-level stream files (JSON Lines, one object per event) --------------


def low_level_event_to_json(event: LowLevelEvent) -> str:
    payload: dict[str, Any] = {
        "video_id": event.video_id,
        "t": event.t,
        "resource": event.resource,
    }
    if event.bbox is not None:
        payload["bbox"] = list(event.bbox)
    payload["scores"] = {label: event.scores[label] for label in sorted(event.scores)}
    return json.dumps(payload, separators=(",", ":"))


def write_low_level_jsonl(events: Iterable[LowLevelEvent], path: str | Path) -> int:
    """Write events as JSON Lines; returns the number of lines written."""
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for event in events:
            handle.write(low_level_event_to_json(event) + "\n")
            count += 1
    return count


def read_low_level_jsonl(source: str | Path) -> list[LowLevelEvent]:
    """Read and validate a JSON Lines detection stream."""
    events = []
    with open(source, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            raw = json.loads(line)
            bbox = tuple(raw["bbox"]) if raw.get("bbox") is not None else None
            events.append(
                LowLevelEvent(raw["video_id"], raw["t"], raw["resource"], raw["scores"], bbox)
            )
    return validate_low_level_stream(events)


# -- instance files (JSON Lines: class,resource,start_ms,complete_ms,case_id)


def instance_to_json(inst: ActivityInstance) -> str:
    return json.dumps(
        {
            "class": inst.class_label,
            "resource": inst.resource,
            "start_ms": inst.start_ms,
            "complete_ms": inst.complete_ms,
            "case_id": inst.case_id,
        },
        separators=(",", ":"),
    )


def write_instances_jsonl(instances: Iterable[ActivityInstance], path: str | Path) -> int:
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for inst in instances:
            handle.write(instance_to_json(inst) + "\n")
            count += 1
    return count


def read_instances_jsonl(source: str | Path) -> list[ActivityInstance]:
    instances = []
    with open(source, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            raw = json.loads(line)
            instances.append(
                ActivityInstance(
                    raw["class"], raw["resource"], raw["start_ms"], raw["complete_ms"], raw.get("case_id")
                )
            )
    return instances
