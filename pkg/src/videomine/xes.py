"""XES (IEEE 1849-2016) export/import and single-event notifications.

Export is byte-deterministic: fixed attribute order, two-space indentation,
traces in case-id order.  The configured stream epoch and the class registry
travel inside the document as ordinary log attributes so that importing an
exported file reproduces the original log exactly.
"""
from __future__ import annotations

import json
import socket
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import IO, Any, Iterable
from xml.etree import ElementTree
from xml.sax.saxutils import quoteattr

from .errors import SchemaError, SinkUnavailableError
from .model import COMPLETE, START, EventLog, HighLevelEvent, Trace, class_registry

DEFAULT_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)

#: Log attributes used to make export/import lossless.
EPOCH_KEY = "epoch"
REGISTRY_KEY = "activity-classes"

_EXTENSIONS = (
    ("Concept", "concept", "http://www.xes-standard.org/concept.xesext"),
    ("Lifecycle", "lifecycle", "http://www.xes-standard.org/lifecycle.xesext"),
    ("Organizational", "org", "http://www.xes-standard.org/org.xesext"),
    ("Time", "time", "http://www.xes-standard.org/time.xesext"),
)

_MANDATORY_EVENT_KEYS = ("concept:name", "time:timestamp", "lifecycle:transition", "org:resource")

_MS = timedelta(milliseconds=1)


def format_timestamp(ts: datetime) -> str:
    """ISO-8601 with millisecond precision and an explicit UTC designator."""
    ts = ts.astimezone(timezone.utc)
    return f"{ts.strftime('%Y-%m-%dT%H:%M:%S')}.{ts.microsecond // 1000:03d}Z"


def parse_timestamp(text: str) -> datetime:
    try:
        ts = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError as exc:
        raise SchemaError(f"unparseable timestamp {text!r}") from exc
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def _attribute_line(indent: str, key: str, value: Any) -> str:
    if isinstance(value, bool):
        tag, text = "boolean", "true" if value else "false"
    elif isinstance(value, int):
        tag, text = "int", str(value)
    elif isinstance(value, float):
        tag, text = "float", repr(value)
    elif isinstance(value, datetime):
        tag, text = "date", format_timestamp(value)
    else:
        tag, text = "string", str(value)
    return f"{indent}<{tag} key={quoteattr(key)} value={quoteattr(text)}/>"


def export_xes(log: EventLog, epoch: datetime | None = None) -> str:
    """Serialize a log as an XES document anchored at ``epoch``.

    Every event carries concept:name, lifecycle:transition, org:resource and
    time:timestamp (= epoch + offset); every trace carries its case id as
    concept:name.
    """
    epoch = epoch or DEFAULT_EPOCH
    if epoch.tzinfo is None:
        epoch = epoch.replace(tzinfo=timezone.utc)
    lines = ['<?xml version="1.0" encoding="UTF-8"?>']
    lines.append('<log xes.version="1849-2016" xes.features="">')
    for name, prefix, uri in _EXTENSIONS:
        lines.append(f'  <extension name="{name}" prefix="{prefix}" uri="{uri}"/>')
    lines.append(_attribute_line("  ", EPOCH_KEY, epoch))
    lines.append(_attribute_line("  ", REGISTRY_KEY, ",".join(sorted(log.class_registry))))
    for key in sorted(log.log_attributes):
        if key in (EPOCH_KEY, REGISTRY_KEY):
            continue
        lines.append(_attribute_line("  ", key, log.log_attributes[key]))
    for trace in log.traces:
        lines.append("  <trace>")
        lines.append(_attribute_line("    ", "concept:name", trace.case_id))
        for key in sorted(trace.attributes):
            lines.append(_attribute_line("    ", key, trace.attributes[key]))
        for event in trace.events:
            lines.append("    <event>")
            lines.append(_attribute_line("      ", "concept:name", event.class_label))
            lines.append(_attribute_line("      ", "lifecycle:transition", event.lifecycle))
            lines.append(_attribute_line("      ", "org:resource", event.resource))
            lines.append(_attribute_line("      ", "time:timestamp", epoch + event.timestamp_ms * _MS))
            for key in sorted(event.attributes):
                lines.append(_attribute_line("      ", key, event.attributes[key]))
            lines.append("    </event>")
        lines.append("  </trace>")
    lines.append("</log>")
    return "\n".join(lines) + "\n"


def _element_value(element: ElementTree.Element) -> Any:
    value = element.get("value", "")
    if element.tag == "int":
        return int(value)
    if element.tag == "float":
        return float(value)
    if element.tag == "boolean":
        return value == "true"
    if element.tag == "date":
        return parse_timestamp(value)
    return value


def import_xes(text: str, epoch: datetime | None = None) -> EventLog:
    """Parse an XES document back into an :class:`EventLog`.

    Timestamps become millisecond offsets relative to (in order of
    preference) the ``epoch`` argument, the document's recorded epoch
    attribute, or the earliest timestamp in the document.  Unknown attributes
    are preserved in the respective attribute maps.
    """
    try:
        root = ElementTree.fromstring(text)
    except ElementTree.ParseError as exc:
        raise SchemaError(f"not well-formed XML: {exc}") from exc
    if root.tag != "log":
        raise SchemaError(f"expected <log> root element, got <{root.tag}>")

    log_attributes: dict[str, Any] = {}
    raw_traces: list[tuple[str, dict[str, Any], list[dict[str, Any]]]] = []
    for child in root:
        if child.tag == "extension":
            continue
        if child.tag == "trace":
            raw_traces.append(_parse_trace(child))
        elif child.tag == "global":
            continue
        else:
            log_attributes[child.get("key", "")] = _element_value(child)

    if epoch is None:
        recorded = log_attributes.get(EPOCH_KEY)
        if isinstance(recorded, datetime):
            epoch = recorded
        else:
            timestamps = [ev["time:timestamp"] for _, _, evs in raw_traces for ev in evs]
            epoch = min(timestamps) if timestamps else DEFAULT_EPOCH
    if epoch.tzinfo is None:
        epoch = epoch.replace(tzinfo=timezone.utc)

    registry_text = log_attributes.pop(REGISTRY_KEY, None)
    log_attributes.pop(EPOCH_KEY, None)

    traces = []
    seen_labels: set[str] = set()
    for case_id, attributes, raw_events in raw_traces:
        events = []
        for raw in raw_events:
            label = raw.pop("concept:name")
            lifecycle = raw.pop("lifecycle:transition")
            resource = raw.pop("org:resource")
            offset_ms = (raw.pop("time:timestamp") - epoch) // _MS
            seen_labels.add(label)
            events.append(HighLevelEvent(label, lifecycle, offset_ms, resource, case_id, raw))
        traces.append(Trace(case_id, tuple(events), attributes))

    if registry_text is not None:
        registry = class_registry(label for label in str(registry_text).split(",") if label)
    else:
        registry = class_registry(seen_labels)
    return EventLog(tuple(traces), log_attributes, registry)


def _parse_trace(element: ElementTree.Element) -> tuple[str, dict[str, Any], list[dict[str, Any]]]:
    attributes: dict[str, Any] = {}
    events: list[dict[str, Any]] = []
    for child in element:
        if child.tag == "event":
            events.append(_parse_event(child))
        else:
            attributes[child.get("key", "")] = _element_value(child)
    case_id = attributes.pop("concept:name", None)
    if case_id is None:
        raise SchemaError("trace missing mandatory attribute concept:name")
    return str(case_id), attributes, events


def _parse_event(element: ElementTree.Element) -> dict[str, Any]:
    attributes: dict[str, Any] = {}
    for child in element:
        attributes[child.get("key", "")] = _element_value(child)
    for key in _MANDATORY_EVENT_KEYS:
        if key not in attributes:
            raise SchemaError(f"event missing mandatory attribute {key}")
    if attributes["lifecycle:transition"] not in (START, COMPLETE):
        raise SchemaError(
            f"lifecycle:transition must be 'start' or 'complete', got {attributes['lifecycle:transition']!r}"
        )
    if not isinstance(attributes["time:timestamp"], datetime):
        raise SchemaError("time:timestamp must be a date attribute")
    return attributes


def schema_check(text: str) -> None:
    """Raise :class:`SchemaError` unless every mandatory attribute is present."""
    import_xes(text)


def write_xes(log: EventLog, path: str | Path, epoch: datetime | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(export_xes(log, epoch))


def read_xes(path: str | Path) -> EventLog:
    with open(path, "r", encoding="utf-8") as handle:
        return import_xes(handle.read())


# -- event notifier ----------------------------------------------------------


def notification_payload(event: HighLevelEvent) -> str:
    return json.dumps(
        {
            "class": event.class_label,
            "lifecycle": event.lifecycle,
            "timestamp": event.timestamp_ms,
            "resource": event.resource,
            "case_id": event.case_id,
        },
        separators=(",", ":"),
    )


def notify_stream(events: Iterable[HighLevelEvent], sink: str | Path | IO[str]) -> int:
    """Forward one JSON notification per event, in order, to ``sink``.

    ``sink`` may be an open writable object, "-" for standard output, a
    "tcp://host:port" endpoint, or a file path.  Events are written as they
    are consumed (at most once each); a broken sink raises
    :class:`SinkUnavailableError` instead of dropping silently.
    """
    if hasattr(sink, "write"):
        return _notify_handle(events, sink)
    sink_text = str(sink)
    if sink_text == "-":
        import sys

        return _notify_handle(events, sys.stdout)
    if sink_text.startswith("tcp://"):
        return _notify_tcp(events, sink_text)
    try:
        with open(sink_text, "w", encoding="utf-8", newline="\n") as handle:
            return _notify_handle(events, handle)
    except OSError as exc:
        raise SinkUnavailableError(f"cannot open sink {sink_text!r}: {exc}") from exc


def _notify_handle(events: Iterable[HighLevelEvent], handle: IO[str]) -> int:
    count = 0
    for event in events:
        try:
            handle.write(notification_payload(event) + "\n")
        except (OSError, ValueError) as exc:
            raise SinkUnavailableError(f"sink failed after {count} notifications: {exc}") from exc
        count += 1
    return count


def _notify_tcp(events: Iterable[HighLevelEvent], endpoint: str) -> int:
    host, _, port_text = endpoint[len("tcp://") :].partition(":")
    try:
        port = int(port_text)
    except ValueError:
        raise SinkUnavailableError(f"bad TCP endpoint {endpoint!r}") from None
    try:
        with socket.create_connection((host, port)) as conn:
            count = 0
            for event in events:
                conn.sendall((notification_payload(event) + "\n").encode("utf-8"))
                count += 1
            return count
    except OSError as exc:
        raise SinkUnavailableError(f"TCP sink {endpoint!r} unavailable: {exc}") from exc
