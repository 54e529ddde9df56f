"""Deterministic detector simulator.

Replaces the neural detection stack for testing: ground-truth annotations go
in, a (optionally noisy) per-second low-level event stream comes out.  All
randomness flows from a single 64-bit seed through per-video sub-seeds, so a
given (annotations, config) pair always produces bit-identical output.
"""
from __future__ import annotations

import csv
import hashlib
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence, TextIO

from .errors import DuplicateKeyError, ParseError
from .model import (
    UNDEFINED,
    ActivityInstance,
    EventLog,
    GroundTruthAnnotation,
    LowLevelEvent,
    Trace,
    class_registry,
)

#: Name of the pseudo-random generator backing the simulator
#: (CPython's ``random.Random``), recorded in run metadata.
GENERATOR_NAME = "mt19937"

ANNOTATION_HEADER = ["video_id", "t", "resource", "case_id", "class"]

_ROW_SUM_TOLERANCE = 1e-9


@dataclass(frozen=True)
class NoiseConfig:
    """Knobs of the per-second detection noise model.

    ``p_miss`` substitutes "undefined" for the true class; ``p_split``
    punches one-second "undefined" gaps into the interior of an annotated
    activity run (splitting it into sub-activities); ``confusion`` remaps the
    surviving true class by a per-class categorical distribution.  The score
    vector concentrates ``sharpness / (sharpness + 1)`` of the mass on the
    drawn class and spreads the remainder uniformly.
    """

    p_miss: float = 0.0
    p_split: float = 0.0
    confusion: Mapping[str, Mapping[str, float]] = field(default_factory=dict)
    score_sharpness: float = 9.0
    seed: int = 0

    def __post_init__(self) -> None:
        for name, value in (("p_miss", self.p_miss), ("p_split", self.p_split)):
            if not (0.0 <= value <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        if self.score_sharpness <= 0.0:
            raise ValueError(f"score_sharpness must be positive, got {self.score_sharpness}")
        frozen: dict[str, dict[str, float]] = {}
        for true_label, row in self.confusion.items():
            total = 0.0
            for detected, p in row.items():
                if not (0.0 <= p <= 1.0):
                    raise ValueError(
                        f"confusion probability for {true_label!r}->{detected!r} is {p}, outside [0, 1]"
                    )
                total += p
            if abs(total - 1.0) > _ROW_SUM_TOLERANCE:
                raise ValueError(f"confusion row for {true_label!r} sums to {total}, expected 1")
            frozen[true_label] = dict(row)
        object.__setattr__(self, "confusion", frozen)

    def metadata(self) -> dict[str, Any]:
        """Reproducibility record written next to every simulated stream."""
        return {
            "generator": GENERATOR_NAME,
            "subseed_derivation": "first 8 bytes (big-endian) of sha256('<seed>:<video_id>')",
            "seed": self.seed,
            "p_miss": self.p_miss,
            "p_split": self.p_split,
            "score_sharpness": self.score_sharpness,
            "confusion": {k: dict(sorted(v.items())) for k, v in sorted(self.confusion.items())},
        }


def derive_subseed(seed: int, video_id: str) -> int:
    """Per-video sub-seed so videos can be simulated independently."""
    digest = hashlib.sha256(f"{seed}:{video_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def load_annotations(
    source: str | Path | TextIO,
    registry: frozenset[str] | None = None,
) -> list[GroundTruthAnnotation]:
    """Parse a ground-truth CSV (header video_id,t,resource,case_id,class).

    When ``registry`` is given, rows with unknown class labels are rejected.
    A resource can perform at most one class per second, so the (t, resource)
    pair must be unique across the whole file, not just per video.
    """
    if hasattr(source, "read"):
        return _parse_annotation_rows(csv.reader(source), registry)
    with open(source, "r", encoding="utf-8", newline="") as handle:
        return _parse_annotation_rows(csv.reader(handle), registry)


def _parse_annotation_rows(rows, registry):
    annotations: list[GroundTruthAnnotation] = []
    seen_full: set[tuple[str, int, str]] = set()
    seen_global: dict[tuple[int, str], str] = {}
    header = next(rows, None)
    if header is None or [h.strip() for h in header] != ANNOTATION_HEADER:
        raise ParseError(f"expected header {','.join(ANNOTATION_HEADER)!r}, got {header!r}", line=1)
    for line_no, row in enumerate(rows, start=2):
        if not row:
            continue
        if len(row) != 5:
            raise ParseError(f"expected 5 fields, got {len(row)}", line=line_no)
        video_id, t_text, resource, case_id, label = (f.strip() for f in row)
        try:
            t = int(t_text)
        except ValueError:
            raise ParseError(f"second index {t_text!r} is not an integer", line=line_no) from None
        if t < 0:
            raise ParseError(f"second index must be non-negative, got {t}", line=line_no)
        if not label:
            raise ParseError("empty class label", line=line_no)
        if registry is not None and label not in registry:
            raise ParseError(f"unknown class label {label!r}", line=line_no)
        key = (video_id, t, resource)
        if key in seen_full:
            raise DuplicateKeyError(
                f"duplicate annotation for video={video_id!r} t={t} resource={resource!r}"
            )
        other_video = seen_global.get((t, resource))
        if other_video is not None and other_video != video_id:
            raise DuplicateKeyError(
                f"resource {resource!r} is annotated at second {t} in both "
                f"{other_video!r} and {video_id!r}; a resource performs at most one class per second"
            )
        seen_full.add(key)
        seen_global[(t, resource)] = video_id
        annotations.append(GroundTruthAnnotation(video_id, t, resource, case_id, label))
    annotations.sort(key=lambda a: (a.video_id, a.t, a.resource))
    return annotations


def write_annotations_csv(annotations: Iterable[GroundTruthAnnotation], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(ANNOTATION_HEADER)
        for ann in annotations:
            writer.writerow([ann.video_id, ann.t, ann.resource, ann.case_id, ann.class_label])


def _annotation_runs(
    annotations: Sequence[GroundTruthAnnotation],
) -> list[tuple[str, str, str, int, int]]:
    """Maximal per-(resource, case) runs of consecutive seconds with one class.

    Returns (resource, case_id, class_label, first_t, last_t) tuples.
    """
    grouped: dict[tuple[str, str], list[GroundTruthAnnotation]] = {}
    for ann in annotations:
        grouped.setdefault((ann.resource, ann.case_id), []).append(ann)
    runs: list[tuple[str, str, str, int, int]] = []
    for (resource, case_id), group in sorted(grouped.items()):
        group.sort(key=lambda a: a.t)
        first = last = group[0].t
        label = group[0].class_label
        for ann in group[1:]:
            if ann.t == last + 1 and ann.class_label == label:
                last = ann.t
            else:
                runs.append((resource, case_id, label, first, last))
                first = last = ann.t
                label = ann.class_label
        runs.append((resource, case_id, label, first, last))
    return runs


def annotations_to_true_log(
    annotations: Sequence[GroundTruthAnnotation],
    registry: frozenset[str] | None = None,
) -> EventLog:
    """Build the reference log straight from ground truth.

    Maximal same-class runs per (resource, case) become activity instances;
    "undefined" runs are removed; traces are keyed by case id.
    """
    if registry is None:
        registry = class_registry(a.class_label for a in annotations)
    by_case: dict[str, list[ActivityInstance]] = {}
    for resource, case_id, label, first, last in _annotation_runs(annotations):
        if label == UNDEFINED:
            continue
        inst = ActivityInstance(label, resource, first * 1000, (last + 1) * 1000, case_id)
        by_case.setdefault(case_id, []).append(inst)
    traces = [Trace.from_instances(case_id, insts) for case_id, insts in sorted(by_case.items())]
    return EventLog(tuple(traces), {}, registry)


def _resource_bbox(resource: str) -> tuple[float, float, float, float]:
    # Fixed per-resource rectangle; geometry is irrelevant downstream but the
    # output contract requires a well-formed box.
    digest = hashlib.sha256(resource.encode("utf-8")).digest()
    x1 = digest[0] / 512.0
    y1 = digest[1] / 512.0
    width = 0.1 + digest[2] / 1024.0
    height = 0.1 + digest[3] / 1024.0
    return (x1, y1, x1 + width, y1 + height)


def simulate_detections(
    annotations: Sequence[GroundTruthAnnotation],
    noise: NoiseConfig,
    registry: frozenset[str] | None = None,
) -> list[LowLevelEvent]:
    """Emit one low-level event per annotated second under the noise model.

    Per second the generator always consumes exactly three draws (split,
    miss, confusion) so that raising one probability never perturbs the
    remaining draws: runs with the same seed stay coupled across configs.
    """
    if registry is None:
        labels = {a.class_label for a in annotations}
        for true_label, row in noise.confusion.items():
            labels.add(true_label)
            labels.update(row)
        registry = class_registry(labels)
    ordered_labels = sorted(registry)
    k = len(ordered_labels)
    high = noise.score_sharpness / (noise.score_sharpness + 1.0)
    low = (1.0 - high) / (k - 1) if k > 1 else 0.0

    interior: set[tuple[str, int]] = set()
    for resource, _case, label, first, last in _annotation_runs(annotations):
        if label == UNDEFINED:
            continue
        for t in range(first + 1, last):
            interior.add((resource, t))

    by_video: dict[str, list[GroundTruthAnnotation]] = {}
    for ann in annotations:
        by_video.setdefault(ann.video_id, []).append(ann)

    events: list[LowLevelEvent] = []
    for video_id in sorted(by_video):
        rng = random.Random(derive_subseed(noise.seed, video_id))
        for ann in sorted(by_video[video_id], key=lambda a: (a.t, a.resource)):
            u_split = rng.random()
            u_miss = rng.random()
            u_confuse = rng.random()
            if ann.class_label == UNDEFINED:
                emitted = UNDEFINED
            elif (ann.resource, ann.t) in interior and u_split < noise.p_split:
                emitted = UNDEFINED
            elif u_miss < noise.p_miss:
                emitted = UNDEFINED
            else:
                emitted = _draw_confused(ann.class_label, noise.confusion, u_confuse)
            scores = {
                label: (high if label == emitted else low) for label in ordered_labels
            }
            events.append(
                LowLevelEvent(video_id, ann.t, ann.resource, scores, _resource_bbox(ann.resource))
            )
    return events


def _draw_confused(true_label: str, confusion: Mapping[str, Mapping[str, float]], u: float) -> str:
    row = confusion.get(true_label)
    if not row:
        return true_label
    cumulative = 0.0
    items = sorted(row.items())
    for label, p in items:
        cumulative += p
        if u < cumulative:
            return label
    return items[-1][0]
