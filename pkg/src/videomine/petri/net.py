"""Labeled Petri nets with multiset markings and firing semantics."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

from ..errors import NotEnabledError

Marking = dict[str, int]


@dataclass(frozen=True)
class Transition:
    """A net transition; ``label`` is None for silent (tau) transitions."""

    name: str
    label: str | None = None

    @property
    def is_silent(self) -> bool:
        return self.label is None


def marking_key(marking: Mapping[str, int]) -> tuple[tuple[str, int], ...]:
    """Canonical hashable form of a marking (zero counts dropped)."""
    return tuple(sorted((place, count) for place, count in marking.items() if count))


class PetriNet:
    """A place/transition net with weight-1 arcs and initial/final markings."""

    def __init__(
        self,
        places: Iterable[str],
        transitions: Iterable[Transition],
        arcs: Iterable[tuple[str, str]],
        initial_marking: Mapping[str, int],
        final_marking: Mapping[str, int],
    ):
        self.places = frozenset(places)
        self.transitions = tuple(transitions)
        self.arcs = frozenset(arcs)
        self.initial_marking: Marking = {p: c for p, c in initial_marking.items() if c}
        self.final_marking: Marking = {p: c for p, c in final_marking.items() if c}
        self._validate()
        self._by_name = {t.name: t for t in self.transitions}
        self.preset: dict[str, tuple[str, ...]] = {t.name: () for t in self.transitions}
        self.postset: dict[str, tuple[str, ...]] = {t.name: () for t in self.transitions}
        pre: dict[str, list[str]] = {t.name: [] for t in self.transitions}
        post: dict[str, list[str]] = {t.name: [] for t in self.transitions}
        for source, target in sorted(self.arcs):
            if source in self.places:
                pre[target].append(source)
            else:
                post[source].append(target)
        for name in pre:
            self.preset[name] = tuple(pre[name])
            self.postset[name] = tuple(post[name])

    def _validate(self) -> None:
        names = {t.name for t in self.transitions}
        if len(names) != len(self.transitions):
            raise ValueError("transition names must be unique")
        if names & self.places:
            raise ValueError("place and transition names must be disjoint")
        for source, target in self.arcs:
            src_place, tgt_place = source in self.places, target in self.places
            src_trans, tgt_trans = source in names, target in names
            if not ((src_place and tgt_trans) or (src_trans and tgt_place)):
                raise ValueError(f"arc ({source!r}, {target!r}) is not bipartite")
        if not self.initial_marking or not self.final_marking:
            raise ValueError("initial and final markings must be non-empty")
        for marking in (self.initial_marking, self.final_marking):
            unknown = set(marking) - self.places
            if unknown:
                raise ValueError(f"marking references unknown places {sorted(unknown)}")

    def transition(self, name: str) -> Transition:
        return self._by_name[name]

    @property
    def visible_labels(self) -> frozenset[str]:
        return frozenset(t.label for t in self.transitions if t.label is not None)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PetriNet):
            return NotImplemented
        return (
            self.places == other.places
            and set(self.transitions) == set(other.transitions)
            and self.arcs == other.arcs
            and self.initial_marking == other.initial_marking
            and self.final_marking == other.final_marking
        )

    def __repr__(self) -> str:
        return (
            f"PetriNet({len(self.places)} places, {len(self.transitions)} transitions, "
            f"{len(self.arcs)} arcs)"
        )


def is_enabled(net: PetriNet, marking: Mapping[str, int], name: str) -> bool:
    needed: dict[str, int] = {}
    for place in net.preset[name]:
        needed[place] = needed.get(place, 0) + 1
    return all(marking.get(place, 0) >= count for place, count in needed.items())


def enabled_transitions(net: PetriNet, marking: Mapping[str, int]) -> list[Transition]:
    """Transitions fireable at ``marking``, sorted by name for determinism."""
    return sorted(
        (t for t in net.transitions if is_enabled(net, marking, t.name)),
        key=lambda t: t.name,
    )


def fire(net: PetriNet, marking: Mapping[str, int], name: str) -> Marking:
    """Fire a transition: consume one token per input arc, produce per output arc."""
    if not is_enabled(net, marking, name):
        raise NotEnabledError(f"transition {name!r} is not enabled at {dict(marking)}")
    result = dict(marking)
    for place in net.preset[name]:
        result[place] -= 1
        if not result[place]:
            del result[place]
    for place in net.postset[name]:
        result[place] = result.get(place, 0) + 1
    return result


def silent_closure(net: PetriNet, markings: Iterable[Mapping[str, int]]) -> list[Marking]:
    """All markings reachable from ``markings`` by firing only silent transitions."""
    seen: dict[tuple, Marking] = {}
    stack: list[Marking] = []
    for marking in markings:
        key = marking_key(marking)
        if key not in seen:
            seen[key] = dict(marking)
            stack.append(dict(marking))
    while stack:
        marking = stack.pop()
        for transition in net.transitions:
            if transition.label is None and is_enabled(net, marking, transition.name):
                successor = fire(net, marking, transition.name)
                key = marking_key(successor)
                if key not in seen:
                    seen[key] = successor
                    stack.append(successor)
    return [seen[key] for key in sorted(seen)]
