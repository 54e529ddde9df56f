"""Process trees and the standard tree-to-Petri-net expansion."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Iterable, Iterator

from .net import PetriNet, Transition

OP_SEQUENCE = "sequence"
OP_XOR = "xor"
OP_PARALLEL = "parallel"
OP_LOOP = "loop"
OPERATORS = (OP_SEQUENCE, OP_XOR, OP_PARALLEL, OP_LOOP)


@dataclass(frozen=True)
class ProcessTree:
    """Leaf (activity or tau) or operator node with ordered children.

    A loop's first child is the do-part; the remaining children are redo
    alternatives, each of which leads back into the do-part.
    """

    operator: str | None = None
    label: str | None = None
    children: tuple["ProcessTree", ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "children", tuple(self.children))
        if self.operator is None:
            if self.children:
                raise ValueError("leaves have no children")
        else:
            if self.operator not in OPERATORS:
                raise ValueError(f"unknown operator {self.operator!r}")
            if self.label is not None:
                raise ValueError("operator nodes carry no label")
            minimum = 2 if self.operator == OP_LOOP else 1
            if len(self.children) < minimum:
                raise ValueError(f"{self.operator} needs at least {minimum} children")

    @property
    def is_leaf(self) -> bool:
        return self.operator is None

    @property
    def is_tau(self) -> bool:
        return self.operator is None and self.label is None

    def __str__(self) -> str:
        if self.is_leaf:
            return self.label if self.label is not None else "tau"
        return f"{self.operator}({', '.join(str(c) for c in self.children)})"


def leaf(label: str) -> ProcessTree:
    return ProcessTree(label=label)


def tau() -> ProcessTree:
    return ProcessTree()


def sequence(*children: ProcessTree) -> ProcessTree:
    return ProcessTree(OP_SEQUENCE, children=children)


def xor(*children: ProcessTree) -> ProcessTree:
    return ProcessTree(OP_XOR, children=children)


def parallel(*children: ProcessTree) -> ProcessTree:
    return ProcessTree(OP_PARALLEL, children=children)


def loop(*children: ProcessTree) -> ProcessTree:
    return ProcessTree(OP_LOOP, children=children)


def tree_activities(tree: ProcessTree) -> set[str]:
    if tree.is_leaf:
        return set() if tree.label is None else {tree.label}
    result: set[str] = set()
    for child in tree.children:
        result |= tree_activities(child)
    return result


def _interleavings(left: tuple[str, ...], right: tuple[str, ...]) -> Iterator[tuple[str, ...]]:
    if not left:
        yield right
        return
    if not right:
        yield left
        return
    for rest in _interleavings(left[1:], right):
        yield (left[0],) + rest
    for rest in _interleavings(left, right[1:]):
        yield (right[0],) + rest


def tree_language(tree: ProcessTree) -> set[tuple[str, ...]]:
    """The exact trace set of a loop-free tree (loops have no finite language)."""
    if tree.is_leaf:
        return {()} if tree.label is None else {(tree.label,)}
    if tree.operator == OP_LOOP:
        raise ValueError("tree_language is only defined for loop-free trees")
    child_languages = [tree_language(child) for child in tree.children]
    if tree.operator == OP_XOR:
        result: set[tuple[str, ...]] = set()
        for language in child_languages:
            result |= language
        return result
    if tree.operator == OP_SEQUENCE:
        result = {()}
        for language in child_languages:
            result = {prefix + suffix for prefix in result for suffix in language}
        return result
    # parallel: shuffle product of one trace per child
    result = set()
    for combination in product(*child_languages):
        partial = {()}
        for word in combination:
            partial = {merged for existing in partial for merged in _interleavings(existing, word)}
        result |= partial
    return result


class _NetBuilder:
    def __init__(self) -> None:
        self.places: list[str] = []
        self.transitions: list[Transition] = []
        self.arcs: list[tuple[str, str]] = []

    def place(self) -> str:
        name = f"p{len(self.places)}"
        self.places.append(name)
        return name

    def transition(self, label: str | None) -> str:
        name = f"t{len(self.transitions)}"
        self.transitions.append(Transition(name, label))
        return name

    def arc(self, source: str, target: str) -> None:
        self.arcs.append((source, target))


def tree_to_net(tree: ProcessTree) -> PetriNet:
    """Expand a process tree into a sound workflow net with the same language.

    Leaves become labeled transitions; operators become the usual gateway
    fragments glued together with silent transitions.
    """
    builder = _NetBuilder()
    source = builder.place()
    sink = builder.place()
    _build(builder, tree, source, sink)
    return PetriNet(
        builder.places,
        builder.transitions,
        builder.arcs,
        {source: 1},
        {sink: 1},
    )


def _build(builder: _NetBuilder, node: ProcessTree, entry: str, exit_: str) -> None:
    if node.is_leaf:
        name = builder.transition(node.label)
        builder.arc(entry, name)
        builder.arc(name, exit_)
        return
    if node.operator == OP_SEQUENCE:
        current = entry
        for child in node.children[:-1]:
            nxt = builder.place()
            _build(builder, child, current, nxt)
            current = nxt
        _build(builder, node.children[-1], current, exit_)
        return
    if node.operator == OP_XOR:
        for child in node.children:
            _build(builder, child, entry, exit_)
        return
    if node.operator == OP_PARALLEL:
        split = builder.transition(None)
        join = builder.transition(None)
        builder.arc(entry, split)
        builder.arc(join, exit_)
        for child in node.children:
            child_in = builder.place()
            child_out = builder.place()
            builder.arc(split, child_in)
            builder.arc(child_out, join)
            _build(builder, child, child_in, child_out)
        return
    # loop: enter -> do; each redo leads from the do's exit back to its entry
    do_in = builder.place()
    do_out = builder.place()
    enter = builder.transition(None)
    leave = builder.transition(None)
    builder.arc(entry, enter)
    builder.arc(enter, do_in)
    builder.arc(do_out, leave)
    builder.arc(leave, exit_)
    _build(builder, node.children[0], do_in, do_out)
    for redo in node.children[1:]:
        _build(builder, redo, do_out, do_in)


def flower(activities: Iterable[str]) -> ProcessTree:
    """Loop over tau that allows the activities in any order and number."""
    return loop(tau(), *(leaf(a) for a in sorted(activities)))
