"""Hypothesis partitions and the subsume / disjoint / straddle relations.

A hypothesis partition carves the joint state space of a set of ground
hypothesis variables into disjoint, exhaustive elements.  Fragments whose
hypothesis variables cover only part of the partition's variable set are
lifted by cylindrical extension: their hypothesized subset constrains
only its own coordinates.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum

from .errors import BadHypothesisSubset, InvalidState
from .instantiate import FragmentInstance, VariableInstance
from .kb import KnowledgeBase

JointState = tuple[str, ...]
TupleSet = frozenset[JointState]


class Relation(Enum):
    SUBSUMES = "subsumes"
    DISJOINT = "disjoint"
    STRADDLES = "straddles"


@dataclass(frozen=True)
class HypothesisPartition:
    """A variable set H with a partition of its joint state space.

    ``state_lists`` caches the state space of each variable in H, aligned
    with ``vars``; element tuples use the same coordinate order.
    """

    vars: tuple[VariableInstance, ...]
    state_lists: tuple[tuple[str, ...], ...]
    elements: tuple[TupleSet, ...]

    @staticmethod
    def build(kb: KnowledgeBase, vars, elements) -> "HypothesisPartition":
        vars = tuple(vars)
        state_lists = tuple(
            kb.variable(v.schema_name).state_space.states for v in vars
        )
        elements = tuple(frozenset(e) for e in elements)
        part = HypothesisPartition(vars, state_lists, elements)
        part.validate()
        return part

    @staticmethod
    def trivial(kb: KnowledgeBase) -> "HypothesisPartition":
        """The empty-variable partition: one element, the empty tuple."""
        return HypothesisPartition((), (), (frozenset({()}),))

    def validate(self) -> None:
        full = set(itertools.product(*self.state_lists)) if self.vars else {()}
        seen: set[JointState] = set()
        for elem in self.elements:
            if not elem:
                raise BadHypothesisSubset("empty hypothesis element")
            for tup in elem:
                if tup not in full:
                    raise InvalidState(
                        f"tuple {tup} is not a joint state of "
                        f"{[str(v) for v in self.vars]}"
                    )
                if tup in seen:
                    raise BadHypothesisSubset(
                        f"tuple {tup} appears in more than one element"
                    )
                seen.add(tup)
        if seen != full:
            missing = sorted(full - seen)[:3]
            raise BadHypothesisSubset(
                f"elements do not cover the joint state space; missing {missing}"
            )

    def element_of(self, joint: JointState) -> TupleSet:
        for elem in self.elements:
            if joint in elem:
                return elem
        raise InvalidState(f"joint state {joint} is in no element")

    def index_of(self, element: TupleSet) -> int:
        return self.elements.index(element)


def hypothesis_variable_consistent(
    frag: FragmentInstance, part: HypothesisPartition
) -> bool:
    """Fragment and partition agree on which variables are hypotheses.

    (1) every hypothesis variable of the fragment is in H, and (2) every
    fragment variable that lies in H is declared a hypothesis variable of
    the fragment.
    """
    hset = set(part.vars)
    if not set(frag.hypothesis_vars) <= hset:
        return False
    fset = set(frag.hypothesis_vars)
    return all(v not in hset or v in fset for v in frag.variables)


def _projector(frag: FragmentInstance, part: HypothesisPartition):
    """Map a full joint tuple over H to the fragment's coordinate order."""
    positions = [part.vars.index(v) for v in frag.hypothesis_vars]
    return lambda tup: tuple(tup[i] for i in positions)


def classify(
    frag: FragmentInstance, part: HypothesisPartition, element: TupleSet
) -> Relation:
    """Subsumes if every tuple of the element lies in the fragment's
    (cylindrically extended) hypothesized subset; disjoint if none does."""
    proj = _projector(frag, part)
    inside = sum(1 for tup in element if proj(tup) in frag.hypothesized_subset)
    if inside == len(element):
        return Relation.SUBSUMES
    if inside == 0:
        return Relation.DISJOINT
    return Relation.STRADDLES


def lift_subset(
    vars_sub: tuple[VariableInstance, ...],
    subset: TupleSet,
    part: HypothesisPartition,
):
    """Membership test for a subset over a sub-tuple of H, lifted to H."""
    positions = [part.vars.index(v) for v in vars_sub]
    return lambda tup: tuple(tup[i] for i in positions) in subset


def refine(
    part: HypothesisPartition,
    subsets: list[tuple[tuple[VariableInstance, ...], TupleSet]],
) -> HypothesisPartition:
    """Coarsest refinement under which every subset subsumes or is
    disjoint from every element.

    Each element is split into its intersection with and complement of
    each lifted subset; empty parts are dropped.
    """
    elements = [set(e) for e in part.elements]
    for vars_sub, subset in subsets:
        member = lift_subset(vars_sub, subset, part)
        new_elements = []
        for elem in elements:
            inside = {t for t in elem if member(t)}
            outside = elem - inside
            if inside:
                new_elements.append(inside)
            if outside:
                new_elements.append(outside)
        elements = new_elements
    return HypothesisPartition(
        part.vars,
        part.state_lists,
        tuple(frozenset(e) for e in elements),
    )
