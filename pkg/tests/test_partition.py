"""Hypothesis partitions: construction, classification, refinement."""

import pytest

from fragbn import (
    FragmentSchema,
    HypothesisPartition,
    KnowledgeBase,
    Relation,
    ResidentSpec,
    StateSpace,
    TablePayload,
    VariableRef,
    VariableSchema,
    Workspace,
    classify,
    hypothesis_variable_consistent,
    refine,
)
from fragbn.errors import BadHypothesisSubset, InvalidState
from fragbn.instantiate import VariableInstance


@pytest.fixture
def kb():
    kb = KnowledgeBase()
    kb.register_variable_schema(VariableSchema(
        name="H", state_space=StateSpace(("a", "b", "c"))
    ))
    kb.register_variable_schema(VariableSchema(
        name="G", state_space=StateSpace(("x", "y"))
    ))
    kb.register_variable_schema(VariableSchema(
        name="V", state_space=StateSpace(("f", "t"))
    ))
    return kb


def make_fragment(kb, name, hyp_vars, subset):
    v = VariableRef("V", ())
    kb.register_fragment_schema(FragmentSchema(
        name, (),
        {v: ResidentSpec((), TablePayload((0.5, 0.5)))},
        inputs=frozenset(hyp_vars),
        hypothesis_vars=tuple(hyp_vars),
        hypothesized_subset=frozenset(subset),
    ))
    return Workspace(kb).instantiate_fragment(name, {})


def test_build_and_validate(kb):
    h = VariableInstance("H", ())
    part = HypothesisPartition.build(
        kb, [h], [frozenset({("a",)}), frozenset({("b",), ("c",)})]
    )
    assert part.element_of(("b",)) == frozenset({("b",), ("c",)})
    assert part.index_of(part.elements[0]) == 0
    with pytest.raises(BadHypothesisSubset):  # overlap
        HypothesisPartition.build(
            kb, [h], [frozenset({("a",), ("b",)}), frozenset({("b",), ("c",)})]
        )
    with pytest.raises(BadHypothesisSubset):  # not exhaustive
        HypothesisPartition.build(kb, [h], [frozenset({("a",)})])
    with pytest.raises(InvalidState):
        part.element_of(("nope",))


def test_trivial_partition(kb):
    part = HypothesisPartition.trivial(kb)
    assert part.vars == () and part.elements == (frozenset({()}),)
    frag = make_fragment(kb, "F", [], [()])
    assert classify(frag, part, part.elements[0]) is Relation.SUBSUMES


def test_classification(kb):
    h = VariableInstance("H", ())
    part = HypothesisPartition.build(
        kb, [h], [frozenset({("a",)}), frozenset({("b",), ("c",)})]
    )
    href = VariableRef("H", ())
    sub = make_fragment(kb, "Sub", [href], [("a",)])
    dis = make_fragment(kb, "Dis", [href], [("b",), ("c",)])
    straddle = make_fragment(kb, "Str", [href], [("a",), ("b",)])
    a, rest = part.elements
    assert classify(sub, part, a) is Relation.SUBSUMES
    assert classify(sub, part, rest) is Relation.DISJOINT
    assert classify(dis, part, a) is Relation.DISJOINT
    assert classify(dis, part, rest) is Relation.SUBSUMES
    assert classify(straddle, part, a) is Relation.SUBSUMES
    assert classify(straddle, part, rest) is Relation.STRADDLES


def test_cylindrical_extension(kb):
    # a fragment hypothesized over a strict subset of H extends
    # cylindrically over the remaining coordinates
    h = VariableInstance("H", ())
    g = VariableInstance("G", ())
    part = HypothesisPartition.build(
        kb, [g, h],
        [frozenset({("x", s)}) for s in ("a", "b", "c")]
        + [frozenset({("y", s) for s in ("a", "b", "c")})],
    )
    frag = make_fragment(kb, "OnH", [VariableRef("H", ())], [("a",)])
    assert classify(frag, part, frozenset({("x", "a")})) is Relation.SUBSUMES
    assert classify(frag, part, frozenset({("x", "b")})) is Relation.DISJOINT
    mixed = frozenset({("y", s) for s in ("a", "b", "c")})
    assert classify(frag, part, mixed) is Relation.STRADDLES


def test_hypothesis_variable_consistent(kb):
    h = VariableInstance("H", ())
    g = VariableInstance("G", ())
    part = HypothesisPartition.build(
        kb, [h], [frozenset({("a",)}), frozenset({("b",), ("c",)})]
    )
    on_h = make_fragment(kb, "OnH2", [VariableRef("H", ())], [("a",)])
    on_g = make_fragment(kb, "OnG", [VariableRef("G", ())], [("x",)])
    assert hypothesis_variable_consistent(on_h, part)
    assert not hypothesis_variable_consistent(on_g, part)


def test_refine_is_coarsest(kb):
    h = VariableInstance("H", ())
    part = HypothesisPartition.build(kb, [h], [frozenset({("a",), ("b",), ("c",)})])
    href = VariableRef("H", ())
    frag = make_fragment(kb, "Ref1", [href], [("a",), ("b",)])
    refined = refine(part, [(frag.hypothesis_vars, frag.hypothesized_subset)])
    assert set(refined.elements) == {
        frozenset({("a",), ("b",)}),
        frozenset({("c",)}),
    }
    # no straddling remains, and refining again is a fixpoint
    for element in refined.elements:
        assert classify(frag, refined, element) is not Relation.STRADDLES
    again = refine(refined, [(frag.hypothesis_vars, frag.hypothesized_subset)])
    assert set(again.elements) == set(refined.elements)


def test_refine_multiple_subsets(kb):
    h = VariableInstance("H", ())
    part = HypothesisPartition.build(kb, [h], [frozenset({("a",), ("b",), ("c",)})])
    href = VariableRef("H", ())
    f1 = make_fragment(kb, "Ref2", [href], [("a",), ("b",)])
    f2 = make_fragment(kb, "Ref3", [href], [("b",), ("c",)])
    refined = refine(part, [
        (f.hypothesis_vars, f.hypothesized_subset) for f in (f1, f2)
    ])
    assert set(refined.elements) == {
        frozenset({("a",)}), frozenset({("b",)}), frozenset({("c",)})
    }
