"""Binding fragment schemas to concrete attribute values."""

import pytest

from fragbn import Workspace, load_demo_kb
from fragbn.errors import IncompleteBinding, InvalidState, UnknownSchema, UnknownVariable
from fragbn.instantiate import VariableInstance, bind_ref
from fragbn.kb import VariableRef, attr, lit


@pytest.fixture(scope="module")
def kb():
    return load_demo_kb()


def test_bind_ref_literals_and_attrs():
    ref = VariableRef("Activity", (attr("u"), lit(0)))
    inst = bind_ref(ref, {"u": "B654"})
    assert inst == VariableInstance("Activity", ("B654", 0))
    assert str(inst) == "Activity(B654,0)"


def test_instantiation_unifies_shared_variables(kb):
    ws = Workspace(kb)
    binding = {"u": "B654", "t": 1, "t0": 0, "t1": 1}
    f1 = ws.instantiate_fragment("MissionLocationQuality", binding)
    f2 = ws.instantiate_fragment("ActivityLocationQuality", binding)
    f3 = ws.instantiate_fragment("ActivityDwell", binding)
    act1 = VariableInstance("Activity", ("B654", 1))
    # the same activity node appears as an input of both quality fragments
    # and as a resident of the dwell fragment
    assert act1 in f1.inputs and act1 in f2.inputs and act1 in f3.residents
    assert len(ws.variables) == len(f1.variables | f2.variables | f3.variables)


def test_instantiation_is_idempotent(kb):
    ws = Workspace(kb)
    binding = {"u": "B654", "t": 1}
    f1 = ws.instantiate_fragment("MissionLocationQuality", binding)
    f2 = ws.instantiate_fragment("MissionLocationQuality", binding)
    assert f1 is f2
    f3 = ws.instantiate_fragment("MissionLocationQuality", {"u": "B654", "t": 2})
    assert f3 is not f1 and f3 != f1


def test_incomplete_binding(kb):
    ws = Workspace(kb)
    with pytest.raises(IncompleteBinding):
        ws.instantiate_fragment("ActivityDwell", {"u": "B654", "t0": 0})
    with pytest.raises(UnknownSchema):
        ws.instantiate_fragment("Nope", {})


def test_payloads_are_bound(kb):
    ws = Workspace(kb)
    frag = ws.instantiate_fragment(
        "MissionLocationQuality", {"u": "B654", "t": 1}
    )
    quality = VariableInstance("LocationQuality", ("B654", 1))
    payload = frag.residents[quality].influence
    assert payload.cond == VariableInstance("Activity", ("B654", 1))
    for _, case in payload.cases:
        for parent, _ in case.links:
            assert isinstance(parent, VariableInstance)


def test_evidence_requires_known_variable_and_state(kb):
    ws = Workspace(kb)
    frag = ws.instantiate_fragment("ActivityDwell", {"u": "B654", "t0": 0, "t1": 1})
    dwell = VariableInstance("Dwell", ("B654", 1))
    ws.set_evidence(dwell, "Long")
    assert ws.evidence[dwell] == "Long"
    with pytest.raises(InvalidState):
        ws.set_evidence(dwell, "Nope")
    with pytest.raises(UnknownVariable):
        ws.set_evidence(VariableInstance("Dwell", ("Other", 1)), "Long")


def test_hypothesis_carried_through(kb):
    ws = Workspace(kb)
    frag = ws.instantiate_fragment("ActivityDwell", {"u": "B654", "t0": 0, "t1": 1})
    assert frag.hypothesis_vars == (VariableInstance("UnitType", ("B654",)),)
    assert frag.hypothesized_subset == frozenset({("SA6",)})
