"""Binding fragment attributes to concrete values inside a model workspace.

Instantiating a fragment substitutes the binding into every variable
reference.  Variable instances are unified across fragments by identity
key (schema name plus bound attribute values), which is what makes
independently authored fragments connect when they mention the same
entity at the same time.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Union

from .errors import (
    IncompleteBinding,
    InvalidState,
    UnknownSchema,
    UnknownVariable,
)
from .kb import (
    FragmentSchema,
    KnowledgeBase,
    MinCase,
    NoisyMinPayload,
    NoisyOrPayload,
    ResidentSpec,
    SigmoidPayload,
    VariableRef,
    VariableSchema,
)

AttrValue = Union[str, int]


@dataclass(frozen=True)
class VariableInstance:
    """A ground random variable: schema name plus bound attribute values.

    Two instances with equal keys are the same variable everywhere in a
    workspace.
    """

    schema_name: str
    bound_attrs: tuple[AttrValue, ...] = ()

    def sort_key(self):
        return (self.schema_name, tuple(str(a) for a in self.bound_attrs))

    def __str__(self):
        if not self.bound_attrs:
            return self.schema_name
        return f"{self.schema_name}({','.join(str(a) for a in self.bound_attrs)})"


def bind_ref(ref: VariableRef, binding: Mapping[str, AttrValue]) -> VariableInstance:
    values = tuple(
        binding[v] if kind == "attr" else v for kind, v in ref.args
    )
    return VariableInstance(ref.schema_name, values)


def _bind_payload(payload, binding):
    """Resolve the VariableRef keys inside an influence payload."""
    if isinstance(payload, NoisyOrPayload):
        return replace(
            payload,
            links=tuple((bind_ref(r, binding), p) for r, p in payload.links),
        )
    if isinstance(payload, NoisyMinPayload):  # covers NoisyMaxPayload
        cases = tuple(
            (c, MinCase(
                links=tuple((bind_ref(r, binding), m) for r, m in case.links),
                leak=case.leak,
            ))
            for c, case in payload.cases
        )
        return replace(payload, cond=bind_ref(payload.cond, binding), cases=cases)
    if isinstance(payload, SigmoidPayload):
        return replace(
            payload,
            weights=tuple((bind_ref(r, binding), w) for r, w in payload.weights),
        )
    return payload  # table payloads carry no references


@dataclass(frozen=True)
class BoundResident:
    parents: tuple[VariableInstance, ...]
    influence: object
    table: object = None


class FragmentInstance:
    """A fragment schema with its identifying attributes bound.

    Hashable by (schema name, binding); structurally it carries the
    instantiated residents, inputs, hypothesis variables and hypothesized
    subset, with influence payloads resolved to variable instances.
    """

    def __init__(self, schema: FragmentSchema, binding: Mapping[str, AttrValue]):
        missing = [a for a in schema.attrs if a not in binding]
        if missing:
            raise IncompleteBinding(
                f"binding for fragment {schema.name!r} is missing "
                f"attributes: {', '.join(missing)}"
            )
        self.schema_name = schema.name
        self.binding = {a: binding[a] for a in schema.attrs}
        self.key = (schema.name, tuple(self.binding[a] for a in schema.attrs))
        self.residents: dict[VariableInstance, BoundResident] = {}
        for ref, spec in schema.residents.items():
            inst = bind_ref(ref, binding)
            self.residents[inst] = BoundResident(
                parents=tuple(bind_ref(p, binding) for p in spec.parents),
                influence=_bind_payload(spec.influence, binding),
                table=spec.table,
            )
        self.inputs = frozenset(bind_ref(r, binding) for r in schema.inputs)
        self.hypothesis_vars = tuple(
            bind_ref(r, binding) for r in schema.hypothesis_vars
        )
        self.hypothesized_subset = schema.hypothesized_subset

    @property
    def variables(self) -> frozenset[VariableInstance]:
        return frozenset(self.residents) | self.inputs

    @property
    def arcs(self) -> frozenset[tuple[VariableInstance, VariableInstance]]:
        return frozenset(
            (p, r) for r, spec in self.residents.items() for p in spec.parents
        )

    def sort_key(self):
        return (self.schema_name, tuple(str(v) for v in self.key[1]))

    def __eq__(self, other):
        return isinstance(other, FragmentInstance) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __repr__(self):
        args = ",".join(str(v) for v in self.key[1])
        return f"{self.schema_name}[{args}]"


class Workspace:
    """The arena holding the instances and evidence for one problem.

    A workspace is confined to a single thread of control; the knowledge
    base it references is shared and immutable.
    """

    def __init__(self, kb: KnowledgeBase):
        self.kb = kb
        self.variables: dict[VariableInstance, VariableSchema] = {}
        self.fragments: dict[tuple, FragmentInstance] = {}
        self.evidence: dict[VariableInstance, str] = {}

    def instantiate_fragment(
        self, schema_name: str, binding: Mapping[str, AttrValue]
    ) -> FragmentInstance:
        schema = self.kb.fragment_schemas.get(schema_name)
        if schema is None:
            raise UnknownSchema(f"no fragment schema named {schema_name!r}")
        instance = FragmentInstance(schema, binding)
        existing = self.fragments.get(instance.key)
        if existing is not None:
            return existing
        for var in instance.variables:
            self.variables.setdefault(var, self.kb.variable(var.schema_name))
        self.fragments[instance.key] = instance
        return instance

    def set_evidence(self, var: VariableInstance, state: str) -> None:
        schema = self.variables.get(var)
        if schema is None:
            raise UnknownVariable(f"variable {var} is not in the workspace")
        if state not in schema.state_space.states:
            raise InvalidState(
                f"{state!r} is not a state of {var} "
                f"(states: {', '.join(schema.state_space.states)})"
            )
        self.evidence[var] = state

    @property
    def fragment_instances(self) -> list[FragmentInstance]:
        return sorted(self.fragments.values(), key=FragmentInstance.sort_key)
