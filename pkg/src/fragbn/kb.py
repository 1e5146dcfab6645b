"""Core knowledge representation: variable schemas, fragment schemas, registries.

A knowledge base holds two kinds of schema.  Variable schemas describe
discrete random variables (state space, identifying attributes, the
influence combination method used when several fragments bear on the
variable, and a default distribution).  Fragment schemas describe modular
units of probabilistic knowledge: resident variables whose distributional
information lives in the fragment, input variables that condition them,
and an optional hypothesis gate restricting when the fragment applies.

Schemas are plain immutable values; a KnowledgeBase is mutated only while
it is being loaded and is treated as read-only afterwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Sequence, Union

from .errors import (
    BadHypothesisSubset,
    BadInfluencePayload,
    CyclicFragmentGraph,
    DuplicateName,
    EmptyResidents,
    InputNotRoot,
    InvalidDistribution,
    UnknownSchema,
    UnresolvedVariable,
)

NA_STATE = "NA"

PROB_TOL = 1e-9

#: Closed registry of influence combination method identifiers.  The
#: implementations live in :mod:`fragbn.influence`; the names are needed
#: here to validate variable schemas at registration time.
COMBINATION_METHODS = frozenset(
    {"simple", "default", "noisy_or", "noisy_min", "noisy_max", "sigmoid"}
)

# A reference argument is either a fragment attribute name or a literal
# scalar (string or int).
AttrArg = tuple[str, Union[str, int]]


def attr(name: str) -> AttrArg:
    """Reference a fragment identifying attribute by name."""
    return ("attr", name)


def lit(value: Union[str, int]) -> AttrArg:
    """A literal attribute value (entity id, time index, ...)."""
    return ("lit", value)


@dataclass(frozen=True)
class StateSpace:
    """An ordered list of distinct state labels.

    ``ordered`` marks state order as semantically meaningful (required by
    noisy-MIN/MAX, which interpret the list as ascending).  The reserved
    label ``NA`` may appear once, last; it marks the variable as undefined
    under some hypotheses.
    """

    states: tuple[str, ...]
    ordered: bool = False

    def __post_init__(self):
        if len(self.states) < 2:
            raise InvalidDistribution(
                f"state space needs at least 2 states, got {list(self.states)}"
            )
        if len(set(self.states)) != len(self.states):
            raise InvalidDistribution(f"duplicate state labels in {list(self.states)}")
        if NA_STATE in self.states and self.states[-1] != NA_STATE:
            raise InvalidDistribution("the NA state must be last in the state list")

    @property
    def na_flag(self) -> bool:
        return self.states[-1] == NA_STATE

    @property
    def card(self) -> int:
        return len(self.states)

    def index(self, state: str) -> int:
        return self.states.index(state)


@dataclass(frozen=True)
class VariableSchema:
    """A named discrete random variable class.

    ``default`` is an explicit distribution over the states, or None for
    the uniform marker (uniform over non-NA states).
    """

    name: str
    state_space: StateSpace
    attribute_names: tuple[str, ...] = ()
    combination_method: str = "simple"
    default: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        if len(set(self.attribute_names)) != len(self.attribute_names):
            raise DuplicateName(
                f"duplicate attribute names in variable schema {self.name!r}"
            )
        if self.combination_method not in COMBINATION_METHODS:
            raise BadInfluencePayload(
                f"unknown combination method {self.combination_method!r} "
                f"on variable schema {self.name!r}"
            )
        if self.default is not None:
            _check_distribution(self.default, self.state_space.card, self.name)

    def default_distribution(self) -> tuple[float, ...]:
        """Explicit default if declared, else uniform over non-NA states."""
        if self.default is not None:
            return self.default
        n = self.state_space.card
        if self.state_space.na_flag:
            return tuple([1.0 / (n - 1)] * (n - 1) + [0.0])
        return tuple([1.0 / n] * n)


def _check_distribution(values: Sequence[float], card: int, name: str) -> None:
    if len(values) != card:
        raise InvalidDistribution(
            f"distribution for {name!r} has {len(values)} entries, expected {card}"
        )
    if any(p < 0.0 or p > 1.0 for p in values):
        raise InvalidDistribution(f"distribution for {name!r} has entries outside [0,1]")
    if not math.isclose(sum(values), 1.0, abs_tol=PROB_TOL):
        raise InvalidDistribution(
            f"distribution for {name!r} sums to {sum(values)}, not 1"
        )


@dataclass(frozen=True)
class VariableRef:
    """A reference to a variable schema with per-attribute arguments.

    Each argument is either a fragment attribute name (bound at
    instantiation) or a literal value.
    """

    schema_name: str
    args: tuple[AttrArg, ...] = ()

    def sort_key(self):
        return (self.schema_name, tuple((k, str(v)) for k, v in self.args))

    def __str__(self):
        parts = [str(v) if k == "lit" else v for k, v in self.args]
        return f"{self.schema_name}({', '.join(map(str, parts))})"


# --- influence payloads -------------------------------------------------
#
# The payload carried by a fragment for each resident variable, in the
# form its combination method expects.  Validation against the declared
# parents and state spaces happens at fragment registration.

@dataclass(frozen=True)
class TablePayload:
    """A (possibly unnormalized) conditional table over the declared parents.

    Row-major: parent states vary slowest in declared parent order, the
    child's states vary fastest.
    """

    values: tuple[float, ...]


@dataclass(frozen=True)
class DefaultTablePayload:
    """A table plus a specificity marker for default-override combination."""

    values: tuple[float, ...]
    specificity: str  # "default" | "specific"

    def __post_init__(self):
        if self.specificity not in ("default", "specific"):
            raise BadInfluencePayload(
                f"specificity must be 'default' or 'specific', got {self.specificity!r}"
            )


@dataclass(frozen=True)
class NoisyOrPayload:
    """Per-parent activation probabilities plus a leak, for binary variables."""

    links: tuple[tuple[VariableRef, float], ...]
    leak: float = 0.0


@dataclass(frozen=True)
class MinCase:
    """Noisy-MIN contribution for one state of the conditioning variable.

    ``links`` maps each contributing parent to a matrix: one distribution
    over the child's (ascending) states per parent state.  ``leak`` is a
    distribution over the child's states; a point mass on the top state is
    the identity contribution.
    """

    links: tuple[tuple[VariableRef, tuple[tuple[float, ...], ...]], ...]
    leak: tuple[float, ...]


@dataclass(frozen=True)
class NoisyMinPayload:
    """Conditional leaky noisy-MIN links, keyed by conditioning-variable state."""

    cond: VariableRef
    cases: tuple[tuple[str, MinCase], ...]


@dataclass(frozen=True)
class NoisyMaxPayload(NoisyMinPayload):
    """Noisy-MAX: identical structure, interpreted with the state order reversed."""


@dataclass(frozen=True)
class SigmoidPayload:
    """Logistic parameterization: bias plus one weight per binary parent."""

    bias: float
    weights: tuple[tuple[VariableRef, float], ...]


InfluencePayload = Union[
    TablePayload,
    DefaultTablePayload,
    NoisyOrPayload,
    NoisyMinPayload,
    NoisyMaxPayload,
    SigmoidPayload,
]

PAYLOAD_FOR_METHOD = {
    "simple": TablePayload,
    "default": DefaultTablePayload,
    "noisy_or": NoisyOrPayload,
    "noisy_min": NoisyMinPayload,
    "noisy_max": NoisyMaxPayload,
    "sigmoid": SigmoidPayload,
}


@dataclass(frozen=True)
class ResidentSpec:
    """Per-resident data inside a fragment: declared parents, influence
    payload, and an optional explicit local distribution."""

    parents: tuple[VariableRef, ...]
    influence: InfluencePayload
    table: Optional[tuple[float, ...]] = None


@dataclass
class FragmentSchema:
    """An elementary hypothesis-conditioned fragment class.

    ``residents`` maps each resident variable reference to its spec; the
    fragment graph is induced by the per-resident parent lists.  ``inputs``
    lists non-resident variables (all roots).  ``hypothesis_vars`` is the
    subset of inputs gating the fragment; ``hypothesized_subset`` the set
    of joint states (tuples aligned with ``hypothesis_vars``) for which the
    fragment's knowledge is asserted.
    """

    name: str
    attrs: tuple[str, ...]
    residents: dict[VariableRef, ResidentSpec]
    inputs: frozenset[VariableRef] = frozenset()
    hypothesis_vars: tuple[VariableRef, ...] = ()
    hypothesized_subset: frozenset[tuple[str, ...]] = frozenset({()})

    @property
    def variables(self) -> frozenset[VariableRef]:
        return frozenset(self.residents) | self.inputs

    @property
    def graph_arcs(self) -> frozenset[tuple[VariableRef, VariableRef]]:
        return frozenset(
            (p, r) for r, spec in self.residents.items() for p in spec.parents
        )


@dataclass
class KnowledgeBase:
    """Name-indexed registries of variable and fragment schemas."""

    variable_schemas: dict[str, VariableSchema] = field(default_factory=dict)
    fragment_schemas: dict[str, FragmentSchema] = field(default_factory=dict)

    # -- variable schemas ------------------------------------------------

    def register_variable_schema(self, schema: VariableSchema) -> "KnowledgeBase":
        existing = self.variable_schemas.get(schema.name)
        if existing is not None:
            if existing != schema:
                raise DuplicateName(
                    f"variable schema {schema.name!r} already registered "
                    "with different content"
                )
            return self  # idempotent re-registration
        self.variable_schemas[schema.name] = schema
        return self

    def variable(self, name: str) -> VariableSchema:
        try:
            return self.variable_schemas[name]
        except KeyError:
            raise UnresolvedVariable(f"no variable schema named {name!r}") from None

    # -- fragment schemas ------------------------------------------------

    def register_fragment_schema(self, schema: FragmentSchema) -> "KnowledgeBase":
        normalized = self._validate_fragment(schema)
        existing = self.fragment_schemas.get(schema.name)
        if existing is not None:
            if existing != normalized:
                raise DuplicateName(
                    f"fragment schema {schema.name!r} already registered "
                    "with different content"
                )
            return self
        self.fragment_schemas[schema.name] = normalized
        return self

    def fragment(self, name: str) -> FragmentSchema:
        try:
            return self.fragment_schemas[name]
        except KeyError:
            raise UnknownSchema(f"no fragment schema named {name!r}") from None

    # -- validation ------------------------------------------------------

    def _resolve_ref(self, ref: VariableRef, frag: FragmentSchema) -> VariableSchema:
        vs = self.variable_schemas.get(ref.schema_name)
        if vs is None:
            raise UnresolvedVariable(
                f"fragment {frag.name!r} references unregistered variable "
                f"schema {ref.schema_name!r}"
            )
        if len(ref.args) != len(vs.attribute_names):
            raise UnresolvedVariable(
                f"reference {ref} has {len(ref.args)} arguments; schema "
                f"{vs.name!r} declares {len(vs.attribute_names)} attributes"
            )
        for kind, value in ref.args:
            if kind == "attr" and value not in frag.attrs:
                raise UnresolvedVariable(
                    f"reference {ref} in fragment {frag.name!r} uses unknown "
                    f"fragment attribute {value!r}"
                )
        return vs

    def _validate_fragment(self, schema: FragmentSchema) -> FragmentSchema:
        if not schema.residents:
            raise EmptyResidents(f"fragment {schema.name!r} has no resident variables")
        if len(set(schema.attrs)) != len(schema.attrs):
            raise DuplicateName(
                f"duplicate identifying attributes in fragment {schema.name!r}"
            )

        for ref in sorted(schema.variables, key=VariableRef.sort_key):
            self._resolve_ref(ref, schema)

        overlap = set(schema.residents) & schema.inputs
        if overlap:
            raise InputNotRoot(
                f"fragment {schema.name!r}: {', '.join(map(str, sorted(overlap, key=VariableRef.sort_key)))} "
                "declared both input and resident (inputs must be root nodes)"
            )
        declared = schema.variables
        for r, spec in schema.residents.items():
            if len(set(spec.parents)) != len(spec.parents):
                raise UnresolvedVariable(
                    f"fragment {schema.name!r}: duplicate parent in list for {r}"
                )
            for p in spec.parents:
                if p not in declared:
                    raise UnresolvedVariable(
                        f"fragment {schema.name!r}: parent {p} of {r} is not a "
                        "declared resident or input"
                    )

        self._check_acyclic(schema)
        normalized = self._normalize_hypothesis(schema)
        residents = {
            r: self._validate_payload(normalized, r, spec)
            for r, spec in normalized.residents.items()
        }
        return replace(normalized, residents=residents)

    def _check_acyclic(self, schema: FragmentSchema) -> None:
        # Inputs are roots by construction; cycles can only involve residents.
        parents = {r: [p for p in spec.parents if p in schema.residents]
                   for r, spec in schema.residents.items()}
        state: dict[VariableRef, int] = {}

        def visit(node, stack):
            state[node] = 1
            stack.append(node)
            for p in parents[node]:
                if state.get(p, 0) == 1:
                    cycle = stack[stack.index(p):] + [p]
                    raise CyclicFragmentGraph(
                        f"fragment {schema.name!r} graph has a cycle: "
                        + " -> ".join(str(n) for n in cycle)
                    )
                if state.get(p, 0) == 0:
                    visit(p, stack)
            stack.pop()
            state[node] = 2

        for node in sorted(parents, key=VariableRef.sort_key):
            if state.get(node, 0) == 0:
                visit(node, [])

    def _normalize_hypothesis(self, schema: FragmentSchema) -> FragmentSchema:
        hvars = schema.hypothesis_vars
        if len(set(hvars)) != len(hvars):
            raise BadHypothesisSubset(
                f"fragment {schema.name!r}: duplicate hypothesis variable"
            )
        for h in hvars:
            if h not in schema.inputs:
                raise BadHypothesisSubset(
                    f"fragment {schema.name!r}: hypothesis variable {h} is not "
                    "a declared input"
                )
        if not schema.hypothesized_subset:
            raise BadHypothesisSubset(
                f"fragment {schema.name!r}: hypothesized subset is empty"
            )
        for tup in schema.hypothesized_subset:
            if len(tup) != len(hvars):
                raise BadHypothesisSubset(
                    f"fragment {schema.name!r}: tuple {tup} has arity "
                    f"{len(tup)}, expected {len(hvars)}"
                )
            for h, s in zip(hvars, tup):
                states = self.variable(h.schema_name).state_space.states
                if s not in states:
                    raise BadHypothesisSubset(
                        f"fragment {schema.name!r}: state {s!r} is not a state "
                        f"of {h.schema_name}"
                    )
        # Canonical hypothesis-variable order, with subset tuples permuted to
        # match.  This makes serialization independent of declaration order.
        order = sorted(range(len(hvars)), key=lambda i: hvars[i].sort_key())
        if order != list(range(len(hvars))):
            hvars = tuple(hvars[i] for i in order)
            subset = frozenset(
                tuple(tup[i] for i in order) for tup in schema.hypothesized_subset
            )
            schema = replace(schema, hypothesis_vars=hvars,
                             hypothesized_subset=subset)
        return schema

    def _validate_payload(self, schema, ref, spec: ResidentSpec) -> ResidentSpec:
        vs = self.variable(ref.schema_name)
        method = vs.combination_method
        expected = PAYLOAD_FOR_METHOD[method]
        if type(spec.influence) is not expected:
            raise BadInfluencePayload(
                f"fragment {schema.name!r}: resident {ref} uses method "
                f"{method!r} but carries a {type(spec.influence).__name__}"
            )
        card = vs.state_space.card
        parent_cards = [
            self.variable(p.schema_name).state_space.card for p in spec.parents
        ]
        n_cfg = math.prod(parent_cards)
        pay = spec.influence

        def check_table(values, what):
            if len(values) != n_cfg * card:
                raise BadInfluencePayload(
                    f"fragment {schema.name!r}: {what} for {ref} has "
                    f"{len(values)} entries, expected {n_cfg * card}"
                )
            if any(v < 0.0 for v in values):
                raise BadInfluencePayload(
                    f"fragment {schema.name!r}: negative entry in {what} for {ref}"
                )

        if isinstance(pay, (TablePayload, DefaultTablePayload)):
            check_table(pay.values, "table")
        elif isinstance(pay, NoisyOrPayload):
            linked = [p for p, _ in pay.links]
            if sorted(linked, key=VariableRef.sort_key) != sorted(
                spec.parents, key=VariableRef.sort_key
            ) or len(set(linked)) != len(linked):
                raise BadInfluencePayload(
                    f"fragment {schema.name!r}: noisy-OR links for {ref} must "
                    "cover the declared parents exactly"
                )
            for p, prob in pay.links:
                if not 0.0 <= prob <= 1.0:
                    raise BadInfluencePayload(
                        f"fragment {schema.name!r}: link probability for {p} "
                        "outside [0,1]"
                    )
            if not 0.0 <= pay.leak <= 1.0:
                raise BadInfluencePayload(
                    f"fragment {schema.name!r}: leak outside [0,1] for {ref}"
                )
            links = tuple(sorted(pay.links, key=lambda kv: kv[0].sort_key()))
            spec = replace(spec, influence=replace(pay, links=links))
        elif isinstance(pay, NoisyMinPayload):  # covers NoisyMaxPayload
            spec = self._validate_min_payload(schema, ref, spec, vs, pay)
        elif isinstance(pay, SigmoidPayload):
            weighted = [p for p, _ in pay.weights]
            if sorted(weighted, key=VariableRef.sort_key) != sorted(
                spec.parents, key=VariableRef.sort_key
            ) or len(set(weighted)) != len(weighted):
                raise BadInfluencePayload(
                    f"fragment {schema.name!r}: sigmoid weights for {ref} must "
                    "cover the declared parents exactly"
                )
            weights = tuple(sorted(pay.weights, key=lambda kv: kv[0].sort_key()))
            spec = replace(spec, influence=replace(pay, weights=weights))
        if spec.table is not None:
            check_table(spec.table, "local table")
        return spec

    def _validate_min_payload(self, schema, ref, spec, vs, pay) -> ResidentSpec:
        card = vs.state_space.card
        if pay.cond not in spec.parents:
            raise BadInfluencePayload(
                f"fragment {schema.name!r}: conditioning variable {pay.cond} "
                f"is not a declared parent of {ref}"
            )
        cond_states = self.variable(pay.cond.schema_name).state_space.states
        case_states = [c for c, _ in pay.cases]
        if sorted(case_states) != sorted(cond_states):
            raise BadInfluencePayload(
                f"fragment {schema.name!r}: noisy-MIN cases for {ref} must "
                f"cover the states of {pay.cond} exactly"
            )
        others = [p for p in spec.parents if p != pay.cond]
        by_state = dict(pay.cases)
        cases = []
        for cstate in cond_states:  # canonical: cases in cond-state order
            case = by_state[cstate]
            linked = [p for p, _ in case.links]
            if sorted(linked, key=VariableRef.sort_key) != sorted(
                others, key=VariableRef.sort_key
            ):
                raise BadInfluencePayload(
                    f"fragment {schema.name!r}: noisy-MIN links under "
                    f"{cstate!r} must cover the non-conditioning parents"
                )
            for p, matrix in case.links:
                pcard = self.variable(p.schema_name).state_space.card
                if len(matrix) != pcard:
                    raise BadInfluencePayload(
                        f"fragment {schema.name!r}: link matrix for {p} has "
                        f"{len(matrix)} rows, expected {pcard}"
                    )
                for row in matrix:
                    _check_distribution(row, card, str(ref))
            _check_distribution(case.leak, card, str(ref))
            links = tuple(sorted(case.links, key=lambda kv: kv[0].sort_key()))
            cases.append((cstate, replace(case, links=links)))
        return replace(spec, influence=replace(pay, cases=tuple(cases)))


def default_distribution(schema: VariableSchema) -> tuple[float, ...]:
    """Module-level convenience mirror of VariableSchema.default_distribution."""
    return schema.default_distribution()
