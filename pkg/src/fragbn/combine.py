"""Compound and multi-fragment combination, and materialization into
standard Bayesian networks.

A compound fragment combines a globally consistent fragment set for one
hypothesis element; it keeps references to its elementary components and
computes local distributions lazily through each variable's influence
combination method.  A multi-fragment carries one such combination per
element of a hypothesis partition and materializes into a single network
in which hypothesis variables appear as parents wherever the local
distribution varies across elements.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from . import influence
from .errors import (
    CoverageGap,
    CyclicUnion,
    InconsistentSet,
    InvalidState,
    MissingPrior,
    NAViolation,
    UnknownVariable,
)
from .instantiate import FragmentInstance, VariableInstance
from .kb import NA_STATE, PROB_TOL, KnowledgeBase, VariableSchema
from .partition import HypothesisPartition, Relation, classify, hypothesis_variable_consistent

TupleSet = frozenset[tuple[str, ...]]


def flatten(components) -> list[FragmentInstance]:
    """Expand nested compound/multi-fragments into their elementary
    components, deduplicated and canonically ordered."""
    seen: dict[tuple, FragmentInstance] = {}
    for item in components:
        if isinstance(item, FragmentInstance):
            seen.setdefault(item.key, item)
        else:
            for frag in item.components:
                seen.setdefault(frag.key, frag)
    return sorted(seen.values(), key=FragmentInstance.sort_key)


def _subsuming(frags, part, element):
    return [f for f in frags if classify(f, part, element) is Relation.SUBSUMES]


def _toposort(parents: Mapping[VariableInstance, Sequence[VariableInstance]]):
    """Topological order over the given parent map; raises CyclicUnion."""
    nodes = sorted(parents, key=VariableInstance.sort_key)
    state: dict[VariableInstance, int] = {}
    order: list[VariableInstance] = []

    def visit(node, stack):
        state[node] = 1
        stack.append(node)
        for p in sorted(parents.get(node, ()), key=VariableInstance.sort_key):
            s = state.get(p, 0)
            if s == 1:
                raise CyclicUnion(stack[stack.index(p):] + [p])
            if s == 0:
                visit(p, stack)
        stack.pop()
        state[node] = 2
        order.append(node)

    for node in nodes:
        if state.get(node, 0) == 0:
            visit(node, [])
    return order


def graph_union(
    kb: KnowledgeBase,
    components,
    part: HypothesisPartition,
    element: TupleSet,
) -> dict[VariableInstance, tuple[VariableInstance, ...]]:
    """Union of the fragment graphs of components subsuming the element.

    Returns a parent map over the union's nodes (roots map to an empty
    tuple).  Raises CyclicUnion when the union has a directed cycle.
    """
    frags = flatten(components)
    parents: dict[VariableInstance, set[VariableInstance]] = {}
    for frag in _subsuming(frags, part, element):
        for var in frag.variables:
            parents.setdefault(var, set())
        for x, spec in frag.residents.items():
            parents[x].update(spec.parents)
    result = {
        x: tuple(sorted(ps, key=VariableInstance.sort_key))
        for x, ps in parents.items()
    }
    _toposort(result)
    return result


@dataclass
class ConsistencyReport:
    """Outcome of the global-consistency checks for one element.

    ``uncovered`` lists residents with no subsuming home fragment;
    ``straddlers`` lists (fragment, variable) pairs where a fragment
    neither subsumes nor is disjoint from the element; ``enabling`` lists
    per-variable enabling-condition violations.
    """

    element: TupleSet
    cycle: Optional[list[VariableInstance]] = None
    hypothesis_inconsistent: list[FragmentInstance] = field(default_factory=list)
    uncovered: list[VariableInstance] = field(default_factory=list)
    straddlers: list[tuple[FragmentInstance, VariableInstance]] = field(
        default_factory=list
    )
    enabling: list[tuple[VariableInstance, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (
            self.cycle
            or self.hypothesis_inconsistent
            or self.uncovered
            or self.straddlers
            or self.enabling
        )

    def format(self) -> str:
        lines = [f"consistency report for element {sorted(self.element)}:"]
        if self.cycle:
            lines.append(
                "  cycle: " + " -> ".join(str(n) for n in self.cycle)
            )
        for frag in self.hypothesis_inconsistent:
            lines.append(
                f"  hypothesis-inconsistent fragment: {frag!r} (its hypothesis "
                "variables do not agree with the partition)"
            )
        for x in self.uncovered:
            lines.append(
                f"  no home fragment: {x} is resident in no fragment "
                "subsuming the element"
            )
        for frag, x in self.straddlers:
            lines.append(
                f"  residency failure: {frag!r} (resident {x}) neither "
                "subsumes nor is disjoint from the element; refine the "
                "partition"
            )
        for x, msg in self.enabling:
            lines.append(f"  enabling violation for {x}: {msg}")
        if self.ok:
            lines.append("  all checks passed")
        return "\n".join(lines)


def check_global_consistency(
    kb: KnowledgeBase,
    components,
    part: HypothesisPartition,
    element: TupleSet,
    allow_na: bool = False,
) -> ConsistencyReport:
    """Run the acyclicity, hypothesis-consistency, residency, and
    home-fragment (enabling) checks for one element.

    With ``allow_na``, a resident with no subsuming fragment is tolerated
    when its state space carries the NA state (the caller synthesizes a
    point mass on NA instead).
    """
    frags = flatten(components)
    report = ConsistencyReport(element=element)

    for frag in frags:
        if not hypothesis_variable_consistent(frag, part):
            report.hypothesis_inconsistent.append(frag)

    relation = {f.key: classify(f, part, element) for f in frags}
    residents = sorted(
        {x for f in frags for x in f.residents}, key=VariableInstance.sort_key
    )
    for x in residents:
        homes = [
            f for f in frags
            if x in f.residents and relation[f.key] is Relation.SUBSUMES
        ]
        for f in frags:
            if x in f.residents and relation[f.key] is Relation.STRADDLES:
                report.straddlers.append((f, x))
        if not homes:
            na = kb.variable(x.schema_name).state_space.na_flag
            if not (allow_na and na):
                report.uncovered.append(x)
            continue
        violation = influence.check_enabling(kb, x, homes)
        if violation is not None:
            report.enabling.append((x, violation))

    try:
        graph_union(kb, frags, part, element)
    except CyclicUnion as err:
        report.cycle = err.cycle
    return report


class CompoundFragment:
    """The combination of a globally consistent fragment set for one
    hypothesis element.

    Holds no influence functions of its own: local distributions are
    computed on demand by delegating to the component fragments in which
    each resident lives.
    """

    def __init__(
        self,
        kb: KnowledgeBase,
        partition: HypothesisPartition,
        element: TupleSet,
        components: list[FragmentInstance],
    ):
        self.kb = kb
        self.partition = partition
        self.element = element
        self.components = components  # elementary, canonically ordered
        self._subsuming = _subsuming(components, partition, element)
        self.residents = frozenset(
            x for f in components for x in f.residents
        )
        self.inputs = frozenset(
            v for f in components for v in f.inputs
        ) - self.residents
        self.parents = {
            x: ps
            for x, ps in graph_union(kb, components, partition, element).items()
        }
        self._dists: dict[VariableInstance, influence.CombinationResult] = {}

    @property
    def hypothesis_vars(self) -> tuple[VariableInstance, ...]:
        return self.partition.vars

    @property
    def nodes(self) -> list[VariableInstance]:
        return sorted(self.residents | self.inputs, key=VariableInstance.sort_key)

    def local_distribution(self, x: VariableInstance) -> influence.CombinationResult:
        if x not in self.residents:
            raise UnknownVariable(f"{x} is not resident in this compound fragment")
        if x not in self._dists:
            homes = [f for f in self._subsuming if x in f.residents]
            self._dists[x] = influence.combine(self.kb, x, homes)
        return self._dists[x]


def combine_compound(
    kb: KnowledgeBase,
    components,
    part: HypothesisPartition,
    element: TupleSet,
) -> CompoundFragment:
    """Combine a fragment set (elementary or nested compounds) for one
    element; raises InconsistentSet when the consistency checks fail."""
    frags = flatten(components)
    report = check_global_consistency(kb, frags, part, element)
    if not report.ok:
        raise InconsistentSet(report)
    return CompoundFragment(kb, part, element, frags)


class MultiFragment:
    """Per-element combinations of one fragment set over a whole partition.

    Residents uncovered for some element are synthesized as a point mass
    on NA when their state space allows it.
    """

    def __init__(self, kb, partition, components, per_element, synthesized):
        self.kb = kb
        self.partition = partition
        self.components = components
        self.per_element = per_element  # element index -> list of subsuming frags
        self.synthesized = synthesized  # element index -> frozenset of residents
        self.residents = frozenset(x for f in components for x in f.residents)
        self.inputs = frozenset(
            v for f in components for v in f.inputs
        ) - self.residents
        self._dists: dict[tuple[int, VariableInstance], influence.CombinationResult] = {}
        # Union graph over all elements; required acyclic.
        parents: dict[VariableInstance, set[VariableInstance]] = {
            v: set() for v in self.residents | self.inputs
        }
        for idx in range(len(partition.elements)):
            for x in self.residents:
                if x in self.synthesized[idx]:
                    continue
                parents[x].update(self.element_distribution(idx, x).parents)
        self.parents = {
            x: tuple(sorted(ps, key=VariableInstance.sort_key))
            for x, ps in parents.items()
        }
        _toposort(self.parents)

    @property
    def hypothesis_vars(self):
        return self.partition.vars

    @property
    def nodes(self):
        return sorted(self.residents | self.inputs, key=VariableInstance.sort_key)

    def element_distribution(
        self, element_index: int, x: VariableInstance
    ) -> influence.CombinationResult:
        key = (element_index, x)
        if key not in self._dists:
            if x in self.synthesized[element_index]:
                space = self.kb.variable(x.schema_name).state_space
                cpt = np.zeros((1, space.card))
                cpt[0, space.index(NA_STATE)] = 1.0
                self._dists[key] = influence.CombinationResult((), cpt)
            else:
                homes = [
                    f for f in self.per_element[element_index] if x in f.residents
                ]
                self._dists[key] = influence.combine(self.kb, x, homes)
        return self._dists[key]

    def compound_for(self, element) -> CompoundFragment:
        """The per-element compound over the components subsuming it;
        accepts an element index or the element tuple-set itself."""
        if not isinstance(element, int):
            element = self.partition.index_of(element)
        frags = self.per_element[element]
        return CompoundFragment(
            self.kb, self.partition, self.partition.elements[element], frags
        )


def combine_multi(
    kb: KnowledgeBase, components, part: HypothesisPartition
) -> MultiFragment:
    """Combine a fragment set across every element of the partition.

    Raises CoverageGap for a resident with no subsuming fragment and no NA
    state, and InconsistentSet for any other per-element failure.
    """
    frags = flatten(components)
    per_element: dict[int, list[FragmentInstance]] = {}
    synthesized: dict[int, frozenset[VariableInstance]] = {}
    for idx, element in enumerate(part.elements):
        report = check_global_consistency(kb, frags, part, element, allow_na=True)
        if report.uncovered and not (
            report.cycle
            or report.hypothesis_inconsistent
            or report.straddlers
            or report.enabling
        ):
            raise CoverageGap(report.uncovered[0], element)
        if not report.ok:
            raise InconsistentSet(report)
        subsuming = _subsuming(frags, part, element)
        covered = {x for f in subsuming for x in f.residents}
        missing = {x for f in frags for x in f.residents} - covered
        per_element[idx] = subsuming
        synthesized[idx] = frozenset(missing)
    return MultiFragment(kb, part, frags, per_element, synthesized)


# --- materialization ----------------------------------------------------

@dataclass
class BayesNet:
    """A materialized network: nodes, parent sets, and one conditional
    table per node (rows indexed by joint parent states, first parent
    slowest).  ``cpts[node] is None`` marks an open input awaiting a prior
    or default closure."""

    nodes: tuple[VariableInstance, ...]
    states: dict[VariableInstance, tuple[str, ...]]
    parents: dict[VariableInstance, tuple[VariableInstance, ...]]
    cpts: dict[VariableInstance, Optional[np.ndarray]]
    input_nodes: frozenset[VariableInstance] = frozenset()
    schemas: dict[str, VariableSchema] = field(default_factory=dict)

    def card(self, node: VariableInstance) -> int:
        return len(self.states[node])

    @property
    def open_inputs(self) -> list[VariableInstance]:
        return [n for n in self.nodes if self.cpts[n] is None]

    def validate(self) -> None:
        for node in self.nodes:
            cpt = self.cpts[node]
            if cpt is None:
                continue
            n_cfg = math.prod(self.card(p) for p in self.parents[node])
            if cpt.shape != (n_cfg, self.card(node)):
                raise InvalidState(
                    f"table for {node} has shape {cpt.shape}, expected "
                    f"({n_cfg}, {self.card(node)})"
                )
            if np.any(np.abs(cpt.sum(axis=1) - 1.0) > PROB_TOL):
                raise InvalidState(f"table columns for {node} do not sum to 1")


def _prior_for(kb, var, priors):
    if priors and var in priors:
        p = np.asarray(priors[var], dtype=float)
        card = kb.variable(var.schema_name).state_space.card
        if p.shape != (card,) or abs(p.sum() - 1.0) > PROB_TOL or np.any(p < 0):
            raise MissingPrior(
                f"prior for {var} must be a distribution over {card} states"
            )
        return p.reshape(1, card)
    schema = kb.variable(var.schema_name)
    return np.asarray(schema.default_distribution(), dtype=float).reshape(1, -1)


def materialize_bn(
    frag: Union[CompoundFragment, MultiFragment],
    hypothesis_priors: Optional[Mapping[VariableInstance, Sequence[float]]] = None,
) -> BayesNet:
    """Materialize a compound or multi-fragment into a Bayesian network.

    Hypothesis variables become closed roots with the supplied priors (or
    their schema defaults).  Remaining input variables stay open; close
    them with priors, evidence, or default closure before inference.
    """
    if isinstance(frag, MultiFragment):
        return _materialize_multi(frag, hypothesis_priors)
    return _materialize_compound(frag, hypothesis_priors)


def _base_net(kb, nodes, hyp_vars, priors):
    states = {n: kb.variable(n.schema_name).state_space.states for n in nodes}
    schemas = {n.schema_name: kb.variable(n.schema_name) for n in nodes}
    parents = {n: () for n in nodes}
    cpts: dict[VariableInstance, Optional[np.ndarray]] = {n: None for n in nodes}
    for h in hyp_vars:
        cpts[h] = _prior_for(kb, h, priors)
    return states, schemas, parents, cpts


def _materialize_compound(frag: CompoundFragment, priors) -> BayesNet:
    kb = frag.kb
    nodes = frag.nodes
    states, schemas, parents, cpts = _base_net(kb, nodes, frag.hypothesis_vars, priors)
    for x in sorted(frag.residents, key=VariableInstance.sort_key):
        result = frag.local_distribution(x)
        parents[x] = result.parents
        cpts[x] = result.cpt
    inputs = frozenset(n for n in nodes if cpts[n] is None)
    net = BayesNet(tuple(nodes), states, parents, cpts, inputs, schemas)
    net.validate()
    return net


def _consistent_elements(part, h_parents, h_states):
    """Indices of elements containing at least one tuple that matches the
    given states of a subset of the hypothesis variables."""
    positions = [part.vars.index(h) for h in h_parents]
    out = []
    for idx, elem in enumerate(part.elements):
        if any(
            all(tup[p] == s for p, s in zip(positions, h_states)) for tup in elem
        ):
            out.append(idx)
    return out


def _materialize_multi(frag: MultiFragment, priors) -> BayesNet:
    kb = frag.kb
    part = frag.partition
    nodes = sorted(
        set(frag.nodes) | set(part.vars), key=VariableInstance.sort_key
    )
    states, schemas, parents, cpts = _base_net(kb, nodes, part.vars, priors)

    # Hypothesis parents per resident: the hypothesis variables of any
    # component in which it is resident, all of H for synthesized rows.
    h_parents_for: dict[VariableInstance, set[VariableInstance]] = {
        x: set() for x in frag.residents
    }
    for f in frag.components:
        for x in f.residents:
            h_parents_for[x].update(f.hypothesis_vars)
    for idx, synth in frag.synthesized.items():
        for x in synth:
            h_parents_for[x].update(part.vars)

    for x in sorted(frag.residents, key=VariableInstance.sort_key):
        try:
            parents[x], cpts[x] = _resident_cpt(
                frag, x, sorted(h_parents_for[x], key=VariableInstance.sort_key)
            )
        except _AmbiguousElement:
            # The minimal hypothesis-parent set does not determine the
            # element; condition on all of H instead.
            parents[x], cpts[x] = _resident_cpt(frag, x, list(part.vars))

    inputs = frozenset(n for n in nodes if cpts[n] is None)
    net = BayesNet(tuple(nodes), states, parents, cpts, inputs, schemas)
    net.validate()
    _check_na_rows(frag, net)
    return net


class _AmbiguousElement(Exception):
    pass


def _resident_cpt(frag: MultiFragment, x, h_parents):
    kb = frag.kb
    part = frag.partition
    graph_parents = [p for p in frag.parents[x] if p not in h_parents]
    bn_parents = tuple(
        sorted(set(graph_parents) | set(h_parents), key=VariableInstance.sort_key)
    )
    cards = [kb.variable(p.schema_name).state_space.card for p in bn_parents]
    card = kb.variable(x.schema_name).state_space.card
    h_pos = [bn_parents.index(h) for h in h_parents]
    cpt = np.empty((math.prod(cards), card))
    elem_results = {
        idx: frag.element_distribution(idx, x)
        for idx in range(len(part.elements))
    }
    for row, cfg in enumerate(np.ndindex(*cards)):
        h_states = tuple(
            kb.variable(bn_parents[p].schema_name).state_space.states[cfg[p]]
            for p in h_pos
        )
        candidates = _consistent_elements(part, h_parents, h_states)
        rows = []
        for idx in candidates:
            result = elem_results[idx]
            sub = tuple(
                cfg[bn_parents.index(p)] for p in result.parents
            )
            sub_cards = [
                kb.variable(p.schema_name).state_space.card for p in result.parents
            ]
            flat = int(np.ravel_multi_index(sub, sub_cards)) if sub else 0
            rows.append(result.cpt[flat])
        base = rows[0]
        for other in rows[1:]:
            if np.max(np.abs(other - base)) > 1e-12:
                raise _AmbiguousElement
        cpt[row] = base
    return bn_parents, cpt


def _check_na_rows(frag: MultiFragment, net: BayesNet) -> None:
    """Rows mandated NA by synthesis must be a point mass on NA."""
    kb = frag.kb
    part = frag.partition
    for idx, synth in frag.synthesized.items():
        for x in synth:
            space = kb.variable(x.schema_name).state_space
            na_i = space.index(NA_STATE)
            bn_parents = net.parents[x]
            cards = [net.card(p) for p in bn_parents]
            h_pos = [
                (i, p) for i, p in enumerate(bn_parents) if p in part.vars
            ]
            for row, cfg in enumerate(np.ndindex(*cards)):
                h_states = tuple(net.states[p][cfg[i]] for i, p in h_pos)
                h_vars = tuple(p for _, p in h_pos)
                cands = _consistent_elements(part, h_vars, h_states)
                if cands == [idx] and not math.isclose(
                    net.cpts[x][row, na_i], 1.0, abs_tol=PROB_TOL
                ):
                    raise NAViolation(
                        f"{x} must be NA under element "
                        f"{sorted(part.elements[idx])} but row {row} puts "
                        "positive probability on other states"
                    )
                if len(cands) == 1 and idx not in cands and (
                    net.cpts[x][row, na_i] > PROB_TOL
                ):
                    raise NAViolation(
                        f"{x} is covered under element "
                        f"{sorted(part.elements[cands[0]])} but row {row} "
                        "puts positive probability on the reserved NA state"
                    )


# --- textual network export --------------------------------------------

def _format_value(value) -> str:
    return f"{value:.17g}"


def bn_to_text(net: BayesNet) -> str:
    """Canonical textual form: one node block per line group, nodes sorted
    by name, tables row-major with parent states varying slowest in the
    printed parent order."""
    lines = ["# fragbn net 1"]
    for node in sorted(net.nodes, key=VariableInstance.sort_key):
        lines.append(f"node {node} {{")
        lines.append("  states " + " ".join(net.states[node]) + ";")
        lines.append(
            "  parents " + " ".join(str(p) for p in net.parents[node]) + ";"
        )
        cpt = net.cpts[node]
        if cpt is None:
            lines.append("  input;")
        else:
            flat = " ".join(_format_value(v) for v in cpt.reshape(-1))
            lines.append(f"  table {flat};")
        lines.append("}")
    return "\n".join(lines) + "\n"


def _parse_instance(token: str) -> VariableInstance:
    token = token.strip()
    if "(" not in token:
        return VariableInstance(token, ())
    name, rest = token.split("(", 1)
    rest = rest.rstrip(")")
    args = tuple(
        int(a) if a.lstrip("-").isdigit() else a
        for a in (part.strip() for part in rest.split(","))
        if a != ""
    )
    return VariableInstance(name, args)


def bn_from_text(text: str, schemas: Optional[dict] = None) -> BayesNet:
    """Parse the textual network format produced by :func:`bn_to_text`."""
    nodes: list[VariableInstance] = []
    states: dict[VariableInstance, tuple[str, ...]] = {}
    parents: dict[VariableInstance, tuple[VariableInstance, ...]] = {}
    cpts: dict[VariableInstance, Optional[np.ndarray]] = {}
    current: Optional[VariableInstance] = None
    is_input: set[VariableInstance] = set()
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("node "):
            current = _parse_instance(line[len("node "):].rstrip("{").strip())
            nodes.append(current)
            parents[current] = ()
            cpts[current] = None
        elif line.startswith("states "):
            states[current] = tuple(line[len("states "):].rstrip(";").split())
        elif line.startswith("parents"):
            body = line[len("parents"):].rstrip(";").strip()
            if body:
                # attribute values may not contain whitespace, so names split cleanly
                parents[current] = tuple(_parse_instance(p) for p in body.split())
        elif line.startswith("table "):
            values = [float(v) for v in line[len("table "):].rstrip(";").split()]
            cpts[current] = np.asarray(values, dtype=float)
        elif line == "input;":
            is_input.add(current)
        elif line == "}":
            current = None
    for node in nodes:
        if cpts[node] is not None:
            card = len(states[node])
            cpts[node] = cpts[node].reshape(-1, card)
    if schemas is None:
        # synthesize bare schemas so default closure works from a net file
        from .kb import StateSpace, VariableSchema

        schemas = {
            n.schema_name: VariableSchema(
                name=n.schema_name,
                state_space=StateSpace(states[n]),
                attribute_names=tuple(
                    f"a{i}" for i in range(len(n.bound_attrs))
                ),
            )
            for n in nodes
        }
    net = BayesNet(
        tuple(nodes),
        states,
        parents,
        cpts,
        frozenset(n for n in nodes if cpts[n] is None),
        schemas,
    )
    net.validate()
    return net
