"""Validating exact inference over materialized networks.

Provides d-separation (active-trail reachability), query completeness
against a model's open input variables, default closure of incomplete
models, variable elimination with a min-degree ordering, and a
brute-force joint-enumeration oracle used to cross-check everything else.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .combine import BayesNet
from .errors import (
    InvalidState,
    TooLarge,
    UnknownNode,
    ZeroEvidence,
)
from .instantiate import VariableInstance

ENUMERATION_GUARD = 2 ** 20  # "20 binary-equivalent variables"


@dataclass(frozen=True)
class Query:
    """Posterior query: joint distribution of targets given evidence."""

    targets: tuple[VariableInstance, ...]
    evidence: dict[VariableInstance, str] = field(default_factory=dict)

    def __post_init__(self):
        overlap = set(self.targets) & set(self.evidence)
        if overlap:
            raise InvalidState(
                f"targets and evidence overlap: {sorted(map(str, overlap))}"
            )


@dataclass
class Factor:
    """Dense factor over an ordered variable scope, one axis per variable."""

    scope: tuple[VariableInstance, ...]
    values: np.ndarray

    def marginalize(self, var: VariableInstance) -> "Factor":
        axis = self.scope.index(var)
        return Factor(
            self.scope[:axis] + self.scope[axis + 1:],
            self.values.sum(axis=axis),
        )

    def multiply(self, other: "Factor") -> "Factor":
        scope = self.scope + tuple(v for v in other.scope if v not in self.scope)
        a = _broadcast(self, scope)
        b = _broadcast(other, scope)
        return Factor(scope, a * b)

    def reduce(self, var: VariableInstance, index: int) -> "Factor":
        axis = self.scope.index(var)
        return Factor(
            self.scope[:axis] + self.scope[axis + 1:],
            np.take(self.values, index, axis=axis),
        )


def _broadcast(factor: Factor, scope) -> np.ndarray:
    shape = [1] * len(scope)
    src = factor.values
    perm = [factor.scope.index(v) for v in scope if v in factor.scope]
    src = np.transpose(src, perm) if perm else src
    it = iter(src.shape)
    for i, v in enumerate(scope):
        if v in factor.scope:
            shape[i] = next(it)
    return src.reshape(shape)


def _node_factor(net: BayesNet, node: VariableInstance) -> Factor:
    scope = net.parents[node] + (node,)
    cards = [net.card(v) for v in scope]
    return Factor(scope, net.cpts[node].reshape(cards))


def _require_nodes(net: BayesNet, nodes: Iterable[VariableInstance]) -> None:
    known = set(net.nodes)
    for n in nodes:
        if n not in known:
            raise UnknownNode(f"{n} is not a node of this network")


# --- d-separation -------------------------------------------------------

def d_separated(net: BayesNet, a, b, z) -> bool:
    """True iff no active trail connects A and B given Z.

    Reachability over (node, direction) pairs: trails through a
    non-collider are blocked by conditioning, trails through a collider
    are active only when the collider has a descendant in Z.
    """
    a, b, z = set(a), set(b), set(z)
    _require_nodes(net, a | b | z)
    if (a & b) or (a & z) or (b & z):
        raise InvalidState("d-separation requires disjoint node sets")

    children: dict[VariableInstance, list[VariableInstance]] = {
        n: [] for n in net.nodes
    }
    for n in net.nodes:
        for p in net.parents[n]:
            children[p].append(n)

    # ancestors of Z, for the collider rule
    anc = set()
    stack = list(z)
    while stack:
        n = stack.pop()
        if n in anc:
            continue
        anc.add(n)
        stack.extend(net.parents[n])

    # direction: "up" = arrived from a child, "down" = arrived from a parent
    frontier = deque(("up", n) for n in a)
    visited = set()
    while frontier:
        direction, node = frontier.popleft()
        if (direction, node) in visited:
            continue
        visited.add((direction, node))
        if node in b:
            return False
        if direction == "up" and node not in z:
            for p in net.parents[node]:
                frontier.append(("up", p))
            for c in children[node]:
                frontier.append(("down", c))
        elif direction == "down":
            if node not in z:
                for c in children[node]:
                    frontier.append(("down", c))
            if node in anc:  # collider (or its ancestor) observed
                for p in net.parents[node]:
                    frontier.append(("up", p))
    return True


# --- completeness and closure ------------------------------------------

def query_complete(net: BayesNet, query: Query) -> bool:
    """True iff the evidence d-separates the targets from every open
    input variable.  A model with no open inputs is complete for any
    query."""
    _require_nodes(net, query.targets)
    _require_nodes(net, query.evidence)
    open_inputs = set(net.open_inputs) - set(query.evidence)
    if not open_inputs:
        return True
    if set(query.targets) & open_inputs:
        return False
    return d_separated(net, set(query.targets), open_inputs,
                       set(query.evidence))


def close_with_defaults(net: BayesNet) -> BayesNet:
    """Give every open input its schema's default distribution as a root
    prior; complete models are returned unchanged."""
    if not net.open_inputs:
        return net
    cpts = dict(net.cpts)
    for node in net.open_inputs:
        schema = net.schemas[node.schema_name]
        cpts[node] = np.asarray(
            schema.default_distribution(), dtype=float
        ).reshape(1, -1)
    return replace(net, cpts=cpts, input_nodes=frozenset())


# --- exact inference ----------------------------------------------------

def _check_evidence(net: BayesNet, evidence: Mapping[VariableInstance, str]):
    _require_nodes(net, evidence)
    indexed = {}
    for var, state in evidence.items():
        if state not in net.states[var]:
            raise InvalidState(
                f"{state!r} is not a state of {var} "
                f"(states: {', '.join(net.states[var])})"
            )
        indexed[var] = net.states[var].index(state)
    return indexed


def eliminate(
    net: BayesNet,
    query: Query,
    order: Optional[Sequence[VariableInstance]] = None,
) -> np.ndarray:
    """Posterior over the joint target states by variable elimination.

    The default elimination order is min-degree over the factor
    interaction graph.  Raises ZeroEvidence when the evidence has
    probability zero.
    """
    if net.open_inputs:
        raise UnknownNode(
            "network has open input variables; close them before inference: "
            + ", ".join(str(n) for n in net.open_inputs)
        )
    _require_nodes(net, query.targets)
    evidence = _check_evidence(net, query.evidence)

    factors = []
    for node in net.nodes:
        factor = _node_factor(net, node)
        for var, idx in evidence.items():
            if var in factor.scope:
                factor = factor.reduce(var, idx)
        factors.append(factor)

    keep = set(query.targets)
    to_eliminate = [
        n for n in net.nodes if n not in keep and n not in evidence
    ]
    if order is not None:
        stated = [n for n in order if n in to_eliminate]
        if sorted(stated, key=VariableInstance.sort_key) != sorted(
            to_eliminate, key=VariableInstance.sort_key
        ):
            raise UnknownNode("elimination order must cover the hidden variables")
        ordering = list(stated)
    else:
        ordering = _min_degree_order(factors, to_eliminate)

    for var in ordering:
        touching = [f for f in factors if var in f.scope]
        rest = [f for f in factors if var not in f.scope]
        if not touching:
            continue
        product = touching[0]
        for f in touching[1:]:
            product = product.multiply(f)
        factors = rest + [product.marginalize(var)]

    result = factors[0]
    for f in factors[1:]:
        result = result.multiply(f)
    # arrange axes in query target order
    perm = [result.scope.index(t) for t in query.targets]
    values = np.transpose(result.values, perm) if perm else result.values
    total = float(values.sum())
    if total <= 0.0:
        raise ZeroEvidence(
            "the supplied evidence has probability zero under the model"
        )
    return values / total


def _min_degree_order(factors, to_eliminate):
    neighbors: dict[VariableInstance, set[VariableInstance]] = {
        v: set() for v in to_eliminate
    }
    cliques = [set(f.scope) for f in factors]
    remaining = set(to_eliminate)
    for clique in cliques:
        for v in clique & remaining:
            neighbors[v] |= clique - {v}
    order = []
    while remaining:
        var = min(
            remaining,
            key=lambda v: (len(neighbors[v] & remaining), v.sort_key()),
        )
        order.append(var)
        remaining.discard(var)
        nbrs = neighbors[var] & remaining
        for u in nbrs:
            neighbors[u] |= nbrs - {u}
    return order


def joint_enumerate(net: BayesNet) -> Factor:
    """The exact full joint, as a factor over every node.

    Guarded: refuses joint state spaces above 2^20 entries.
    """
    if net.open_inputs:
        raise UnknownNode(
            "network has open input variables; close them before enumeration"
        )
    size = math.prod(net.card(n) for n in net.nodes)
    if size > ENUMERATION_GUARD:
        raise TooLarge(
            f"joint has {size} entries, above the enumeration guard "
            f"of {ENUMERATION_GUARD}"
        )
    scope = tuple(sorted(net.nodes, key=VariableInstance.sort_key))
    joint = Factor(scope, np.ones([net.card(v) for v in scope]))
    for node in net.nodes:
        joint = Factor(scope, joint.values * _broadcast(_node_factor(net, node), scope))
    return joint


def posterior_from_joint(net: BayesNet, joint: Factor, query: Query) -> np.ndarray:
    """Marginalize the enumerated joint down to the query targets."""
    evidence = _check_evidence(net, query.evidence)
    factor = joint
    for var, idx in evidence.items():
        factor = factor.reduce(var, idx)
    for var in list(factor.scope):
        if var not in query.targets:
            factor = factor.marginalize(var)
    perm = [factor.scope.index(t) for t in query.targets]
    values = np.transpose(factor.values, perm) if perm else factor.values
    total = float(values.sum())
    if total <= 0.0:
        raise ZeroEvidence(
            "the supplied evidence has probability zero under the model"
        )
    return values / total


def format_posterior(
    net: BayesNet, query: Query, posterior: np.ndarray
) -> str:
    """One line per joint target state: tab-separated state tuple and the
    probability with 12 significant digits, states in declared order."""
    lines = []
    state_lists = [net.states[t] for t in query.targets]
    for idx in np.ndindex(*[len(s) for s in state_lists]):
        labels = ",".join(state_lists[i][j] for i, j in enumerate(idx))
        lines.append(f"{labels}\t{posterior[idx]:.12g}")
    return "\n".join(lines) + "\n"
