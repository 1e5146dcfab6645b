"""Influence combination methods.

Each method turns the influence payloads contributed by the fragments in
which a variable is resident into a parent set and a normalized local
distribution.  Callers filter the fragment set first: only fragments that
subsume the hypothesis element at hand and in which the variable is
resident are passed in, so the result can depend on nothing else.

Conventions
-----------
* Combination results list parents in canonical (sorted) order; tables
  are row-major with the first parent varying slowest and the child's
  states fastest.
* For binary variables the second state is "true"; for ordered state
  spaces the declared order is ascending and the last state is the top.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import EnablingViolation, ZeroColumn
from .instantiate import FragmentInstance, VariableInstance
from .kb import (
    PROB_TOL,
    DefaultTablePayload,
    KnowledgeBase,
    NoisyMaxPayload,
    NoisyMinPayload,
    NoisyOrPayload,
    SigmoidPayload,
    TablePayload,
)


@dataclass(frozen=True)
class CombinationResult:
    """An ordered parent list and a conditional table, one row per joint
    parent state, each row a distribution over the child's states."""

    parents: tuple[VariableInstance, ...]
    cpt: np.ndarray  # shape (prod parent cards, child card)

    def __eq__(self, other):
        return (
            isinstance(other, CombinationResult)
            and self.parents == other.parents
            and np.array_equal(self.cpt, other.cpt)
        )


def _card(kb: KnowledgeBase, var: VariableInstance) -> int:
    return kb.variable(var.schema_name).state_space.card


def _reorder_table(
    values: Sequence[float],
    decl_parents: Sequence[VariableInstance],
    decl_cards: Sequence[int],
    card: int,
) -> tuple[tuple[VariableInstance, ...], np.ndarray]:
    """Reindex a declared-order table to canonical (sorted) parent order."""
    arr = np.asarray(values, dtype=float).reshape(tuple(decl_cards) + (card,))
    order = sorted(range(len(decl_parents)), key=lambda i: decl_parents[i].sort_key())
    arr = arr.transpose(tuple(order) + (len(decl_parents),))
    parents = tuple(decl_parents[i] for i in order)
    return parents, arr.reshape(-1, card)


def _normalize_rows(cpt: np.ndarray, var: VariableInstance) -> np.ndarray:
    sums = cpt.sum(axis=1)
    zero = np.nonzero(sums == 0.0)[0]
    if zero.size:
        raise ZeroColumn(
            f"table column {int(zero[0])} for {var} sums to zero and cannot "
            "be normalized"
        )
    return cpt / sums[:, None]


def _sorted_frags(frags) -> list[FragmentInstance]:
    return sorted(frags, key=FragmentInstance.sort_key)


# --- per-method enabling checks and combination -------------------------

def _simple_check(kb, x, frags) -> Optional[str]:
    if len(frags) != 1:
        return (
            f"simple combination requires {x} to be resident in exactly one "
            f"contributing fragment, found {len(frags)}"
        )
    return None


def _simple(kb, x, frags) -> CombinationResult:
    frag = frags[0]
    spec = frag.residents[x]
    values = spec.table if spec.table is not None else spec.influence.values
    cards = [_card(kb, p) for p in spec.parents]
    parents, cpt = _reorder_table(values, spec.parents, cards, _card(kb, x))
    return CombinationResult(parents, _normalize_rows(cpt, x))


def _default_check(kb, x, frags) -> Optional[str]:
    defaults = [f for f in frags if f.residents[x].influence.specificity == "default"]
    specifics = [f for f in frags if f.residents[x].influence.specificity == "specific"]
    if len(defaults) != 1:
        return (
            f"default combination for {x} requires exactly one default "
            f"fragment, found {len(defaults)}"
        )
    if len(specifics) > 1:
        return (
            f"default combination for {x} allows at most one specific "
            f"fragment, found {len(specifics)}"
        )
    if specifics:
        dparents = set(defaults[0].residents[x].parents)
        sparents = set(specifics[0].residents[x].parents)
        if not dparents <= sparents:
            return (
                f"the specific fragment's parents for {x} must be a superset "
                "of the default fragment's parents"
            )
    return None


def _default(kb, x, frags) -> CombinationResult:
    specifics = [f for f in frags if f.residents[x].influence.specificity == "specific"]
    defaults = [f for f in frags if f.residents[x].influence.specificity == "default"]
    winner = (specifics or defaults)[0]
    spec = winner.residents[x]
    cards = [_card(kb, p) for p in spec.parents]
    parents, cpt = _reorder_table(
        spec.influence.values, spec.parents, cards, _card(kb, x)
    )
    return CombinationResult(parents, _normalize_rows(cpt, x))


def _noisy_or_check(kb, x, frags) -> Optional[str]:
    if _card(kb, x) != 2:
        return (
            f"noisy-OR requires a binary child and binary parents; {x} has "
            f"{_card(kb, x)} states"
        )
    links: dict[VariableInstance, float] = {}
    for frag in _sorted_frags(frags):
        for parent, p in frag.residents[x].influence.links:
            if _card(kb, parent) != 2:
                return (
                    f"noisy-OR requires a binary child and binary parents; "
                    f"parent {parent} of {x} has {_card(kb, parent)} states"
                )
            if parent in links and links[parent] != p:
                return (
                    f"noisy-OR fragments for {x} disagree on the link "
                    f"probability of overlapping parent {parent}"
                )
            links[parent] = p
    return None


def _noisy_or(kb, x, frags) -> CombinationResult:
    links: dict[VariableInstance, float] = {}
    leak_survival = 1.0
    for frag in _sorted_frags(frags):
        payload = frag.residents[x].influence
        for parent, p in payload.links:
            links[parent] = p
        leak_survival *= 1.0 - payload.leak
    parents = tuple(sorted(links, key=VariableInstance.sort_key))
    probs = np.array([links[p] for p in parents])
    n = len(parents)
    cpt = np.empty((2 ** n, 2))
    for row, states in enumerate(np.ndindex(*([2] * n))):
        on = np.array(states, dtype=bool)
        survival = leak_survival * np.prod(1.0 - probs[on])
        cpt[row] = (survival, 1.0 - survival)
    return CombinationResult(parents, cpt)


def _min_payloads(frags, x, reverse: bool):
    want = NoisyMaxPayload if reverse else NoisyMinPayload
    return [(f, f.residents[x].influence) for f in _sorted_frags(frags)
            if type(f.residents[x].influence) is want]


def _noisy_min_check(kb, x, frags, reverse=False) -> Optional[str]:
    space = kb.variable(x.schema_name).state_space
    if not space.ordered:
        return (
            f"noisy-{'MAX' if reverse else 'MIN'} requires an ordered state "
            f"space on {x}"
        )
    payloads = _min_payloads(frags, x, reverse)
    if len(payloads) != len(frags):
        return f"mixed influence payload kinds for {x}"
    conds = {payload.cond for _, payload in payloads}
    if len(conds) != 1:
        return (
            f"noisy-MIN fragments for {x} must share one conditioning "
            f"variable, found {sorted(str(c) for c in conds)}"
        )
    seen: set[VariableInstance] = set()
    for _, payload in payloads:
        for parent, _ in payload.cases[0][1].links:
            if parent in seen:
                return (
                    f"noisy-MIN fragments for {x} contribute overlapping "
                    f"parent {parent}"
                )
            seen.add(parent)
    return None


def _survival(dist: np.ndarray) -> np.ndarray:
    return np.cumsum(dist[::-1])[::-1]


def _noisy_min(kb, x, frags, reverse=False) -> CombinationResult:
    space = kb.variable(x.schema_name).state_space
    card = space.card
    payloads = [payload for _, payload in _min_payloads(frags, x, reverse)]
    cond = payloads[0].cond
    cond_states = kb.variable(cond.schema_name).state_space.states

    # contributions[c] = list of (parent, matrix) plus one leak vector per
    # fragment; the child's value is the minimum of all latent contributions.
    link_parents: list[VariableInstance] = []
    per_state_links: dict[str, list[tuple[VariableInstance, np.ndarray]]] = {
        c: [] for c in cond_states
    }
    per_state_leaks: dict[str, list[np.ndarray]] = {c: [] for c in cond_states}
    for payload in payloads:
        for c, case in payload.cases:
            for parent, matrix in case.links:
                m = np.asarray(matrix, dtype=float)
                per_state_links[c].append((parent, m[:, ::-1] if reverse else m))
                if parent not in link_parents:
                    link_parents.append(parent)
            leak = np.asarray(case.leak, dtype=float)
            per_state_leaks[c].append(leak[::-1] if reverse else leak)

    parents = tuple(
        sorted(set(link_parents) | {cond}, key=VariableInstance.sort_key)
    )
    cards = [_card(kb, p) for p in parents]
    cond_pos = parents.index(cond)
    cpt = np.empty((math.prod(cards), card))
    for row, states in enumerate(np.ndindex(*cards)):
        c = cond_states[states[cond_pos]]
        surv = np.ones(card)
        for parent, matrix in per_state_links[c]:
            surv *= _survival(matrix[states[parents.index(parent)]])
        for leak in per_state_leaks[c]:
            surv *= _survival(leak)
        probs = surv - np.append(surv[1:], 0.0)
        cpt[row] = probs[::-1] if reverse else probs
    return CombinationResult(parents, cpt)


def _sigmoid_check(kb, x, frags) -> Optional[str]:
    if len(frags) != 1:
        return (
            f"sigmoid combination requires a single home fragment for {x}, "
            f"found {len(frags)}"
        )
    if _card(kb, x) != 2:
        return f"sigmoid combination requires a binary child; {x} has {_card(kb, x)} states"
    for parent, _ in frags[0].residents[x].influence.weights:
        if _card(kb, parent) != 2:
            return (
                f"sigmoid combination requires binary parents; {parent} has "
                f"{_card(kb, parent)} states"
            )
    return None


def _sigmoid(kb, x, frags) -> CombinationResult:
    payload = frags[0].residents[x].influence
    weights = dict(payload.weights)
    parents = tuple(sorted(weights, key=VariableInstance.sort_key))
    w = np.array([weights[p] for p in parents])
    n = len(parents)
    cpt = np.empty((2 ** n, 2))
    for row, states in enumerate(np.ndindex(*([2] * n))):
        activation = payload.bias + w[np.array(states, dtype=bool)].sum()
        p_true = 1.0 / (1.0 + math.exp(-activation))
        cpt[row] = (1.0 - p_true, p_true)
    return CombinationResult(parents, cpt)


_METHODS = {
    "simple": (_simple_check, _simple),
    "default": (_default_check, _default),
    "noisy_or": (_noisy_or_check, _noisy_or),
    "noisy_min": (_noisy_min_check, _noisy_min),
    "noisy_max": (
        lambda kb, x, frags: _noisy_min_check(kb, x, frags, reverse=True),
        lambda kb, x, frags: _noisy_min(kb, x, frags, reverse=True),
    ),
    "sigmoid": (_sigmoid_check, _sigmoid),
}


def check_enabling(
    kb: KnowledgeBase, x: VariableInstance, frags: Sequence[FragmentInstance]
) -> Optional[str]:
    """Return a violation message, or None when the method's enabling
    conditions hold for this contribution set."""
    if not frags:
        return f"{x} is resident in no contributing fragment"
    method = kb.variable(x.schema_name).combination_method
    check, _ = _METHODS[method]
    return check(kb, x, list(frags))


def combine(
    kb: KnowledgeBase, x: VariableInstance, frags: Sequence[FragmentInstance]
) -> CombinationResult:
    """Run the variable's combination method over its contributing fragments."""
    violation = check_enabling(kb, x, frags)
    if violation is not None:
        raise EnablingViolation(violation)
    method = kb.variable(x.schema_name).combination_method
    _, run = _METHODS[method]
    result = run(kb, x, list(frags))
    sums = result.cpt.sum(axis=1)
    assert np.all(np.abs(sums - 1.0) < PROB_TOL), f"unnormalized CPT for {x}"
    return result
