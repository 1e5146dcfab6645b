"""Shared generators and oracles for the test suite.

Randomized tests draw from numpy Generators seeded per test; set the
FRAGBN_SEED environment variable to reproduce a run with another seed.
"""

import itertools
import math
import os

import numpy as np

from fragbn import (
    BayesNet,
    FragmentSchema,
    HypothesisPartition,
    KnowledgeBase,
    NoisyOrPayload,
    ResidentSpec,
    StateSpace,
    TablePayload,
    VariableRef,
    VariableSchema,
    Workspace,
)
from fragbn.instantiate import VariableInstance


def rng(default_seed: int) -> np.random.Generator:
    seed = int(os.environ.get("FRAGBN_SEED", default_seed))
    return np.random.default_rng(seed)


def random_dirichlet(gen, card):
    """A strictly positive random distribution (general position)."""
    raw = gen.uniform(0.05, 1.0, size=card)
    return raw / raw.sum()


# --- independent oracles ------------------------------------------------

def or_oracle(probs, leak, on):
    """Noisy-OR by explicit enumeration of the independent latent causes."""
    causes = [leak] + [p for p, active in zip(probs, on) if active]
    p_true = 0.0
    for fired in itertools.product([0, 1], repeat=len(causes)):
        w = math.prod(c if f else 1 - c for c, f in zip(causes, fired))
        if any(fired):
            p_true += w
    return p_true


def min_oracle(card, matrices, leak, parent_states):
    """Noisy-MIN by brute force over latent contribution tuples; the
    child takes the minimum (states ascending)."""
    dists = [m[s] for m, s in zip(matrices, parent_states)] + [leak]
    out = np.zeros(card)
    for latent in itertools.product(range(card), repeat=len(dists)):
        w = math.prod(d[z] for d, z in zip(dists, latent))
        out[min(latent)] += w
    return out


def independent(joint_nodes, joint, a, b, z_assign, tol=1e-12):
    """Numerical conditional independence of a and b given an assignment
    to z, read off a dense joint array over joint_nodes."""
    axes = {n: i for i, n in enumerate(joint_nodes)}
    sub = joint
    for n, s in sorted(z_assign.items(), key=lambda kv: axes[kv[0]],
                       reverse=True):
        sub = np.take(sub, s, axis=axes[n])
    remaining = [n for n in joint_nodes if n not in z_assign]
    keep = [remaining.index(n) for n in (a, b)]
    drop = [i for i in range(len(remaining)) if i not in keep]
    pab = sub.sum(axis=tuple(drop)) if drop else sub
    if keep[0] > keep[1]:
        pab = pab.T
    total = pab.sum()
    if total <= tol:
        return True  # conditioning event has no mass: vacuously independent
    pab = pab / total
    outer = np.outer(pab.sum(axis=1), pab.sum(axis=0))
    return float(np.max(np.abs(pab - outer))) < tol


# --- random closed Bayesian networks (no fragments involved) ------------

def random_net(gen, n_nodes, max_parents=3, card=2) -> BayesNet:
    """A random DAG over n_nodes variables with strictly positive CPTs."""
    nodes = tuple(VariableInstance("N", (i,)) for i in range(n_nodes))
    order = list(gen.permutation(n_nodes))
    parents = {}
    for pos, i in enumerate(order):
        earlier = [order[j] for j in range(pos)]
        k = int(gen.integers(0, min(max_parents, len(earlier)) + 1))
        chosen = sorted(gen.choice(earlier, size=k, replace=False).tolist()) if k else []
        parents[nodes[i]] = tuple(nodes[j] for j in chosen)
    states = {n: tuple(f"s{j}" for j in range(card)) for n in nodes}
    cpts = {}
    for n in nodes:
        n_cfg = card ** len(parents[n])
        cpts[n] = np.vstack([random_dirichlet(gen, card) for _ in range(n_cfg)])
    return BayesNet(nodes=nodes, states=states, parents=parents, cpts=cpts)


def enumerate_joint(net: BayesNet) -> tuple[list, np.ndarray]:
    """Dense joint over net.nodes in node order (independent re-derivation,
    not the library's enumeration)."""
    nodes = list(net.nodes)
    cards = [net.card(n) for n in nodes]
    joint = np.zeros(cards)
    for idx in itertools.product(*[range(c) for c in cards]):
        assign = dict(zip(nodes, idx))
        p = 1.0
        for n in nodes:
            row = 0
            for parent in net.parents[n]:
                row = row * net.card(parent) + assign[parent]
            p *= net.cpts[n][row, assign[n]]
        joint[idx] = p
    return nodes, joint


# --- random consistent fragment sets ------------------------------------

def random_fragment_set(gen, max_vars=10, max_frags=8):
    """A fresh KB plus a list of fragment instances whose combination is
    globally consistent under the trivial partition.

    Each variable is resident in exactly one fragment, except that one
    eligible binary variable may become a noisy-OR resident shared by two
    fragments with disjoint link sets.
    """
    n_vars = int(gen.integers(4, max_vars + 1))
    cards = [int(gen.integers(2, 4)) for _ in range(n_vars)]
    order = list(gen.permutation(n_vars))
    parent_idx = {}
    for pos, i in enumerate(order):
        earlier = [order[j] for j in range(pos)]
        k = int(gen.integers(0, min(3, len(earlier)) + 1))
        parent_idx[i] = sorted(gen.choice(earlier, size=k, replace=False).tolist()) if k else []

    # pick a noisy-OR variable: binary with at least 2 binary parents
    or_var = None
    for i in order:
        if cards[i] == 2 and len(parent_idx[i]) >= 2 and all(
            cards[j] == 2 for j in parent_idx[i]
        ):
            or_var = i
            break

    kb = KnowledgeBase()
    for i in range(n_vars):
        kb.register_variable_schema(VariableSchema(
            name=f"V{i}",
            state_space=StateSpace(tuple(f"s{j}" for j in range(cards[i]))),
            combination_method="noisy_or" if i == or_var else "simple",
        ))

    n_frags = int(gen.integers(1, min(max_frags, n_vars) + 1))
    groups = [[] for _ in range(n_frags)]
    for i in range(n_vars):
        if i != or_var:
            groups[int(gen.integers(0, n_frags))].append(i)
    groups = [g for g in groups if g]

    def ref(i):
        return VariableRef(f"V{i}", ())

    schemas = []
    for gi, group in enumerate(groups):
        residents = {}
        for i in group:
            n_cfg = math.prod(cards[j] for j in parent_idx[i])
            table = np.concatenate(
                [random_dirichlet(gen, cards[i]) for _ in range(n_cfg)]
            )
            residents[ref(i)] = ResidentSpec(
                parents=tuple(ref(j) for j in parent_idx[i]),
                influence=TablePayload(tuple(table)),
            )
        inputs = frozenset(
            ref(j) for i in group for j in parent_idx[i] if j not in group
        )
        schemas.append(FragmentSchema(
            name=f"F{gi}", attrs=(), residents=residents, inputs=inputs,
        ))

    if or_var is not None:
        # split the noisy-OR links across two fragments sharing the resident
        ps = parent_idx[or_var]
        cut = len(ps) // 2
        halves = [ps[:cut], ps[cut:]]
        for hi, half in enumerate(halves):
            residents = {ref(or_var): ResidentSpec(
                parents=tuple(ref(j) for j in half),
                influence=NoisyOrPayload(
                    links=tuple((ref(j), float(gen.uniform(0.1, 0.9))) for j in half),
                    leak=float(gen.uniform(0.0, 0.2)) if hi == 0 else 0.0,
                ),
            )}
            schemas.append(FragmentSchema(
                name=f"FOr{hi}", attrs=(), residents=residents,
                inputs=frozenset(ref(j) for j in half),
            ))

    for schema in schemas:
        kb.register_fragment_schema(schema)
    ws = Workspace(kb)
    frags = [ws.instantiate_fragment(s.name, {}) for s in schemas]
    part = HypothesisPartition.trivial(kb)
    return kb, frags, part


# --- random multi-fragment models ---------------------------------------

def random_multi_model(gen, max_vars=6, max_elements=4):
    """A KB with one hypothesis variable and per-element fragments.

    A shared fragment (hypothesized over the full state space) carries all
    variables except the last one; per-element fragments carry the last
    variable, with element-specific parent subsets and tables, so the
    multi-network exhibits context-specific structure.
    """
    n_elem = int(gen.integers(2, max_elements + 1))
    n_vars = int(gen.integers(3, max_vars + 1))
    kb = KnowledgeBase()
    kb.register_variable_schema(VariableSchema(
        name="Hyp",
        state_space=StateSpace(tuple(f"h{j}" for j in range(n_elem))),
    ))
    for i in range(n_vars):
        kb.register_variable_schema(VariableSchema(
            name=f"V{i}", state_space=StateSpace(("f", "t")),
        ))

    def ref(i):
        return VariableRef(f"V{i}", ())

    order = list(gen.permutation(n_vars))
    parent_idx = {}
    for pos, i in enumerate(order):
        earlier = [order[j] for j in range(pos)]
        k = int(gen.integers(0, min(2, len(earlier)) + 1))
        parent_idx[i] = sorted(gen.choice(earlier, size=k, replace=False).tolist()) if k else []
    special = order[-1]  # last in topological order: safe to vary parents

    hyp_ref = VariableRef("Hyp", ())
    shared_residents = {}
    for i in range(n_vars):
        if i == special:
            continue
        n_cfg = 2 ** len(parent_idx[i])
        table = np.concatenate([random_dirichlet(gen, 2) for _ in range(n_cfg)])
        shared_residents[ref(i)] = ResidentSpec(
            parents=tuple(ref(j) for j in parent_idx[i]),
            influence=TablePayload(tuple(table)),
        )
    # special is last in topological order, so every parent of a shared
    # resident is itself a shared resident.  The shared fragment carries
    # no hypothesis: its knowledge applies under every element, so its
    # residents acquire no hypothesis parents in the materialized net.
    kb.register_fragment_schema(FragmentSchema(
        name="Shared", attrs=(), residents=shared_residents,
    ))

    candidates = [j for j in order if j != special]
    for e in range(n_elem):
        k = int(gen.integers(0, min(2, len(candidates)) + 1))
        chosen = sorted(gen.choice(candidates, size=k, replace=False).tolist()) if k else []
        n_cfg = 2 ** len(chosen)
        table = np.concatenate([random_dirichlet(gen, 2) for _ in range(n_cfg)])
        residents = {ref(special): ResidentSpec(
            parents=tuple(ref(j) for j in chosen),
            influence=TablePayload(tuple(table)),
        )}
        kb.register_fragment_schema(FragmentSchema(
            name=f"Elem{e}", attrs=(), residents=residents,
            inputs=frozenset([hyp_ref] + [ref(j) for j in chosen]),
            hypothesis_vars=(hyp_ref,),
            hypothesized_subset=frozenset({(f"h{e}",)}),
        ))

    ws = Workspace(kb)
    frags = [ws.instantiate_fragment("Shared", {})] + [
        ws.instantiate_fragment(f"Elem{e}", {}) for e in range(n_elem)
    ]
    hyp = VariableInstance("Hyp", ())
    part = HypothesisPartition.build(
        kb, [hyp], [frozenset({(f"h{j}",)}) for j in range(n_elem)]
    )
    return kb, frags, part, hyp
