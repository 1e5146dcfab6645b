"""Acceptance gate: one test per release criterion, each printing a
single pass/fail line.  Tolerances are pinned; randomized criteria use
fixed seeds (override with the FRAGBN_SEED environment variable)."""

import itertools
import time
from contextlib import contextmanager

import numpy as np
import pytest

from fragbn import (
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
    bn_to_text,
    check_enabling,
    check_global_consistency,
    combine,
    combine_compound,
    combine_multi,
    d_separated,
    demo_kb_path,
    eliminate,
    graph_union,
    joint_enumerate,
    load_demo_kb,
    materialize_bn,
    parse_kb,
    posterior_from_joint,
    serialize_kb,
)
from fragbn.errors import CyclicUnion, EnablingViolation
from fragbn.infer import Query, close_with_defaults
from fragbn.instantiate import VariableInstance

from helpers import (
    enumerate_joint,
    independent,
    min_oracle,
    or_oracle,
    random_dirichlet,
    random_fragment_set,
    random_multi_model,
    random_net,
    rng,
)
from test_dsl import random_kb
from test_influence import build_kb, make_min_fragment, one_fragment

TOL_EXACT = 1e-12
TOL_NUMERIC = 1e-9


@contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"\nacceptance [{name}]: FAIL")
        raise
    print(f"\nacceptance [{name}]: PASS")


def demo_construction():
    kb = load_demo_kb()
    ws = Workspace(kb)
    binding = {"u": "B654", "t": 1, "t0": 0, "t1": 1}
    frags = [
        ws.instantiate_fragment("MissionLocationQuality", binding),
        ws.instantiate_fragment("ActivityLocationQuality", binding),
        ws.instantiate_fragment("ActivityDwell", binding),
    ]
    unit = VariableInstance("UnitType", ("B654",))
    part = HypothesisPartition.build(
        kb, [unit], [frozenset({("SA6",)}), frozenset({("SCUD",), ("Other",)})]
    )
    return kb, frags, part


def test_01_demo_reconstruction():
    with criterion("demo graph reconstruction"):
        start = time.perf_counter()
        kb, frags, part = demo_construction()
        sa6 = part.elements[0]
        parents = graph_union(kb, frags, part, sa6)

        def v(name, *args):
            return VariableInstance(name, args)

        quality = v("LocationQuality", "B654", 1)
        assert set(parents[quality]) == {
            v("MissionSupport", "B654", 1),
            v("ActivitySupport", "B654", 1),
            v("Activity", "B654", 1),
        }
        assert parents[v("Activity", "B654", 1)] == (v("Activity", "B654", 0),)
        assert parents[v("Dwell", "B654", 1)] == (v("Activity", "B654", 1),)
        assert parents[v("RadarMode", "B654", 1)] == (v("Activity", "B654", 1),)
        net = materialize_bn(combine_compound(kb, frags, part, sa6))
        assert len(net.nodes) == 8
        assert time.perf_counter() - start < 1.0


def test_02_order_independence():
    with criterion("order independence of combination"):
        gen = rng(9102)
        checked = 0
        while checked < 50:
            kb, frags, part = random_fragment_set(gen)
            element = part.elements[0]
            ref_net = materialize_bn(combine_compound(kb, frags, part, element))
            ref_text = bn_to_text(ref_net)
            for _ in range(3):
                if checked >= 50:
                    break
                perm = [frags[i] for i in gen.permutation(len(frags))]
                if len(perm) > 2 and gen.random() < 0.5:
                    # re-associate: combine a random prefix first
                    cut = int(gen.integers(1, len(perm)))
                    sub = combine_compound(kb, perm[:cut], part, element)
                    perm = [sub] + perm[cut:]
                net = materialize_bn(combine_compound(kb, perm, part, element))
                assert bn_to_text(net) == ref_text  # identity-equal graphs
                for node in ref_net.nodes:
                    assert net.parents[node] == ref_net.parents[node]
                    if ref_net.cpts[node] is not None:
                        assert np.max(np.abs(
                            net.cpts[node] - ref_net.cpts[node]
                        )) <= TOL_EXACT
                checked += 1


def test_03_multinet_equivalence():
    with criterion("multinet equals per-element compounds"):
        gen = rng(9103)
        for _ in range(25):
            kb, frags, part, hyp = random_multi_model(gen)
            prior = random_dirichlet(gen, len(part.elements))
            multi_net = materialize_bn(
                combine_multi(kb, frags, part), {hyp: prior})
            m_nodes, m_joint = enumerate_joint(multi_net)
            h_axis = m_nodes.index(hyp)
            for idx, element in enumerate(part.elements):
                compound_net = materialize_bn(
                    combine_compound(kb, frags, part, element), {hyp: prior})
                c_nodes, c_joint = enumerate_joint(compound_net)
                assert set(c_nodes) == set(m_nodes)
                # condition each joint on the hypothesis state
                m_cond = np.take(m_joint, idx, axis=h_axis)
                m_cond = m_cond / m_cond.sum()
                c_cond = np.take(c_joint, idx, axis=c_nodes.index(hyp))
                c_cond = c_cond / c_cond.sum()
                rest = [n for n in m_nodes if n != hyp]
                perm = [
                    [n for n in c_nodes if n != hyp].index(n) for n in rest
                ]
                c_cond = np.transpose(c_cond, perm)
                tv = 0.5 * float(np.sum(np.abs(m_cond - c_cond)))
                assert tv < TOL_EXACT


def test_04_ici_oracles():
    with criterion("canonical ICI models match enumeration"):
        gen = rng(9104)
        for _ in range(100):
            n = int(gen.integers(1, 9))
            kb = build_kb([("X", "ft", "noisy_or")] + [
                (f"P{i}", "ft", "simple") for i in range(n)])
            refs = [VariableRef(f"P{i}", ()) for i in range(n)]
            probs = [float(gen.uniform(0, 1)) for _ in range(n)]
            leak = float(gen.uniform(0, 0.5))
            frag = one_fragment(kb, "F", "X", ResidentSpec(
                tuple(refs), NoisyOrPayload(tuple(zip(refs, probs)), leak=leak)))
            result = combine(kb, VariableInstance("X", ()), [frag])
            order = [refs.index(VariableRef(p.schema_name, ()))
                     for p in result.parents]
            for row, states in enumerate(itertools.product([0, 1], repeat=n)):
                on = [False] * n
                for pos, s in zip(order, states):
                    on[pos] = bool(s)
                assert abs(result.cpt[row, 1]
                           - or_oracle(probs, leak, on)) <= TOL_EXACT

        for _ in range(25):
            card = int(gen.integers(2, 5))
            n_parents = int(gen.integers(1, 5))
            states = [f"s{i}" for i in range(card)]
            kb = build_kb(
                [("X", states, "noisy_min"), ("C", "ab", "simple")]
                + [(f"P{i}", [f"p{j}" for j in range(card)], "simple")
                   for i in range(n_parents)])
            cond = VariableRef("C", ())
            parents = [VariableRef(f"P{i}", ()) for i in range(n_parents)]
            cases = {}
            for c in "ab":
                cases[c] = {
                    "links": [(p, [random_dirichlet(gen, card).tolist()
                                   for _ in range(card)]) for p in parents],
                    "leak": random_dirichlet(gen, card).tolist(),
                }
            frag = make_min_fragment(kb, "F", "X", cond, ["a", "b"],
                                     parents, cases)
            result = combine(kb, VariableInstance("X", ()), [frag])
            cards = [kb.variable(p.schema_name).state_space.card
                     for p in result.parents]
            cond_pos = [p.schema_name for p in result.parents].index("C")
            for row, assign in enumerate(
                    itertools.product(*[range(c) for c in cards])):
                cstate = "ab"[assign[cond_pos]]
                matrices, pstates = [], []
                for p, s in zip(result.parents, assign):
                    if p.schema_name == "C":
                        continue
                    links = dict(cases[cstate]["links"])
                    matrices.append(np.asarray(
                        links[VariableRef(p.schema_name, ())]))
                    pstates.append(s)
                expect = min_oracle(card, matrices,
                                    np.asarray(cases[cstate]["leak"]), pstates)
                assert np.max(np.abs(result.cpt[row] - expect)) <= TOL_EXACT


def test_05_d_separation_vs_ci():
    with criterion("d-separation matches conditional independence"):
        gen = rng(9105)
        for _ in range(100):
            net = random_net(gen, int(gen.integers(3, 8)))
            nodes, joint = enumerate_joint(net)
            a, b = [nodes[i]
                    for i in gen.choice(len(nodes), size=2, replace=False)]
            others = [n for n in nodes if n not in (a, b)]
            k = int(gen.integers(0, len(others) + 1))
            z = [others[i]
                 for i in gen.choice(len(others), size=k, replace=False)]
            claim = d_separated(net, {a}, {b}, set(z))
            ci = all(
                independent(nodes, joint, a, b, dict(zip(z, assign)),
                            tol=TOL_EXACT)
                for assign in itertools.product(
                    *[range(net.card(n)) for n in z])
            )
            assert claim == ci


def test_06_eliminate_vs_enumerate():
    with criterion("variable elimination matches enumeration"):
        # the shipped demo model first
        kb, frags, part = demo_construction()
        net = close_with_defaults(materialize_bn(
            combine_compound(kb, frags, part, part.elements[0])))
        dwell = VariableInstance("Dwell", ("B654", 1))
        joint = joint_enumerate(net)
        for target in net.nodes:
            if target == dwell:
                continue
            query = Query((target,), {dwell: "Long"})
            fast = eliminate(net, query)
            slow = posterior_from_joint(net, joint, query)
            assert np.max(np.abs(fast - slow)) <= TOL_NUMERIC
        # then random networks up to 14 binary variables
        gen = rng(9106)
        for _ in range(15):
            rnet = random_net(gen, int(gen.integers(4, 15)))
            nodes = list(rnet.nodes)
            t = nodes[int(gen.integers(0, len(nodes)))]
            others = [n for n in nodes if n != t]
            k = int(gen.integers(0, min(3, len(others)) + 1))
            ev = {others[i]: rnet.states[others[i]][
                int(gen.integers(0, 2))]
                for i in gen.choice(len(others), size=k, replace=False)}
            query = Query((t,), ev)
            fast = eliminate(rnet, query)
            slow = posterior_from_joint(rnet, joint_enumerate(rnet), query)
            assert np.max(np.abs(fast - slow)) <= TOL_NUMERIC


def test_07_error_taxonomy():
    with criterion("error taxonomy"):
        # directed cycle across fragments
        kb = KnowledgeBase()
        for name in ("A", "B"):
            kb.register_variable_schema(VariableSchema(
                name=name, state_space=StateSpace(("f", "t"))))
        a, b = VariableRef("A", ()), VariableRef("B", ())
        kb.register_fragment_schema(FragmentSchema(
            "AtoB", (), {b: ResidentSpec((a,), TablePayload((1, 0, 0, 1)))},
            inputs=frozenset({a})))
        kb.register_fragment_schema(FragmentSchema(
            "BtoA", (), {a: ResidentSpec((b,), TablePayload((1, 0, 0, 1)))},
            inputs=frozenset({b})))
        ws = Workspace(kb)
        cyc = [ws.instantiate_fragment("AtoB", {}),
               ws.instantiate_fragment("BtoA", {})]
        part = HypothesisPartition.trivial(kb)
        with pytest.raises(CyclicUnion):
            graph_union(kb, cyc, part, part.elements[0])

        # non-binary noisy-OR parent: the message states the binary condition
        kb2 = build_kb([("X", "ft", "noisy_or"), ("P", "abc", "simple")])
        p = VariableRef("P", ())
        frag = one_fragment(kb2, "F", "X", ResidentSpec(
            (p,), NoisyOrPayload(((p, 0.5),))))
        message = check_enabling(kb2, VariableInstance("X", ()), [frag])
        assert message is not None and "binary" in message
        with pytest.raises(EnablingViolation, match="binary"):
            combine(kb2, VariableInstance("X", ()), [frag])

        # a resident with no subsuming fragment, and a straddling fragment
        kb3 = KnowledgeBase()
        kb3.register_variable_schema(VariableSchema(
            name="H", state_space=StateSpace(("a", "b", "c"))))
        kb3.register_variable_schema(VariableSchema(
            name="V", state_space=StateSpace(("f", "t"))))
        h, v = VariableRef("H", ()), VariableRef("V", ())
        kb3.register_fragment_schema(FragmentSchema(
            "OnlyA", (), {v: ResidentSpec((), TablePayload((0.5, 0.5)))},
            inputs=frozenset({h}), hypothesis_vars=(h,),
            hypothesized_subset=frozenset({("a",)})))
        ws3 = Workspace(kb3)
        frag3 = ws3.instantiate_fragment("OnlyA", {})
        hv = VariableInstance("H", ())
        fine = HypothesisPartition.build(
            kb3, [hv], [frozenset({("a",)}), frozenset({("b",), ("c",)})])
        report = check_global_consistency(
            kb3, [frag3], fine, frozenset({("b",), ("c",)}))
        assert not report.ok and "no home fragment" in report.format()

        kb3.register_fragment_schema(FragmentSchema(
            "AB", (), {v: ResidentSpec((), TablePayload((0.5, 0.5)))},
            inputs=frozenset({h}), hypothesis_vars=(h,),
            hypothesized_subset=frozenset({("a",), ("b",)})))
        straddler = ws3.instantiate_fragment("AB", {})
        report = check_global_consistency(
            kb3, [straddler], fine, frozenset({("b",), ("c",)}))
        assert not report.ok and "residency failure" in report.format()


def test_08_dsl_round_trip():
    with criterion("text format round trip"):
        with open(demo_kb_path(), encoding="utf-8") as fh:
            demo = fh.read()
        result = parse_kb(demo)
        assert result.ok
        text = serialize_kb(result.kb)
        assert serialize_kb(parse_kb(text).kb) == text

        gen = rng(9108)
        for _ in range(50):
            kb = random_kb(gen)
            text = serialize_kb(kb)
            again = parse_kb(text)
            assert again.ok
            assert serialize_kb(again.kb) == text

        for _ in range(10_000):
            n = int(gen.integers(0, 64))
            raw = bytes(gen.integers(0, 256, size=n).tolist())
            parse_kb(raw.decode("latin-1"))  # never aborts
