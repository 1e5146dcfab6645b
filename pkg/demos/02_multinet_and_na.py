"""Combine a fragment set across every element of a hypothesis partition.

Fragments conditioned on different hypotheses cover different variables.
Where an element leaves a variable uncovered, a reserved NA state absorbs
the probability mass, so the multi-network still assigns it a
distribution.  The materialized network then carries the hypothesis
variable as an explicit parent.

Run with: python demos/02_multinet_and_na.py
"""

import numpy as np

from fragbn import (
    HypothesisPartition,
    Query,
    Relation,
    Workspace,
    classify,
    close_with_defaults,
    combine_multi,
    eliminate,
    materialize_bn,
    parse_kb,
    refine,
)
from fragbn.instantiate import VariableInstance

KB_TEXT = """
varschema Kind {
  attrs: (u);
  states: {SAM, Truck};
  method: simple;
  default: uniform;
}

varschema Emitting {
  attrs: (u);
  states: {No, Yes, NA};
  method: simple;
  default: uniform;
}

varschema Moving {
  attrs: (u);
  states: {No, Yes};
  method: simple;
  default: uniform;
}

# Only a SAM battery has a radar to switch on.
fragment SamEmission {
  attrs: (u);
  hypothesis: Kind(u) in {SAM};
  resident: Emitting(u) {
    influence: table [0.4, 0.6, 0];
  }
}

# Anything on the battlefield moves or sits still.
fragment AnyMovement {
  attrs: (u);
  hypothesis: Kind(u) in {SAM, Truck};
  resident: Moving(u) {
    influence: table [0.5, 0.5];
  }
}
"""


def main():
    result = parse_kb(KB_TEXT)
    assert result.ok, [d.format() for d in result.diagnostics]
    kb = result.kb

    ws = Workspace(kb)
    frags = [
        ws.instantiate_fragment("SamEmission", {"u": "x1"}),
        ws.instantiate_fragment("AnyMovement", {"u": "x1"}),
    ]
    kind = VariableInstance("Kind", ("x1",))

    # Against the trivial partition the emission fragment straddles: its
    # knowledge applies to part of the single element only.  Refining by
    # the fragments' hypothesized subsets yields the coarsest partition
    # that no fragment straddles.
    part = HypothesisPartition.build(kb, [kind], [frozenset({("SAM",), ("Truck",)})])
    print("before refinement:", classify(frags[0], part, part.elements[0]).value)
    part = refine(part, [(f.hypothesis_vars, f.hypothesized_subset) for f in frags])
    print("elements after refinement:", [sorted(e) for e in part.elements])
    for element in part.elements:
        rel = classify(frags[0], part, element)
        assert rel is not Relation.STRADDLES
        print(f"  SamEmission vs {sorted(element)}: {rel.value}")
    print()

    # Combine across all elements.  Under the Truck element nothing says
    # how Emitting(x1) behaves, so a point mass on its NA state is
    # synthesized there.
    multi = combine_multi(kb, frags, part)
    net = materialize_bn(multi, {kind: (0.3, 0.7)})
    emitting = VariableInstance("Emitting", ("x1",))
    print("nodes:", ", ".join(str(n) for n in net.nodes))
    print(f"parents of {emitting}:", [str(p) for p in net.parents[emitting]])
    print("rows of its table (one per Kind state):")
    for state, row in zip(net.states[kind], net.cpts[emitting]):
        print(f"  Kind={state}: {np.round(row, 6)}")
    print()

    # Observing an emission rules the truck out.
    closed = close_with_defaults(net)
    posterior = eliminate(closed, Query((kind,), {emitting: "Yes"}))
    print("P(Kind | Emitting=Yes):", dict(zip(net.states[kind], np.round(posterior, 6))))


if __name__ == "__main__":
    main()
