"""Command-line front end: validate a knowledge base, construct networks
from fragment instances, and run posterior queries.

Exit codes: 0 success, 1 usage or I/O error, 2 parse error, 3 semantic
error, 4 consistency failure, 5 incomplete model without
--allow-incomplete, 6 zero-probability evidence.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import dsl, infer
from .combine import (
    _parse_instance,
    bn_from_text,
    bn_to_text,
    combine_compound,
    combine_multi,
    materialize_bn,
)
from .errors import (
    CoverageGap,
    FragBnError,
    InconsistentSet,
    ZeroEvidence,
)
from .instantiate import VariableInstance, Workspace
from .kb import KnowledgeBase
from .partition import HypothesisPartition

EXIT_USAGE = 1
EXIT_PARSE = 2
EXIT_SEMANTIC = 3
EXIT_INCONSISTENT = 4
EXIT_INCOMPLETE = 5
EXIT_ZERO_EVIDENCE = 6


class _CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


def _load_kb(path: str) -> KnowledgeBase:
    p = Path(path)
    if not p.is_file():
        raise _CliError(f"no such file: {path}", EXIT_USAGE)
    text = p.read_bytes().decode("utf-8", errors="replace")
    result = dsl.parse_kb(text)
    if not result.ok:
        for diag in result.diagnostics:
            print(diag.format(path), file=sys.stderr)
        syntactic = any(d.code == "E_SYNTAX" for d in result.diagnostics)
        raise _CliError(
            f"knowledge base {path} failed validation",
            EXIT_PARSE if syntactic else EXIT_SEMANTIC,
        )
    return result.kb


def _parse_binding(pairs) -> dict:
    binding = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise _CliError(f"--bind expects name=value, got {pair!r}")
        name, value = pair.split("=", 1)
        binding[name.strip()] = int(value) if value.lstrip("-").isdigit() else value
    return binding


def _parse_partition(kb, specs) -> HypothesisPartition:
    """--partition 'Ref=SA6|SCUD,Other': groups split by '|', states by ','.

    Multiple flags build the product partition over several variables.
    """
    vars_, group_lists = [], []
    for spec in specs:
        if "=" not in spec:
            raise _CliError(f"--partition expects Ref=groups, got {spec!r}")
        ref, groups = spec.split("=", 1)
        var = _parse_instance(ref)
        states = kb.variable(var.schema_name).state_space.states
        parsed = []
        for group in groups.split("|"):
            labels = [s.strip() for s in group.split(",") if s.strip()]
            for s in labels:
                if s not in states:
                    raise _CliError(
                        f"{s!r} is not a state of {var.schema_name}"
                    )
            parsed.append(frozenset(labels))
        vars_.append(var)
        group_lists.append(parsed)
    elements = [frozenset({()})]
    for groups in group_lists:
        elements = [
            frozenset(tup + (s,) for tup in element for s in group)
            for element in elements
            for group in groups
        ]
    return HypothesisPartition.build(kb, vars_, elements)


def _parse_priors(kb, specs) -> dict:
    priors = {}
    for spec in specs or []:
        if "=" not in spec:
            raise _CliError(f"--prior expects Ref=(p1,...), got {spec!r}")
        ref, values = spec.split("=", 1)
        var = _parse_instance(ref)
        values = values.strip().lstrip("(").rstrip(")")
        try:
            priors[var] = [float(v) for v in values.split(",")]
        except ValueError:
            raise _CliError(f"bad prior values in {spec!r}") from None
    return priors


def _auto_retrieve(kb, ws: Workspace, target: VariableInstance, binding, depth):
    """Depth-limited backward closure: instantiate every fragment schema
    with a resident unifying with a needed variable instance."""
    needed = [target]
    seen_vars = set()
    fragments = []
    level = {target: 0}
    while needed:
        var = needed.pop(0)
        if var in seen_vars or level[var] >= depth:
            continue
        seen_vars.add(var)
        for name in sorted(kb.fragment_schemas):
            schema = kb.fragment_schemas[name]
            for ref in schema.residents:
                sub = _unify(ref, var)
                if sub is None:
                    continue
                # a substitution that contradicts an explicit --bind value
                # is the wrong resident (e.g. the t0 slice when the target
                # lives at t1)
                if any(a in binding and binding[a] != v for a, v in sub.items()):
                    continue
                full = dict(binding)
                full.update(sub)
                missing = [a for a in schema.attrs if a not in full]
                if missing:
                    raise _CliError(
                        f"auto-retrieve needs --bind for attributes "
                        f"{', '.join(missing)} of fragment {name}"
                    )
                frag = ws.instantiate_fragment(name, full)
                if frag not in fragments:
                    fragments.append(frag)
                for inp in frag.inputs:
                    if inp not in level:
                        level[inp] = level[var] + 1
                        needed.append(inp)
                break
    return fragments


def _unify(ref, var: VariableInstance):
    if ref.schema_name != var.schema_name or len(ref.args) != len(var.bound_attrs):
        return None
    sub = {}
    for (kind, value), bound in zip(ref.args, var.bound_attrs):
        if kind == "lit":
            if value != bound:
                return None
        elif kind == "attr":
            if value in sub and sub[value] != bound:
                return None
            sub[value] = bound
    return sub


def _construct_net(kb, args):
    ws = Workspace(kb)
    binding = _parse_binding(args.bind)
    part = _parse_partition(kb, args.partition or [])
    fragments = []
    for name in args.fragment or []:
        fragments.append(ws.instantiate_fragment(name, binding))
    if getattr(args, "auto_retrieve", None):
        target = _parse_instance(args.auto_retrieve)
        fragments.extend(
            f for f in _auto_retrieve(kb, ws, target, binding, args.retrieve_depth)
            if f not in fragments
        )
    if not fragments:
        raise _CliError("no fragments selected; use --fragment or --auto-retrieve")
    priors = _parse_priors(kb, args.prior)
    if args.all_elements:
        frag = combine_multi(kb, fragments, part)
    else:
        if args.element:
            joint = tuple(s.strip() for s in args.element.split(","))
            element = part.element_of(joint)
        elif len(part.elements) == 1:
            element = part.elements[0]
        else:
            raise _CliError("choose an element with --element or use --all-elements")
        frag = combine_compound(kb, fragments, part, element)
    return materialize_bn(frag, priors)


def _add_construct_args(parser):
    parser.add_argument("kb", help="knowledge base (.fkb) to load")
    parser.add_argument("--fragment", action="append", metavar="NAME",
                        help="fragment schema to instantiate (repeatable)")
    parser.add_argument("--bind", action="append", metavar="NAME=VALUE",
                        help="attribute binding applied to every fragment")
    parser.add_argument("--partition", action="append", metavar="REF=G1|G2",
                        help="hypothesis partition: groups split by '|', "
                             "states within a group by ','")
    parser.add_argument("--element", metavar="S1[,S2...]",
                        help="joint state selecting the hypothesis element")
    parser.add_argument("--all-elements", action="store_true",
                        help="combine across every element (multi-fragment)")
    parser.add_argument("--prior", action="append", metavar="REF=(P1,...)",
                        help="prior for a hypothesis or input variable")
    parser.add_argument("--auto-retrieve", metavar="REF",
                        help="instantiate fragments backward from this target")
    parser.add_argument("--retrieve-depth", type=int, default=5,
                        help="depth limit for --auto-retrieve (default 5)")


def cmd_validate(args) -> int:
    _load_kb(args.kb)
    print(f"{args.kb}: ok")
    return 0


def cmd_construct(args) -> int:
    kb = _load_kb(args.kb)
    net = _construct_net(kb, args)
    text = bn_to_text(net)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_query(args) -> int:
    if args.bn:
        p = Path(args.bn)
        if not p.is_file():
            raise _CliError(f"no such file: {args.bn}", EXIT_USAGE)
        net = bn_from_text(p.read_text(encoding="utf-8"))
    else:
        if not args.kb:
            raise _CliError("query needs either --bn FILE or a kb plus construct flags")
        kb = _load_kb(args.kb)
        net = _construct_net(kb, args)

    targets = tuple(_parse_instance(t) for t in args.target)
    evidence = {}
    for pair in args.evidence or []:
        if "=" not in pair:
            raise _CliError(f"--evidence expects Ref=state, got {pair!r}")
        ref, state = pair.rsplit("=", 1)
        evidence[_parse_instance(ref)] = state.strip()
    query = infer.Query(targets, evidence)

    complete = infer.query_complete(net, query)
    if not complete and not args.allow_incomplete:
        print(
            "model is not query complete (open inputs: "
            + ", ".join(str(n) for n in net.open_inputs)
            + "); pass --allow-incomplete to close them with defaults",
            file=sys.stderr,
        )
        return EXIT_INCOMPLETE
    if not complete:
        print(
            "W_INCOMPLETE: open inputs closed with default distributions; "
            "the posterior is an approximation",
            file=sys.stderr,
        )
    closed = infer.close_with_defaults(net)
    posterior = infer.eliminate(closed, query)
    sys.stdout.write(infer.format_posterior(closed, query, posterior))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fragbn",
        description="Combine Bayesian network fragments and query the result.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_validate = sub.add_parser("validate", help="parse and validate a knowledge base")
    p_validate.add_argument("kb")
    p_validate.set_defaults(func=cmd_validate)

    p_construct = sub.add_parser("construct", help="combine fragments into a network")
    _add_construct_args(p_construct)
    p_construct.add_argument("-o", "--output", help="write the network here")
    p_construct.set_defaults(func=cmd_construct)

    p_query = sub.add_parser("query", help="posterior query on a network")
    p_query.add_argument("kb", nargs="?", help="knowledge base, when constructing")
    p_query.add_argument("--bn", help="query a previously constructed network file")
    p_query.add_argument("--fragment", action="append", metavar="NAME")
    p_query.add_argument("--bind", action="append", metavar="NAME=VALUE")
    p_query.add_argument("--partition", action="append", metavar="REF=G1|G2")
    p_query.add_argument("--element", metavar="S1[,S2...]")
    p_query.add_argument("--all-elements", action="store_true")
    p_query.add_argument("--prior", action="append", metavar="REF=(P1,...)")
    p_query.add_argument("--auto-retrieve", metavar="REF")
    p_query.add_argument("--retrieve-depth", type=int, default=5)
    p_query.add_argument("--target", action="append", required=True, metavar="REF")
    p_query.add_argument("--evidence", action="append", metavar="REF=STATE")
    p_query.add_argument("--allow-incomplete", action="store_true",
                         help="close open inputs with defaults and warn")
    p_query.set_defaults(func=cmd_query)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return EXIT_USAGE if err.code not in (0, None) else 0
    try:
        return args.func(args)
    except _CliError as err:
        print(f"fragbn: {err}", file=sys.stderr)
        return err.code
    except (InconsistentSet, CoverageGap) as err:
        print(f"fragbn: {err}", file=sys.stderr)
        return EXIT_INCONSISTENT
    except ZeroEvidence as err:
        print(f"fragbn: {err}", file=sys.stderr)
        return EXIT_ZERO_EVIDENCE
    except FragBnError as err:
        print(f"fragbn: {err}", file=sys.stderr)
        return EXIT_SEMANTIC


if __name__ == "__main__":
    sys.exit(main())
