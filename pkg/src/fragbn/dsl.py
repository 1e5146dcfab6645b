"""The textual `.fkb` knowledge-base format: parser and canonical serializer.

The format is line-oriented only in spirit; tokens are free-form with
``#`` comments.  Two block kinds exist::

    varschema Activity {
      attrs: (u, t);
      states: {Move, Deploy, Emit};
      method: simple;
      default: uniform;
    }

    fragment ActivityDwell {
      attrs: (u, t0, t1);
      hypothesis: UnitType(u) in {SA6};
      resident: Activity(u, t0) {
        influence: table [0.5, 0.3, 0.2];
      }
      ...
    }

Hypothesis clauses come in a per-variable product form (``Ref in {..}``
lists joined by commas denote the product of the listed sets) and a
general ``tuples over (...) {...}`` form.  Influence payload syntax is
one clause per method: ``table [..]``, ``default_table default|specific
[..]``, ``noisy_or links {Ref: p, ..} leak p``, ``noisy_min|noisy_max
cond Ref { case State: links {Ref: [[..], ..]} leak [..]; .. }`` and
``sigmoid bias w weights {Ref: w, ..}``.

Serialization is canonical: header line, schemas sorted by name,
attributes/states in declaration order, residents and inputs sorted,
probabilities printed with 17 significant digits, LF line endings.
parse(serialize(kb)) reproduces the KB exactly and serialization of a
parsed canonical document is a byte-for-byte fixpoint.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Optional, Union

from .errors import FragBnError, UnresolvedVariable
from .kb import (
    DefaultTablePayload,
    FragmentSchema,
    KnowledgeBase,
    MinCase,
    NoisyMaxPayload,
    NoisyMinPayload,
    NoisyOrPayload,
    ResidentSpec,
    SigmoidPayload,
    StateSpace,
    TablePayload,
    VariableRef,
    VariableSchema,
    attr,
    lit,
)

HEADER = "# fkb 1"


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    line: int  # 1-based
    column: int  # 1-based
    message: str
    code: str

    def format(self, filename: str = "<kb>") -> str:
        return (
            f"{filename}:{self.line}:{self.column}: "
            f"{self.severity}[{self.code}]: {self.message}"
        )


@dataclass
class ParseResult:
    kb: Optional[KnowledgeBase]
    diagnostics: list[Diagnostic] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.kb is not None


# --- tokenizer ----------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>\#[^\n]*)
  | (?P<number>[-+]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][-+]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<punct>[{}()\[\]:;,])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # "ident" | "int" | "float" | "string" | "punct" | "eof"
    value: object
    line: int
    column: int


class _ParseError(FragBnError):
    def __init__(self, message: str, token: Token, code: str = "E_SYNTAX"):
        super().__init__(message)
        self.diagnostic = Diagnostic("error", token.line, token.column, message, code)


def _tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    line, col = 1, 1
    pos = 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise _ParseError(
                f"unexpected character {text[pos]!r}",
                Token("punct", text[pos], line, col),
            )
        kind = m.lastgroup
        raw = m.group()
        if kind == "number":
            if re.fullmatch(r"[-+]?\d+", raw):
                tokens.append(Token("int", int(raw), line, col))
            else:
                tokens.append(Token("float", float(raw), line, col))
        elif kind == "ident":
            tokens.append(Token("ident", raw, line, col))
        elif kind == "string":
            body = raw[1:-1].replace('\\"', '"').replace("\\\\", "\\")
            tokens.append(Token("string", body, line, col))
        elif kind == "punct":
            tokens.append(Token("punct", raw, line, col))
        newlines = raw.count("\n")
        if newlines:
            line += newlines
            col = len(raw) - raw.rfind("\n")
        else:
            col += len(raw)
        pos = m.end()
    tokens.append(Token("eof", None, line, col))
    return tokens


# --- parser -------------------------------------------------------------

@dataclass
class _Ref:
    ref: VariableRef
    token: Token


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0

    # -- token helpers ---------------------------------------------------

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def next(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def expect_punct(self, char: str) -> Token:
        tok = self.next()
        if tok.kind != "punct" or tok.value != char:
            raise _ParseError(f"expected {char!r}, found {_show(tok)}", tok)
        return tok

    def expect_ident(self, what: str = "identifier") -> Token:
        tok = self.next()
        if tok.kind != "ident":
            raise _ParseError(f"expected {what}, found {_show(tok)}", tok)
        return tok

    def expect_keyword(self, word: str) -> Token:
        tok = self.next()
        if tok.kind != "ident" or tok.value != word:
            raise _ParseError(f"expected {word!r}, found {_show(tok)}", tok)
        return tok

    def at_keyword(self, word: str) -> bool:
        tok = self.peek()
        return tok.kind == "ident" and tok.value == word

    def eat_punct(self, char: str) -> bool:
        tok = self.peek()
        if tok.kind == "punct" and tok.value == char:
            self.pos += 1
            return True
        return False

    # -- document --------------------------------------------------------

    def document(self):
        varschemas = []
        fragments = []
        while True:
            tok = self.peek()
            if tok.kind == "eof":
                break
            if tok.kind == "ident" and tok.value == "varschema":
                varschemas.append(self.varschema())
            elif tok.kind == "ident" and tok.value == "fragment":
                fragments.append(self.fragment())
            else:
                raise _ParseError(
                    f"expected 'varschema' or 'fragment', found {_show(tok)}", tok
                )
        return varschemas, fragments

    # -- variable schemas ------------------------------------------------

    def varschema(self):
        start = self.expect_keyword("varschema")
        name = self.expect_ident("schema name")
        self.expect_punct("{")
        attrs: tuple[str, ...] = ()
        states: Optional[tuple[str, ...]] = None
        ordered = False
        method = "simple"
        default = None
        seen = set()
        while not self.eat_punct("}"):
            clause = self.expect_ident("clause")
            if clause.value in seen:
                raise _ParseError(
                    f"duplicate clause {clause.value!r}", clause
                )
            seen.add(clause.value)
            self.expect_punct(":")
            if clause.value == "attrs":
                attrs = self.attr_list()
            elif clause.value == "states":
                states = self.state_set()
                if self.at_keyword("ordered"):
                    self.next()
                    ordered = True
            elif clause.value == "method":
                method = self.expect_ident("method name").value
            elif clause.value == "default":
                if self.at_keyword("uniform"):
                    self.next()
                    default = None
                else:
                    default = self.prob_list()
            else:
                raise _ParseError(
                    f"unknown varschema clause {clause.value!r}", clause
                )
            self.expect_punct(";")
        if states is None:
            raise _ParseError(
                f"varschema {name.value!r} declares no states", start
            )
        return (
            start,
            dict(
                name=name.value,
                states=states,
                ordered=ordered,
                attrs=attrs,
                method=method,
                default=default,
            ),
        )

    def attr_list(self) -> tuple[str, ...]:
        self.expect_punct("(")
        names = []
        if not self.eat_punct(")"):
            while True:
                names.append(self.expect_ident("attribute name").value)
                if self.eat_punct(")"):
                    break
                self.expect_punct(",")
        return tuple(names)

    def state_set(self) -> tuple[str, ...]:
        self.expect_punct("{")
        states = []
        if not self.eat_punct("}"):
            while True:
                states.append(self.expect_ident("state label").value)
                if self.eat_punct("}"):
                    break
                self.expect_punct(",")
        return tuple(states)

    def number(self) -> float:
        tok = self.next()
        if tok.kind not in ("int", "float"):
            raise _ParseError(f"expected a number, found {_show(tok)}", tok)
        return float(tok.value)

    def probability(self) -> float:
        tok = self.peek()
        value = self.number()
        if not 0.0 <= value <= 1.0:
            raise _ParseError(
                f"probability {value} outside [0,1]", tok, code="E_PROB_RANGE"
            )
        return value

    def prob_list(self) -> tuple[float, ...]:
        self.expect_punct("[")
        values = []
        if not self.eat_punct("]"):
            while True:
                values.append(self.probability())
                if self.eat_punct("]"):
                    break
                self.expect_punct(",")
        return tuple(values)

    # -- fragments -------------------------------------------------------

    def ref(self) -> _Ref:
        name = self.expect_ident("variable schema name")
        args: list = []
        if self.eat_punct("("):
            if not self.eat_punct(")"):
                while True:
                    tok = self.next()
                    if tok.kind == "ident":
                        args.append(attr(tok.value))
                    elif tok.kind == "int":
                        args.append(lit(tok.value))
                    elif tok.kind == "string":
                        args.append(lit(tok.value))
                    else:
                        raise _ParseError(
                            f"expected attribute or literal, found {_show(tok)}",
                            tok,
                        )
                    if self.eat_punct(")"):
                        break
                    self.expect_punct(",")
        return _Ref(VariableRef(name.value, tuple(args)), name)

    def ref_list(self) -> list[_Ref]:
        refs = [self.ref()]
        while self.eat_punct(","):
            refs.append(self.ref())
        return refs

    def fragment(self):
        start = self.expect_keyword("fragment")
        name = self.expect_ident("fragment name")
        self.expect_punct("{")
        attrs: tuple[str, ...] = ()
        hyp_vars: list[_Ref] = []
        hyp_subset: Optional[frozenset] = None
        inputs: list[_Ref] = []
        residents: list[tuple[_Ref, dict]] = []
        seen = set()
        while not self.eat_punct("}"):
            clause = self.expect_ident("clause")
            if clause.value != "resident":
                if clause.value in seen:
                    raise _ParseError(
                        f"duplicate clause {clause.value!r}", clause
                    )
                seen.add(clause.value)
            self.expect_punct(":")
            if clause.value == "attrs":
                attrs = self.attr_list()
                self.expect_punct(";")
            elif clause.value == "hypothesis":
                hyp_vars, hyp_subset = self.hypothesis()
                self.expect_punct(";")
            elif clause.value == "input":
                inputs = self.ref_list()
                self.expect_punct(";")
            elif clause.value == "resident":
                residents.append(self.resident())
            else:
                raise _ParseError(
                    f"unknown fragment clause {clause.value!r}", clause
                )
        return (
            start,
            dict(
                name=name.value,
                attrs=attrs,
                hyp_vars=hyp_vars,
                hyp_subset=hyp_subset,
                inputs=inputs,
                residents=residents,
            ),
        )

    def hypothesis(self):
        if self.at_keyword("tuples"):
            self.next()
            self.expect_keyword("over")
            self.expect_punct("(")
            refs = [self.ref()]
            while self.eat_punct(","):
                refs.append(self.ref())
            self.expect_punct(")")
            self.expect_punct("{")
            tuples = []
            if not self.eat_punct("}"):
                while True:
                    self.expect_punct("(")
                    tup = [self.expect_ident("state label").value]
                    while self.eat_punct(","):
                        tup.append(self.expect_ident("state label").value)
                    self.expect_punct(")")
                    tuples.append(tuple(tup))
                    if self.eat_punct("}"):
                        break
                    self.expect_punct(",")
            return refs, frozenset(tuples)
        # product form: Ref in {..}, Ref in {..}
        refs = []
        sets = []
        while True:
            refs.append(self.ref())
            self.expect_keyword("in")
            sets.append(self.state_set())
            if not self.eat_punct(","):
                break
        subset = frozenset(itertools.product(*sets))
        return refs, subset

    def resident(self):
        ref = self.ref()
        self.expect_punct("{")
        parents: list[_Ref] = []
        payload = None
        table = None
        seen = set()
        while not self.eat_punct("}"):
            clause = self.expect_ident("clause")
            if clause.value in seen:
                raise _ParseError(f"duplicate clause {clause.value!r}", clause)
            seen.add(clause.value)
            self.expect_punct(":")
            if clause.value == "parents":
                if not (self.peek().kind == "punct" and self.peek().value == ";"):
                    parents = self.ref_list()
            elif clause.value == "influence":
                payload = self.payload()
            elif clause.value == "table":
                table = self.prob_list()
            else:
                raise _ParseError(
                    f"unknown resident clause {clause.value!r}", clause
                )
            self.expect_punct(";")
        if payload is None:
            raise _ParseError(
                f"resident {ref.ref} declares no influence payload", ref.token
            )
        return ref, dict(parents=parents, payload=payload, table=table)

    # -- influence payloads ----------------------------------------------

    def payload(self):
        kind = self.expect_ident("influence payload kind")
        if kind.value == "table":
            return ("table", self.prob_list())
        if kind.value == "default_table":
            spec = self.expect_ident("'default' or 'specific'")
            if spec.value not in ("default", "specific"):
                raise _ParseError(
                    f"expected 'default' or 'specific', found {spec.value!r}",
                    spec,
                )
            return ("default_table", spec.value, self.prob_list())
        if kind.value == "noisy_or":
            self.expect_keyword("links")
            links = self.link_map(self.probability)
            leak = 0.0
            if self.at_keyword("leak"):
                self.next()
                leak = self.probability()
            return ("noisy_or", links, leak)
        if kind.value in ("noisy_min", "noisy_max"):
            self.expect_keyword("cond")
            cond = self.ref()
            self.expect_punct("{")
            cases = []
            while not self.eat_punct("}"):
                self.expect_keyword("case")
                state = self.expect_ident("state label")
                self.expect_punct(":")
                self.expect_keyword("links")
                links = self.link_map(self.matrix)
                leak = None
                if self.at_keyword("leak"):
                    self.next()
                    leak = self.prob_list()
                self.expect_punct(";")
                cases.append((state.value, links, leak))
            return (kind.value, cond, cases)
        if kind.value == "sigmoid":
            self.expect_keyword("bias")
            bias = self.number()
            self.expect_keyword("weights")
            weights = self.link_map(self.number)
            return ("sigmoid", bias, weights)
        raise _ParseError(
            f"unknown influence payload kind {kind.value!r}", kind
        )

    def link_map(self, value_parser):
        self.expect_punct("{")
        entries = []
        if not self.eat_punct("}"):
            while True:
                ref = self.ref()
                self.expect_punct(":")
                entries.append((ref, value_parser()))
                if self.eat_punct("}"):
                    break
                self.expect_punct(",")
        return entries

    def matrix(self) -> tuple[tuple[float, ...], ...]:
        self.expect_punct("[")
        rows = [self.prob_list()]
        while self.eat_punct(","):
            rows.append(self.prob_list())
        self.expect_punct("]")
        return tuple(rows)


def _show(tok: Token) -> str:
    if tok.kind == "eof":
        return "end of input"
    return repr(str(tok.value))


# --- semantic assembly --------------------------------------------------

def _build_kb(varschemas, fragments) -> tuple[KnowledgeBase, list[Diagnostic]]:
    kb = KnowledgeBase()
    diagnostics: list[Diagnostic] = []

    for start, decl in varschemas:
        try:
            schema = VariableSchema(
                name=decl["name"],
                state_space=StateSpace(decl["states"], ordered=decl["ordered"]),
                attribute_names=decl["attrs"],
                combination_method=decl["method"],
                default=decl["default"],
            )
            kb.register_variable_schema(schema)
        except FragBnError as err:
            diagnostics.append(
                Diagnostic("error", start.line, start.column, str(err),
                           _code_for(err))
            )

    for start, decl in fragments:
        frag_diags = _check_refs(kb, decl)
        if frag_diags:
            diagnostics.extend(frag_diags)
            continue
        try:
            schema = _assemble_fragment(kb, decl)
            kb.register_fragment_schema(schema)
        except FragBnError as err:
            diagnostics.append(
                Diagnostic("error", start.line, start.column, str(err),
                           _code_for(err))
            )
    return kb, diagnostics


def _iter_refs(decl):
    for r in decl["hyp_vars"]:
        yield r
    for r in decl["inputs"]:
        yield r
    for ref, spec in decl["residents"]:
        yield ref
        for p in spec["parents"]:
            yield p
        payload = spec["payload"]
        if payload[0] == "noisy_or":
            for r, _ in payload[1]:
                yield r
        elif payload[0] in ("noisy_min", "noisy_max"):
            yield payload[1]
            for _, links, _ in payload[2]:
                for r, _ in links:
                    yield r
        elif payload[0] == "sigmoid":
            for r, _ in payload[2]:
                yield r


def _check_refs(kb, decl) -> list[Diagnostic]:
    diags = []
    for r in _iter_refs(decl):
        schema = kb.variable_schemas.get(r.ref.schema_name)
        if schema is None:
            diags.append(
                Diagnostic(
                    "error", r.token.line, r.token.column,
                    f"reference to undeclared variable schema "
                    f"{r.ref.schema_name!r}",
                    "E_UNRESOLVED",
                )
            )
            continue
        if len(r.ref.args) != len(schema.attribute_names):
            diags.append(
                Diagnostic(
                    "error", r.token.line, r.token.column,
                    f"reference {r.ref} has {len(r.ref.args)} arguments; "
                    f"schema {schema.name!r} declares "
                    f"{len(schema.attribute_names)}",
                    "E_UNRESOLVED",
                )
            )
            continue
        for kind, value in r.ref.args:
            if kind == "attr" and value not in decl["attrs"]:
                diags.append(
                    Diagnostic(
                        "error", r.token.line, r.token.column,
                        f"unknown fragment attribute {value!r} in {r.ref}",
                        "E_UNRESOLVED",
                    )
                )
    return diags


def _assemble_payload(payload, card: int):
    kind = payload[0]
    if kind == "table":
        return TablePayload(payload[1])
    if kind == "default_table":
        return DefaultTablePayload(payload[2], payload[1])
    if kind == "noisy_or":
        return NoisyOrPayload(
            links=tuple((r.ref, p) for r, p in payload[1]), leak=payload[2]
        )
    if kind in ("noisy_min", "noisy_max"):
        cls = NoisyMinPayload if kind == "noisy_min" else NoisyMaxPayload
        # an omitted leak is the identity contribution: point mass on the
        # top state for MIN, on the bottom state for MAX
        identity = [0.0] * card
        identity[0 if kind == "noisy_max" else card - 1] = 1.0
        cases = []
        for state, links, leak in payload[2]:
            cases.append(
                (
                    state,
                    MinCase(
                        links=tuple((r.ref, m) for r, m in links),
                        leak=tuple(identity) if leak is None else leak,
                    ),
                )
            )
        return cls(cond=payload[1].ref, cases=tuple(cases))
    return SigmoidPayload(
        bias=payload[1], weights=tuple((r.ref, w) for r, w in payload[2])
    )


def _assemble_fragment(kb: KnowledgeBase, decl) -> FragmentSchema:
    residents = {}
    for ref, spec in decl["residents"]:
        card = kb.variable(ref.ref.schema_name).state_space.card
        residents[ref.ref] = ResidentSpec(
            parents=tuple(p.ref for p in spec["parents"]),
            influence=_assemble_payload(spec["payload"], card),
            table=spec["table"],
        )
    hyp_vars = tuple(r.ref for r in decl["hyp_vars"])
    inputs = frozenset(r.ref for r in decl["inputs"]) | frozenset(hyp_vars)
    subset = decl["hyp_subset"] if decl["hyp_subset"] is not None else frozenset({()})
    return FragmentSchema(
        name=decl["name"],
        attrs=decl["attrs"],
        residents=residents,
        inputs=inputs,
        hypothesis_vars=hyp_vars,
        hypothesized_subset=subset,
    )


_CODE_BY_ERROR = {
    "DuplicateName": "E_DUPLICATE",
    "InvalidDistribution": "E_DISTRIBUTION",
    "UnresolvedVariable": "E_UNRESOLVED",
    "CyclicFragmentGraph": "E_CYCLE",
    "InputNotRoot": "E_INPUT_NOT_ROOT",
    "EmptyResidents": "E_EMPTY_RESIDENTS",
    "BadHypothesisSubset": "E_BAD_HYPOTHESIS",
    "BadInfluencePayload": "E_PAYLOAD",
}


def _code_for(err: FragBnError) -> str:
    return _CODE_BY_ERROR.get(type(err).__name__, "E_SEMANTIC")


def parse_kb(text: str) -> ParseResult:
    """Parse a `.fkb` document.

    Returns a ParseResult: a KnowledgeBase when there are no errors, else
    the positioned diagnostics.  Never raises on malformed input.
    """
    try:
        parser = _Parser(text)
        varschemas, fragments = parser.document()
    except _ParseError as err:
        return ParseResult(None, [err.diagnostic])
    except Exception as err:  # fuzz guard: any failure becomes a diagnostic
        return ParseResult(
            None, [Diagnostic("error", 1, 1, f"unparseable input: {err}", "E_SYNTAX")]
        )

    try:
        kb, diagnostics = _build_kb(varschemas, fragments)
    except Exception as err:
        return ParseResult(
            None, [Diagnostic("error", 1, 1, f"invalid document: {err}", "E_SEMANTIC")]
        )
    if diagnostics:
        return ParseResult(None, diagnostics)
    return ParseResult(kb, [])


# --- canonical serialization -------------------------------------------

def _fmt_float(value: float) -> str:
    return f"{value:.17g}"


def _fmt_prob_list(values) -> str:
    return "[" + ", ".join(_fmt_float(v) for v in values) + "]"


def _fmt_arg(arg) -> str:
    kind, value = arg
    if kind == "attr":
        return str(value)
    if isinstance(value, int):
        return str(value)
    return '"' + str(value).replace("\\", "\\\\").replace('"', '\\"') + '"'


def _fmt_ref(ref: VariableRef) -> str:
    if not ref.args:
        return ref.schema_name
    return f"{ref.schema_name}({', '.join(_fmt_arg(a) for a in ref.args)})"


def _fmt_hypothesis(kb: KnowledgeBase, frag: FragmentSchema) -> str:
    hvars = frag.hypothesis_vars
    subset = frag.hypothesized_subset
    state_lists = [
        kb.variable(h.schema_name).state_space.states for h in hvars
    ]
    projections = [
        sorted({tup[i] for tup in subset}, key=state_lists[i].index)
        for i in range(len(hvars))
    ]
    product = set(itertools.product(*projections))
    if product == set(subset):
        parts = [
            f"{_fmt_ref(h)} in {{{', '.join(projections[i])}}}"
            for i, h in enumerate(hvars)
        ]
        return "hypothesis: " + ", ".join(parts) + ";"
    ordered = sorted(subset, key=lambda tup: tuple(
        state_lists[i].index(s) for i, s in enumerate(tup)
    ))
    refs = ", ".join(_fmt_ref(h) for h in hvars)
    tuples = ", ".join("(" + ", ".join(tup) + ")" for tup in ordered)
    return f"hypothesis: tuples over ({refs}) {{{tuples}}};"


def _fmt_payload(payload) -> str:
    if isinstance(payload, TablePayload):
        return f"table {_fmt_prob_list(payload.values)}"
    if isinstance(payload, DefaultTablePayload):
        return f"default_table {payload.specificity} {_fmt_prob_list(payload.values)}"
    if isinstance(payload, NoisyOrPayload):
        links = ", ".join(
            f"{_fmt_ref(r)}: {_fmt_float(p)}" for r, p in payload.links
        )
        return f"noisy_or links {{{links}}} leak {_fmt_float(payload.leak)}"
    if isinstance(payload, NoisyMinPayload):  # covers NoisyMaxPayload
        kind = "noisy_max" if isinstance(payload, NoisyMaxPayload) else "noisy_min"
        cases = []
        for state, case in payload.cases:
            links = ", ".join(
                f"{_fmt_ref(r)}: ["
                + ", ".join(_fmt_prob_list(row) for row in matrix)
                + "]"
                for r, matrix in case.links
            )
            cases.append(
                f"    case {state}: links {{{links}}} "
                f"leak {_fmt_prob_list(case.leak)};"
            )
        body = "\n".join(cases)
        return f"{kind} cond {_fmt_ref(payload.cond)} {{\n{body}\n    }}"
    weights = ", ".join(
        f"{_fmt_ref(r)}: {_fmt_float(w)}" for r, w in payload.weights
    )
    return f"sigmoid bias {_fmt_float(payload.bias)} weights {{{weights}}}"


def serialize_kb(kb: KnowledgeBase) -> str:
    """Canonical `.fkb` text: header, then schemas sorted by name."""
    lines = [HEADER]
    for name in sorted(kb.variable_schemas):
        schema = kb.variable_schemas[name]
        lines.append(f"varschema {schema.name} {{")
        if schema.attribute_names:
            lines.append(f"  attrs: ({', '.join(schema.attribute_names)});")
        ordered = " ordered" if schema.state_space.ordered else ""
        lines.append(
            "  states: {" + ", ".join(schema.state_space.states) + "}" + ordered + ";"
        )
        lines.append(f"  method: {schema.combination_method};")
        if schema.default is None:
            lines.append("  default: uniform;")
        else:
            lines.append(f"  default: {_fmt_prob_list(schema.default)};")
        lines.append("}")
    for name in sorted(kb.fragment_schemas):
        frag = kb.fragment_schemas[name]
        lines.append(f"fragment {frag.name} {{")
        if frag.attrs:
            lines.append(f"  attrs: ({', '.join(frag.attrs)});")
        if frag.hypothesis_vars:
            lines.append("  " + _fmt_hypothesis(kb, frag))
        plain_inputs = sorted(
            frag.inputs - set(frag.hypothesis_vars), key=VariableRef.sort_key
        )
        if plain_inputs:
            lines.append(
                "  input: " + ", ".join(_fmt_ref(r) for r in plain_inputs) + ";"
            )
        for ref in sorted(frag.residents, key=VariableRef.sort_key):
            spec = frag.residents[ref]
            lines.append(f"  resident: {_fmt_ref(ref)} {{")
            if spec.parents:
                lines.append(
                    "    parents: "
                    + ", ".join(_fmt_ref(p) for p in spec.parents)
                    + ";"
                )
            lines.append(f"    influence: {_fmt_payload(spec.influence)};")
            if spec.table is not None:
                lines.append(f"    table: {_fmt_prob_list(spec.table)};")
            lines.append("  }")
        lines.append("}")
    return "\n".join(lines) + "\n"
