"""Bayesian network fragments: modular probabilistic knowledge bases,
fragment combination, and validating exact inference."""

from importlib import resources

from .combine import (
    BayesNet,
    CompoundFragment,
    ConsistencyReport,
    MultiFragment,
    bn_from_text,
    bn_to_text,
    check_global_consistency,
    combine_compound,
    combine_multi,
    graph_union,
    materialize_bn,
)
from .dsl import Diagnostic, ParseResult, parse_kb, serialize_kb
from .infer import (
    Factor,
    Query,
    close_with_defaults,
    d_separated,
    eliminate,
    format_posterior,
    joint_enumerate,
    posterior_from_joint,
    query_complete,
)
from .influence import CombinationResult, check_enabling, combine
from .instantiate import FragmentInstance, VariableInstance, Workspace
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
from .partition import (
    HypothesisPartition,
    Relation,
    classify,
    hypothesis_variable_consistent,
    refine,
)

__version__ = "0.1.0"


def demo_kb_path() -> str:
    """Filesystem path of the shipped SA6 demo knowledge base."""
    return str(resources.files("fragbn").joinpath("data/sa6_demo.fkb"))


def load_demo_kb() -> KnowledgeBase:
    """Parse and return the shipped SA6 demo knowledge base."""
    text = resources.files("fragbn").joinpath("data/sa6_demo.fkb").read_text()
    result = parse_kb(text)
    assert result.ok, [d.format() for d in result.diagnostics]
    return result.kb
