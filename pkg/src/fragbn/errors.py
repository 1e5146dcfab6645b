"""Exception taxonomy for the fragment library.

Every domain error raised by this package derives from FragBnError so
callers (notably the CLI) can separate user errors from genuine bugs.
"""


class FragBnError(Exception):
    """Base class for all errors raised by fragbn."""


# --- knowledge base registration ---------------------------------------

class DuplicateName(FragBnError):
    """A schema with this name is already registered with different content."""


class InvalidDistribution(FragBnError):
    """A probability vector does not normalize or has the wrong arity."""


class UnresolvedVariable(FragBnError):
    """A variable reference does not resolve to a registered schema or attribute."""


class CyclicFragmentGraph(FragBnError):
    """A fragment graph contains a directed cycle."""


class InputNotRoot(FragBnError):
    """A declared input variable has incoming arcs."""


class EmptyResidents(FragBnError):
    """A fragment declares no resident variables."""


class BadHypothesisSubset(FragBnError):
    """The hypothesized subset is empty, ill-typed, or over non-input variables."""


class BadInfluencePayload(FragBnError):
    """An influence payload fails its arity or normalization checks."""


# --- instantiation ------------------------------------------------------

class UnknownSchema(FragBnError):
    """No fragment schema with this name is registered."""


class IncompleteBinding(FragBnError):
    """A binding does not cover every identifying attribute of the schema."""


class UnknownVariable(FragBnError):
    """A variable instance is not present in the workspace or network."""


class InvalidState(FragBnError):
    """A state label is not in the variable's state space."""


# --- combination --------------------------------------------------------

class CyclicUnion(FragBnError):
    """The union of fragment graphs contains a directed cycle."""

    def __init__(self, cycle):
        self.cycle = list(cycle)
        names = " -> ".join(str(n) for n in self.cycle)
        super().__init__(f"fragment graph union contains a cycle: {names}")


class InconsistentSet(FragBnError):
    """A fragment set fails the global consistency checks for an element."""

    def __init__(self, report):
        self.report = report
        super().__init__(report.format())


class CoverageGap(FragBnError):
    """A resident variable has no covering fragment for some hypothesis element."""

    def __init__(self, variable, element):
        self.variable = variable
        self.element = element
        super().__init__(
            f"variable {variable} is resident in no fragment covering element "
            f"{sorted(element)} and its state space has no NA state"
        )


class EnablingViolation(FragBnError):
    """An influence combination method's enabling conditions are not met."""


class ZeroColumn(FragBnError):
    """A conditional table column sums to zero and cannot be normalized."""


class MissingPrior(FragBnError):
    """No prior distribution is available for a root variable."""


class NAViolation(FragBnError):
    """Positive probability on a non-NA state where NA is mandated."""


# --- inference ----------------------------------------------------------

class UnknownNode(FragBnError):
    """A node named in a query is not part of the network."""


class ZeroEvidence(FragBnError):
    """The supplied evidence has probability zero under the model."""


class TooLarge(FragBnError):
    """The joint state space exceeds the enumeration guard."""
