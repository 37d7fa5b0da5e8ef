"""Exception hierarchy shared by all evlign modules.

The CLI maps ``EvlignError`` subclasses to exit code 2 (data/validation
problems); anything argparse rejects exits with code 1.
"""


class EvlignError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(EvlignError):
    """A file could not be decoded; message names the offending line/offset."""


class ValidationError(EvlignError):
    """Data violates a structural invariant (bounds, ordering, polarity)."""


class ParameterError(EvlignError):
    """An operation was called with an out-of-contract parameter."""


class ShapeError(EvlignError):
    """Tensor dimensions are inconsistent."""


class NumericError(EvlignError):
    """Non-finite values or degenerate quantities (zero norms, zero distances)."""


class ProtocolError(EvlignError):
    """Input does not satisfy a dataset-protocol precondition."""


class MetricError(EvlignError):
    """Landmark metric could not be computed (degenerate normalization, mismatched ids)."""


class TrainingError(EvlignError):
    """Toy training diverged (non-finite loss)."""
