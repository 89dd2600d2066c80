"""Exception taxonomy shared across the package.

Every error raised on purpose derives from AimerError so the CLI can map it
to a stable, machine-parsable error class on stderr.
"""


class AimerError(Exception):
    code = "error"


class ValidationError(AimerError):
    """Bad input values: NaNs, constant response, empty selection, ..."""

    code = "validation-error"


class DimensionError(AimerError):
    """Shape or size mismatch: ell > p, d > rank, length mismatch, ..."""

    code = "dimension-error"


class ConvergenceError(AimerError):
    """An iterative solver hit its sweep cap before meeting tolerance."""

    code = "convergence-error"


class ParseError(AimerError):
    """Malformed input file; message carries line/column coordinates."""

    code = "parse-error"
