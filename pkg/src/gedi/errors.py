"""Exception types raised across the toolkit.

Every error derives from :class:`GediError` so callers (and the CLI) can
catch the whole family at once; most also derive from the matching builtin.
"""

from __future__ import annotations


class GediError(Exception):
    """Base class for all toolkit errors."""


class SpecError(GediError, ValueError):
    """Malformed settings for a kernel, constraint or learner."""


class NonFiniteInput(GediError, ValueError):
    pass


class EmptyInput(GediError, ValueError):
    pass


class LengthMismatch(GediError, ValueError):
    pass


class ZeroVariance(GediError, ValueError):
    pass


class RankDeficientKernel(GediError, ValueError):
    """The centered kernel matrix does not have full column rank."""

    def __init__(self, rank: int, order: int, detail: str = ""):
        self.rank = rank
        self.order = order
        msg = f"kernel matrix has numerical rank {rank} < order {order}"
        if detail:
            msg = f"{msg} ({detail})"
        super().__init__(msg)


class SingleGroup(GediError, ValueError):
    pass


class SingleClass(GediError, ValueError):
    pass


class EmptyGroup(GediError, ValueError):
    pass


class DegenerateBinning(GediError, ValueError):
    pass


class Infeasible(GediError, RuntimeError):
    pass


class MaxIterations(GediError, RuntimeError):
    pass


class RepairFailed(GediError, RuntimeError):
    """Rounding a relaxed classification projection left a violation.

    The best binary vector found is attached as ``z`` together with its
    total ``violation`` so callers can still inspect it.
    """

    def __init__(self, message: str, z=None, violation: float = float("nan")):
        super().__init__(message)
        self.z = z
        self.violation = violation


class NonDifferentiableLearner(GediError, ValueError):
    pass


class DegenerateLabels(GediError, ValueError):
    pass


class SchemaMismatch(GediError, ValueError):
    pass


class MissingColumn(GediError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its argument otherwise
        return str(self.args[0]) if self.args else ""


class ParseError(GediError, ValueError):
    def __init__(self, message: str, line: int | None = None, column: str | None = None):
        self.line = line
        self.column = column
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class TooFewRows(GediError, ValueError):
    pass
