"""Exception hierarchy shared by all fwdflat modules."""


class FwdflatError(Exception):
    """Base class for all errors raised by this package."""


class ExprSyntaxError(FwdflatError):
    """An expression string does not parse, or uses an unsupported construct."""


class PoleAtPoint(FwdflatError):
    """Exact evaluation hit a vanishing denominator."""


class NonRationalTrigArgument(FwdflatError):
    """sin/cos cannot be evaluated exactly unless the argument is bound to 0."""


class InternalInconsistency(FwdflatError):
    """The symbolic zero test and the numeric cross-check disagree.

    This signals a normalization gap in the expression kernel, never a
    user error, and invalidates any rank decision built on top of it.
    """


class InversionFailed(FwdflatError):
    """No invertible adapted chart could be constructed automatically.

    Supply an explicit complement (the m extra coordinate functions) and,
    if needed, the inverse chart map.
    """


class NotShiftable(FwdflatError):
    """A 1-form scheduled for a backward shift has residual dependence on
    the complement coordinates.  This indicates an internal sequencing bug."""


class NonConstantDimension(FwdflatError):
    """A generically computed solution space has no well-defined dimension."""


class ShiftBudgetExceeded(FwdflatError):
    """A verification needed more forward shifts than the configured cap."""


class SystemFileError(FwdflatError):
    """A system definition file is malformed or inconsistent."""
