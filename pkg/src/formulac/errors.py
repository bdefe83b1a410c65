"""Exception hierarchy shared by every compiler stage."""


class FormulaError(Exception):
    """Base class. ``span`` is ``(line, column)`` when a source position is known."""

    def __init__(self, message, span=None):
        self.message = message
        self.span = span
        super().__init__(self.__str__())

    def __str__(self):
        if self.span is None:
            return self.message
        line, col = self.span
        return f"{line}:{col}: {self.message}"


class ParseError(FormulaError):
    def __init__(self, message, span=None, expected=()):
        self.expected = tuple(sorted(set(expected)))
        if self.expected:
            message = f"{message} (expected one of: {', '.join(self.expected)})"
        super().__init__(message, span)


class NameResolutionError(FormulaError):
    pass


class DuplicateNameError(NameResolutionError):
    pass


class UnresolvedNameError(NameResolutionError):
    pass


class TypeCheckError(FormulaError):
    pass


class ShapeError(TypeCheckError):
    pass


class DifferentiationError(FormulaError):
    pass


class LoweringError(FormulaError):
    """A node reached code generation that earlier passes should have removed."""


class UnrollBudgetError(LoweringError):
    pass


class ExecutionError(FormulaError):
    pass


class BindingError(ExecutionError):
    pass


class SingularMatrixError(ExecutionError):
    pass


class NonFiniteError(ExecutionError):
    pass


class DiscontinuityError(ExecutionError):
    pass
