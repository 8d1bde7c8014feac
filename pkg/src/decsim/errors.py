"""Exception types shared across the package.

Plain invalid arguments raise the builtin ValueError; everything with a
stable, user-facing meaning gets its own class so the CLI can map it to an
exit code.
"""


class DecsimError(Exception):
    """Base class for all package-specific errors."""


class MeshFormatError(DecsimError):
    """Input file uses a feature outside the supported OBJ subset."""


class MalformedInputError(DecsimError):
    """Input file is syntactically OBJ but internally inconsistent."""


class NotWellCenteredError(DecsimError):
    """Circumcentric dual requested on a mesh with an obtuse or right triangle."""

    def __init__(self, triangle_index, message=None):
        self.triangle_index = triangle_index
        super().__init__(
            message or f"triangle {triangle_index} is not strictly acute; "
            "circumcentric dual would not be well-centered"
        )


class InvalidDegreeError(DecsimError, ValueError):
    """Operator requested for a form degree it is not defined on."""


class SingularOperatorError(DecsimError):
    """Forward operator cannot be inverted."""


class ParseError(DecsimError):
    """Equation-source syntax error, with 1-based line/column."""

    def __init__(self, message, line, column):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")


class ModelTypeError(DecsimError):
    """Form-type conflict discovered during inference or unification."""


class PatternError(DecsimError):
    """Wiring pattern is structurally invalid or does not fit its components."""


class JunctionTypeError(ModelTypeError):
    """Variables wired to one junction have incompatible types."""

    def __init__(self, junction, message=None):
        self.junction = junction
        super().__init__(message or f"type conflict at junction {junction!r}")


class NotCompilableError(DecsimError):
    """Model failed structural validation; carries the full report."""

    def __init__(self, report):
        self.report = report
        lines = "; ".join(v.message for v in report.violations)
        super().__init__(f"model is not compilable: {lines}")


class CyclicDependencyError(DecsimError):
    """Scheduling reached a fixpoint with operators left over."""

    def __init__(self, cycle):
        self.cycle = list(cycle)
        super().__init__("cyclic dependency: " + " -> ".join(self.cycle))


class MissingBindingError(DecsimError):
    """Schedule references an operator with no registered kernel."""

    def __init__(self, operator):
        self.operator = operator
        super().__init__(f"no binding for operator {operator!r}")


class BindingTypeError(DecsimError):
    """Kernel signature does not line up with the variables it is applied to."""


class DivergedError(DecsimError):
    """Time integration produced a non-finite or out-of-range value."""

    def __init__(self, step, variable, value):
        self.step = step
        self.variable = variable
        self.value = value
        super().__init__(
            f"integration diverged at step {step} in variable {variable!r} "
            f"(|value| = {value!r})"
        )
