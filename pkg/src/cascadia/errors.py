"""Exception hierarchy shared by the engine, the scenario loader and the CLI."""


class CascadiaError(Exception):
    """Base class for every error raised by this package."""


class DefinitionError(CascadiaError):
    """An automaton or network definition is malformed."""


class ConfigurationError(CascadiaError):
    """Inputs or wiring supplied at run time do not match the definition."""


class NumericError(CascadiaError):
    """A flow produced a non-finite value."""

    def __init__(self, message, node=None, mode=None, variable=None, step=None):
        super().__init__(message)
        self.node = node
        self.mode = mode
        self.variable = variable
        self.step = step


class ZenoError(CascadiaError):
    """An automaton kept jumping on too many successive steps."""

    def __init__(self, node, step, count):
        super().__init__(
            f"Zeno abort: node {node!r} jumped on {count} consecutive steps (step {step})"
        )
        self.node = node
        self.step = step
        self.count = count


class ValidationError(CascadiaError):
    """A scenario or parameter set violates an invariant.

    ``path`` is the dotted field path, e.g. ``tank.V_0``.
    """

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
