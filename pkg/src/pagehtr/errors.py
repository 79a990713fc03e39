"""Exception types shared across the toolkit."""


class ValidationError(ValueError):
    """Input violates a documented precondition or type invariant."""


class SearchSpaceTooLarge(ValidationError):
    """Exhaustive enumeration refused because the path count exceeds the bound."""

    def __init__(self, paths: int, bound: int):
        super().__init__(f"exhaustive decode would enumerate {paths} paths; bound is {bound}")
        self.paths = paths
        self.bound = bound


class InvariantError(RuntimeError):
    """An internal consistency check failed."""


class StageError(RuntimeError):
    """A pipeline stage failed on a specific input."""

    def __init__(self, stage: str, source: str, cause: BaseException):
        super().__init__(f"[{stage}] {source}: {cause}")
        self.stage = stage
        self.source = source
        self.cause = cause
