"""Exception hierarchy shared by all netflow_id modules."""


class NetflowError(Exception):
    """Base class for errors raised by this package."""


class GraphFormatError(NetflowError, ValueError):
    """Malformed edge-list input."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SolverError(NetflowError):
    """Base class for numerical integration failures."""


class StiffnessError(SolverError):
    """Adaptive step size fell below the configured minimum."""


class StepBudgetError(SolverError):
    """Integration exceeded its step budget."""


class DivergenceError(SolverError):
    """State became non-finite."""


class TrainingError(NetflowError):
    """Training aborted (non-finite loss or exhausted budget)."""


class ConfigError(NetflowError, ValueError):
    """Invalid experiment configuration; carries every violation found."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
