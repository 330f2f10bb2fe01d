from typing import List, Optional


class LatencyPtasError(Exception):
    """Base class for every error raised by the solver toolkit."""


class InstanceFormatError(LatencyPtasError):
    def __init__(self, message: str, line_no: Optional[int] = None):
        self.line_no = line_no
        where = f"line {line_no}: " if line_no is not None else ""
        super().__init__(f"{where}{message}")


class InvalidInstanceError(LatencyPtasError):
    pass


class ParameterError(LatencyPtasError):
    pass


class BudgetExceededError(LatencyPtasError):
    def __init__(self, module: str, cap_name: str, cap: int, detail: str = ""):
        self.module = module
        self.cap_name = cap_name
        self.cap = cap
        msg = f"{module}: {cap_name} budget of {cap} exceeded"
        super().__init__(f"{msg} ({detail})" if detail else msg)


class InfeasibleError(LatencyPtasError):
    pass


class NotFoundError(LatencyPtasError):
    def __init__(self, message: str, trials: Optional[List[str]] = None):
        self.trials = trials or []
        super().__init__(message)


class InvariantViolation(LatencyPtasError):
    pass
