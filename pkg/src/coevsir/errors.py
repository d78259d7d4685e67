"""Exception hierarchy shared by every layer of the package."""


class CoevsirError(Exception):
    """Base class for all package errors."""


class ConfigError(CoevsirError, ValueError):
    """Invalid or incomplete scenario configuration."""


class ContractError(CoevsirError, ValueError):
    """An argument violates a documented precondition."""


class DomainError(CoevsirError, ValueError):
    """An argument lies outside the mathematical domain of the operation."""


class NumericalInstabilityError(CoevsirError, ArithmeticError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class EventBudgetExceeded(CoevsirError, RuntimeError):
    """The simulator hit its hard cap on the number of processed events."""

    def __init__(self, budget):
        super().__init__(f"event budget exhausted: more than {budget} events "
                         f"(raise event_budget in [sim] to allow longer runs)")
        self.budget = budget
