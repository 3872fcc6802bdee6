"""Exception types shared across the package."""


class CapacityError(RuntimeError):
    """A computation would exceed its configured memory or enumeration budget."""

    def __init__(self, message, required=None, budget=None):
        super().__init__(message)
        self.required = required
        self.budget = budget


class BudgetExceeded(RuntimeError):
    """An iteration ran past its step budget before terminating."""

    def __init__(self, message, steps):
        super().__init__(message)
        self.steps = steps
