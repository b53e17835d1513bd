"""Exception hierarchy shared across the package."""


class BubbleKitError(Exception):
    pass


class RegimeError(BubbleKitError, ValueError):
    """Quantity undefined for the parameter regime it was asked for."""


class DivergentMomentError(RegimeError):
    """A moment that is infinite was requested as a finite number."""


class NoSignChangeError(BubbleKitError):
    pass


class ConvergenceError(BubbleKitError):
    pass


class ValidationError(BubbleKitError, ValueError):
    pass
