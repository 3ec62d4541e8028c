"""Exception types raised across the package."""


class MonosilError(Exception):
    """Base class for all package errors."""


class DegenerateConfiguration(MonosilError):
    pass


class PointAtInfinity(MonosilError):
    pass


class DegenerateGrid(MonosilError):
    pass


class SelfIntersecting(MonosilError):
    pass


class OffsetDegenerate(MonosilError):
    pass


class NonBinaryInput(MonosilError):
    pass


class NoLanePixels(MonosilError):
    def __init__(self, side):
        super().__init__(f"no lane pixels on the {side} side")
        self.side = side


class InsufficientSupport(MonosilError):
    pass


class IllConditioned(MonosilError):
    pass


class BothLanesLost(MonosilError):
    pass


class InvalidLane(MonosilError):
    pass


class NonFiniteState(MonosilError):
    pass


class HorizonMismatch(MonosilError):
    pass


class SingularHessian(MonosilError):
    pass


class ConfigError(MonosilError):
    pass
