"""Exception hierarchy shared across the package."""


class SpinnetError(Exception):
    """Base class for all errors raised by spinnet."""


class ConfigError(SpinnetError):
    """A declarative network/experiment description failed validation."""


class EmptyRoute(ConfigError):
    pass


class UnknownQueue(ConfigError):
    pass


class UnknownRoute(ConfigError):
    pass


class NonPositiveRate(ConfigError):
    pass


class KernelNotStochastic(ConfigError):
    """A gamma/delta discipline kernel row does not sum to one, or a
    simulation visited an occupancy beyond the validated table depth."""


class ExplosionGuard(SpinnetError):
    """An enumeration over S(n) would exceed the configured state cap."""


class UnstableNetwork(SpinnetError):
    """Operation requires the ergodicity condition and the network fails it."""


class ZeroCount(SpinnetError):
    pass


class InconsistentInitialState(SpinnetError):
    pass


class EventBudgetExceeded(SpinnetError):
    pass


class AtomicSizeLaw(SpinnetError):
    """A size law with atoms was handed to a flow-level model."""


class StarvedRoute(SpinnetError):
    """Allocation gave zero rate to a route with documents in transfer."""


class SimultaneityDetected(SpinnetError):
    """Two event times coincided within tolerance; the model forbids ties."""


class EmptyWindow(SpinnetError):
    pass


class TooFewBatches(SpinnetError):
    pass
