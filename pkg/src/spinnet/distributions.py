"""Document-size laws, the equilibrium transform, and c-scale discretization.

Continuous laws model limit document sizes; discrete laws (integer support,
at least 1) model prelimit packet counts. ``discretize(law, c)`` connects the
two: it draws the continuous size, multiplies by c and rounds randomly so the
mean is exact up to a quantified min-1 correction. ``equilibrium(law)`` is the
size-biased excess law whose CDF integrates the tail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Mapping

from scipy.optimize import brentq

from .errors import ConfigError

_STD_NORMAL = NormalDist()


class Law:
    """Shared sampling plumbing; subclasses give mean/tail/inverse CDF."""

    kind: str = ""
    integer_support: bool = False
    is_non_atomic: bool = False

    def mean(self) -> float:
        raise NotImplementedError

    def tail(self, z: float) -> float:
        """P(X >= z)."""
        raise NotImplementedError

    def sample_with_uniform(self, u: float, aux: float | None = None):
        raise NotImplementedError

    def sample(self, rng):
        return self.sample_with_uniform(rng.random())

    def cdf(self, z: float) -> float:
        # For non-atomic laws P(X >= z) = P(X > z), so this is exact.
        return 1.0 - self.tail(z)


def _check_u(u: float) -> float:
    if not (0.0 <= u < 1.0):
        raise ValueError(f"uniform draw {u!r} outside [0, 1)")
    return u


# ---------------------------------------------------------------------------
# Continuous size laws


class ContinuousLaw(Law):
    is_non_atomic = True

    def integrated_tail(self, y: float) -> float:
        """Integral of P(X >= z) over [0, y], closed form per kind."""
        raise NotImplementedError


@dataclass(frozen=True)
class Exponential(ContinuousLaw):
    rate: float
    kind = "exponential"

    def __post_init__(self):
        if not (self.rate > 0):
            raise ConfigError("exponential rate must be positive")

    def mean(self):
        return 1.0 / self.rate

    def tail(self, z):
        return 1.0 if z <= 0 else math.exp(-self.rate * z)

    def integrated_tail(self, y):
        if y <= 0:
            return 0.0
        return -math.expm1(-self.rate * y) / self.rate

    def sample_with_uniform(self, u, aux=None):
        return -math.log1p(-_check_u(u)) / self.rate


@dataclass(frozen=True)
class Uniform(ContinuousLaw):
    lo: float
    hi: float
    kind = "uniform"

    def __post_init__(self):
        if not (0 <= self.lo < self.hi):
            raise ConfigError("uniform needs 0 <= lo < hi")

    def mean(self):
        return 0.5 * (self.lo + self.hi)

    def tail(self, z):
        if z <= self.lo:
            return 1.0
        if z >= self.hi:
            return 0.0
        return (self.hi - z) / (self.hi - self.lo)

    def integrated_tail(self, y):
        if y <= self.lo:
            return max(0.0, y)
        span = self.hi - self.lo
        if y >= self.hi:
            return self.lo + 0.5 * span
        t = y - self.lo
        return self.lo + t - t * t / (2.0 * span)

    def sample_with_uniform(self, u, aux=None):
        return self.lo + _check_u(u) * (self.hi - self.lo)


@dataclass(frozen=True)
class Pareto(ContinuousLaw):
    """Type-I Pareto on [scale, inf); shape > 1 keeps the mean finite."""

    shape: float
    scale: float
    kind = "pareto"

    def __post_init__(self):
        if not (self.shape > 1):
            raise ConfigError("pareto shape must exceed 1 for a finite mean")
        if not (self.scale > 0):
            raise ConfigError("pareto scale must be positive")

    def mean(self):
        return self.scale * self.shape / (self.shape - 1.0)

    def tail(self, z):
        if z <= self.scale:
            return 1.0
        return (self.scale / z) ** self.shape

    def integrated_tail(self, y):
        if y <= self.scale:
            return max(0.0, y)
        a, s = self.shape, self.scale
        return s + s / (a - 1.0) * (1.0 - (s / y) ** (a - 1.0))

    def sample_with_uniform(self, u, aux=None):
        return self.scale * (1.0 - _check_u(u)) ** (-1.0 / self.shape)


def pareto_with_mean(shape: float, mean: float) -> Pareto:
    """Pareto with given shape and mean: scale = mean (shape-1)/shape."""
    return Pareto(shape, mean * (shape - 1.0) / shape)


@dataclass(frozen=True)
class HyperExponential(ContinuousLaw):
    weights: tuple[float, ...]
    rates: tuple[float, ...]
    kind = "hyperexponential"

    def __post_init__(self):
        if len(self.weights) != len(self.rates) or not self.weights:
            raise ConfigError("hyperexponential needs matching weights and rates")
        if any(w <= 0 for w in self.weights) or any(r <= 0 for r in self.rates):
            raise ConfigError("hyperexponential weights and rates must be positive")
        if abs(math.fsum(self.weights) - 1.0) > 1e-12:
            raise ConfigError("hyperexponential weights must sum to 1")

    def mean(self):
        return math.fsum(w / r for w, r in zip(self.weights, self.rates))

    def tail(self, z):
        if z <= 0:
            return 1.0
        return math.fsum(w * math.exp(-r * z) for w, r in zip(self.weights, self.rates))

    def integrated_tail(self, y):
        if y <= 0:
            return 0.0
        return math.fsum(
            -w * math.expm1(-r * y) / r for w, r in zip(self.weights, self.rates)
        )

    def sample_with_uniform(self, u, aux=None):
        # True inverse CDF of the mixture (monotone), found numerically.
        u = _check_u(u)
        if u <= 0.0:
            return 0.0
        hi = self.mean()
        while self.cdf(hi) < u:
            hi *= 2.0
        return brentq(lambda x: self.cdf(x) - u, 0.0, hi, xtol=1e-15, rtol=1e-14)


@dataclass(frozen=True)
class LogNormal(ContinuousLaw):
    """Parameters of the underlying normal (log-scale mu, sigma)."""

    mu: float
    sigma: float
    kind = "lognormal"

    def __post_init__(self):
        if not (self.sigma > 0):
            raise ConfigError("lognormal sigma must be positive")

    def mean(self):
        return math.exp(self.mu + 0.5 * self.sigma**2)

    def tail(self, z):
        if z <= 0:
            return 1.0
        return 1.0 - _STD_NORMAL.cdf((math.log(z) - self.mu) / self.sigma)

    def integrated_tail(self, y):
        if y <= 0:
            return 0.0
        u = (math.log(y) - self.mu) / self.sigma
        return y * (1.0 - _STD_NORMAL.cdf(u)) + self.mean() * _STD_NORMAL.cdf(u - self.sigma)

    def sample_with_uniform(self, u, aux=None):
        u = _check_u(u)
        if u <= 0.0:
            return 0.0
        return math.exp(self.mu + self.sigma * _STD_NORMAL.inv_cdf(u))


@dataclass(frozen=True)
class Deterministic(Law):
    """Point mass: atomic, so flow-level models reject it; the packet model
    accepts it when the value is a positive integer."""

    value: float
    kind = "deterministic"
    is_non_atomic = False

    def __post_init__(self):
        if not (self.value > 0):
            raise ConfigError("deterministic size must be positive")

    @property
    def integer_support(self):  # type: ignore[override]
        return float(self.value).is_integer()

    def mean(self):
        return float(self.value)

    def tail(self, z):
        return 1.0 if z <= self.value else 0.0

    def integrated_tail(self, y):
        return min(max(y, 0.0), self.value)

    def sample_with_uniform(self, u, aux=None):
        _check_u(u)
        return int(self.value) if self.integer_support else self.value


# ---------------------------------------------------------------------------
# Discrete size laws (integer support >= 1)


class DiscreteLaw(Law):
    integer_support = True
    is_non_atomic = False

    def cumulative_tail(self, y: int) -> float:
        """Sum of P(X >= z) for z = 1..y."""
        raise NotImplementedError

    def cdf(self, z):
        return 1.0 - self.tail(math.floor(z) + 1)

    def pmf(self, k: int) -> float:
        if k < 1:
            return 0.0
        return self.tail(k) - self.tail(k + 1)


@dataclass(frozen=True)
class Geometric(DiscreteLaw):
    """P(X=k) = p (1-p)^(k-1) on {1, 2, ...}."""

    p: float
    kind = "geometric"

    def __post_init__(self):
        if not (0 < self.p <= 1):
            raise ConfigError("geometric p must lie in (0, 1]")

    def mean(self):
        return 1.0 / self.p

    def tail(self, z):
        z = math.ceil(z)
        if z <= 1:
            return 1.0
        return (1.0 - self.p) ** (z - 1)

    def cumulative_tail(self, y):
        if y < 1:
            return 0.0
        if self.p == 1.0:
            return 1.0
        return (1.0 - (1.0 - self.p) ** y) / self.p

    def sample_with_uniform(self, u, aux=None):
        u = _check_u(u)
        if self.p == 1.0:
            return 1
        return max(1, math.ceil(math.log1p(-u) / math.log1p(-self.p)))


@dataclass(frozen=True)
class DiscreteUniform(DiscreteLaw):
    lo: int
    hi: int
    kind = "duniform"

    def __post_init__(self):
        if not (1 <= self.lo <= self.hi):
            raise ConfigError("duniform needs 1 <= lo <= hi")

    def mean(self):
        return 0.5 * (self.lo + self.hi)

    def tail(self, z):
        z = math.ceil(z)
        if z <= self.lo:
            return 1.0
        if z > self.hi:
            return 0.0
        return (self.hi - z + 1) / (self.hi - self.lo + 1)

    def cumulative_tail(self, y):
        if y < 1:
            return 0.0
        y = min(int(y), self.hi)
        return math.fsum(self.tail(z) for z in range(1, y + 1))

    def sample_with_uniform(self, u, aux=None):
        span = self.hi - self.lo + 1
        return self.lo + min(int(_check_u(u) * span), span - 1)


@dataclass(frozen=True)
class Discretized(DiscreteLaw):
    """c-scaled integerization of a continuous law.

    A draw X from the base becomes K = max(1, floor(cX) + Bernoulli(frac(cX))):
    the randomized rounding keeps E[floor + Bern] = c E[X] exactly, and the
    min-1 correction adds the bias E[(1 - cX)^+], available exactly via
    ``rounding_bias`` and bounded by P(X < 1/c).
    """

    base: ContinuousLaw
    c: int
    kind = "discretized"

    def __post_init__(self):
        c = int(self.c)
        if c < 1 or c != self.c:
            raise ConfigError("discretization scale c must be an integer >= 1")
        object.__setattr__(self, "c", c)

    def mean(self):
        # 1 + integral of the tail over [1, inf), in base units.
        return 1.0 + self.c * (self.base.mean() - self.base.integrated_tail(1.0 / self.c))

    def rounding_bias(self) -> float:
        return 1.0 - self.c * self.base.integrated_tail(1.0 / self.c)

    def rounding_bias_bound(self) -> float:
        return self.base.cdf(1.0 / self.c)

    def tail(self, z):
        z = math.ceil(z)
        if z <= 1:
            return 1.0
        it = self.base.integrated_tail
        return self.c * (it(z / self.c) - it((z - 1) / self.c))

    def cumulative_tail(self, y):
        if y < 1:
            return 0.0
        it = self.base.integrated_tail
        return 1.0 + self.c * (it(y / self.c) - it(1.0 / self.c))

    def sample_with_uniform(self, u, aux=None):
        if aux is None:
            raise ValueError("discretized sampling needs a second uniform for rounding")
        t = self.c * self.base.sample_with_uniform(u)
        k = math.floor(t)
        if _check_u(aux) < t - k:
            k += 1
        return max(1, k)

    def sample(self, rng):
        u = rng.random()
        aux = rng.random()
        return self.sample_with_uniform(u, aux)


def discretize(law: ContinuousLaw, c: int) -> Discretized:
    """Integer packet-count law at scale c; see :class:`Discretized`."""
    return Discretized(law, int(c))


# ---------------------------------------------------------------------------
# Equilibrium (size-biased excess) transform


@dataclass(frozen=True)
class EquilibriumLaw(Law):
    """CDF(y) = integral (or sum) of the base tail up to y, over the mean."""

    base: Law

    @property
    def is_non_atomic(self):  # type: ignore[override]
        return not self.base.integer_support

    @property
    def integer_support(self):  # type: ignore[override]
        return self.base.integer_support

    def mean(self):
        raise NotImplementedError("equilibrium law exposes its CDF, not moments")

    def cdf(self, y: float) -> float:
        mu = 1.0 / self.base.mean()
        if self.base.integer_support:
            return min(1.0, mu * self.base.cumulative_tail(math.floor(y)))
        return min(1.0, mu * self.base.integrated_tail(y))

    def tail(self, z):
        if self.base.integer_support:
            return 1.0 - self.cdf(z - 1)
        return 1.0 - self.cdf(z)

    def sample_with_uniform(self, u, aux=None):
        u = _check_u(u)
        if isinstance(self.base, Exponential):
            # Memorylessness: the excess law is the law itself.
            return self.base.sample_with_uniform(u)
        if self.base.integer_support:
            if u <= 0.0:
                return 1
            hi = 1
            while self.cdf(hi) < u:
                hi *= 2
            lo = 0
            while lo + 1 < hi:
                mid = (lo + hi) // 2
                if self.cdf(mid) < u:
                    lo = mid
                else:
                    hi = mid
            return hi
        if u <= 0.0:
            return 0.0
        hi = self.base.mean()
        while self.cdf(hi) < u:
            hi *= 2.0
        return brentq(lambda x: self.cdf(x) - u, 0.0, hi, xtol=1e-15, rtol=1e-14)


def equilibrium(law: Law) -> EquilibriumLaw:
    """Size-biased excess transform of a size law."""
    return EquilibriumLaw(law)


# ---------------------------------------------------------------------------
# Config (de)serialization

_CONTINUOUS = {
    "exponential": lambda p: Exponential(p["rate"]),
    "uniform": lambda p: Uniform(p["lo"], p["hi"]),
    "pareto": lambda p: Pareto(p["shape"], p["scale"]),
    "hyperexponential": lambda p: HyperExponential(
        tuple(p["weights"]), tuple(p["rates"])
    ),
    "lognormal": lambda p: LogNormal(p["mu"], p["sigma"]),
    "deterministic": lambda p: Deterministic(p["value"]),
    "geometric": lambda p: Geometric(p["p"]),
    "duniform": lambda p: DiscreteUniform(int(p["lo"]), int(p["hi"])),
}


def law_from_config(cfg: Mapping) -> Law:
    """Build a law from a {kind, params} mapping (wrapping kinds recurse)."""
    try:
        kind = cfg["kind"]
        params = dict(cfg.get("params", {}))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"size law needs kind/params: {exc}") from exc
    if kind == "discretized":
        return Discretized(law_from_config(params["base"]), int(params["c"]))
    if kind == "equilibrium":
        return EquilibriumLaw(law_from_config(params["base"]))
    maker = _CONTINUOUS.get(kind)
    if maker is None:
        raise ConfigError(f"unknown size-law kind {kind!r}")
    try:
        return maker(params)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad parameters for {kind!r}: {exc}") from exc


def law_to_config(law: Law) -> dict:
    if isinstance(law, Discretized):
        return {"kind": "discretized", "params": {"base": law_to_config(law.base), "c": law.c}}
    if isinstance(law, EquilibriumLaw):
        return {"kind": "equilibrium", "params": {"base": law_to_config(law.base)}}
    if isinstance(law, Exponential):
        params: dict = {"rate": law.rate}
    elif isinstance(law, Uniform):
        params = {"lo": law.lo, "hi": law.hi}
    elif isinstance(law, Pareto):
        params = {"shape": law.shape, "scale": law.scale}
    elif isinstance(law, HyperExponential):
        params = {"weights": list(law.weights), "rates": list(law.rates)}
    elif isinstance(law, LogNormal):
        params = {"mu": law.mu, "sigma": law.sigma}
    elif isinstance(law, Deterministic):
        params = {"value": law.value}
    elif isinstance(law, Geometric):
        params = {"p": law.p}
    elif isinstance(law, DiscreteUniform):
        params = {"lo": law.lo, "hi": law.hi}
    else:
        raise ConfigError(f"cannot serialize law {law!r}")
    return {"kind": law.kind, "params": params}
