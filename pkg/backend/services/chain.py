import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from errors import DomainError, MissingFieldError
from services.funcspec import FunctionalSpec
from services.rates import RatesContext

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BlockPath:
    """
    One realization of the block-counting process of the beta n-coalescent

    blocks holds X_0 = n > X_1 > ... > X_tau = 1.  holding_times[k] is the
    reverse-time gap before merger k (rate lambda_{X_k}); singletons[k] is the
    number of singleton lineages just before merger k, with a final entry
    for the state after the last merger.
    """

    n: int
    alpha: float
    blocks: np.ndarray
    holding_times: Optional[np.ndarray] = None
    singletons: Optional[np.ndarray] = None

    def __post_init__(self):
        blocks = np.asarray(self.blocks, dtype=np.int64)
        if blocks[0] != self.n or blocks[-1] != 1 or np.any(np.diff(blocks) >= 0):
            raise DomainError("block counts must decrease strictly from n to 1")
        object.__setattr__(self, 'blocks', blocks)
        if self.holding_times is not None:
            times = np.asarray(self.holding_times, dtype=np.float64)
            if len(times) != self.tau or np.any(times <= 0.0):
                raise DomainError("holding times must be positive, one per merger")
            object.__setattr__(self, 'holding_times', times)
        if self.singletons is not None:
            singles = np.asarray(self.singletons, dtype=np.int64)
            if len(singles) != self.tau + 1 or singles[0] != self.n:
                raise DomainError("singleton counts must start at n, one per state")
            if np.any(np.diff(singles) > 0) or np.any(singles > blocks) or np.any(singles < 0):
                raise DomainError("singleton counts must be nonincreasing and bounded by block counts")
            object.__setattr__(self, 'singletons', singles)

    @property
    def tau(self) -> int:
        return len(self.blocks) - 1

    @property
    def losses(self) -> np.ndarray:
        """Y_k = X_k - X_(k+1)"""
        return -np.diff(self.blocks)

    @property
    def depth(self) -> float:
        """Reverse time of the final merger"""
        if self.holding_times is None:
            raise MissingFieldError("path was sampled without holding times")
        return float(np.sum(self.holding_times))


def sample_block_path(
    ctx: RatesContext,
    n: int,
    rng: np.random.Generator,
    with_times: bool = False,
    with_singletons: bool = False
) -> BlockPath:
    """
    Sample the jump chain X_0 = n > ... > 1 and optionally its holding times and singleton counts

    The RNG is consumed in a fixed order (jump chain, then times, then
    singletons) so a path with extra fields shares its block sequence with
    the plain path drawn from the same stream state.
    """
    if n < 2:
        raise DomainError(f"n must be >= 2, got {n}")
    sampler = ctx.size_sampler(rng)
    blocks = [n]
    x = n
    while x > 1:
        x -= sampler.draw(x)
        blocks.append(x)
    blocks = np.asarray(blocks, dtype=np.int64)

    holding_times = None
    if with_times:
        rates = ctx.total_rate_table(n)[blocks[:-1]]
        holding_times = rng.exponential(1.0 / rates)

    singletons = None
    if with_singletons:
        singletons = np.empty(len(blocks), dtype=np.int64)
        s = n
        singletons[0] = s
        for k in range(len(blocks) - 1):
            x_k = int(blocks[k])
            participants = x_k - int(blocks[k + 1]) + 1
            # participating lineages are a uniform subset of the x_k present
            s -= int(rng.hypergeometric(s, x_k - s, participants))
            singletons[k + 1] = s

    return BlockPath(n, ctx.alpha, blocks, holding_times, singletons)


# ----------------------------------------------------------------------
# Functionals
# ----------------------------------------------------------------------

def functional_tau(path: BlockPath) -> int:
    """Number of mergers until one block remains"""
    return path.tau


def functional_total_length(path: BlockPath) -> float:
    if path.holding_times is None:
        raise MissingFieldError("total length needs holding times")
    return float(np.dot(path.blocks[:-1], path.holding_times))


def functional_total_length_mean(path: BlockPath, ctx: RatesContext) -> float:
    """sum_k X_k / lambda_(X_k), the total length with each gap replaced by its mean"""
    x = path.blocks[:-1]
    return float(np.sum(x / ctx.total_rate_table(path.n)[x]))


def functional_total_length_power(path: BlockPath) -> float:
    """alpha Gamma(alpha) sum_k X_k^(1-alpha)"""
    a = path.alpha
    x = path.blocks[:-1].astype(np.float64)
    return a * math.gamma(a) * float(np.sum(x ** (1.0 - a)))


def functional_length_conditional_variance(path: BlockPath, ctx: RatesContext) -> float:
    """Var(total length | jump chain) = sum_k X_k^2 / lambda_(X_k)^2"""
    x = path.blocks[:-1]
    ratio = x / ctx.total_rate_table(path.n)[x]
    return float(np.sum(ratio ** 2))


def functional_external_length(path: BlockPath) -> float:
    if path.holding_times is None or path.singletons is None:
        raise MissingFieldError("external length needs holding times and singleton counts")
    return float(np.dot(path.singletons[:-1], path.holding_times))


def functional_J(path: BlockPath, f: FunctionalSpec) -> float:
    """
    n^(-1/alpha) ( (alpha-1)^(-1) sum_(k < tau) f(X_k / n) - n int_0^1 f )

    Args:
        path: sampled block path
        f: functional built for the same alpha
    """
    if abs(f.alpha - path.alpha) > 1e-12:
        raise DomainError(f"functional built for alpha={f.alpha} applied to a path with alpha={path.alpha}")
    if f.is_zero:
        return 0.0
    a = path.alpha
    n = path.n
    riemann = float(np.sum(f(path.blocks[:-1] / n))) / (a - 1.0)
    return n ** (-1.0 / a) * (riemann - n * f.integral())


def hitting_index(path: BlockPath, a: float) -> int:
    """First k with X_k <= a n"""
    if not (0.0 < a <= 1.0):
        raise DomainError(f"a must lie in (0, 1], got {a}")
    threshold = a * path.n
    if threshold < 1.0:
        raise DomainError(f"a * n = {threshold} < 1 is never reached")
    return int(np.argmax(path.blocks <= threshold))


def max_block_ratio(path: BlockPath) -> float:
    """max_k X_k / X_(k+1)"""
    return float(np.max(path.blocks[:-1] / path.blocks[1:]))


def external_length_expansion(path: BlockPath) -> float:
    """alpha(alpha-1)^2 Gamma(alpha) n^(2-alpha) + alpha(2-alpha) Gamma(alpha) n^(1-alpha) tau_n"""
    a = path.alpha
    n = float(path.n)
    g = math.gamma(a)
    return a * (a - 1.0) ** 2 * g * n ** (2.0 - a) + a * (2.0 - a) * g * n ** (1.0 - a) * path.tau


# ----------------------------------------------------------------------
# Scaled fluctuations of the worked examples
# ----------------------------------------------------------------------

def scaled_tau(path: BlockPath) -> float:
    """n^(-1/alpha) (tau_n - (alpha-1) n)"""
    a = path.alpha
    return path.n ** (-1.0 / a) * (path.tau - (a - 1.0) * path.n)


def total_length_centering(n: int, alpha: float) -> float:
    return alpha * (alpha - 1.0) * math.gamma(alpha) * n ** (2.0 - alpha) / (2.0 - alpha)


def external_length_centering(n: int, alpha: float) -> float:
    return alpha * (alpha - 1.0) * math.gamma(alpha) * n ** (2.0 - alpha)


def scaled_total_length(path: BlockPath) -> float:
    a = path.alpha
    n = path.n
    return n ** (a - 1.0 - 1.0 / a) * (functional_total_length(path) - total_length_centering(n, a))


def scaled_external_length(path: BlockPath) -> float:
    a = path.alpha
    n = path.n
    return n ** (a - 1.0 - 1.0 / a) * (functional_external_length(path) - external_length_centering(n, a))


def scaled_length_ratio(path: BlockPath) -> float:
    """n^(1-1/alpha) (ell_n / L_n - (2 - alpha))"""
    a = path.alpha
    ratio = functional_external_length(path) / functional_total_length(path)
    return path.n ** (1.0 - 1.0 / a) * (ratio - (2.0 - a))
