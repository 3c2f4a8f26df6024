import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np
from scipy.special import betaln, gammaln, logsumexp

from errors import DomainError, EnvelopeViolation

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Alpha:
    """Stable index of the Beta(2 - alpha, alpha) coalescent, 1 < alpha < 2"""

    value: float

    def __post_init__(self):
        value = float(self.value)
        if not (1.0 < value < 2.0) or math.isnan(value):
            raise DomainError(f"alpha must lie in the open interval (1, 2), got {self.value}")
        object.__setattr__(self, 'value', value)

    def __float__(self) -> float:
        return self.value


AlphaLike = Union[float, Alpha]


class RatesContext:
    """
    Transition rates of the beta n-coalescent and the limiting merger-size law

    Holds the log-gamma machinery for Lambda = Beta(2 - alpha, alpha):
    - lambda_{b,k}: rate of one specific k-merger among b blocks
    - lambda_b: total merger rate with b blocks
    - q_i: limit law of the number of blocks lost in one merger

    The q-table, the rejection envelope M and the lambda_b table are built
    once; afterwards the context is read-only and can be shared by replicates.
    """

    def __init__(
        self,
        alpha: AlphaLike,
        i_max: int = 10_000,
        envelope_j_max: int = 2000
    ):
        self.alpha = float(Alpha(float(alpha)))
        self.i_max = int(i_max)
        self.envelope_j_max = int(envelope_j_max)
        a = self.alpha

        # log B(2 - alpha, alpha), the normalizer of Lambda
        self.log_beta_norm = float(betaln(2.0 - a, a))

        i = np.arange(1, self.i_max + 1, dtype=np.float64)
        self.q_table = np.exp(self._log_q(i))
        self.q_cumulative = np.cumsum(self.q_table)
        # exact tail: sum_{i > N} q_i = Gamma(N + 2 - alpha) / (Gamma(2 - alpha) Gamma(N + 2))
        self.q_tail_mass = self.limit_q_tail(self.i_max)
        self._q_head_mass = 1.0 - self.q_tail_mass

        self._rate_table = np.zeros(2)
        self.envelope = self._calibrate_envelope()
        logger.info(
            "RatesContext alpha=%.6g: envelope M=%.6g (calibrated on j <= %d), q tail mass %.3e",
            a, self.envelope, self.envelope_j_max, self.q_tail_mass
        )

    # ------------------------------------------------------------------
    # Coalescent rates
    # ------------------------------------------------------------------

    def log_merger_rate(self, b: int, k: int) -> float:
        if k < 2 or k > b:
            raise DomainError(f"merger size k must satisfy 2 <= k <= b, got b={b}, k={k}")
        a = self.alpha
        return (
            math.lgamma(k - a) + math.lgamma(b - k + a)
            - math.lgamma(b) - self.log_beta_norm
        )

    def merger_rate(self, b: int, k: int) -> float:
        """lambda_{b,k} = B(k - alpha, b - k + alpha) / B(2 - alpha, alpha)"""
        return math.exp(self.log_merger_rate(b, k))

    def _log_merger_weights(self, b: int) -> np.ndarray:
        """log( C(b,k) lambda_{b,k} ) for k = 2..b"""
        a = self.alpha
        k = np.arange(2, b + 1, dtype=np.float64)
        log_binom = gammaln(b + 1.0) - gammaln(k + 1.0) - gammaln(b - k + 1.0)
        log_rate = gammaln(k - a) + gammaln(b - k + a) - gammaln(float(b)) - self.log_beta_norm
        return log_binom + log_rate

    def log_total_rate(self, b: int) -> float:
        if b < 2:
            raise DomainError(f"total rate needs b >= 2 blocks, got {b}")
        if b < len(self._rate_table):
            return math.log(self._rate_table[b])
        # largest terms sit at small k; logsumexp rescales by the maximum
        return float(logsumexp(self._log_merger_weights(b)[::-1]))

    def total_rate(self, b: int) -> float:
        """lambda_b = sum_{k=2}^{b} C(b,k) lambda_{b,k}"""
        if b < 2:
            raise DomainError(f"total rate needs b >= 2 blocks, got {b}")
        return math.exp(float(logsumexp(self._log_merger_weights(b)[::-1])))

    def total_rate_table(self, b_max: int) -> np.ndarray:
        """
        All total rates up to b_max, entry b holds lambda_b (entries 0 and 1 are 0)

        Uses lambda_b - lambda_{b-1} = (b - 1) B(2 - alpha, alpha + b - 2) / B(2 - alpha, alpha).
        The table grows on demand and is never shrunk.
        """
        if b_max < 2:
            raise DomainError(f"rate table needs b_max >= 2, got {b_max}")
        if b_max >= len(self._rate_table):
            size = max(b_max + 1, 2 * len(self._rate_table))
            a = self.alpha
            b = np.arange(2, size, dtype=np.float64)
            increments = (b - 1.0) * np.exp(betaln(2.0 - a, a + b - 2.0) - self.log_beta_norm)
            table = np.zeros(size)
            table[2:] = np.cumsum(increments)
            self._rate_table = table
        return self._rate_table[: b_max + 1]

    def rate_asymptotic(self, b: float) -> float:
        """Leading order b^alpha / (alpha Gamma(alpha)) of lambda_b"""
        return b ** self.alpha / (self.alpha * math.gamma(self.alpha))

    # ------------------------------------------------------------------
    # Merger sizes
    # ------------------------------------------------------------------

    def merger_size_pmf(self, j: int) -> np.ndarray:
        """
        Law of the number of blocks lost in one merger when j blocks are present

        Returns:
            Array p of length j - 1 with p[i - 1] = C(j, i+1) lambda_{j,i+1} / lambda_j
        """
        if j < 2:
            raise DomainError(f"merger size law needs j >= 2 blocks, got {j}")
        log_w = self._log_merger_weights(j)
        return np.exp(log_w - logsumexp(log_w))

    def _log_pmf_point(self, j: int, i: int, log_total: float) -> float:
        k = i + 1
        a = self.alpha
        return (
            math.lgamma(j + 1) - math.lgamma(k + 1) - math.lgamma(j - k + 1)
            + math.lgamma(k - a) + math.lgamma(j - k + a)
            - math.lgamma(j) - self.log_beta_norm - log_total
        )

    def _log_q(self, i):
        a = self.alpha
        return (
            math.log(a) - math.lgamma(2.0 - a)
            + gammaln(i + 1.0 - a) - gammaln(i + 2.0)
        )

    def limit_q(self, i: int) -> float:
        """q_i = alpha Gamma(i + 1 - alpha) / (Gamma(2 - alpha) Gamma(i + 2))"""
        if i < 1:
            raise DomainError(f"q_i is defined for i >= 1, got {i}")
        return float(np.exp(self._log_q(float(i))))

    def limit_q_tail(self, i: int) -> float:
        """sum_{m > i} q_m, exact"""
        if i < 0:
            raise DomainError(f"tail index must be >= 0, got {i}")
        a = self.alpha
        return math.exp(math.lgamma(i + 2.0 - a) - math.lgamma(2.0 - a) - math.lgamma(i + 2.0))

    def limit_q_stirling(self, i: float) -> float:
        return self.alpha / math.gamma(2.0 - self.alpha) * i ** (-self.alpha - 1.0)

    @property
    def gamma(self) -> float:
        """Mean of q, 1 / (alpha - 1)"""
        return 1.0 / (self.alpha - 1.0)

    def lemma_envelope_constant(self, j_values, i_max: int = 50) -> float:
        """Smallest c with |p_j(i) - q_i| <= c i q_i / j over the given j and i <= i_max"""
        worst = 0.0
        for j in j_values:
            pmf = self.merger_size_pmf(int(j))
            upto = min(i_max, int(j) - 1)
            i = np.arange(1, upto + 1)
            q = self.q_table[:upto]
            worst = max(worst, float(np.max(np.abs(pmf[:upto] - q) * j / (i * q))))
        return worst

    # ------------------------------------------------------------------
    # Rejection sampler for merger sizes
    # ------------------------------------------------------------------

    def _proposal_log_mass(self, i: int) -> float:
        if i <= self.i_max:
            return math.log(self.q_table[i - 1])
        # floor of a Pareto(alpha) variable started at i_max + 1
        base = self.i_max + 1.0
        mass = (i / base) ** (-self.alpha) - ((i + 1.0) / base) ** (-self.alpha)
        return math.log(self.q_tail_mass) + math.log(mass)

    def _calibrate_envelope(self) -> float:
        worst = 0.0
        for j in range(2, self.envelope_j_max + 1):
            pmf = self.merger_size_pmf(j)
            worst = max(worst, float(np.max(pmf / self.q_table[: j - 1])))
        return 2.0 * worst

    def size_sampler(self, rng: np.random.Generator, batch: int = 512) -> 'MergerSizeSampler':
        return MergerSizeSampler(self, rng, batch)

    def sample_merger_size(self, j: int, rng: np.random.Generator) -> int:
        """One exact draw from merger_size_pmf(j)"""
        return self.size_sampler(rng, batch=16).draw(j)


class MergerSizeSampler:
    """
    Buffered rejection sampler bound to one RNG stream

    Proposals come from q (table inversion up to i_max, discrete Pareto tail
    beyond) and are accepted with probability p_j(i) / (M * proposal(i)).
    Proposals and uniforms are drawn in batches so the per-merger cost is a
    few scalar log-gamma calls.
    """

    def __init__(self, ctx: RatesContext, rng: np.random.Generator, batch: int = 512):
        self.ctx = ctx
        self.rng = rng
        self.batch = batch
        self._log_envelope = math.log(ctx.envelope)
        self._proposals = np.empty(0, dtype=np.int64)
        self._uniforms = np.empty(0)
        self._pos = 0
        self._log_total_cache = {}

    def _refill(self):
        ctx = self.ctx
        u = self.rng.random(self.batch)
        v = 1.0 - self.rng.random(self.batch)
        head = u < ctx._q_head_mass
        proposals = np.empty(self.batch, dtype=np.int64)
        idx = np.searchsorted(ctx.q_cumulative, u[head], side='right')
        proposals[head] = np.minimum(idx, ctx.i_max - 1) + 1
        tail_u = self.rng.random(int(np.count_nonzero(~head)))
        tail = np.floor((ctx.i_max + 1.0) * (1.0 - tail_u) ** (-1.0 / ctx.alpha))
        proposals[~head] = np.minimum(tail, np.iinfo(np.int64).max // 2).astype(np.int64)
        self._proposals = proposals
        self._uniforms = v
        self._pos = 0

    def _log_total(self, j: int) -> float:
        cached = self._log_total_cache.get(j)
        if cached is None:
            cached = self.ctx.log_total_rate(j)
            if len(self._log_total_cache) > 4096:
                self._log_total_cache.clear()
            self._log_total_cache[j] = cached
        return cached

    def draw(self, j: int) -> int:
        if j < 2:
            raise DomainError(f"merger size needs j >= 2 blocks, got {j}")
        if j == 2:
            return 1
        ctx = self.ctx
        log_total = self._log_total(j)
        while True:
            if self._pos >= len(self._proposals):
                self._refill()
            i = int(self._proposals[self._pos])
            v = self._uniforms[self._pos]
            self._pos += 1
            if i >= j:
                continue
            log_ratio = (
                ctx._log_pmf_point(j, i, log_total)
                - self._log_envelope - ctx._proposal_log_mass(i)
            )
            if log_ratio > 0.0:
                raise EnvelopeViolation(j, i, math.exp(log_ratio))
            if math.log(v) < log_ratio:
                return i


@lru_cache(maxsize=16)
def get_rates_context(alpha: float, i_max: int = 10_000) -> RatesContext:
    """Shared context per alpha (construction calibrates the envelope once)"""
    return RatesContext(alpha, i_max=i_max)
