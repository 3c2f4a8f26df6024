"""
Limit objects: stable laws, compensated Poisson integrals and the moving average

All stable laws use the parameterization with characteristic function
exp(-sigma^alpha |theta|^alpha (1 - i beta sgn(theta) tan(pi alpha / 2))).
Poisson integrals are realized from truncated point buffers: jumps above a
threshold eps are simulated exactly and their mean is subtracted in closed
form, leaving a residual whose variance is known and reported.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate, optimize

from errors import (
    CompensatorMismatch,
    DimensionMismatch,
    DomainError,
    QuadratureError,
    TruncationBudgetError,
)
from services.funcspec import FunctionalSpec, LimitProfile
from services.rates import Alpha

logger = logging.getLogger(__name__)

DEFAULT_TAIL_TOLERANCE = 1e-4
DEFAULT_EPS_BUDGET = 1e-4
MIN_AUTO_EPS = 1e-3
REPLICATE_CHUNK = 2000


# ----------------------------------------------------------------------
# Stable laws
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class StableParams:
    alpha: float
    sigma: float
    beta: float
    mu: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, 'alpha', float(Alpha(float(self.alpha))))
        if not self.sigma > 0.0:
            raise DomainError(f"sigma must be positive, got {self.sigma}")
        if abs(self.beta) > 1.0:
            raise DomainError(f"beta must lie in [-1, 1], got {self.beta}")
        if self.mu != 0.0:
            raise DomainError("only centered stable laws (mu = 0) are supported")


def sample_stable(params: StableParams, rng: np.random.Generator, size=None):
    """
    Chambers-Mallows-Stuck draw from S_alpha(sigma, beta, 0)

    Args:
        params: stable parameters
        rng: numpy Generator
        size: None for a scalar, else output shape
    """
    a = params.alpha
    phi = (rng.random(size) - 0.5) * np.pi
    w = rng.standard_exponential(size)
    zeta = params.beta * math.tan(math.pi * a / 2.0)
    cosphi = np.cos(phi)
    aphi = a * phi
    a1phi = (1.0 - a) * phi
    x = (
        (np.sin(aphi) + zeta * np.cos(aphi)) / cosphi
        * ((np.cos(a1phi) + zeta * np.sin(a1phi)) / (w * cosphi)) ** ((1.0 - a) / a)
    )
    x = params.sigma * x
    return float(x) if size is None else x


def cf_stable(params: StableParams, theta):
    theta_arr = np.asarray(theta, dtype=np.float64)
    a = params.alpha
    scale = (params.sigma * np.abs(theta_arr)) ** a
    skew = params.beta * np.sign(theta_arr) * math.tan(math.pi * a / 2.0)
    out = np.exp(-scale * (1.0 - 1j * skew))
    return complex(out) if np.ndim(theta) == 0 else out


def sigma_from_levy_density(b: float, alpha: float) -> float:
    """Scale of the totally skewed stable law with Levy density b y^(-1-alpha)"""
    a = float(Alpha(float(alpha)))
    return (b * math.pi / (2.0 * math.sin(math.pi * a / 2.0) * math.gamma(a + 1.0))) ** (1.0 / a)


def sample_levy_integral(b: float, alpha: float, eps: float, rng: np.random.Generator, size: int) -> np.ndarray:
    """Z(eps): jumps y >= eps of a Poisson process with density b y^(-1-alpha), minus their mean"""
    a = float(Alpha(float(alpha)))
    _check_eps(eps)
    mean_count = b * eps ** (-a) / a
    out = np.empty(size)
    for start in range(0, size, REPLICATE_CHUNK):
        stop = min(size, start + REPLICATE_CHUNK)
        counts = rng.poisson(mean_count, stop - start)
        ids = np.repeat(np.arange(stop - start), counts)
        jumps = eps * (1.0 - rng.random(len(ids))) ** (-1.0 / a)
        out[start:stop] = np.bincount(ids, weights=jumps, minlength=stop - start)
    return out - b * eps ** (1.0 - a) / (a - 1.0)


def sample_truncation_residual(
    b: float,
    alpha: float,
    eps: float,
    rng: np.random.Generator,
    size: int,
    floor_ratio: float = 1.0 / 16.0
) -> np.ndarray:
    """
    Draws of Z - Z(eps), the compensated jumps below eps

    Jumps in [floor_ratio * eps, eps) are simulated exactly; the remaining
    small jumps are replaced by a centered Gaussian of the same variance.
    """
    a = float(Alpha(float(alpha)))
    _check_eps(eps)
    floor = floor_ratio * eps
    mean_count = b * (floor ** (-a) - eps ** (-a)) / a
    out = np.empty(size)
    for start in range(0, size, REPLICATE_CHUNK):
        stop = min(size, start + REPLICATE_CHUNK)
        counts = rng.poisson(mean_count, stop - start)
        ids = np.repeat(np.arange(stop - start), counts)
        # inversion of the power law restricted to [floor, eps)
        v = rng.random(len(ids))
        jumps = (floor ** (-a) - v * (floor ** (-a) - eps ** (-a))) ** (-1.0 / a)
        out[start:stop] = np.bincount(ids, weights=jumps, minlength=stop - start)
    out -= b * (floor ** (1.0 - a) - eps ** (1.0 - a)) / (a - 1.0)
    small_variance = b * floor ** (2.0 - a) / (2.0 - a)
    return out + rng.normal(0.0, math.sqrt(small_variance), size)


# ----------------------------------------------------------------------
# Point buffers
# ----------------------------------------------------------------------

class PointKind(str, Enum):
    PSI = 'psi'
    THETA = 'theta'
    LEVY = 'levy'


@dataclass(frozen=True)
class PointBuffer:
    """
    Truncated Poisson points (first, second) with second >= eps

    PSI and LEVY buffers hold (s, u) on a time window; THETA buffers hold
    (x, y) on a subinterval of (0, 1].  A THETA buffer mapped from PSI points
    keeps the floor y >= eps * x (scaled_floor).
    """

    kind: PointKind
    first: np.ndarray
    second: np.ndarray
    eps: float
    window: Tuple[float, float]
    scaled_floor: bool = False

    def __post_init__(self):
        if len(self.first) != len(self.second):
            raise DimensionMismatch("point coordinates differ in length")
        floor = self.eps * self.first if self.scaled_floor else self.eps
        if np.any(self.second < floor * (1.0 - 1e-12)):
            raise DomainError("buffer holds points below its truncation level")

    def __len__(self) -> int:
        return len(self.first)

    def restrict(self, eps: float) -> 'PointBuffer':
        """Sub-buffer truncated at a higher level eps"""
        if eps < self.eps:
            raise DomainError(f"cannot lower truncation from {self.eps} to {eps}")
        keep = self.second >= (eps * self.first if self.scaled_floor else eps)
        return PointBuffer(self.kind, self.first[keep], self.second[keep], eps, self.window, self.scaled_floor)


def _check_eps(eps: float):
    if not eps > 0.0:
        raise DomainError(f"truncation level must be positive, got {eps}")


def _check_window(window: Tuple[float, float]) -> Tuple[float, float]:
    lo, hi = float(window[0]), float(window[1])
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi < lo:
        raise DomainError(f"window must be a bounded interval, got {window}")
    return lo, hi


def sample_poisson_points(
    kind: Union[PointKind, str],
    window: Tuple[float, float],
    eps: float,
    rng: np.random.Generator,
    profile: LimitProfile
) -> PointBuffer:
    """
    Poisson points with second coordinate >= eps

    PSI / LEVY: ds x b_L u^(-1-alpha) du on the time window.
    THETA: dx x c_Theta y^(-1-alpha) dy on a window inside (0, 1].
    """
    kind = PointKind(kind)
    _check_eps(eps)
    lo, hi = _check_window(window)
    a = profile.alpha
    if kind is PointKind.THETA:
        if lo < 0.0 or hi > 1.0:
            raise DomainError(f"THETA window must lie in [0, 1], got {window}")
        density = profile.theta_constant
    else:
        density = profile.levy_constant
    count = rng.poisson((hi - lo) * density * eps ** (-a) / a)
    first = lo + (hi - lo) * rng.random(count)
    second = eps * (1.0 - rng.random(count)) ** (-1.0 / a)
    order = np.argsort(first, kind='stable')
    return PointBuffer(kind, first[order], second[order], eps, (lo, hi))


def map_psi_to_theta(buffer: PointBuffer, profile: LimitProfile, shift: float = 0.0) -> PointBuffer:
    """
    Image (x, y) = (m(r), m(r) u) of the points with s <= shift, where r = shift - s

    shift = 0 gives the static picture back from time 0; other shifts give
    the point process seen from time shift.
    """
    if buffer.kind is PointKind.THETA:
        raise DomainError("map_psi_to_theta needs a PSI or LEVY buffer")
    keep = buffer.first <= shift
    r = shift - buffer.first[keep]
    x = profile.m(r)
    y = x * buffer.second[keep]
    lo = profile.m(max(0.0, shift - buffer.window[0]))
    return PointBuffer(PointKind.THETA, x, y, buffer.eps, (lo, 1.0), scaled_floor=True)


# ----------------------------------------------------------------------
# Compensated integrals
# ----------------------------------------------------------------------

def compensated_integral(
    weighted_jumps: np.ndarray,
    compensator: float,
    reference: Optional[float] = None,
    tolerance: float = 1e-8
) -> float:
    """
    Jump sum minus its closed-form mean

    Args:
        weighted_jumps: jumps of the truncated buffer, already multiplied by their weights
        compensator: closed-form mean of the jump sum
        reference: optional quadrature value of the same mean

    Raises:
        CompensatorMismatch: closed form and reference differ by more than tolerance
    """
    if reference is not None:
        gap = abs(compensator - reference)
        if gap > tolerance * max(1.0, abs(reference)):
            raise CompensatorMismatch(
                f"closed-form compensator {compensator:.12g} differs from quadrature {reference:.12g}"
            )
    return float(np.sum(weighted_jumps)) - compensator


def buffer_integral(
    buffer: PointBuffer,
    weight: Callable[[np.ndarray], np.ndarray],
    weight_integral: float,
    profile: LimitProfile,
    eps: Optional[float] = None
) -> float:
    """
    int weight dM on a THETA buffer with y-truncation at eps

    Args:
        weight: vectorized weight function of x
        weight_integral: int weight(x) dx over the buffer window
    """
    if buffer.kind is not PointKind.THETA or buffer.scaled_floor:
        raise DomainError("buffer_integral needs a sampled THETA buffer")
    eps = buffer.eps if eps is None else eps
    sub = buffer.restrict(eps)
    a = profile.alpha
    jumps = weight(sub.first) * sub.second
    compensator = profile.theta_constant * eps ** (1.0 - a) / (a - 1.0) * weight_integral
    return compensated_integral(jumps, compensator)


def truncation_variance(f: FunctionalSpec, eps: float, profile: Optional[LimitProfile] = None) -> float:
    """Variance of I(f) minus its eps-truncated version, eps^(2-alpha) alpha(alpha-1)/Gamma(3-alpha) int |f|^alpha"""
    a = f.alpha
    return eps ** (2.0 - a) * a * (a - 1.0) / math.gamma(3.0 - a) * f.abs_power_integral()


def auto_eps(
    f: FunctionalSpec,
    budget: float = DEFAULT_EPS_BUDGET,
    profile: Optional[LimitProfile] = None,
    floor: float = MIN_AUTO_EPS
) -> float:
    """
    Largest eps whose residual variance is at most budget * sigma_f^2, never below floor

    The floor keeps the expected point count (order eps^(-alpha)) finite in practice;
    when it binds the achieved budget is logged.
    """
    if f.is_zero:
        return 1.0
    a = f.alpha
    sigma, _ = f.sigma_beta()
    unit = truncation_variance(f, 1.0, profile)
    eps = (budget * sigma ** 2 / unit) ** (1.0 / (2.0 - a))
    if eps < floor:
        achieved = truncation_variance(f, floor, profile) / sigma ** 2
        logger.warning("eps %.3g for budget %.1e is below the floor; using %.3g (budget %.2e)",
                       eps, budget, floor, achieved)
        return floor
    return eps


def sample_I(
    f: FunctionalSpec,
    eps: float,
    rng: np.random.Generator,
    profile: Optional[LimitProfile] = None,
    size: Optional[int] = None,
    gaussian_residual: bool = False
):
    """
    Draws of the stable integral I(f) = int f dM from truncated THETA points

    Points (x, y) with |f(x)| y >= eps are generated by thinning an envelope
    (sum |c_j|)^alpha x^(-alpha zeta_max) in x; each contributes f(x) y.
    The result approximates S_alpha(sigma_f, beta_f, 0) up to a residual of
    variance truncation_variance(f, eps).  With gaussian_residual the
    residual is replaced by a centered normal of that variance, drawn after
    all jumps so the jump part is unchanged.
    """
    _check_eps(eps)
    profile = profile or LimitProfile(f.alpha)
    count = 1 if size is None else int(size)
    if f.is_zero:
        return 0.0 if size is None else np.zeros(count)
    a = f.alpha
    c_l1 = f.coefficient_l1
    zeta_star = f.zeta_max
    shape = 1.0 - a * zeta_star
    envelope_mass = c_l1 ** a / shape
    mean_count = profile.theta_constant * eps ** (-a) / a * envelope_mass
    positive, negative = f.power_integrals()
    compensator = profile.theta_constant * eps ** (1.0 - a) / (a - 1.0) * (positive - negative)

    out = np.empty(count)
    for start in range(0, count, REPLICATE_CHUNK):
        stop = min(count, start + REPLICATE_CHUNK)
        counts = rng.poisson(mean_count, stop - start)
        ids = np.repeat(np.arange(stop - start), counts)
        x = (1.0 - rng.random(len(ids))) ** (1.0 / shape)
        w = eps * (1.0 - rng.random(len(ids))) ** (-1.0 / a)
        fx = f(x) if len(x) else np.empty(0)
        accept = rng.random(len(ids)) * c_l1 ** a * x ** (-a * zeta_star) < np.abs(fx) ** a
        # |f(x)| y = w, so y = w / |f(x)|
        jumps = np.sign(fx[accept]) * w[accept]
        out[start:stop] = np.bincount(ids[accept], weights=jumps, minlength=stop - start)
    out -= compensator
    if gaussian_residual:
        out += rng.normal(0.0, math.sqrt(truncation_variance(f, eps, profile)), count)
    logger.debug("sample_I: eps=%.3g, mean points %.1f, residual variance %.3g",
                 eps, mean_count, truncation_variance(f, eps, profile))
    return float(out[0]) if size is None else out


# ----------------------------------------------------------------------
# Moving average
# ----------------------------------------------------------------------

def kernel_tail_fraction(f: FunctionalSpec, profile: LimitProfile, r_max: float) -> float:
    """Share of int_0^inf |g|^alpha carried by r > r_max"""
    total = sum(profile.kernel_power_integrals(f))
    if total == 0.0:
        return 0.0
    head = sum(profile.kernel_power_integrals(f, r_max))
    return max(0.0, (total - head) / total)


def auto_r_max(f: FunctionalSpec, profile: LimitProfile, tolerance: float = DEFAULT_TAIL_TOLERANCE) -> float:
    """Smallest r_max (up to root-finding tolerance) whose kernel tail share is <= tolerance"""
    if f.is_zero:
        return 0.0

    def excess(log_r):
        return kernel_tail_fraction(f, profile, math.exp(log_r)) - tolerance

    lo, hi = math.log(1e-6), math.log(profile.A)
    while excess(hi) > 0.0:
        hi += math.log(10.0)
        if hi > math.log(1e300):
            raise TruncationBudgetError("kernel tail does not fall below the tolerance")
    if excess(lo) <= 0.0:
        return math.exp(lo)
    # step past the bracketed root so the tail share is within tolerance
    return math.exp(optimize.brentq(excess, lo, hi, xtol=1e-6) + 2e-6)


def moving_average_params(f: FunctionalSpec, profile: LimitProfile) -> StableParams:
    """
    Marginal law of the moving average at any fixed time

    The process integrates the kernel against the Levy process read in reverse
    time, so the skewness is -beta_g.
    """
    positive, negative = profile.kernel_power_integrals(f)
    total = positive + negative
    if total == 0.0:
        raise DomainError("the zero kernel has a degenerate marginal")
    sigma = (profile.levy_scale_factor * total) ** (1.0 / profile.alpha)
    return StableParams(profile.alpha, sigma, -(positive - negative) / total)


def _sorted_times(times: Sequence[float]) -> np.ndarray:
    s = np.atleast_1d(np.asarray(times, dtype=np.float64))
    if s.ndim != 1 or len(s) == 0:
        raise DimensionMismatch("times must be a nonempty vector")
    if np.any(np.diff(s) <= 0.0):
        raise DomainError("times must be strictly increasing")
    return s


def sample_moving_average(
    f: FunctionalSpec,
    profile: LimitProfile,
    times: Sequence[float],
    eps: float,
    r_max: Optional[float],
    rng: np.random.Generator,
    size: Optional[int] = None,
    tail_tolerance: float = DEFAULT_TAIL_TOLERANCE
) -> np.ndarray:
    """
    Joint draws of the moving average int_0^inf g(r) dL_(s-r) at s_1 < ... < s_d

    One Levy buffer serves all coordinates.  Its threshold in u varies with
    the time w so that every coordinate sees all points with |g(s_j - w)| u >= eps:
    for w just below s_j the bound g_bar(s_j - w) = sum|c| m^(1 - zeta_max)
    dominates every |g(s_k - w)|, k >= j.

    Returns:
        Array of shape (d,) or (size, d)

    Raises:
        TruncationBudgetError: kernel tail beyond r_max exceeds tail_tolerance
    """
    _check_eps(eps)
    s = _sorted_times(times)
    d = len(s)
    count = 1 if size is None else int(size)
    if f.is_zero:
        zeros = np.zeros((count, d))
        return zeros[0] if size is None else zeros
    if r_max is None:
        r_max = auto_r_max(f, profile, tail_tolerance)
    tail = kernel_tail_fraction(f, profile, r_max)
    if tail > tail_tolerance:
        raise TruncationBudgetError(
            f"kernel tail share {tail:.3g} beyond r_max={r_max:.6g} exceeds {tail_tolerance:.3g}"
        )

    a = profile.alpha
    A = profile.A
    c_l1 = f.coefficient_l1
    decay = (1.0 - f.zeta_max) * profile.gamma
    kappa = a * decay
    # segment j covers w in (s_(j-1), s_j] as r = s_j - w in [0, span_j]
    spans = np.empty(d)
    spans[0] = r_max
    spans[1:] = np.minimum(np.diff(s), r_max)
    head = A ** (1.0 - kappa)
    seg_mass = c_l1 ** a * A ** kappa * (head - (spans + A) ** (1.0 - kappa)) / (kappa - 1.0)
    seg_rate = profile.levy_constant * eps ** (-a) / a * seg_mass

    positive, negative = profile.kernel_power_integrals(f, r_max)
    compensator = profile.levy_constant * eps ** (1.0 - a) / (a - 1.0) * (positive - negative)
    logger.debug("moving average: eps=%.3g, r_max=%.6g, tail share %.2e, mean points %.1f",
                 eps, r_max, tail, float(np.sum(seg_rate)))

    out = np.empty((count, d))
    for start in range(0, count, REPLICATE_CHUNK):
        stop = min(count, start + REPLICATE_CHUNK)
        m = stop - start
        ids_list, w_list, u_list = [], [], []
        counts = rng.poisson(seg_rate, size=(m, d))
        for j in range(d):
            ids = np.repeat(np.arange(m), counts[:, j])
            total_mass = head - (spans[j] + A) ** (1.0 - kappa)
            v = rng.random(len(ids))
            r = (head - v * total_mass) ** (1.0 / (1.0 - kappa)) - A
            r = np.clip(r, 0.0, spans[j])
            g_bar = c_l1 * (A / (r + A)) ** decay
            u = (eps / g_bar) * (1.0 - rng.random(len(ids))) ** (-1.0 / a)
            ids_list.append(ids)
            w_list.append(s[j] - r)
            u_list.append(u)
        ids = np.concatenate(ids_list)
        w = np.concatenate(w_list)
        u = np.concatenate(u_list)
        for k in range(d):
            rk = s[k] - w
            inside = (rk >= 0.0) & (rk <= r_max)
            g = profile.kernel_g(f, rk[inside]) if np.any(inside) else np.empty(0)
            jumps = g * u[inside]
            keep = np.abs(jumps) >= eps
            sums = np.bincount(ids[inside][keep], weights=jumps[keep], minlength=m)
            # reverse-time integrator: jumps enter with a minus sign
            out[start:stop, k] = -(sums - compensator)
    return out[0] if size is None else out


def joint_cf_moving_average(
    f: FunctionalSpec,
    profile: LimitProfile,
    times: Sequence[float],
    theta: Sequence[float]
) -> complex:
    """
    E exp(i sum_j theta_j X(s_j)) for the moving average X

    Computes exp(-K int |h|^alpha (1 - i sgn(h) tan(pi alpha / 2)) dw) with
    h(w) = -sum_j theta_j g(s_j - w) 1{w <= s_j}, integrating panel by panel
    between the kink points s_j.
    """
    s = _sorted_times(times)
    th = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    if th.shape != s.shape:
        raise DimensionMismatch(f"theta has {th.size} entries for {s.size} times")
    if f.is_zero or not np.any(th):
        return complex(1.0)
    a = profile.alpha

    def h(w):
        r = s - w
        active = r >= 0.0
        return -float(np.sum(th[active] * profile.kernel_closed_form(f, r[active])))

    def panel(lo_w, hi_w):
        magnitude = _quad(lambda w: abs(h(w)) ** a, lo_w, hi_w)
        signed = _quad(lambda w: abs(h(w)) ** a * np.sign(h(w)), lo_w, hi_w)
        return magnitude, signed

    total_abs = total_signed = 0.0
    # (-inf, s_1] split into bounded pieces plus a semi-infinite tail
    cuts = [s[0] - c for c in (10.0 * profile.A, profile.A, 0.0)]
    pieces = [(cuts[0], cuts[1]), (cuts[1], cuts[2])]
    for lo_w, hi_w in pieces + [(s[j - 1], s[j]) for j in range(1, len(s))]:
        p, q = panel(lo_w, hi_w)
        total_abs += p
        total_signed += q
    p, q = panel(-math.inf, cuts[0])
    total_abs += p
    total_signed += q

    exponent = -profile.levy_scale_factor * (total_abs - 1j * math.tan(math.pi * a / 2.0) * total_signed)
    return complex(np.exp(exponent))


def _quad(fn, lo, hi) -> float:
    value, error = integrate.quad(fn, lo, hi, epsabs=1e-11, epsrel=1e-9, limit=400)
    if error > max(1e-7, 1e-7 * abs(value)):
        raise QuadratureError("moving-average characteristic exponent", error, max(1e-7, 1e-7 * abs(value)))
    return value


# ----------------------------------------------------------------------
# Pathwise substitution check and dependence
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class LevysubResult:
    """Comparison of the kernel integral and the mapped THETA integral on shared points"""

    eps: float
    points: int
    jump_difference: float
    max_point_difference: float
    compensated_difference: float
    kept_left: int
    kept_right: int
    intensity_z: float
    meta: dict = field(default_factory=dict)


def levysub_check(
    buffer: PointBuffer,
    f: FunctionalSpec,
    profile: LimitProfile,
    eps: Optional[float] = None
) -> LevysubResult:
    """
    Evaluate int_0^R g dL (left) and int f dM (right) on the same PSI points

    The returned LevysubResult carries the scalar left - right as
    compensated_difference, next to the per-point jump gaps and the counts
    of points each side keeps.  intensity_z is the larger Poisson z-score of
    those counts against their closed-form means, b_L R eps^(-alpha)/alpha on
    the left and c_Theta (1 - m(R)) eps^(-alpha)/alpha on the right.

    Left keeps points with u >= eps and subtracts b_L eps^(1-alpha)/(alpha-1) int_0^R g.
    Right maps the points to (x, y) = (m(r), m(r) u), keeps y >= eps and
    subtracts c_Theta eps^(1-alpha)/(alpha-1) int_(m(R))^1 f.  The jump terms
    agree point by point; the compensated difference is a centered sum over the
    band eps x <= y < eps and shrinks like eps^((2-alpha)/2).
    """
    if buffer.kind is PointKind.THETA:
        raise DomainError("levysub_check needs a PSI or LEVY buffer")
    eps = buffer.eps if eps is None else eps
    if eps < buffer.eps:
        raise DomainError(f"eps={eps} is below the buffer truncation {buffer.eps}")
    a = profile.alpha
    past = buffer.first <= 0.0
    r = -buffer.first[past]
    u = buffer.second[past]
    R = max(0.0, -buffer.window[0])

    mapped = map_psi_to_theta(buffer, profile)
    x, y = mapped.first, mapped.second
    left_jumps = profile.kernel_g(f, r) * u if len(r) else np.empty(0)
    right_jumps = f(x) * y if len(x) else np.empty(0)
    jump_difference = abs(float(np.sum(left_jumps)) - float(np.sum(right_jumps)))
    max_point = float(np.max(np.abs(left_jumps - right_jumps))) if len(r) else 0.0

    kernel_mean = profile.kernel_integral(f, R)
    left = compensated_integral(
        left_jumps[u >= eps],
        profile.levy_constant * eps ** (1.0 - a) / (a - 1.0) * kernel_mean
    )
    x_lo = profile.m(R)
    right = compensated_integral(
        right_jumps[y >= eps],
        profile.theta_constant * eps ** (1.0 - a) / (a - 1.0) * f.partial_integral(x_lo)
    )
    kept_left = int(np.count_nonzero(u >= eps))
    kept_right = int(np.count_nonzero(y >= eps))
    expected_left = profile.levy_constant * R * eps ** (-a) / a
    expected_right = profile.theta_constant * (1.0 - x_lo) * eps ** (-a) / a
    intensity_z = max(
        abs(kept - mean) / math.sqrt(mean) if mean > 0.0 else float(kept)
        for kept, mean in ((kept_left, expected_left), (kept_right, expected_right))
    )
    return LevysubResult(
        eps=eps,
        points=int(len(r)),
        jump_difference=jump_difference,
        max_point_difference=max_point,
        compensated_difference=left - right,
        kept_left=kept_left,
        kept_right=kept_right,
        intensity_z=intensity_z,
        meta={'R': R, 'left': left, 'right': right, 'expected_left': expected_left, 'expected_right': expected_right},
    )


def codifference(x: np.ndarray, y: np.ndarray) -> float:
    """Empirical codifference ln E e^(i(X-Y)) - ln E e^(iX) - ln E e^(-iY), real part"""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionMismatch("codifference needs paired samples")
    joint = np.mean(np.exp(1j * (x - y)))
    fx = np.mean(np.exp(1j * x))
    fy = np.mean(np.exp(-1j * y))
    return float(np.real(np.log(joint) - np.log(fx) - np.log(fy)))
