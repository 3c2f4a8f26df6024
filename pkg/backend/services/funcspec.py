"""
Functionals of the block-counting process as finite power sums

A FunctionalSpec is f(x) = sum_j c_j x^(-zeta_j) on (0, 1].  Texts like
"alpha*(alpha-1)*gammafn(alpha)*x^(1-alpha)" are parsed into canonical
power sums; everything the limit theory needs (integral, stable scale and
skewness, the kernel g(r) = f(m(r)) m(r)) is then available in closed form
or by quadrature with the roots of f located first.
"""

import logging
import math
import re
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, optimize
from scipy.special import beta as beta_fn

from errors import DomainError, FunctionalParseError, MembershipError, QuadratureError
from services.rates import Alpha, AlphaLike

logger = logging.getLogger(__name__)

# Exponents closer than this are treated as one term
ZETA_MERGE_DECIMALS = 12
QUAD_RTOL = 1e-10
QUAD_ATOL = 1e-12
QUAD_LIMIT = 200

PRESETS = {
    'tau': 'alpha-1',
    'length': 'alpha*(alpha-1)*gammafn(alpha)*x^(1-alpha)',
    # external length reduces to a multiple of tau_n through its expansion
    'extlength': 'alpha*(alpha-1)*(2-alpha)*gammafn(alpha)',
    'ratio-linearization': '(2-alpha)^2*(x^(1-alpha) - 1)',
}


@dataclass(frozen=True)
class PowerTerm:
    coefficient: float
    zeta: float

    def __call__(self, x):
        return self.coefficient * np.power(x, -self.zeta)


# ----------------------------------------------------------------------
# Parser
# ----------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()−])"
    r")"
)


class _Token:
    __slots__ = ('kind', 'text', 'position')

    def __init__(self, kind: str, text: str, position: int):
        self.kind = kind
        self.text = text
        self.position = position


def _tokenize(text: str) -> List[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        match = _TOKEN_RE.match(text, pos)
        if not match or match.end() == pos:
            raise FunctionalParseError(f"Unexpected character {text[pos]!r}", text, pos)
        kind = match.lastgroup
        value = match.group(kind)
        start = match.start(kind)
        if value == '−':
            value = '-'
        tokens.append(_Token(kind, value, start))
        pos = match.end()
    tokens.append(_Token('end', '', len(text)))
    return tokens


# A power sum under construction: {zeta: coefficient}
PowerSum = Dict[float, float]


def _constant(value: float) -> PowerSum:
    return {0.0: value}


def _as_constant(value: PowerSum) -> Optional[float]:
    nonzero = {z: c for z, c in value.items() if c != 0.0}
    if not nonzero:
        return 0.0
    if set(nonzero) == {0.0}:
        return nonzero[0.0]
    return None


def _merge_key(zeta: float) -> float:
    return round(zeta, ZETA_MERGE_DECIMALS) + 0.0


def _add(left: PowerSum, right: PowerSum, sign: float = 1.0) -> PowerSum:
    out = dict(left)
    for zeta, coef in right.items():
        key = _merge_key(zeta)
        out[key] = out.get(key, 0.0) + sign * coef
    return out


def _multiply(left: PowerSum, right: PowerSum) -> PowerSum:
    out: PowerSum = {}
    for z1, c1 in left.items():
        for z2, c2 in right.items():
            key = _merge_key(z1 + z2)
            out[key] = out.get(key, 0.0) + c1 * c2
    return out


class _Parser:
    """
    Recursive descent over

        expr    := term (("+" | "-") term)*
        term    := unary (("*" | "/") unary)*
        unary   := ("+" | "-") unary | power
        power   := primary ("^" unary)?
        primary := NUMBER | "x" | "alpha" | "pi" | "gammafn" "(" expr ")" | "(" expr ")"

    Exponents, divisors and gammafn arguments must reduce to constants.
    """

    def __init__(self, text: str, alpha: float):
        self.text = text
        self.alpha = alpha
        self.tokens = _tokenize(text)
        self.index = 0

    @property
    def current(self) -> _Token:
        return self.tokens[self.index]

    def _advance(self) -> _Token:
        token = self.tokens[self.index]
        self.index += 1
        return token

    def _expect(self, text: str):
        token = self.current
        if token.text != text:
            found = token.text or 'end of input'
            raise FunctionalParseError(f"Expected {text!r}, found {found!r}", self.text, token.position)
        self._advance()

    def _error(self, message: str, token: _Token):
        raise FunctionalParseError(message, self.text, token.position)

    def parse(self) -> PowerSum:
        if self.current.kind == 'end':
            self._error("Empty functional", self.current)
        value = self._expr()
        if self.current.kind != 'end':
            self._error(f"Unexpected token {self.current.text!r}", self.current)
        return value

    def _expr(self) -> PowerSum:
        value = self._term()
        while self.current.text in ('+', '-'):
            sign = 1.0 if self._advance().text == '+' else -1.0
            value = _add(value, self._term(), sign)
        return value

    def _term(self) -> PowerSum:
        value = self._unary()
        while self.current.text in ('*', '/'):
            op = self._advance()
            operand_token = self.current
            operand = self._unary()
            if op.text == '*':
                value = _multiply(value, operand)
            else:
                divisor = _as_constant(operand)
                if divisor is None:
                    self._error("Division is only allowed by constants", operand_token)
                if divisor == 0.0:
                    self._error("Division by zero", operand_token)
                value = {z: c / divisor for z, c in value.items()}
        return value

    def _unary(self) -> PowerSum:
        if self.current.text in ('+', '-'):
            sign = 1.0 if self._advance().text == '+' else -1.0
            return {z: sign * c for z, c in self._unary().items()}
        return self._power()

    def _power(self) -> PowerSum:
        base_token = self.current
        base = self._primary()
        if self.current.text != '^':
            return base
        self._advance()
        exponent_token = self.current
        exponent = _as_constant(self._unary())
        if exponent is None:
            self._error("Exponent must be a constant expression", exponent_token)
        return self._raise(base, exponent, base_token)

    def _raise(self, base: PowerSum, exponent: float, token: _Token) -> PowerSum:
        terms = {z: c for z, c in base.items() if c != 0.0}
        if len(terms) == 1:
            (zeta, coef), = terms.items()
            if coef < 0.0 and not float(exponent).is_integer():
                self._error("Negative base with a non-integer exponent", token)
            return {_merge_key(zeta * exponent): coef ** exponent}
        if not terms:
            if exponent <= 0.0:
                self._error("Zero raised to a non-positive power", token)
            return _constant(0.0)
        if float(exponent).is_integer() and exponent >= 0:
            result = _constant(1.0)
            for _ in range(int(exponent)):
                result = _multiply(result, terms)
            return result
        self._error("Only single power terms may carry non-integer exponents", token)

    def _primary(self) -> PowerSum:
        token = self._advance()
        if token.kind == 'number':
            return _constant(float(token.text))
        if token.kind == 'name':
            name = token.text
            if name == 'x':
                return {-1.0: 1.0}
            if name == 'alpha':
                return _constant(self.alpha)
            if name == 'pi':
                return _constant(math.pi)
            if name == 'gammafn':
                self._expect('(')
                arg_token = self.current
                arg = _as_constant(self._expr())
                self._expect(')')
                if arg is None:
                    self._error("gammafn takes a constant argument", arg_token)
                if arg <= 0.0 and float(arg).is_integer():
                    self._error("gammafn is undefined at non-positive integers", arg_token)
                return _constant(math.gamma(arg))
            self._error(f"Unknown name {name!r}", token)
        if token.text == '(':
            value = self._expr()
            self._expect(')')
            return value
        found = token.text or 'end of input'
        self._error(f"Unexpected token {found!r}", token)


# ----------------------------------------------------------------------
# Functionals
# ----------------------------------------------------------------------

class FunctionalSpec:
    """
    f(x) = sum_j c_j x^(-zeta_j) on (0, 1], every zeta_j < 1/alpha

    Terms are kept in canonical form: exponents strictly increasing and
    coefficients nonzero.  The empty sum is f = 0.
    """

    def __init__(self, terms: Sequence[Tuple[float, float]], alpha: AlphaLike, source: str = ''):
        self.alpha = float(Alpha(float(alpha)))
        merged: Dict[float, float] = {}
        for coefficient, zeta in terms:
            key = _merge_key(float(zeta))
            merged[key] = merged.get(key, 0.0) + float(coefficient)
        scale = max((abs(c) for c in merged.values()), default=0.0)
        self.terms: Tuple[PowerTerm, ...] = tuple(
            PowerTerm(c, z) for z, c in sorted(merged.items())
            if c != 0.0 and abs(c) > 1e-15 * scale
        )
        self.source = source
        for term in self.terms:
            if term.zeta >= 1.0 / self.alpha:
                raise MembershipError(term.zeta, self.alpha)

    @classmethod
    def parse(cls, text: str, alpha: AlphaLike) -> 'FunctionalSpec':
        """
        Parse a functional in the power-sum grammar or a preset name

        Args:
            text: e.g. "0.5", "x^-0.25 - 1", "alpha*(alpha-1)*gammafn(alpha)*x^-0.5", or "tau"
            alpha: stable index; resolves the symbol `alpha` and the membership bound

        Raises:
            FunctionalParseError: text is not in the grammar
            MembershipError: some exponent is >= 1/alpha
        """
        alpha_value = float(Alpha(float(alpha)))
        source = text.strip()
        expression = PRESETS.get(source, source)
        power_sum = _Parser(expression, alpha_value).parse()
        # x contributes zeta = -1; keys are zeta values
        return cls([(c, z) for z, c in power_sum.items()], alpha_value, source=source)

    # -- algebra ------------------------------------------------------

    def _pairs(self):
        return [(t.coefficient, t.zeta) for t in self.terms]

    def __add__(self, other: 'FunctionalSpec') -> 'FunctionalSpec':
        if not isinstance(other, FunctionalSpec):
            return NotImplemented
        if other.alpha != self.alpha:
            raise DomainError("Cannot combine functionals built for different alpha")
        return FunctionalSpec(self._pairs() + other._pairs(), self.alpha, f"({self.source})+({other.source})")

    def __mul__(self, scalar: float) -> 'FunctionalSpec':
        scalar = float(scalar)
        return FunctionalSpec([(scalar * c, z) for c, z in self._pairs()], self.alpha, f"{scalar}*({self.source})")

    __rmul__ = __mul__

    def __neg__(self) -> 'FunctionalSpec':
        return self * -1.0

    def __sub__(self, other: 'FunctionalSpec') -> 'FunctionalSpec':
        return self + (-other)

    def __repr__(self) -> str:
        body = ' + '.join(f"{t.coefficient:.6g}*x^{-t.zeta:.6g}" for t in self.terms) or '0'
        return f"FunctionalSpec({body}; alpha={self.alpha:.6g})"

    # -- evaluation ---------------------------------------------------

    @property
    def is_zero(self) -> bool:
        return not self.terms

    @property
    def zeta_max(self) -> float:
        return max((t.zeta for t in self.terms), default=0.0)

    @property
    def coefficient_l1(self) -> float:
        return sum(abs(t.coefficient) for t in self.terms)

    def __call__(self, x):
        """Evaluate f at x in (0, 1]; scalars in, float out, arrays in, arrays out"""
        arr = np.asarray(x, dtype=np.float64)
        if np.any(arr <= 0.0):
            raise DomainError("f is defined on (0, 1]; got x <= 0")
        out = np.zeros_like(arr)
        for term in self.terms:
            out = out + term(arr)
        return float(out) if np.ndim(x) == 0 else out

    def integral(self) -> float:
        """Closed form of int_0^1 f = sum_j c_j / (1 - zeta_j)"""
        return sum(t.coefficient / (1.0 - t.zeta) for t in self.terms)

    def partial_integral(self, lower: float, weight_power: float = 0.0) -> float:
        """
        int_lower^1 f(x) x^weight_power dx in closed form

        Args:
            lower: lower limit in (0, 1]
            weight_power: extra power of x multiplying f
        """
        if not (0.0 < lower <= 1.0):
            raise DomainError(f"lower limit must lie in (0, 1], got {lower}")
        total = 0.0
        for t in self.terms:
            e = weight_power - t.zeta
            if abs(e + 1.0) < 1e-14:
                total += t.coefficient * -math.log(lower)
            else:
                total += t.coefficient * (1.0 - lower ** (e + 1.0)) / (e + 1.0)
        return total

    def roots(self) -> List[float]:
        """Sign changes of f on (0, 1), located on a log grid and refined with brentq"""
        if len(self.terms) < 2:
            return []
        grid = np.concatenate([np.logspace(-14, -1e-9, 2000), [1.0]])
        values = self(grid)
        roots = []
        for a, b, fa, fb in zip(grid[:-1], grid[1:], values[:-1], values[1:]):
            if fa == 0.0:
                if 0.0 < a < 1.0:
                    roots.append(float(a))
            elif fa * fb < 0.0:
                roots.append(float(optimize.brentq(self, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps)))
        return sorted(set(roots))

    def power_integrals(self, lower: float = 0.0) -> Tuple[float, float]:
        """
        Positive and negative parts int (f+)^alpha and int (f-)^alpha over (lower, 1]

        Single-sign f over the full interval uses closed forms; everything
        else goes through adaptive quadrature split at the roots of f.
        """
        a = self.alpha
        if self.is_zero:
            return 0.0, 0.0
        if lower == 0.0:
            closed = self._closed_power_integral()
            if closed is not None:
                value, sign = closed
                return (value, 0.0) if sign > 0 else (0.0, value)
        elif len(self.terms) == 1:
            t = self.terms[0]
            value = abs(t.coefficient) ** a * (1.0 - lower ** (1.0 - a * t.zeta)) / (1.0 - a * t.zeta)
            return (value, 0.0) if t.coefficient > 0 else (0.0, value)

        cuts = [lower] + [r for r in self.roots() if r > lower] + [1.0]
        positive = negative = 0.0
        for left, right in zip(cuts[:-1], cuts[1:]):
            if right <= left:
                continue
            mid = math.sqrt(left * right) if left > 0 else right / 2.0
            sign = np.sign(self(mid))
            value, error = integrate.quad(
                lambda x: abs(self(x)) ** a, left, right,
                epsabs=QUAD_ATOL, epsrel=QUAD_RTOL, limit=QUAD_LIMIT
            )
            if error > max(1e-8, 1e-8 * abs(value)):
                raise QuadratureError("int |f|^alpha", error, max(1e-8, 1e-8 * abs(value)))
            if sign > 0:
                positive += value
            else:
                negative += value
        return positive, negative

    def _closed_power_integral(self) -> Optional[Tuple[float, float]]:
        a = self.alpha
        if len(self.terms) == 1:
            t = self.terms[0]
            return abs(t.coefficient) ** a / (1.0 - a * t.zeta), np.sign(t.coefficient)
        if len(self.terms) == 2:
            low, high = self.terms
            # c (x^-zeta - 1): int_0^1 (x^-zeta - 1)^alpha = B(alpha + 1, 1/zeta - alpha) / zeta
            if low.zeta == 0.0 and high.zeta > 0.0 and abs(low.coefficient + high.coefficient) <= 1e-14 * abs(high.coefficient):
                zeta = high.zeta
                c = high.coefficient
                value = abs(c) ** a * beta_fn(a + 1.0, 1.0 / zeta - a) / zeta
                return value, np.sign(c)
        return None

    def abs_power_integral(self) -> float:
        positive, negative = self.power_integrals()
        return positive + negative

    def sigma_beta(self) -> Tuple[float, float]:
        """
        Scale and skewness of I(f) ~ S_alpha(sigma_f, beta_f, 0)

        Returns:
            (sigma_f, beta_f); f = 0 gives (0.0, 0.0)
        """
        positive, negative = self.power_integrals()
        total = positive + negative
        if total == 0.0:
            return 0.0, 0.0
        profile = LimitProfile(self.alpha)
        sigma = (profile.rho_density * total) ** (1.0 / self.alpha)
        beta = (positive - negative) / total
        return sigma, beta


# ----------------------------------------------------------------------
# Limit constants and the kernel
# ----------------------------------------------------------------------

class LimitProfile:
    """
    Constants of the limit objects at a given alpha

    - A = alpha Gamma(alpha), m(r) = (A / (r + A))^(1/(alpha-1))
    - levy_constant b_L = 1 / (Gamma(alpha) Gamma(2-alpha)), Levy density b_L u^(-1-alpha)
    - theta_constant c_Theta = alpha (alpha-1) / Gamma(2-alpha), density of Theta in y
    - control_constant a = 2 sin(pi alpha/2) Gamma(alpha+1) / pi
    - rho_density = c_Theta / a, density of the control measure on (0, 1]
    - levy_scale_factor K = b_L / a, so sigma^alpha = K int |g|^alpha
    """

    def __init__(self, alpha: AlphaLike):
        a = float(Alpha(float(alpha)))
        self.alpha = a
        self.A = a * math.gamma(a)
        self.gamma = 1.0 / (a - 1.0)
        self.levy_constant = 1.0 / (math.gamma(a) * math.gamma(2.0 - a))
        self.theta_constant = a * (a - 1.0) / math.gamma(2.0 - a)
        self.control_constant = 2.0 * math.sin(math.pi * a / 2.0) * math.gamma(a + 1.0) / math.pi
        self.rho_density = self.theta_constant / self.control_constant
        self.levy_scale_factor = self.levy_constant / self.control_constant

    def m(self, r):
        """Limiting fraction of surviving blocks at reverse scaled time r >= 0"""
        arr = np.asarray(r, dtype=np.float64)
        if np.any(arr < 0.0):
            raise DomainError("m(r) needs r >= 0")
        out = (self.A / (arr + self.A)) ** self.gamma
        return float(out) if np.ndim(r) == 0 else out

    def r_of_x(self, x):
        """Inverse of m: the depth r at which m(r) = x"""
        arr = np.asarray(x, dtype=np.float64)
        out = self.A * (arr ** (1.0 - self.alpha) - 1.0)
        return float(out) if np.ndim(x) == 0 else out

    def kernel_g(self, f: FunctionalSpec, r):
        """g(r) = f(m(r)) m(r)"""
        mr = self.m(r)
        return f(mr) * mr

    def kernel_closed_form(self, f: FunctionalSpec, r):
        """sum_j c_j (A / (r + A))^((1 - zeta_j) / (alpha - 1)), equal to kernel_g"""
        arr = np.asarray(r, dtype=np.float64)
        base = self.A / (arr + self.A)
        out = np.zeros_like(arr)
        for t in f.terms:
            out = out + t.coefficient * base ** ((1.0 - t.zeta) * self.gamma)
        return float(out) if np.ndim(r) == 0 else out

    def kernel_power_integrals(self, f: FunctionalSpec, r_max: float = math.inf) -> Tuple[float, float]:
        """
        int_0^r_max (g+)^alpha dr and int_0^r_max (g-)^alpha dr

        With x = m(r), dr = A (alpha-1) x^(-alpha) dx and |g|^alpha = |f|^alpha x^alpha,
        so both reduce to A (alpha-1) times the power integrals of f over (m(r_max), 1].
        """
        lower = 0.0 if math.isinf(r_max) else self.m(r_max)
        positive, negative = f.power_integrals(lower)
        factor = self.A * (self.alpha - 1.0)
        return factor * positive, factor * negative

    def kernel_integral(self, f: FunctionalSpec, r_max: float) -> float:
        """int_0^r_max g(r) dr = A (alpha-1) int_(m(r_max))^1 f(x) x^(1-alpha) dx"""
        lower = self.m(r_max)
        return self.A * (self.alpha - 1.0) * f.partial_integral(lower, 1.0 - self.alpha)


def m_of_r(profile: LimitProfile, r):
    return profile.m(r)


def kernel_g(f: FunctionalSpec, profile: LimitProfile, r):
    return profile.kernel_g(f, r)


def example_sigmas(alpha: AlphaLike) -> Dict[str, float]:
    """
    Closed-form stable scales of the four worked examples

    sigma1: tau_n, sigma2: total length, sigma3: external length,
    sigma4: external-to-total length ratio.  sigma2..sigma4 need
    1 + alpha - alpha^2 > 0 and are NaN otherwise.
    """
    a = float(Alpha(float(alpha)))
    g = math.gamma
    s = math.sin(math.pi * a / 2.0)
    base = math.pi / (2.0 * s * g(a) * g(2.0 - a))
    out = {'sigma1': (base * (a - 1.0) ** (1.0 + a)) ** (1.0 / a)}
    out['sigma3'] = (base * (a - 1.0) * (a * (a - 1.0) * (2.0 - a) * g(a)) ** a) ** (1.0 / a)
    gate = 1.0 + a - a * a
    if gate <= 0.0:
        out.update(sigma2=math.nan, sigma4=math.nan)
        return out
    coef2 = a * (a - 1.0) * g(a)
    out['sigma2'] = (base * (a - 1.0) * coef2 ** a / gate) ** (1.0 / a)
    beta_integral = g(a + 1.0) * g(gate / (a - 1.0)) / ((a - 1.0) * g(a / (a - 1.0)))
    out['sigma4'] = (base * (a - 1.0) * (2.0 - a) ** (2.0 * a) * beta_integral) ** (1.0 / a)
    return out


def sigma_from_tail_constant(c: float, alpha: AlphaLike) -> float:
    """Scale sigma of a totally skewed stable Z with P(Z > z) ~ c z^(-alpha)"""
    a = float(Alpha(float(alpha)))
    return (c * math.pi / (2.0 * math.sin(math.pi * a / 2.0) * math.gamma(a))) ** (1.0 / a)
