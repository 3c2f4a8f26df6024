"""Power-sum functionals, their stable parameters and the limit profile"""

import math

import numpy as np
import pytest
from scipy import integrate

from errors import DomainError, FunctionalParseError, MembershipError
from services.funcspec import FunctionalSpec, example_sigmas, sigma_from_tail_constant


def terms(f):
    return [(t.coefficient, t.zeta) for t in f.terms]


class TestParsing:

    def test_constant_preset(self):
        f = FunctionalSpec.parse('tau', 1.5)
        assert terms(f) == [(0.5, 0.0)]
        assert f.source == 'tau'

    def test_power_difference(self):
        f = FunctionalSpec.parse('x^-0.25 - 1', 1.5)
        assert terms(f) == [(-1.0, 0.0), (1.0, 0.25)]

    def test_symbols_and_gamma(self):
        f = FunctionalSpec.parse('alpha*(alpha-1)*gammafn(alpha)*x^(1-alpha)', 1.5)
        (c, z), = terms(f)
        assert c == pytest.approx(0.75 * math.gamma(1.5), rel=1e-14)
        assert z == pytest.approx(0.5, abs=1e-12)

    def test_like_terms_merge(self):
        f = FunctionalSpec.parse('2*x^-0.3 + x^-0.3 - 3*x^-0.3 + 1', 1.5)
        assert terms(f) == [(1.0, 0.0)]

    def test_integer_power_of_sum_expands(self):
        f = FunctionalSpec.parse('(1 + x)^2', 1.5)
        assert terms(f) == [(1.0, -2.0), (2.0, -1.0), (1.0, 0.0)]

    def test_division_by_constant(self):
        f = FunctionalSpec.parse('x^-0.5 / (2*pi)', 1.5)
        (c, _), = terms(f)
        assert c == pytest.approx(1.0 / (2.0 * math.pi))

    def test_unicode_minus(self):
        assert terms(FunctionalSpec.parse('x^−0.25', 1.5)) == [(1.0, 0.25)]

    def test_zero_functional(self):
        f = FunctionalSpec.parse('0', 1.5)
        assert f.is_zero
        assert f.sigma_beta() == (0.0, 0.0)

    @pytest.mark.parametrize('text, position', [
        ('x +', 3),
        ('x ^ x', 4),
        ('1 / x', 4),
        ('foo', 0),
        ('(x', 2),
        ('x $ 2', 2),
        ('', 0),
    ])
    def test_grammar_errors_carry_position(self, text, position):
        with pytest.raises(FunctionalParseError) as info:
            FunctionalSpec.parse(text, 1.5)
        assert info.value.position == position

    def test_non_integer_power_of_sum(self):
        with pytest.raises(FunctionalParseError):
            FunctionalSpec.parse('(1 + x)^0.5', 1.5)

    def test_membership_bound(self):
        with pytest.raises(MembershipError):
            FunctionalSpec.parse('x^-0.7', 1.5)

    def test_length_preset_golden_ratio_gate(self):
        FunctionalSpec.parse('length', 1.6)
        with pytest.raises(MembershipError):
            FunctionalSpec.parse('length', 1.7)


class TestEvaluation:

    def test_call_scalar_and_array(self):
        f = FunctionalSpec.parse('x^-0.25 - 1', 1.5)
        assert f(1.0) == 0.0
        np.testing.assert_allclose(f(np.array([0.0625, 1.0])), [1.0, 0.0])

    def test_call_outside_unit_interval(self):
        with pytest.raises(DomainError):
            FunctionalSpec.parse('tau', 1.5)(0.0)

    def test_integral_closed_form(self):
        f = FunctionalSpec.parse('3*x^-0.5 + x^2', 1.5)
        expected, _ = integrate.quad(f, 0.0, 1.0)
        assert f.integral() == pytest.approx(expected, rel=1e-8)

    def test_partial_integral(self):
        f = FunctionalSpec.parse('x^-0.4 - 2', 1.5)
        expected, _ = integrate.quad(lambda x: f(x) * x ** -0.5, 0.2, 1.0)
        assert f.partial_integral(0.2, -0.5) == pytest.approx(expected, rel=1e-9)
        assert f.partial_integral(1.0) == 0.0

    def test_algebra(self):
        f = FunctionalSpec.parse('x^-0.25', 1.5)
        g = FunctionalSpec.parse('1', 1.5)
        combo = 2.0 * f - g
        assert terms(combo) == [(-1.0, 0.0), (2.0, 0.25)]
        assert (f - f).is_zero

    def test_roots(self):
        f = FunctionalSpec.parse('x^-0.5 - 2', 1.5)
        roots = f.roots()
        assert len(roots) == 1
        assert roots[0] == pytest.approx(0.25, rel=1e-10)


class TestStableParameters:

    def test_constant_functional(self):
        a = 1.5
        sigma, beta = FunctionalSpec.parse('tau', a).sigma_beta()
        assert sigma == pytest.approx(example_sigmas(a)['sigma1'], rel=1e-10)
        assert beta == 1.0

    @pytest.mark.parametrize('alpha', [1.2, 1.5, 1.6])
    def test_worked_example_scales(self, alpha):
        sig = example_sigmas(alpha)
        for preset, key in [('length', 'sigma2'), ('extlength', 'sigma3'), ('ratio-linearization', 'sigma4')]:
            sigma, beta = FunctionalSpec.parse(preset, alpha).sigma_beta()
            assert sigma == pytest.approx(sig[key], rel=1e-8)
            assert beta == pytest.approx(1.0)

    def test_gate_makes_scales_nan(self):
        sig = example_sigmas(1.7)
        assert math.isnan(sig['sigma2']) and math.isnan(sig['sigma4'])
        assert sig['sigma1'] > 0.0 and sig['sigma3'] > 0.0

    def test_sign_change_splits_mass(self):
        a = 1.5
        f = FunctionalSpec.parse('x^-0.5 - 2', a)
        positive, negative = f.power_integrals()
        p_ref, _ = integrate.quad(lambda x: abs(f(x)) ** a, 0.0, 0.25)
        n_ref, _ = integrate.quad(lambda x: abs(f(x)) ** a, 0.25, 1.0)
        assert positive == pytest.approx(p_ref, rel=1e-7)
        assert negative == pytest.approx(n_ref, rel=1e-7)
        _, beta = f.sigma_beta()
        assert beta == pytest.approx((p_ref - n_ref) / (p_ref + n_ref), rel=1e-6)

    def test_negated_functional_flips_skewness(self):
        f = FunctionalSpec.parse('x^-0.3 + 0.5', 1.5)
        s1, b1 = f.sigma_beta()
        s2, b2 = (-f).sigma_beta()
        assert s1 == pytest.approx(s2)
        assert b1 == pytest.approx(-b2)

    def test_tail_constant_inverts_levy_scale(self):
        a = 1.5
        sigma = sigma_from_tail_constant(0.3, a)
        tail = 2.0 * math.sin(math.pi * a / 2.0) * math.gamma(a) / math.pi * sigma ** a
        assert tail == pytest.approx(0.3, rel=1e-12)


class TestLimitProfile:

    def test_constants_at_three_halves(self, profile):
        assert profile.levy_constant == pytest.approx(2.0 / math.pi, rel=1e-14)
        assert profile.levy_scale_factor == pytest.approx(1.0 / (math.sin(0.75 * math.pi) * math.gamma(2.5)), rel=1e-12)
        assert profile.A == pytest.approx(1.5 * math.gamma(1.5))

    def test_m_and_inverse(self, profile):
        r = np.array([0.0, 0.3, 2.0, 50.0])
        m = profile.m(r)
        assert m[0] == 1.0
        assert np.all(np.diff(m) < 0.0)
        np.testing.assert_allclose(profile.r_of_x(m), r, atol=1e-10)

    def test_m_domain(self, profile):
        with pytest.raises(DomainError):
            profile.m(-1.0)

    def test_m_solves_block_ode(self, profile):
        # m' = -m^alpha / (alpha Gamma(alpha) (alpha - 1))
        r, h = 0.7, 1e-6
        derivative = (profile.m(r + h) - profile.m(r - h)) / (2 * h)
        assert derivative == pytest.approx(-profile.m(r) ** 1.5 / (profile.A * 0.5), rel=1e-6)

    def test_kernel_closed_form(self, profile):
        f = FunctionalSpec.parse('x^-0.4 - 0.3', 1.5)
        r = np.linspace(0.0, 20.0, 11)
        np.testing.assert_allclose(profile.kernel_g(f, r), profile.kernel_closed_form(f, r), rtol=1e-12)

    def test_kernel_power_integrals_by_quadrature(self, profile):
        f = FunctionalSpec.parse('tau', 1.5)
        direct, _ = integrate.quad(lambda r: abs(profile.kernel_g(f, r)) ** 1.5, 0.0, math.inf)
        assert sum(profile.kernel_power_integrals(f)) == pytest.approx(direct, rel=1e-7)

    def test_kernel_integral_by_quadrature(self, profile):
        f = FunctionalSpec.parse('x^-0.2 - 1', 1.5)
        direct, _ = integrate.quad(lambda r: profile.kernel_g(f, r), 0.0, 30.0)
        assert profile.kernel_integral(f, 30.0) == pytest.approx(direct, rel=1e-8)
