import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from levysdde import AtomsLevy, DelayMeasure, HistorySegment, fading_norm
from levysdde import conditions as C
from levysdde.dynamics import cubic_example, linear
from levysdde.memory import Atom, Exponential


def test_example_H_identity():
    x, y = np.meshgrid(np.linspace(-3, 3, 41), np.linspace(-3, 3, 41))
    # -4 (x - y)(x^3 - y^3) = -2 H(x, y)
    assert np.allclose(4 * (x - y) * (x ** 3 - y ** 3), 2 * C.example_H(x, y), atol=1e-9)
    assert np.all(C.example_H(x, y) <= 12 * (x ** 4 + y ** 4) + 1e-12)
    assert np.all(C.example_H(x, y) >= 0)


def test_check_H(mu_atom, rng):
    out = C.check_H(C.example_constants(mu_atom), 5000, rng)
    assert out["passed"] and out["diagonal_max"] == 0.0


class TestProposition:
    def test_example_slacks(self, mu_atom):
        rep = C.check_proposition_conditions(C.example_constants(mu_atom, r=1.0))
        assert rep.passed
        assert rep.slack1 == 1.0
        assert rep.slack2 == pytest.approx(2 - math.exp(0.6), rel=1e-15)
        assert rep.slack2 > 0

    def test_moment_by_quadrature(self):
        # smooth version of the atom: a narrow uniform density around -0.3 tends to the same moment
        ref = integrate.quad(lambda t: math.exp(-2 * t) / 0.002, -0.301, -0.299)[0]
        assert ref == pytest.approx(math.exp(0.6), rel=1e-6)

    def test_r_two_fails(self, mu_atom):
        rep = C.check_proposition_conditions(C.example_constants(mu_atom, r=2.0))
        assert not rep.passed
        assert rep.slack1 == -1.0
        assert any("lambda2_bar" in f for f in rep.failures)

    def test_heavy_exponential_fails_membership(self):
        mu = DelayMeasure.exponential(3.0)
        rep = C.check_proposition_conditions(C.example_constants(mu, r=1.0))
        assert not rep.mu1_in_class
        assert rep.mu1_membership_kappa == 4.0
        assert any("lambda=3" in f for f in rep.failures)

    def test_zero_constant_switches_term_off(self):
        mu = DelayMeasure.exponential(1.5)
        c = C.example_constants(DelayMeasure.atom(-0.1), r=1.0, mu2=mu)
        rep = C.check_proposition_conditions(c)
        assert rep.slack1 == 1.0
        assert not rep.mu2_in_class

    def test_serializes(self, mu_atom):
        import json

        json.dumps(C.check_proposition_conditions(C.example_constants(mu_atom)).to_dict())


class TestDissipativity:
    def test_example_holds(self, cubic, mu_atom, rng):
        rep = C.sample_dissipativity(cubic, C.example_constants(mu_atom), C.ball_sampler(1.0, 5.0), 500, rng)
        assert rep.passed and rep.worst_margin >= -1e-9

    def test_exponential_measure_holds(self, rng):
        mu = DelayMeasure([(0.5, Atom(-0.2)), (0.5, Exponential(6.0))])
        spec = cubic_example(mu)
        rep = C.sample_dissipativity(spec, C.example_constants(mu), C.ball_sampler(1.0, 3.0), 100, rng)
        assert rep.passed

    @pytest.mark.parametrize("field,value", [("K1_bar", 0.0), ("lambda2_bar", 5.0)])
    def test_mutations_are_caught(self, cubic, mu_atom, rng, field, value):
        c = C.example_constants(mu_atom)
        setattr(c, field, value)
        rep = C.sample_dissipativity(cubic, c, C.ball_sampler(1.0, 5.0), 500, rng)
        assert rep.violations > 0
        assert rep.witnesses and "phi" in rep.witnesses[0]

    def test_lowering_lambda2_cannot_break_it(self, cubic, mu_atom, rng):
        # the lambda2 term enters with a minus sign, so a smaller value only loosens the bound
        c = C.example_constants(mu_atom)
        c.lambda2_bar = 0.0
        assert C.sample_dissipativity(cubic, c, C.ball_sampler(1.0, 5.0), 300, rng).passed

    def test_sides_by_hand(self, cubic, mu_atom):
        phi = HistorySegment.constant(1.0, 1.0)
        psi = HistorySegment.constant(0.0, 1.0)
        left, right = C.dissipativity_sides(cubic, C.example_constants(mu_atom), phi, psi)
        # f(phi) - f(psi) = (1 - 2 - 2 + 1) - 1 = -3
        assert left == -6.0
        # K1 H(1, 0) - K2 H(1, 0) - 3 = 2 - 4 - 3
        assert right == -5.0


class TestSampling:
    def test_segments_inside_ball(self, rng):
        for _ in range(200):
            phi, psi = C.random_pair(rng, 1.0, 5.0)
            assert fading_norm(phi) <= 5.0 + 1e-12 and fading_norm(psi) <= 5.0 + 1e-12
            assert np.array_equal(phi.times, psi.times)
            assert 2 <= len(phi.times) <= 40

    def test_lipschitz_linear_drift(self, rng):
        # f(phi) = -phi(0): the sup of |phi(0) - psi(0)|^2 / ||phi - psi||^2 is 1
        est = C.sample_local_lipschitz(linear(1.0), 2.0, 400, rng)
        assert 0.9 < est <= 1.0 + 1e-12

    def test_profile_monotone(self, cubic, rng):
        prof = C.lipschitz_profile(cubic, [1.0, 2.0, 4.0], 300, rng)
        vals = [prof[k] for k in sorted(prof)]
        assert vals == sorted(vals)

    def test_bad_radius(self, cubic, rng):
        with pytest.raises(ValueError):
            C.sample_local_lipschitz(cubic, 0.0, 10, rng)


class TestIrreducibilityBound:
    def test_value(self):
        levy = AtomsLevy.from_positive_half([1.0], [0.7])
        assert C.irreducibility_lower_bound(levy, 0.5, 1.0) == pytest.approx(0.5 * math.exp(-1.4), rel=1e-15)
        import mpmath

        assert C.irreducibility_lower_bound(levy, 0.5, 1.0) == pytest.approx(float(mpmath.mpf("0.5") * mpmath.exp("-1.4")), rel=1e-15)

    def test_no_large_jumps(self):
        levy = AtomsLevy.from_positive_half([0.2], [3.0])
        assert C.irreducibility_lower_bound(levy, 0.5, 100.0) == 0.5

    @given(st.floats(0.0, 5.0), st.floats(0.05, 2.0), st.floats(0.01, 50.0))
    def test_range(self, mass, eps, T):
        levy = AtomsLevy.from_positive_half([1.0], [mass / 2]) if mass > 0 else AtomsLevy.from_positive_half([1.0], [0.0])
        b = C.irreducibility_lower_bound(levy, eps, T)
        assert 0 < b <= 0.5
