import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from levysdde import DelayMeasure, HistorySegment, delay_integral, exp_moment, fading_norm
from levysdde.errors import ConsistencyError, DivergenceError, QuadratureError
from levysdde.memory import (
    Atom, Exponential, PolynomialMap, combine, gauss_kronrod, in_M_kappa, piece_weighted_max, shift_append,
)

from conftest import dense_norm

finite = st.floats(-50, 50, allow_nan=False)


def random_seg(rng, r=1.0, n_nodes=12, n=1, jumps=False):
    t = np.sort(rng.uniform(-4, 0, n_nodes - 2))
    times = np.concatenate([[-4.0], t, [0.0]])
    vals = rng.normal(size=(len(times), n))
    if jumps:
        k = len(times) // 2
        times = np.insert(times, k, times[k])
        vals = np.insert(vals, k, vals[k] + 2.0, axis=0)
    return HistorySegment.from_nodes(times, vals, r)


class TestPieceMax:
    def test_matches_dense_grid(self, rng):
        for _ in range(200):
            t0 = -rng.uniform(0.1, 3)
            t1 = t0 + rng.uniform(0.01, 2)
            x0, x1 = rng.normal(size=(2, 1, 3))
            r = rng.uniform(0.1, 3)
            u = np.linspace(t0, t1, 20001)
            path = x0 + (u[:, None] - t0) / (t1 - t0) * (x1 - x0)
            ref = np.max(np.exp(r * u) * np.linalg.norm(path, axis=1))
            got = piece_weighted_max([t0], [t1], x0, x1, r)[0]
            assert got >= ref - 1e-12
            assert got == pytest.approx(ref, rel=1e-6)

    def test_interior_maximum(self):
        # x(u) = -u on [-1, 0] with r = 1: e^u * (-u) peaks at u = -1 with value 1/e
        got = piece_weighted_max([-2.0], [0.0], [[2.0]], [[0.0]], 1.0)[0]
        assert got == pytest.approx(math.exp(-1.0), rel=1e-14)


class TestSegment:
    def test_constant_norm(self):
        assert fading_norm(HistorySegment.constant(-2.5, 0.7)) == 2.5

    def test_pure_tail_norm(self):
        assert fading_norm(HistorySegment.pure_tail(3.0, 1.3)) == pytest.approx(3.0, rel=1e-15)

    def test_dense_oracle(self, rng):
        for _ in range(50):
            seg = random_seg(rng, r=rng.uniform(0.2, 2), n=2, jumps=bool(rng.integers(2)))
            assert fading_norm(seg) == pytest.approx(dense_norm(seg), abs=1e-6)

    def test_right_continuous_at_jump(self):
        seg = HistorySegment([-1.0, -0.5, -0.5, 0.0], [1.0, 1.0, 3.0, 3.0], math.exp(-1.0), 1.0)
        assert seg(np.array([-0.5]))[0, 0] == 3.0
        assert seg(np.array([-0.5000001]))[0, 0] == pytest.approx(1.0)

    def test_tail_evaluation(self):
        seg = HistorySegment.pure_tail(2.0, 0.5)
        assert seg(np.array([-4.0]))[0, 0] == pytest.approx(2.0 * math.exp(2.0))

    def test_discontinuous_tail_rejected(self):
        with pytest.raises(ConsistencyError):
            HistorySegment([-1.0, 0.0], [1.0, 1.0], 5.0, 1.0)

    def test_bad_grid(self):
        with pytest.raises(ValueError):
            HistorySegment([-1.0, -0.5], [1.0, 1.0], math.exp(-1.0), 1.0)
        with pytest.raises(ValueError):
            HistorySegment.constant(1.0, 0.0)

    def test_csv_round_trip(self, rng):
        seg = random_seg(rng, n=2, jumps=True)
        assert HistorySegment.from_csv(seg.to_csv()) == seg

    def test_combine_needs_shared_theta_min(self):
        a = HistorySegment.constant(1.0, 1.0, theta_min=-2.0)
        b = HistorySegment.constant(1.0, 1.0, theta_min=-3.0)
        with pytest.raises(ValueError):
            combine(a, b, 1.0, 1.0)

    def test_difference_of_equal_is_zero(self, rng):
        seg = random_seg(rng)
        assert fading_norm(seg - seg) == 0.0

    def test_norm_at_other_rate(self):
        seg = HistorySegment.pure_tail(1.0, 1.0)
        assert fading_norm(seg, r=0.5) == math.inf
        assert fading_norm(seg, r=2.0) == pytest.approx(1.0)


class TestShift:
    def test_append_and_norm(self):
        xi = HistorySegment.constant(1.0, 1.0, theta_min=-2.0)
        t = np.linspace(0, 1, 11)
        new = shift_append(xi, t, np.ones((11, 1)))
        assert new.head[0] == 1.0
        assert fading_norm(new) == pytest.approx(1.0)
        assert new.tail[0] == pytest.approx(xi.tail[0] * math.exp(-1.0))

    def test_mismatch_without_jump(self):
        xi = HistorySegment.constant(1.0, 1.0)
        with pytest.raises(ConsistencyError):
            shift_append(xi, [0.0, 0.1], [[2.0], [2.0]])
        new = shift_append(xi, [0.0, 0.1], [[2.0], [2.0]], jump=True)
        assert new(np.array([-0.1]))[0, 0] == 2.0

    def test_matches_record_segments(self, cubic, xi_half):
        from levysdde import integrate_deterministic

        rec = integrate_deterministic(cubic, xi_half, 2.0, 0.01)
        seg = shift_append(xi_half, rec.times, rec.states)
        ref = rec.segment_at()
        th = np.linspace(-6, 0, 997)
        assert np.allclose(seg(th), ref(th), rtol=0, atol=1e-12)
        assert fading_norm(seg) == pytest.approx(rec.final_norm, rel=1e-12)


class TestMeasures:
    def test_not_normalized(self):
        with pytest.raises(ValueError, match="measure not normalized"):
            DelayMeasure([(0.9, Atom(-0.1))])

    def test_atom_moment(self):
        assert exp_moment(DelayMeasure.atom(-0.3), 2.0) == pytest.approx(math.exp(0.6), rel=1e-15)

    def test_exponential_moment(self):
        assert exp_moment(DelayMeasure.exponential(3.0), 2.0) == pytest.approx(3.0)
        assert exp_moment(DelayMeasure.exponential(3.0), 3.0) == math.inf
        assert not in_M_kappa(DelayMeasure.exponential(3.0), 4.0)

    def test_moment_quadrature_oracle(self, rng):
        for _ in range(30):
            lam = rng.uniform(1, 6)
            kappa = rng.uniform(0.1, 0.9) * lam
            th0 = -rng.uniform(0, 3)
            mu = DelayMeasure([(0.4, Atom(th0)), (0.6, Exponential(lam))])
            dens, _ = integrate.quad(lambda t: lam * math.exp((lam - kappa) * t), -np.inf, 0, epsabs=1e-13)
            assert exp_moment(mu, kappa) == pytest.approx(0.4 * math.exp(-kappa * th0) + 0.6 * dens, abs=1e-10)

    @given(st.floats(0.1, 5), st.floats(0.01, 4.0))
    def test_moment_increasing_in_kappa(self, lam, k):
        mu = DelayMeasure.exponential(lam)
        assert exp_moment(mu, k) <= exp_moment(mu, k * 1.1)


class TestQuadrature:
    @pytest.mark.parametrize("f,a,b", [
        (np.sin, 0.0, 10.0),
        (lambda x: np.exp(-x * x), -3.0, 4.0),
        (lambda x: np.sqrt(np.abs(x)), -1.0, 2.0),
        (lambda x: 1 / (1 + 100 * x * x), -1.0, 1.0),
    ])
    def test_against_scipy(self, f, a, b):
        ref, _ = integrate.quad(f, a, b, epsabs=1e-13, epsrel=1e-13, limit=500)
        assert gauss_kronrod(f, a, b) == pytest.approx(ref, abs=1e-8)

    def test_vector_valued(self):
        out = gauss_kronrod(lambda x: np.stack([x, x * x], axis=1), 0.0, 1.0)
        assert np.allclose(out, [0.5, 1 / 3], atol=1e-13)

    def test_budget(self):
        with pytest.raises(QuadratureError):
            gauss_kronrod(lambda x: np.sin(1 / np.maximum(np.abs(x), 1e-300)), 0.0, 1.0, max_intervals=50)


class TestDelayIntegral:
    def test_atom_is_point_evaluation(self, rng):
        seg = random_seg(rng)
        g = PolynomialMap([0, 0, 1])
        got = delay_integral(seg, DelayMeasure.atom(-1.7), g)
        assert got[0] == pytest.approx(seg(np.array([-1.7]))[0, 0] ** 2, rel=1e-15)

    def test_exponential_against_quad(self, rng):
        for _ in range(10):
            seg = random_seg(rng, r=0.5)
            lam = rng.uniform(1.5, 4.0)
            g = PolynomialMap([1.0, 0.5, -1.0])

            def integrand(t):
                return lam * math.exp(lam * t) * float(g(seg(np.array([t])))[0, 0])

            pts = list(seg.times)
            grid_part = sum(integrate.quad(integrand, a, b, epsabs=1e-13, epsrel=1e-12)[0]
                            for a, b in zip(pts[:-1], pts[1:]) if b > a)
            # beyond this point the tail integrand is below e^-60 of its size at theta_min
            lower = seg.theta_min - 60.0 / (lam - 2 * seg.r)
            tail_part, _ = integrate.quad(integrand, lower, seg.theta_min, epsabs=1e-13, epsrel=1e-12, limit=200)
            got = delay_integral(seg, DelayMeasure.exponential(lam), g)[0]
            assert got == pytest.approx(grid_part + tail_part, abs=1e-8)

    def test_callable_tail_matches_polynomial(self, rng):
        seg = random_seg(rng, r=0.5)
        mu = DelayMeasure.exponential(3.0)
        poly = delay_integral(seg, mu, PolynomialMap([0, 0, 1]))
        other = delay_integral(seg, mu, lambda x: x ** 2)
        assert other[0] == pytest.approx(poly[0], abs=1e-9)

    def test_divergent_tail(self):
        seg = HistorySegment.pure_tail(1.0, 1.0)
        with pytest.raises(DivergenceError):
            delay_integral(seg, DelayMeasure.exponential(1.5), PolynomialMap([0, 0, 1]))

    def test_zero_tail_never_diverges(self):
        seg = HistorySegment([-1.0, 0.0], [0.0, 1.0], 0.0, 1.0)
        out = delay_integral(seg, DelayMeasure.exponential(0.5), PolynomialMap([0, 0, 1]))
        assert np.isfinite(out).all()


@given(st.lists(finite, min_size=3, max_size=10), st.lists(finite, min_size=3, max_size=10), st.floats(-5, 5))
def test_norm_is_a_norm(xs, ys, a):
    k = min(len(xs), len(ys))
    times = np.linspace(-3, 0, k)
    p = HistorySegment.from_nodes(times, xs[:k], 0.8)
    q = HistorySegment.from_nodes(times, ys[:k], 0.8)
    tol = 1e-9 * (1 + fading_norm(p) + fading_norm(q))
    assert fading_norm(p + q) <= fading_norm(p) + fading_norm(q) + tol
    assert fading_norm(p.scaled(a)) == pytest.approx(abs(a) * fading_norm(p), rel=1e-12, abs=1e-12)
    assert fading_norm(p) >= abs(xs[k - 1]) - 1e-12
