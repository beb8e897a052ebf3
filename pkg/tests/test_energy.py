import math

import numpy as np
import pytest

from divkit.core import SingularPairError, WeightedSampleSet, pairwise_power_sum
from divkit.energy import (
    EnergyOrder,
    cramer,
    energy_gini_decomposition,
    energy_sq,
    energy_sq_location_gradient,
    gini_index,
    gini_l1,
    gini_t,
    gmd,
)
from divkit.whitening import fit_whitening

from conftest import gauss_energy_sq_1d, make_set, standardized_set

# Closed-form squared energy distance between N(0,1) and N(0.75,1), and the
# empirical-estimator spread at N = 1e4 measured over 30 replicate draws.
GAUSS_SHIFT = 0.75
GAUSS_POP_E2 = 0.310122649053024
GAUSS_EMP_SD = 0.0118


class TestEnergyOrder:
    def test_even_orders_rejected(self):
        for alpha in (0.0, 2.0, 4.0, 6.0):
            with pytest.raises(ValueError):
                EnergyOrder(alpha)

    def test_l1_restriction(self):
        EnergyOrder(1.0, "l1")
        with pytest.raises(ValueError):
            EnergyOrder(0.5, "l1")

    def test_sign_bookkeeping(self):
        assert EnergyOrder(1.0).sign == -1.0  # value = 2 cross - selfs
        assert EnergyOrder(2.5).sign == 1.0
        assert EnergyOrder(4.5).sign == -1.0
        assert EnergyOrder(-0.5).sign == 1.0
        assert EnergyOrder(-2.5).sign == 1.0  # negative orders never alternate

    def test_required_matching(self):
        assert EnergyOrder(1.5).required_matching == 0
        assert EnergyOrder(2.5).required_matching == 1
        assert EnergyOrder(4.5).required_matching == 2

    def test_dim_floor(self):
        with pytest.raises(ValueError):
            EnergyOrder(-1.5).check_dim(1)


class TestEnergySq:
    def test_identity(self, rng):
        s = make_set(rng, 20, 2, weighted=True)
        assert energy_sq(s, s, 1.0).value == 0.0

    def test_delta_pair(self):
        d0 = WeightedSampleSet([[0.0]])
        for a in (0.5, 1.0, 3.0):
            da = WeightedSampleSet([[a]])
            assert energy_sq(d0, da, 1.0).value == pytest.approx(2 * a, rel=1e-15)

    def test_gaussian_shift_matches_folded_normal_oracle(self):
        r = np.random.default_rng(900)
        a = WeightedSampleSet(r.normal(size=(10_000, 1)))
        b = WeightedSampleSet(r.normal(size=(10_000, 1)) + GAUSS_SHIFT)
        emp = energy_sq(a, b, 1.0).value
        assert abs(emp - GAUSS_POP_E2) <= 3 * GAUSS_EMP_SD

    def test_negative_order_matches_naive_oracle(self, rng):
        # disjoint supports; self sums skip the diagonal
        a = WeightedSampleSet(rng.uniform(0.0, 1.0, size=(15, 1)), rng.random(15) + 0.1)
        b = WeightedSampleSet(rng.uniform(5.0, 6.0, size=(12, 1)), rng.random(12) + 0.1)
        alpha = -0.5

        def naive_self(s):
            return sum(
                s.weights[i] * s.weights[j] * abs(s.points[i, 0] - s.points[j, 0]) ** alpha
                for i in range(len(s))
                for j in range(len(s))
                if i != j
            )

        naive_cross = sum(
            wi * vj * abs(x - y) ** alpha
            for x, wi in zip(a.points[:, 0], a.weights)
            for y, vj in zip(b.points[:, 0], b.weights)
        )
        expected = naive_self(a) + naive_self(b) - 2 * naive_cross
        assert energy_sq(a, b, alpha).value == pytest.approx(expected, abs=1e-12)

    def test_high_order_requires_matched_moments(self):
        a = WeightedSampleSet([[0.0], [2.0]])
        b = WeightedSampleSet([[1.0], [3.0]])
        with pytest.raises(ValueError, match="moment"):
            energy_sq(a, b, 2.5)

    def test_high_order_gaussian_oracle(self, rng):
        # matched means, different variances: closed-form Gaussians vs
        # large standardized-then-scaled samples
        a = standardized_set(rng, 4000, 1)
        b = standardized_set(rng, 4000, 1).scale(math.sqrt(2.0))
        got = energy_sq(a, b, 2.5, moment_tol=1e-6).value
        want = gauss_energy_sq_1d(0.0, 1.0, 2.0, 2.5)
        assert got == pytest.approx(want, rel=0.1)

    def test_coincident_negative_order(self):
        a = WeightedSampleSet([[0.0], [1.0]])
        b = WeightedSampleSet([[1.0], [7.0]])
        with pytest.raises(SingularPairError):
            energy_sq(a, b, -0.5)

    def test_scale_sensitivity(self, rng):
        x = make_set(rng, 25, 2, weighted=True)
        y = make_set(rng, 30, 2, shift=0.5, weighted=True)
        for alpha in (0.5, 1.0, 1.5):
            base = energy_sq(x, y, alpha).value
            for c in (0.1, 3.0, 10.0):
                scaled = energy_sq(x.scale(c), y.scale(c), alpha).value
                assert scaled == pytest.approx(abs(c) ** alpha * base, rel=1e-12)

    def test_metric_axioms_small_orders(self, rng):
        for trial in range(100):
            dim = int(rng.integers(1, 4))
            alpha = float(rng.choice([0.5, 1.0, 1.5, 2.0]))
            if alpha == 2.0:
                alpha = 1.9  # 2 itself is degenerate by design
            x = make_set(rng, int(rng.integers(3, 12)), dim)
            y = make_set(rng, int(rng.integers(3, 12)), dim, shift=0.3)
            z = make_set(rng, int(rng.integers(3, 12)), dim, scale=1.4)
            dxy = math.sqrt(energy_sq(x, y, alpha).value)
            dyz = math.sqrt(energy_sq(y, z, alpha).value)
            dxz = math.sqrt(energy_sq(x, z, alpha).value)
            assert dxy + dyz - dxz >= -1e-10

    def test_positive_definiteness_spot_check(self, rng):
        for trial in range(100):
            dim = int(rng.integers(1, 3))
            x = make_set(rng, 8, dim)
            y = make_set(rng, 9, dim, shift=rng.uniform(0.2, 1.0))
            assert energy_sq(x, y, 1.0).value > 0.0


def _convolve(a, b):
    """Exact law of the sum of two independent empirical measures."""
    pts = (a.points[:, None, :] + b.points[None, :, :]).reshape(-1, a.dim)
    w = np.outer(a.weights, b.weights).reshape(-1)
    return WeightedSampleSet(pts, w)


class TestSubAdditivity:
    def test_convolution(self, rng):
        for alpha in (0.5, 1.0, 1.5):
            for trial in range(5):
                dim = int(rng.integers(1, 3))
                x, y, z, w = (make_set(rng, 12, dim, shift=s) for s in (0, 0.4, 1.0, 1.3))
                lhs = math.sqrt(energy_sq(_convolve(x, z), _convolve(y, w), alpha).value)
                rhs = math.sqrt(energy_sq(x, y, alpha).value) + math.sqrt(
                    energy_sq(z, w, alpha).value
                )
                assert lhs <= rhs + 1e-10

    def test_convolution_negative_order_disjoint(self, rng):
        x = WeightedSampleSet(rng.uniform(0, 1, (8, 1)))
        y = WeightedSampleSet(rng.uniform(40, 41, (8, 1)))
        z = WeightedSampleSet(rng.uniform(200, 201, (8, 1)))
        w = WeightedSampleSet(rng.uniform(4000, 4001, (8, 1)))
        alpha = -0.5
        lhs = math.sqrt(energy_sq(_convolve(x, z), _convolve(y, w), alpha).value)
        rhs = math.sqrt(energy_sq(x, y, alpha).value) + math.sqrt(
            energy_sq(z, w, alpha).value
        )
        assert lhs <= rhs + 1e-10

    def test_convex_high_order(self, rng):
        alpha = 4.5
        x, y = standardized_set(rng, 14, 2), standardized_set(rng, 15, 2)
        z, w = standardized_set(rng, 13, 2), standardized_set(rng, 16, 2)
        for lam in np.arange(0.1, 0.95, 0.1):
            xs, zs = x.scale(math.sqrt(lam)), z.scale(math.sqrt(1 - lam))
            ys, ws = y.scale(math.sqrt(lam)), w.scale(math.sqrt(1 - lam))
            lhs = math.sqrt(energy_sq(_convolve(xs, zs), _convolve(ys, ws), alpha).value)
            rhs = math.sqrt(lam) * math.sqrt(energy_sq(x, y, alpha).value) + math.sqrt(
                1 - lam
            ) * math.sqrt(energy_sq(z, w, alpha).value)
            assert lhs <= rhs + 1e-10


class TestGradient:
    def test_matches_finite_differences(self, rng):
        mu = make_set(rng, 30, 2, weighted=True)
        nu = make_set(rng, 25, 2, shift=0.3, weighted=True)
        d = np.array([0.6, -0.8])
        for alpha in (0.5, 1.0, 1.5):
            g = energy_sq_location_gradient(mu, nu, 0.37, d, alpha)
            h = 1e-6
            fd = (
                energy_sq(mu, nu.shift((0.37 + h) * d), alpha).value
                - energy_sq(mu, nu.shift((0.37 - h) * d), alpha).value
            ) / (2 * h)
            assert g == pytest.approx(fd, rel=1e-6)

    def test_unbiased_over_resamples(self, rng):
        # the gradient is linear in the first argument's empirical measure,
        # so resampled gradients must average to the population gradient
        pop = make_set(rng, 800, 1)
        nu = make_set(rng, 50, 1, shift=0.4)
        theta = 0.3
        target = energy_sq_location_gradient(pop, nu, theta, alpha=1.0)
        draws = []
        for _ in range(200):
            idx = rng.integers(0, len(pop), size=64)
            mu_n = WeightedSampleSet(pop.points[idx])
            draws.append(energy_sq_location_gradient(mu_n, nu, theta, alpha=1.0))
        draws = np.array(draws)
        se = draws.std(ddof=1) / math.sqrt(len(draws))
        assert abs(draws.mean() - target) <= 4 * se


class TestCramer:
    def test_identity(self, rng):
        s = make_set(rng, 15, 1)
        assert cramer(s, s).value == 0.0

    def test_delta_pair(self):
        assert cramer(WeightedSampleSet([[0.0]]), WeightedSampleSet([[1.0]])).value == 1.0

    def test_two_forms_agree(self, rng):
        # expectation form = 2 * (CDF form)^2, exactly
        for trial in range(5):
            a = make_set(rng, 50, 1, weighted=True)
            b = make_set(rng, 50, 1, shift=0.7, weighted=True)
            rep = cramer(a, b)
            assert rep.diagnostics["expectation_form"] == pytest.approx(
                2.0 * rep.value**2, abs=1e-12
            )

    def test_cdf_form_equals_half_energy(self, rng):
        a = make_set(rng, 40, 1, weighted=True)
        b = make_set(rng, 35, 1, shift=0.5, weighted=True)
        assert 2.0 * cramer(a, b).value ** 2 == pytest.approx(
            energy_sq(a, b, 1.0).value, abs=1e-12
        )

    def test_dim_guard(self):
        s2 = WeightedSampleSet([[0.0, 0.0]])
        with pytest.raises(ValueError):
            cramer(s2, s2)


class TestGiniFamily:
    def test_point_mass(self):
        assert gini_index(WeightedSampleSet([[3.0], [3.0]])) == 0.0

    def test_two_point(self):
        assert gini_index(WeightedSampleSet([[0.0], [2.0]])) == pytest.approx(0.5)

    def test_four_point_oracle(self):
        # direct double-sum oracle: sum |x_i - x_j| / (2 N^2 mean) = 20 / 80
        xs = [1.0, 2.0, 3.0, 4.0]
        oracle = sum(abs(a - b) for a in xs for b in xs) / (2 * 16 * 2.5)
        assert oracle == 0.25
        assert gini_index(WeightedSampleSet([[x] for x in xs])) == pytest.approx(oracle)

    def test_zero_mean_rejected(self):
        with pytest.raises(ValueError):
            gini_index(WeightedSampleSet([[-1.0], [1.0]]))

    def test_gmd_single_pairs(self):
        a = WeightedSampleSet([[0.0, 0.0]])
        b = WeightedSampleSet([[3.0, 4.0]])
        assert gmd(a, a) == 0.0
        assert gmd(a, b) == pytest.approx(5.0)
        assert gmd(a, b, "l1") == pytest.approx(7.0)

    def test_gini_t_degenerate(self):
        with pytest.raises(ValueError):
            gini_t(WeightedSampleSet([[1.0, 1.0], [1.0, 1.0]]))

    def test_gini_t_1d_reduction(self, rng):
        s = make_set(rng, 30, 1, shift=3.0, weighted=True)
        assert gini_t(s) == pytest.approx(gini_index(s), abs=1e-12)

    def test_gini_t_scale_invariant(self, rng):
        s = make_set(rng, 25, 3, shift=2.0)
        q = rng.uniform(0.3, 4.0, 3)
        scaled = s.map_points(lambda p: p * q[None, :])
        assert gini_t(scaled) == pytest.approx(gini_t(s), abs=1e-10)

    def test_gini_l1_white_1d(self):
        s = WeightedSampleSet([[0.0], [2.0]])  # variance 1: map is identity
        zca = fit_whitening(s, "zca-cor")
        assert np.allclose(zca.matrix, np.eye(1), atol=1e-12)
        assert gini_l1(s, zca) == pytest.approx(0.5)

    def test_gini_l1_scale_stable(self, rng):
        s = make_set(rng, 40, 2, shift=2.5)
        v1 = gini_l1(s, fit_whitening(s, "zca-cor"))
        q = rng.uniform(0.2, 5.0, 2)
        scaled = s.map_points(lambda p: p * q[None, :])
        v2 = gini_l1(scaled, fit_whitening(scaled, "zca-cor"))
        assert v2 == pytest.approx(v1, abs=1e-10)

    def test_gini_l1_wrong_map(self, rng):
        s = make_set(rng, 20, 2, shift=2.0)
        other = make_set(rng, 20, 2, shift=2.0)
        with pytest.raises(ValueError, match="fitted"):
            gini_l1(s, fit_whitening(other, "zca-cor"))


class TestDecomposition:
    def test_identical_inputs(self, rng):
        s = make_set(rng, 10, 1, shift=4.0)
        rec = energy_gini_decomposition(s, s)
        assert rec["energy_sq_1"] == pytest.approx(0.0, abs=1e-12)
        assert rec["residual"] <= 1e-12

    def test_two_point_example(self):
        a = WeightedSampleSet([[0.0], [2.0]])
        b = WeightedSampleSet([[1.0], [3.0]])
        rec = energy_gini_decomposition(a, b)
        assert rec["residual"] <= 1e-12
        assert rec["energy_sq_1"] == pytest.approx(rec["direct_energy_sq"], abs=1e-12)

    def test_random_pairs(self, rng):
        for trial in range(5):
            a = make_set(rng, 30, 1, shift=5.0, weighted=True)
            b = make_set(rng, 30, 1, shift=6.0, weighted=True)
            assert energy_gini_decomposition(a, b)["residual"] <= 1e-12

    def test_zero_mean_rejected(self):
        a = WeightedSampleSet([[-1.0], [1.0]])
        b = WeightedSampleSet([[0.5], [1.5]])
        with pytest.raises(ValueError):
            energy_gini_decomposition(a, b)
