import math

import numpy as np
import pytest

from smoothsgd import (
    SmoothedModel,
    hermite_expand,
    he_eval,
    hermite_tensor_dense,
    normalized_hermite_link,
    nu_moment,
    population_grad_coeff,
    population_loss,
    project_perp,
    retract,
    s_k_value,
    sample_perp,
    sample_sphere,
    smooth_alpha_power,
    smooth_alpha_power_dalpha,
    smooth_univariate,
    smoothed_hermite_tensor,
    smoothed_sample_gradient,
    smoothed_sample_value,
)

SEED = 4242
MC_N = 200_000


def make_model(k, d, lam, **kw):
    return SmoothedModel(link=normalized_hermite_link(k), dim=d, lam=lam, **kw)


class TestSmoothAlphaPower:
    def test_lambda_zero_identity(self):
        for k in (1, 2, 5):
            for alpha in (-0.8, 0.0, 0.3, 1.0):
                assert smooth_alpha_power(k, alpha, 0.0, 9) == pytest.approx(
                    alpha**k, abs=1e-15
                )

    def test_linear(self):
        for lam in (0.5, 2.0):
            assert smooth_alpha_power(1, 0.4, lam, 12) == pytest.approx(
                0.4 / math.sqrt(1 + lam**2), abs=1e-15
            )

    def test_hand_expansion_k2(self):
        # (1/5) * (0.25 + 4 * 0.75 * (1/9)) with nu_1^{(9)} = 1/9
        assert smooth_alpha_power(2, 0.5, 2.0, 10) == pytest.approx(7 / 60, abs=1e-15)

    def test_parity(self):
        for k in (1, 2, 3, 6):
            for alpha in (0.2, 0.7):
                left = smooth_alpha_power(k, -alpha, 1.5, 11)
                right = (-1.0) ** k * smooth_alpha_power(k, alpha, 1.5, 11)
                assert left == pytest.approx(right, abs=1e-14)

    def test_amplifies_below_crossover_damps_above(self):
        # odd k: below the alpha ~ lam/sqrt(d) crossover the leaked
        # lower-degree term dominates alpha^3, above it smoothing shrinks
        # the value
        d = 16
        assert smooth_alpha_power(3, 0.1, 1.0, d) > smooth_alpha_power(3, 0.1, 0.0, d)
        assert smooth_alpha_power(3, 0.9, 1.0, d) < smooth_alpha_power(3, 0.9, 0.0, d)
        assert smooth_alpha_power(3, 0.1, 1.0, d) > 0

    def test_against_mc(self, rng):
        # direct Def-1 sampling: z uniform on the sphere orthogonal to w
        d, n = 8, MC_N
        w = sample_sphere(d, rng)
        u = sample_perp(w, rng)
        g = rng.standard_normal((n, d))
        g -= np.outer(g @ w, w)
        s = (g @ u) / np.linalg.norm(g, axis=1)
        for k, lam, alpha in ((2, 1.0, 0.5), (3, 1.7, 0.3), (5, 1.0, 0.8)):
            arg = (alpha + lam * math.sqrt(1 - alpha**2) * s) / math.sqrt(1 + lam**2)
            vals = arg**k
            se = vals.std(ddof=1) / math.sqrt(n)
            assert abs(vals.mean() - smooth_alpha_power(k, alpha, lam, d)) <= 4 * se

    def test_derivative_matches_fd(self):
        for k in (1, 3, 4):
            for alpha in (0.15, 0.6):
                h = 1e-6
                fd = (
                    smooth_alpha_power(k, alpha + h, 2.0, 24)
                    - smooth_alpha_power(k, alpha - h, 2.0, 24)
                ) / (2 * h)
                an = smooth_alpha_power_dalpha(k, alpha, 2.0, 24)
                assert fd == pytest.approx(an, rel=1e-6, abs=1e-9)


class TestSkValue:
    def test_above_crossover(self):
        # alpha^2 >= lam^2/d: plain damped power
        k, lam, d = 3, 2.0, 16
        alpha = 0.9
        assert alpha**2 >= lam**2 / d
        assert s_k_value(k, alpha, lam, d) == pytest.approx(
            alpha**k / (1 + lam**2) ** (k / 2), rel=1e-14
        )

    def test_below_crossover_even(self):
        k, lam, d = 4, 2.0, 100
        assert s_k_value(k, 0.0, lam, d) == pytest.approx(
            (lam**2 / d) ** (k / 2) / (1 + lam**2) ** (k / 2), rel=1e-14
        )

    def test_sandwich_against_closed_form(self):
        # the closed form should be bracketed by constant multiples of s_k
        for k in (2, 3, 4):
            ratios = []
            for lam in (1.0, 2.0):
                d = 64
                for alpha in np.linspace(0.05, 0.95, 19):
                    v = smooth_alpha_power(k, float(alpha), lam, d)
                    s = s_k_value(k, float(alpha), lam, d)
                    if k % 2 == 1 and alpha**2 < lam**2 / d:
                        continue  # odd case below crossover: closed form ~ alpha
                    ratios.append(v / s)
            assert 0.05 <= min(ratios) and max(ratios) <= 20.0

    def test_negative_alpha_rejected(self):
        with pytest.raises(ValueError):
            s_k_value(3, -0.1, 1.0, 16)


class TestSampleValue:
    def test_lambda_zero(self, rng):
        model = make_model(3, 10, 0.0)
        for _ in range(10):
            w = sample_sphere(10, rng)
            x = rng.standard_normal(10)
            y = float(rng.standard_normal())
            want = 1 - y * float(model.link(float(w @ x)))
            assert smoothed_sample_value(model, w, x, y) == pytest.approx(
                want, abs=1e-12
            )

    def test_linear_link_any_lambda(self, rng):
        link = hermite_expand(lambda t: t, max_degree=3)
        for lam in (0.7, 3.0):
            model = SmoothedModel(link=normalized_hermite_link(1), dim=12, lam=lam)
            w = sample_sphere(12, rng)
            x = rng.standard_normal(12)
            want = 1 - 2.0 * float(w @ x) / math.sqrt(1 + lam**2)
            assert smoothed_sample_value(model, w, x, 2.0) == pytest.approx(
                want, abs=1e-12
            )
        assert link.info_exponent == 1

    def test_against_mc(self, rng):
        d, lam, n = 8, 1.0, MC_N
        model = make_model(3, d, lam)
        w = sample_sphere(d, rng)
        x = rng.standard_normal(d)
        y = 1.3
        a = float(w @ x)
        xp = x - a * w
        b = float(np.linalg.norm(xp))
        u = xp / b
        g = rng.standard_normal((n, d))
        g -= np.outer(g @ w, w)
        s = (g @ u) / np.linalg.norm(g, axis=1)
        vals = 1 - y * model.link((a + lam * b * s) / math.sqrt(1 + lam**2))
        se = vals.std(ddof=1) / math.sqrt(n)
        assert abs(vals.mean() - smoothed_sample_value(model, w, x, y)) <= 4 * se

    def test_fresh_links_do_not_reuse_cached_tables(self, rng):
        # links created and dropped in sequence frequently land at the same
        # address, so a cache keyed on object identity serves the previous
        # link's tables; values must track the link content instead
        d, lam = 8, 1.0
        w = sample_sphere(d, rng)
        x = rng.standard_normal(d)
        seen = []
        for k in (3, 4, 5, 6):
            model = SmoothedModel(link=normalized_hermite_link(k), dim=d, lam=lam)
            seen.append(smoothed_sample_value(model, w, x, 1.0))
        a = float(w @ x)
        b = float(np.linalg.norm(x - a * w))
        # independent route: quadrature over the smoothing sphere, t the
        # first coordinate of a uniform point on S^{d-3} in d-1 dimensions
        t, wq = np.polynomial.legendre.leggauss(200)
        dens = wq * (1 - t * t) ** ((d - 4) / 2)
        dens /= dens.sum()
        for k, got in zip((3, 4, 5, 6), seen):
            link = normalized_hermite_link(k)
            arg = (a + lam * t * b) / math.sqrt(1 + lam * lam)
            want = 1.0 - float(dens @ link(arg))
            assert got == pytest.approx(want, abs=1e-9)

    def test_general_link_matches_polynomial_tables(self, rng):
        # same cubic evaluated through the quadrature path and the exact path
        poly = normalized_hermite_link(3)
        general = hermite_expand(lambda t: poly(t), max_degree=7)
        assert general.kind == "general"
        for lam in (0.0, 1.2):
            mp = SmoothedModel(link=poly, dim=9, lam=lam)
            mg = SmoothedModel(link=general, dim=9, lam=lam)
            for _ in range(5):
                w = sample_sphere(9, rng)
                x = rng.standard_normal(9)
                y = float(rng.standard_normal())
                assert smoothed_sample_value(mg, w, x, y) == pytest.approx(
                    smoothed_sample_value(mp, w, x, y), abs=1e-8
                )

    def test_dim_mismatch(self, rng):
        model = make_model(2, 6, 1.0)
        with pytest.raises(ValueError):
            smoothed_sample_value(model, sample_sphere(6, rng), np.zeros(5), 1.0)


class TestSampleGradient:
    def test_lambda_zero_chain_rule(self, rng):
        model = make_model(3, 8, 0.0)
        link = model.link
        h = 1e-6
        for _ in range(10):
            w = sample_sphere(8, rng)
            x = rng.standard_normal(8)
            y = float(rng.standard_normal())
            a = float(w @ x)
            dsig = (float(link(a + h)) - float(link(a - h))) / (2 * h)
            want = -y * dsig * project_perp(w, x)
            got = smoothed_sample_gradient(model, w, x, y).direction
            assert np.allclose(got, want, atol=1e-6)

    def test_tangency(self, rng):
        for k, lam in ((2, 0.0), (4, 1.0), (5, 2.0)):
            model = make_model(k, 8, lam)
            for _ in range(20):
                w = sample_sphere(8, rng)
                g = smoothed_sample_gradient(
                    model, w, rng.standard_normal(8), 1.0
                ).direction
                assert abs(g @ w) <= 1e-10 * max(np.linalg.norm(g), 1e-12)

    def test_parallel_sample_gives_zero(self, rng):
        model = make_model(4, 16, float(16**0.25))
        w = sample_sphere(16, rng)
        g = smoothed_sample_gradient(model, w, 2.5 * w, 1.0)
        assert np.allclose(g.direction, 0.0, atol=1e-12)
        assert g.b == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("k,lam", [(1, 0.0), (2, 1.0), (3, 2.0), (4, 2.0), (5, 1.0)])
    def test_finite_differences(self, k, lam, rng):
        model = make_model(k, 8, lam)
        h = 1e-5
        for _ in range(10):
            w = sample_sphere(8, rng)
            x = rng.standard_normal(8)
            y = float(rng.standard_normal())
            g = smoothed_sample_gradient(model, w, x, y).direction
            gn = max(float(np.linalg.norm(g)), 1e-8)
            for _ in range(2):
                v = sample_perp(w, rng)
                fd = (
                    smoothed_sample_value(model, retract(w, v, h), x, y)
                    - smoothed_sample_value(model, retract(w, v, -h), x, y)
                ) / (2 * h)
                assert abs(fd - g @ v) / gn <= 1e-5

    def test_finite_differences_quartic_schedule_radius(self, rng):
        # degree-4 link at the default smoothing radius lam = d^{1/4}
        d = 16
        model = make_model(4, d, d**0.25)
        h = 1e-5
        for _ in range(20):
            w = sample_sphere(d, rng)
            x = rng.standard_normal(d)
            y = float(rng.standard_normal())
            g = smoothed_sample_gradient(model, w, x, y).direction
            gn = max(float(np.linalg.norm(g)), 1e-8)
            v = sample_perp(w, rng)
            fd = (
                smoothed_sample_value(model, retract(w, v, h), x, y)
                - smoothed_sample_value(model, retract(w, v, -h), x, y)
            ) / (2 * h)
            assert abs(fd - g @ v) / gn <= 1e-5


class TestModelGuards:
    def test_lambda_warning_above_fourth_root(self):
        with pytest.warns(UserWarning):
            make_model(3, 16, 16**0.25 + 0.5)

    def test_dim_guard(self):
        with pytest.raises(ValueError):
            make_model(3, 2, 1.0)

    def test_noise_var_guard(self):
        with pytest.raises(ValueError):
            make_model(3, 8, 1.0, noise_var=-0.1)


class TestSmoothUnivariate:
    def test_identity_function(self):
        assert smooth_univariate(lambda t: t, 0.3, 2.0, 14) == pytest.approx(
            0.3 / math.sqrt(5), abs=1e-12
        )

    def test_matches_closed_form_powers(self):
        for k in (1, 2, 4, 6):
            for alpha in (0.0, 0.3, 0.7):
                got = smooth_univariate(lambda t, k=k: t**k, alpha, 1.5, 24)
                want = smooth_alpha_power(k, alpha, 1.5, 24)
                assert got == pytest.approx(want, abs=1e-9)

    def test_commute_identity(self):
        d, lam, alpha = 20, 2.0, 0.3
        h = 1e-6
        lhs = (
            smooth_univariate(lambda t: t**5, alpha + h, lam, d)
            - smooth_univariate(lambda t: t**5, alpha - h, lam, d)
        ) / (2 * h)
        rhs = smooth_univariate(
            lambda t: 5 * t**4, alpha, lam, d
        ) / math.sqrt(1 + lam**2) - (
            lam**2 * alpha / ((1 + lam**2) * (d - 1))
        ) * smooth_univariate(lambda t: 20 * t**3, alpha, lam, d, dim_shift=2)
        assert abs(lhs - rhs) / abs(rhs) <= 1e-5

    def test_dim_shift_guard(self):
        with pytest.raises(ValueError):
            smooth_univariate(lambda t: t, 0.1, 1.0, 3, dim_shift=-1)


class TestPopulation:
    def test_loss_examples(self):
        link3 = normalized_hermite_link(3)
        assert population_loss(link3, 1.0) == pytest.approx(0.0, abs=1e-14)
        assert population_loss(link3, 0.0) == pytest.approx(1.0, abs=1e-14)
        assert population_loss(link3, 0.5) == pytest.approx(0.875, abs=1e-14)

    def test_grad_coeff_lambda_zero(self):
        model = make_model(3, 16, 0.0)
        for alpha in (0.1, 0.4, 0.8):
            assert population_grad_coeff(model, alpha) == pytest.approx(
                3 * alpha**2, rel=1e-12
            )

    def test_grad_coeff_vs_mc(self, rng):
        # -E[grad . w*] over fresh samples = (1 - alpha^2) c_lambda(alpha)
        k, d, lam, alpha, n = 3, 12, 1.5, 0.4, 20_000
        model = make_model(k, d, lam)
        ws = sample_sphere(d, rng)
        w = alpha * ws + math.sqrt(1 - alpha**2) * sample_perp(ws, rng)
        w /= np.linalg.norm(w)
        dots = np.empty(n)
        for i in range(n):
            x = rng.standard_normal(d)
            y = float(model.link(float(ws @ x)))
            dots[i] = -(smoothed_sample_gradient(model, w, x, y).direction @ ws)
        se = dots.std(ddof=1) / math.sqrt(n)
        want = (1 - alpha**2) * population_grad_coeff(model, alpha)
        assert abs(dots.mean() - want) <= 4 * se

    def test_grad_coeff_envelope_bracket(self):
        k, lam, d = 3, 2.0, 64
        model = make_model(k, d, lam)
        ratios = []
        for alpha in np.linspace(0.8 * d**-0.5, 0.95, 20):
            s = s_k_value(k - 1, float(alpha), lam, d) / math.sqrt(1 + lam**2)
            ratios.append(population_grad_coeff(model, float(alpha)) / s)
        assert 0.01 <= min(ratios) and max(ratios) <= 100.0


class TestSmoothedTensor:
    def test_lambda_zero_rank_one(self, rng):
        w = sample_sphere(5, rng)
        t = smoothed_hermite_tensor(w, 3, 0.0)
        want = np.einsum("i,j,k->ijk", w, w, w)
        assert np.allclose(t.entries, want, atol=1e-12)

    def test_k2_closed_form(self, rng):
        d, lam = 7, 1.3
        w = sample_sphere(d, rng)
        t = smoothed_hermite_tensor(w, 2, lam)
        pperp = np.eye(d) - np.outer(w, w)
        want = (np.outer(w, w) + lam**2 * pperp / (d - 1)) / (1 + lam**2)
        assert np.allclose(t.entries, want, atol=1e-12)

    def test_contraction_bridge(self, rng):
        # <He_k(x), T_k(w)> equals the smoothed sigma-part of the sample value
        d, k, lam = 5, 3, 1.0
        w = sample_sphere(d, rng)
        t = smoothed_hermite_tensor(w, k, lam)
        model = SmoothedModel(link=normalized_hermite_link(k), dim=d, lam=lam)
        for _ in range(5):
            x = rng.standard_normal(d)
            lhs = float(np.tensordot(hermite_tensor_dense(x, k), t.entries, k))
            sigma_part = (1.0 - smoothed_sample_value(model, w, x, 1.0)) * math.sqrt(
                math.factorial(k)
            )
            assert lhs == pytest.approx(sigma_part, abs=1e-8)

    def test_nu_weights_appear(self, rng):
        # first-coordinate diagonal entry carries nu_1^{(d-1)} at k=2
        d, lam = 9, 2.0
        w = np.zeros(d)
        w[0] = 1.0
        t = smoothed_hermite_tensor(w, 2, lam)
        assert t.entries[1, 1] == pytest.approx(
            lam**2 * nu_moment(1, d - 1) / (1 + lam**2), rel=1e-12
        )
