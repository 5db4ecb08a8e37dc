import numpy as np
import pytest

from fpesn.errors import NoObservationsError
from fpesn.sparsity import (
    MaskSpec,
    interp_cubic_spline,
    interp_linear,
    make_mask,
    metric_report,
    nrmse,
    sigma_vs_baseline,
)


class TestMakeMask:
    def test_zero_fraction_all_observed(self):
        mask = make_mask(100, 2, MaskSpec(missing_fraction=0.0, seed=1))
        assert mask.all()

    def test_exact_missing_count_and_protected_origin(self):
        t_len = 50_001  # 5e4 steps plus the initial row
        mask = make_mask(t_len, 1, MaskSpec(missing_fraction=0.95, seed=3))
        assert (~mask[:, 0]).sum() == 47_500
        assert mask[0, 0]

    def test_deterministic(self):
        a = make_mask(500, 3, MaskSpec(missing_fraction=0.7, seed=9))
        b = make_mask(500, 3, MaskSpec(missing_fraction=0.7, seed=9))
        assert np.array_equal(a, b)
        c = make_mask(500, 3, MaskSpec(missing_fraction=0.7, seed=10))
        assert not np.array_equal(a, c)

    def test_per_variable_masks_differ(self):
        mask = make_mask(2000, 2, MaskSpec(missing_fraction=0.5, seed=2))
        assert not np.array_equal(mask[:, 0], mask[:, 1])
        shared = make_mask(2000, 2, MaskSpec(missing_fraction=0.5, seed=2,
                                             per_variable=False))
        assert np.array_equal(shared[:, 0], shared[:, 1])

    def test_mean_observation_gap(self):
        mask = make_mask(50_001, 1, MaskSpec(missing_fraction=0.95, seed=4))
        idx = np.flatnonzero(mask[:, 0])
        gap = np.diff(idx).mean()
        assert gap == pytest.approx(20.0, rel=0.1)

    def test_rejects_full_missing(self):
        with pytest.raises(ValueError):
            MaskSpec(missing_fraction=1.0)


class TestInterpLinear:
    def test_linear_ramp(self):
        y = np.array([0.0, np.nan, np.nan, np.nan, 4.0])
        mask = ~np.isnan(y)
        out = interp_linear(np.nan_to_num(y), mask)
        np.testing.assert_allclose(out, [0, 1, 2, 3, 4], atol=1e-14)

    def test_fully_observed_unchanged(self):
        rng = np.random.default_rng(0)
        y = rng.standard_normal((30, 2))
        out = interp_linear(y, np.ones_like(y, dtype=bool))
        assert np.array_equal(out, y)

    def test_edge_hold_and_single_point(self):
        y = np.zeros(6)
        mask = np.zeros(6, dtype=bool)
        y[2], mask[2] = 5.0, True
        np.testing.assert_array_equal(interp_linear(y, mask), np.full(6, 5.0))

    def test_matches_per_gap_closed_form(self):
        rng = np.random.default_rng(5)
        y = rng.standard_normal(400)
        mask = rng.random(400) > 0.95
        mask[0] = mask[-1] = True
        out = interp_linear(np.where(mask, y, 0.0), mask)
        idx = np.flatnonzero(mask)
        for a, b in zip(idx[:-1], idx[1:]):
            for t in range(a, b + 1):
                frac = (t - a) / (b - a)
                expect = y[a] + frac * (y[b] - y[a])
                assert out[t] == pytest.approx(expect, abs=1e-12)

    def test_exact_at_observed(self):
        rng = np.random.default_rng(6)
        y = rng.standard_normal(200)
        mask = rng.random(200) > 0.5
        mask[0] = True
        out = interp_linear(np.where(mask, y, 0.0), mask)
        assert np.array_equal(out[mask], y[mask])

    def test_no_observations_raises(self):
        with pytest.raises(NoObservationsError):
            interp_linear(np.zeros((5, 1)), np.zeros((5, 1), dtype=bool))


class TestInterpCubicSpline:
    def test_reproduces_cubic_in_deep_interior(self):
        # natural end conditions perturb the boundary panels, but the
        # perturbation decays geometrically towards the centre, where the
        # spline reproduces its own function class to round-off
        t = np.arange(201.0)
        y = 1e-4 * t**3 - 0.02 * t**2 + t - 3
        mask = np.zeros(201, dtype=bool)
        mask[::2] = True
        out = interp_cubic_spline(np.where(mask, y, 0.0), mask)
        centre = slice(90, 111)
        np.testing.assert_allclose(out[centre], y[centre], atol=1e-9)

    def test_straight_line_exact(self):
        t = np.arange(30.0)
        y = 2.0 * t - 7.0
        mask = np.zeros(30, dtype=bool)
        mask[[0, 4, 11, 19, 29]] = True
        out = interp_cubic_spline(np.where(mask, y, 0.0), mask)
        np.testing.assert_allclose(out, y, atol=1e-10)

    def test_matches_tridiagonal_oracle(self):
        rng = np.random.default_rng(7)
        y = rng.standard_normal(30)
        mask = np.zeros(30, dtype=bool)
        mask[np.sort(rng.choice(30, size=8, replace=False))] = True
        out = interp_cubic_spline(np.where(mask, y, 0.0), mask)
        idx = np.flatnonzero(mask)
        expect = _natural_spline_oracle(idx.astype(float), y[idx],
                                        np.arange(30.0))
        # outside the observed range the implementation clamps
        expect[:idx[0]] = y[idx[0]]
        expect[idx[-1] + 1:] = y[idx[-1]]
        np.testing.assert_allclose(out, expect, atol=1e-10)

    def test_clamps_outside_observed_range(self):
        y = np.zeros(10)
        mask = np.zeros(10, dtype=bool)
        y[3], y[6] = 1.0, -1.0
        mask[[3, 6]] = True
        out = interp_cubic_spline(y, mask)
        assert np.all(out[:4] == 1.0)
        assert np.all(out[6:] == -1.0)

    def test_single_observation_falls_back_with_warning(self):
        y = np.zeros(5)
        mask = np.zeros(5, dtype=bool)
        y[2], mask[2] = 3.0, True
        with pytest.warns(RuntimeWarning):
            out = interp_cubic_spline(y, mask)
        np.testing.assert_array_equal(out, np.full(5, 3.0))


class TestMetrics:
    def test_nrmse_zero_when_equal(self):
        y = np.random.default_rng(8).standard_normal((40, 2))
        assert nrmse(y, y) == 0.0

    def test_nrmse_one_for_zero_prediction(self):
        y = np.random.default_rng(9).standard_normal((40, 2))
        assert nrmse(np.zeros_like(y), y) == pytest.approx(1.0)

    def test_nrmse_matches_loop(self):
        rng = np.random.default_rng(10)
        a, b = rng.standard_normal((25, 3)), rng.standard_normal((25, 3))
        num = sum((a[t, j] - b[t, j]) ** 2 for t in range(25) for j in range(3))
        den = sum(b[t, j] ** 2 for t in range(25) for j in range(3))
        assert nrmse(a, b) == pytest.approx((num / den) ** 0.5, abs=1e-12)

    def test_sigma_is_one_when_equal_to_baseline(self):
        rng = np.random.default_rng(11)
        y_star = rng.standard_normal((30, 2))
        y_base = y_star + rng.standard_normal((30, 2))
        assert sigma_vs_baseline(y_base, y_base, y_star) == pytest.approx(1.0)

    def test_sigma_zero_for_perfect_reconstruction(self):
        rng = np.random.default_rng(12)
        y_star = rng.standard_normal((30, 1))
        y_base = y_star + 0.1
        assert sigma_vs_baseline(y_star, y_base, y_star) == 0.0

    def test_sigma_multivariate_matches_loop(self):
        rng = np.random.default_rng(13)
        y_star = rng.standard_normal((25, 3))
        y_r = y_star + 0.1 * rng.standard_normal((25, 3))
        y_base = y_star + 0.5 * rng.standard_normal((25, 3))
        acc = 0.0
        for j in range(3):
            num = np.sum((y_r[:, j] - y_star[:, j]) ** 2)
            den = np.sum((y_base[:, j] - y_star[:, j]) ** 2)
            acc += num / den
        assert sigma_vs_baseline(y_r, y_base, y_star) == pytest.approx(
            (acc / 3) ** 0.5, abs=1e-12)

    def test_report_bundles_fields(self):
        rng = np.random.default_rng(14)
        y_star = rng.standard_normal((20, 1))
        y_r = y_star + 0.01
        lin = y_star + 0.1
        csp = y_star - 0.2
        rep = metric_report(y_r, lin, csp, y_star)
        assert rep.sigma_lin == sigma_vs_baseline(y_r, lin, y_star)
        assert rep.sigma_csp == sigma_vs_baseline(y_r, csp, y_star)
        assert rep.sigma_intp_multivariate == rep.sigma_lin
        assert rep.nrmse == nrmse(y_r, y_star)


def _natural_spline_oracle(x, y, query):
    """Natural cubic spline by direct tridiagonal solve (Thomas algorithm)."""
    n = len(x)
    h = np.diff(x)
    # second derivatives m solve a tridiagonal system; natural ends m0=mn=0
    a = np.zeros(n)
    b = np.ones(n)
    c = np.zeros(n)
    d = np.zeros(n)
    for i in range(1, n - 1):
        a[i] = h[i - 1]
        b[i] = 2 * (h[i - 1] + h[i])
        c[i] = h[i]
        d[i] = 6 * ((y[i + 1] - y[i]) / h[i] - (y[i] - y[i - 1]) / h[i - 1])
    cp = np.zeros(n)
    dp = np.zeros(n)
    cp[0] = c[0] / b[0]
    dp[0] = d[0] / b[0]
    for i in range(1, n):
        denom = b[i] - a[i] * cp[i - 1]
        cp[i] = c[i] / denom
        dp[i] = (d[i] - a[i] * dp[i - 1]) / denom
    m = np.zeros(n)
    m[-1] = dp[-1]
    for i in range(n - 2, -1, -1):
        m[i] = dp[i] - cp[i] * m[i + 1]
    out = np.empty_like(query)
    for k, q in enumerate(query):
        i = np.clip(np.searchsorted(x, q) - 1, 0, n - 2)
        if q < x[0] or q > x[-1]:
            out[k] = np.nan
            continue
        t = q - x[i]
        hi = h[i]
        out[k] = (m[i] * (x[i + 1] - q) ** 3 / (6 * hi)
                  + m[i + 1] * t ** 3 / (6 * hi)
                  + (y[i] / hi - m[i] * hi / 6) * (x[i + 1] - q)
                  + (y[i + 1] / hi - m[i + 1] * hi / 6) * t)
    return out
