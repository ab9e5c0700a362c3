"""Hop models against scipy closed forms, compound-law quadrature oracles,
and their own physical samplers."""

import math
from dataclasses import replace

import numpy as np
import pytest
import scipy.special as sp
import scipy.stats as st
from scipy.integrate import quad

from relaycap import fading, foxh
from relaycap.errors import NormalizationError, UnsupportedHForm
from relaycap.fading import (
    DoubleGeneralizedGamma,
    Exponential,
    Gamma,
    GammaGamma,
    GenericH,
    Malaga,
    Weibull,
    WeibullGamma,
    model_from_config,
)
from relaycap.foxh import HParams
from relaycap.quadrature import integrate_semi_infinite

KS_SEED = 7
KS_DRAWS = 20_000
KS_MIN_P = 1e-3  # a wrong law collapses the p-value to ~0

MALAGA_KW = dict(alpha=2.296, beta=1.822, omega_prime=1.3265, b0=0.1079,
                 rho=0.596)

GRID = np.array([0.05, 0.2, 0.7, 1.4, 3.0, 6.5])


def h_route_pdf(model, x):
    """Density through the model's own H representation."""
    rep = model.to_h()
    v, _ = foxh.eval_h(rep.params, rep.delta * np.asarray(x, dtype=float))
    return rep.kappa * np.asarray(x, dtype=float) ** rep.gamma_power * v


class TestElementaryFamilies:
    """pdf/cdf against scipy and against the H route."""

    cases = [
        (Exponential(mean_snr=1.3), st.expon(scale=1.3)),
        (Gamma(shape=2.7, mean_snr=0.8), st.gamma(2.7, scale=0.8 / 2.7)),
        (Weibull(shape=1.9, mean_snr=1.4),
         st.weibull_min(1.9, scale=1.4 / sp.gamma(1.0 + 1.0 / 1.9))),
        (fading.GeneralizedGamma(shape=1.6, power=0.9, mean_snr=1.1),
         st.gengamma(1.6, 0.9,
                     scale=1.1 * sp.gamma(1.6) / sp.gamma(1.6 + 1.0 / 0.9))),
    ]

    @pytest.mark.parametrize("model,ref", cases,
                             ids=[type(m).__name__ for m, _ in cases])
    def test_pdf_cdf_match_scipy(self, model, ref):
        np.testing.assert_allclose(model.pdf(GRID), ref.pdf(GRID), rtol=1e-12)
        np.testing.assert_allclose(model.cdf(GRID), ref.cdf(GRID), rtol=1e-12)

    @pytest.mark.parametrize("model,ref", cases,
                             ids=[type(m).__name__ for m, _ in cases])
    def test_h_route_agrees(self, model, ref):
        np.testing.assert_allclose(
            h_route_pdf(model, GRID), model.pdf(GRID), rtol=1e-8
        )

    @pytest.mark.parametrize("model,ref", cases,
                             ids=[type(m).__name__ for m, _ in cases])
    def test_mean_property(self, model, ref):
        assert model.mean == pytest.approx(ref.mean(), rel=1e-12)


class TestGammaGamma:
    def test_pdf_against_compound_quadrature(self):
        """Bessel product law times the power-of-uniform pointing factor."""
        a, b, xi, mu = 2.902, 2.51, 1.1, 1.3
        x2 = xi * xi
        model = GammaGamma(alpha=a, beta=b, xi=xi, mean_snr=mu)

        def f_product(z):
            return (2.0 * (a * b) ** ((a + b) / 2)
                    / (sp.gamma(a) * sp.gamma(b))
                    * z ** ((a + b) / 2 - 1.0)
                    * sp.kv(a - b, 2.0 * np.sqrt(a * b * z)))

        def f_irr(i):
            tail, _ = quad(lambda z: f_product(z) * z ** (-x2), i, np.inf,
                           limit=200)
            return x2 * i ** (x2 - 1.0) * tail

        mean_irr = (sp.gamma(a + 1) * sp.gamma(b + 1)
                    / (sp.gamma(a) * sp.gamma(b) * a * b)) * x2 / (x2 + 1.0)
        c = mu / mean_irr
        for g in (0.05, 0.4, 1.1, 3.0, 8.0):
            assert float(model.pdf(g)) == pytest.approx(
                f_irr(g / c) / c, rel=1e-8
            )

    def test_cdf_consistent_with_pdf(self):
        model = GammaGamma(alpha=2.902, beta=2.51, xi=1.1)
        for x in (0.3, 1.0, 2.5):
            mass, err = integrate_semi_infinite(
                lambda g: model.pdf(g), scale=0.4, rel_tol=1e-10
            )
            below = mass - integrate_semi_infinite(
                lambda g: model.pdf(g), x, scale=0.4, rel_tol=1e-10
            )[0]
            assert float(model.cdf(x)) == pytest.approx(below, abs=1e-8)

    def test_detection_order_two_is_squared_irradiance(self):
        lin = GammaGamma(alpha=2.902, beta=2.51, xi=1.1, detection_order=1)
        sq = GammaGamma(alpha=2.902, beta=2.51, xi=1.1, detection_order=2)
        rng1 = np.random.Generator(np.random.Philox(KS_SEED))
        rng2 = np.random.Generator(np.random.Philox(KS_SEED))
        d1 = lin.sample(rng1, 5000)
        d2 = sq.sample(rng2, 5000)
        # same irradiance stream, squared and renormalised to unit mean
        ratio = d2 / (d1 ** 2)
        assert np.allclose(ratio, ratio[0])


class TestDoubleGeneralizedGamma:
    def test_pdf_against_product_quadrature(self):
        a1, a2, m1, m2, r, mu = 3.0, 1.5, 2.0, 2.0, 2, 0.9
        model = DoubleGeneralizedGamma(alpha1=a1, alpha2=a2, m1=m1, m2=m2,
                                       detection_order=r, mean_snr=mu)
        f1 = st.gengamma(m1, a1, scale=(1.0 / m1) ** (1.0 / a1))
        f2 = st.gengamma(m2, a2, scale=(1.0 / m2) ** (1.0 / a2))

        def f_product(p):
            val, _ = quad(
                lambda u: f1.pdf(np.exp(u)) * f2.pdf(p * np.exp(-u)),
                -12.0, 12.0, limit=300,
            )
            return val

        def factor_moment(mk, ak):
            return (1.0 / mk) ** (r / ak) * sp.gamma(mk + r / ak) / sp.gamma(mk)

        c = mu / (factor_moment(m1, a1) * factor_moment(m2, a2))
        for g in (0.05, 0.4, 1.1, 3.0):
            p = (g / c) ** (1.0 / r)
            assert float(model.pdf(g)) == pytest.approx(
                f_product(p) * p / (r * g), rel=1e-8
            )

    def test_no_h_form(self):
        model = DoubleGeneralizedGamma(alpha1=3.0, alpha2=1.5, m1=2.0, m2=2.0)
        with pytest.raises(UnsupportedHForm):
            model.to_h()


class TestWeibullGamma:
    def test_mean_pinned_by_quadrature(self):
        model = WeibullGamma(weibull_shape=2.2, gamma_shape=3.1,
                             mean_power=0.9)
        mean, err = integrate_semi_infinite(
            lambda g: g * model.pdf(g), scale=0.5, rel_tol=1e-9
        )
        assert mean == pytest.approx(0.9, abs=max(1e-8, 10 * err))

    def test_no_h_form(self):
        with pytest.raises(UnsupportedHForm):
            WeibullGamma(weibull_shape=2.2, gamma_shape=3.1).to_h()


class TestMalaga:
    def test_series_tail_shrinks_with_terms(self):
        tails = [Malaga(series_terms=t, **MALAGA_KW).series_tail
                 for t in (200, 240, 320)]
        assert tails[0] > tails[1] > tails[2]
        assert tails[2] < 1e-12

    def test_undersized_series_rejected(self):
        with pytest.raises(NormalizationError):
            Malaga(series_terms=40, **MALAGA_KW)

    def test_mean_is_exact(self):
        model = Malaga(series_terms=320, mean_irradiance=1.7, **MALAGA_KW)
        mean, err = integrate_semi_infinite(
            lambda g: g * model.pdf(g), scale=0.8, rel_tol=1e-9
        )
        assert mean == pytest.approx(1.7, abs=1e-6)


class TestSamplers:
    """Physical samplers against the quadrature cdf; fixed stream."""

    models = {
        "exponential": Exponential(1.3),
        "gamma": Gamma(shape=2.7, mean_snr=0.8),
        "weibull": Weibull(shape=1.9, mean_snr=1.4),
        "generalized_gamma": fading.GeneralizedGamma(shape=1.6, power=0.9,
                                                     mean_snr=1.1),
        "weibull_gamma": WeibullGamma(weibull_shape=2.2, gamma_shape=3.1,
                                      mean_power=0.9),
        "gamma_gamma": GammaGamma(alpha=2.902, beta=2.51, xi=1.1,
                                  mean_snr=1.2),
        "double_generalized_gamma": DoubleGeneralizedGamma(
            alpha1=3.0, alpha2=1.5, m1=2.0, m2=2.0, detection_order=2,
            mean_snr=0.9),
        "malaga": Malaga(series_terms=320, mean_irradiance=1.1, **MALAGA_KW),
        "generic_h": GenericH(kappa=1.0, delta=1.0,
                              params=HParams(m=1, n=0, lower=((0.0, 1.0),))),
    }

    @pytest.mark.parametrize("name", sorted(models))
    def test_kolmogorov_smirnov(self, name):
        model = self.models[name]
        rng = np.random.Generator(np.random.Philox(KS_SEED))
        draws = model.sample(rng, KS_DRAWS)
        assert np.all(draws > 0.0)
        res = st.kstest(draws, lambda v: np.asarray(model.cdf(v)))
        assert res.pvalue > KS_MIN_P, res

    @pytest.mark.parametrize("name", sorted(models))
    def test_sample_mean_matches_model_mean(self, name):
        model = self.models[name]
        rng = np.random.Generator(np.random.Philox(KS_SEED + 1))
        draws = model.sample(rng, 200_000)
        se = draws.std(ddof=1) / math.sqrt(draws.size)
        assert abs(draws.mean() - model.mean) < 5.0 * se


class TestMeanScaling:
    @pytest.mark.parametrize("name", sorted(TestSamplers.models))
    def test_cdf_is_scale_family(self, name):
        base = TestSamplers.models[name].with_mean_snr(1.0)
        scaled = base.with_mean_snr(3.7)
        np.testing.assert_allclose(
            scaled.cdf(GRID), base.cdf(GRID / 3.7), rtol=1e-9, atol=1e-12
        )
        np.testing.assert_allclose(
            scaled.pdf(GRID), base.pdf(GRID / 3.7) / 3.7,
            rtol=1e-9, atol=1e-12,
        )
        assert scaled.mean == pytest.approx(3.7, rel=1e-9)


class TestModelFromConfig:
    def test_round_trip(self):
        m = model_from_config({"family": "gamma", "shape": 2.0,
                               "mean_snr": 0.5})
        assert m == Gamma(shape=2.0, mean_snr=0.5)

    def test_generic_h_block(self):
        m = model_from_config({
            "family": "generic_h", "kappa": 1.0, "delta": 1.0,
            "h": {"m": 1, "n": 0, "lower": [[0.0, 1.0]]},
        })
        assert m.params == HParams(m=1, n=0, lower=((0.0, 1.0),))

    def test_unknown_family(self):
        from relaycap.errors import ConfigError
        with pytest.raises(ConfigError, match="unknown fading family"):
            model_from_config({"family": "rice"})

    def test_unknown_parameter(self):
        from relaycap.errors import ConfigError
        with pytest.raises(ConfigError, match="unknown parameter"):
            model_from_config({"family": "gamma", "shape": 2.0, "rate": 1.0})

    def test_bad_value(self):
        from relaycap.errors import ConfigError
        with pytest.raises(ConfigError):
            model_from_config({"family": "gamma", "shape": -2.0})

    def test_missing_family(self):
        from relaycap.errors import ConfigError
        with pytest.raises(ConfigError):
            model_from_config({"shape": 2.0})


class TestInterning:
    def test_equal_models_compare_equal(self):
        a = GammaGamma(alpha=2.902, beta=2.51, xi=1.1)
        b = GammaGamma(alpha=2.902, beta=2.51, xi=1.1)
        assert a == b and a is not b

    def test_replace_keeps_shape_identity(self):
        a = Gamma(shape=2.0, mean_snr=1.0)
        b = replace(a, mean_snr=2.0)
        assert b.shape == a.shape and b.mean == 2.0
