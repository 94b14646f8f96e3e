import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from pqglab import thermo
from pqglab.errors import ConfigError, DomainError
from pqglab.thermo import RegimeScalings, ThermoParams


def es_ode(T, tp):
    """Oracle: adaptive integration of d ln e_s / dT = L(T) / (R_v T^2)."""
    rhs = lambda s, y: [(tp.L_ref - (tp.c_l - tp.c_pv) * (s - tp.T_ref)) / (tp.R_v * s * s)]
    sol = solve_ivp(rhs, (tp.T_ref, T), [0.0], method="DOP853", rtol=1e-13, atol=1e-15)
    return tp.es_ref * math.exp(sol.y[0, -1])


class TestParams:
    def test_defaults_valid(self, tp):
        assert tp.theta_ref == tp.T_ref
        assert tp.es_ref / tp.p_ref < 0.05

    @pytest.mark.parametrize("kw", [{"R_d": -1.0}, {"c_pv": 900.0}, {"R_v": 200.0}, {"es_ref": 6000.0},
                                    {"c_l": 1500.0}, {"g": 0.0}])
    def test_invalid_rejected(self, kw):
        with pytest.raises(ConfigError):
            ThermoParams(**kw)

    def test_zero_delta_theta_allowed(self):
        assert thermo.pi_parameters(ThermoParams(DeltaTheta=0.0))["Pi2"] == 0.0


class TestDerived:
    def test_density_and_scale_height(self, tp):
        d = thermo.derived_quantities(tp)
        assert d.rho_ref == pytest.approx(1.25, rel=0.03)
        assert d.h_sc == pytest.approx(11e3, rel=0.05)
        assert d.c_ref == pytest.approx(330.0, rel=0.05)

    def test_doubling_gas_constant_halves_density(self, tp):
        a = thermo.derived_quantities(tp).rho_ref
        b = thermo.derived_quantities(ThermoParams(R_d=2 * tp.R_d, R_v=2 * tp.R_v + 1.0)).rho_ref
        assert b == a / 2

    def test_radius_doubling_halves_pi1_pi3(self, tp):
        p1 = thermo.pi_parameters(tp)
        p2 = thermo.pi_parameters(ThermoParams(a=2 * tp.a))
        assert p2["Pi1"] == pytest.approx(p1["Pi1"] / 2, rel=1e-15)
        assert p2["Pi3"] == pytest.approx(p1["Pi3"] / 2, rel=1e-15)
        assert p2["Pi2"] == p1["Pi2"]

    def test_pi2_value(self, tp):
        assert thermo.pi_parameters(tp)["Pi2"] == pytest.approx(0.15, rel=0.1)


class TestClausiusClapeyron:
    def test_latent_heat_reference(self, tp):
        assert thermo.latent_heat(tp.T_ref, tp) == tp.L_ref
        assert thermo.latent_heat(tp.T_ref + 10, tp) == pytest.approx(tp.L_ref - 10 * (tp.c_l - tp.c_pv))

    def test_latent_heat_250_against_integration(self, tp):
        sol = solve_ivp(lambda T, y: [-(tp.c_l - tp.c_pv)], (tp.T_ref, 250.0), [tp.L_ref], rtol=1e-12)
        assert thermo.latent_heat(250.0, tp) == pytest.approx(sol.y[0, -1], rel=1e-10)
        assert thermo.latent_heat(250.0, tp) == pytest.approx(2.55e6, rel=0.02)

    @given(st.floats(160.0, 340.0), st.floats(160.0, 340.0))
    def test_latent_heat_affine(self, a, b):
        tp = ThermoParams()
        lhs = thermo.latent_heat(a, tp) + thermo.latent_heat(b, tp)
        assert lhs == pytest.approx(2 * thermo.latent_heat(0.5 * (a + b), tp), rel=1e-15, abs=1e-9)

    def test_es_reference_point(self, tp):
        assert thermo.saturation_vapor_pressure(tp.T_ref, tp) == tp.es_ref

    def test_es_300_against_ode(self, tp):
        assert thermo.saturation_vapor_pressure(300.0, tp) == pytest.approx(es_ode(300.0, tp), rel=1e-6)

    @given(st.floats(230.0, 310.0))
    def test_es_matches_ode_oracle(self, T):
        tp = ThermoParams()
        assert thermo.saturation_vapor_pressure(T, tp) == pytest.approx(es_ode(T, tp), rel=1e-6)

    def test_es_monotone_sample(self, tp):
        e = [thermo.saturation_vapor_pressure(T, tp) for T in (260.0, 270.0, 280.0)]
        assert e[0] < e[1] < e[2]

    @given(st.floats(151.0, 348.0), st.floats(0.01, 1.0))
    def test_es_strictly_increasing(self, T, dT):
        tp = ThermoParams()
        assert thermo.saturation_vapor_pressure(T + dT, tp) > thermo.saturation_vapor_pressure(T, tp)

    @pytest.mark.parametrize("T", [100.0, 150.0, 350.0, 400.0, float("nan")])
    def test_temperature_window(self, tp, T):
        with pytest.raises(DomainError):
            thermo.saturation_vapor_pressure(T, tp)
        with pytest.raises(DomainError):
            thermo.latent_heat(T, tp)


class TestMixingRatio:
    def test_standard_value(self, tp):
        assert thermo.saturation_mixing_ratio(1e5, 273.15, tp) == pytest.approx(0.0038, rel=0.05)

    def test_twice_es_gives_epsilon(self, tp):
        es = thermo.saturation_vapor_pressure(280.0, tp)
        assert thermo.saturation_mixing_ratio(2 * es, 280.0, tp) == pytest.approx(tp.R_d / tp.R_v, rel=1e-15)

    def test_cold_limit(self, tp):
        assert thermo.saturation_mixing_ratio(1e5, 151.0, tp) < 1e-8

    def test_breakdown(self, tp):
        es = thermo.saturation_vapor_pressure(300.0, tp)
        with pytest.raises(DomainError):
            thermo.saturation_mixing_ratio(es, 300.0, tp)

    @given(st.floats(200.0, 320.0), st.floats(2e4, 1e5), st.floats(1.0, 1000.0))
    def test_monotone_in_pressure(self, T, p, dp):
        tp = ThermoParams()
        assert thermo.saturation_mixing_ratio(p + dp, T, tp) < thermo.saturation_mixing_ratio(p, T, tp)

    @given(st.floats(200.0, 310.0), st.floats(0.1, 5.0))
    def test_monotone_in_es(self, T, dT):
        tp = ThermoParams()
        # at fixed pressure, larger e_s (warmer) gives larger q_vs
        assert thermo.saturation_mixing_ratio(1e5, T + dT, tp) > thermo.saturation_mixing_ratio(1e5, T, tp)


class TestRegimes:
    def test_latent_heat_row(self, tp):
        rep = thermo.regime_consistency_report(RegimeScalings.fit(tp, 1, 0.1), tp)
        assert rep.row("L_ref/(c_pd T_ref)").value == pytest.approx(9.1, rel=0.01)
        assert rep.row("L_ref/(c_pd T_ref)").prefactor == pytest.approx(0.91, rel=0.01)

    def test_gas_constant_ratio(self, tp):
        r0 = RegimeScalings.fit(tp, 0, 0.1)
        r1 = RegimeScalings.fit(tp, 1, 0.1)
        assert tp.R_d / tp.R_v == pytest.approx(0.62, rel=0.01)
        assert r0.E == pytest.approx(6.2, rel=0.01)
        assert r1.E == pytest.approx(0.62, rel=0.01)
        assert tp.R_d / tp.R_v == pytest.approx(0.1 * r0.E, rel=1e-14)

    def test_kappa_v_value(self, tp):
        rep = thermo.regime_consistency_report(RegimeScalings.fit(tp, 0, 0.1), tp)
        assert rep.row("(c_pv/c_pd)(R_d/c_pd) - R_v/c_pd").value == pytest.approx(0.067, abs=0.002)

    def test_alpha_one_flags_exactly_two_rows(self, tp):
        rep = thermo.regime_consistency_report(RegimeScalings.fit(tp, 1, 0.1), tp)
        assert sorted(rep.inconsistencies) == sorted(["R_d/R_v", "(c_pv/c_pd)(R_d/c_pd) - R_v/c_pd"])
        rep0 = thermo.regime_consistency_report(RegimeScalings.fit(tp, 0, 0.1), tp)
        assert rep0.inconsistencies == []

    def test_prefactor_band(self, tp):
        # Everything except the flagged rows sits in [0.1, 10]; for alpha = 0 the
        # kappa_v row (0.067 at epsilon**0) is the single measured exception.
        rep1 = thermo.regime_consistency_report(RegimeScalings.fit(tp, 1, 0.1), tp)
        assert all(r.in_band for r in rep1.rows if r.consistent)
        rep0 = thermo.regime_consistency_report(RegimeScalings.fit(tp, 0, 0.1), tp)
        out = [r.name for r in rep0.rows if not r.in_band]
        assert out == ["(c_pv/c_pd)(R_d/c_pd) - R_v/c_pd"]

    def test_es_prefactor_reported(self, tp):
        rep = thermo.regime_consistency_report(RegimeScalings.fit(tp, 0, 0.1), tp)
        assert rep.es_exponent == 1
        assert rep.es_prefactor == pytest.approx(611.0 / 1e5 / 0.1)

    def test_alpha_rejected(self, tp):
        with pytest.raises(ConfigError):
            RegimeScalings.fit(tp, 2, 0.1)


class TestDryLimit:
    def test_exponent_doubles_when_epsilon_halves(self, tp):
        a, b = thermo.dry_limit_decay_demo(tp.T_ref - 5.0, [0.1, 0.05], tp)
        assert b["exponent"] / a["exponent"] == pytest.approx(2.0, rel=0.01)

    def test_exponent_negative_below_reference(self, tp):
        (row,) = thermo.dry_limit_decay_demo(250.0, [0.1], tp)
        assert row["exponent"] < 0

    def test_warm_side_rejected(self, tp):
        with pytest.raises(DomainError):
            thermo.dry_limit_decay_demo(tp.T_ref, [0.1], tp)
        with pytest.raises(DomainError):
            thermo.dry_limit_decay_demo(300.0, [0.1], tp)

    def test_decay_is_exponential_in_inverse_epsilon(self, tp):
        rows = thermo.dry_limit_decay_demo(250.0, [0.2, 0.1, 0.05, 0.025], tp)
        ex = np.array([r["exponent"] for r in rows])
        eps = np.array([r["epsilon"] for r in rows])
        assert np.allclose(ex * eps, ex[0] * eps[0], rtol=1e-12)
