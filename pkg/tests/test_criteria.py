from dataclasses import replace

import numpy as np
import pytest

from qbdc.channel import (
    MaserParams, TransitionRates, build_maser_channel, closed_form_rates,
    extract_transition_rates,
)
from qbdc.criteria import (
    INCONCLUSIVE, POSITIVE, build_drift_certificate, build_lyapunov_certificate,
    certificate_channel, check_existence, check_nonexistence, classical_profile,
    classify_maser_point, classify_rates, conserved_sequences, estimate_kappa,
    search_lyapunov_certificate, toy_conserved_observable, tridiagonal_psd_sufficient,
    verify_drift, verify_lyapunov,
)
from qbdc.errors import CriterionNotApplicable, InvalidParamsError


def toy(lam, zeta=1.0):
    return MaserParams.toy(lam, zeta, 0.6, 0.8)


class TestClassical:
    def test_geometric(self):
        prof = classical_profile(TransitionRates.from_birth_death(0.3, 0.7, cutoff=200))
        n = np.arange(201)
        np.testing.assert_allclose(prof.pi, (3 / 7) ** n, rtol=1e-12)
        assert prof.summable
        np.testing.assert_allclose(prof.stationary, (4 / 7) * (3 / 7) ** n, rtol=1e-10, atol=1e-300)
        assert prof.stationary.sum() == pytest.approx(1.0, abs=1e-12)

    def test_not_summable(self):
        prof = classical_profile(TransitionRates.from_birth_death(0.7, 0.3, cutoff=50))
        assert prof.summable is False and prof.stationary is None

    def test_toy_rates(self):
        prof = classical_profile(closed_form_rates(toy(0.3, 0.0), 100))
        np.testing.assert_allclose(prof.pi, (0.192 / 0.448) ** np.arange(101), rtol=1e-12)

    def test_no_overflow(self):
        prof = classical_profile(TransitionRates.from_birth_death(0.7, 0.3, cutoff=2000))
        assert np.all(np.isfinite(prof.log_pi))

    def test_zero_death_rate_named(self):
        r = TransitionRates.from_birth_death(0.3, 0.7, cutoff=10)
        mu = r.mu.copy()
        mu[4] = 0.0
        with pytest.raises(InvalidParamsError) as e:
            classical_profile(replace(r, mu=mu))
        assert e.value.index == 4


class TestKappa:
    def test_maser_analytic(self):
        k = estimate_kappa(closed_form_rates(toy(0.3, 0.5), 200))
        assert k.analytic == pytest.approx(0.8472978603872037)
        assert k.consistent

    def test_half(self):
        assert estimate_kappa(closed_form_rates(toy(0.5, 0.5), 100)).value == pytest.approx(0.0)

    def test_geometric_numeric(self):
        k = estimate_kappa(TransitionRates.from_birth_death(0.3, 0.7, cutoff=200), 0.25)
        assert abs(k.kappa - np.log(7 / 3)) < 1e-10
        assert k.window == (150, 200)


class TestVerdicts:
    def test_existence_classical(self):
        r = TransitionRates.from_birth_death(0.3, 0.7, cutoff=100)
        v = check_existence(r, estimate_kappa(r))
        assert v.verdict == "exists" and v.margin == np.inf

    def test_existence_toy_margin(self):
        lam = 0.1
        r = closed_form_rates(toy(lam), 200)
        v = check_existence(r, estimate_kappa(r))
        nu2 = lam * (1 - lam)
        lhs = lam * (1 - lam) * 0.64 / (4 * nu2 * 0.36)
        rhs = lam * (1 - lam) / (1 - 2 * lam) ** 2
        assert v.verdict == "exists"
        assert v.margin == pytest.approx(lhs - rhs, rel=1e-12)

    def test_existence_fails(self):
        r = closed_form_rates(toy(0.45), 200)
        assert check_existence(r, estimate_kappa(r)).verdict == "unknown"

    def test_nonexistence_classical(self):
        v = check_nonexistence(TransitionRates.from_birth_death(0.7, 0.3, cutoff=100))
        assert v.verdict == "not_exists" and v.margin > 0

    def test_nonexistence_toy(self):
        assert check_nonexistence(closed_form_rates(toy(0.85), 200)).verdict == "not_exists"

    def test_nonexistence_wrong_drift(self):
        v = check_nonexistence(TransitionRates.from_birth_death(0.3, 0.7, cutoff=100))
        assert v.verdict == "unknown"

    def test_verdict_margin_positive(self):
        for lam in np.linspace(0.01, 0.99, 25):
            v = classify_rates(closed_form_rates(toy(lam), 200))
            assert (v.verdict == "unknown") or v.margin > 0


class TestClassify:
    def test_part_one(self):
        v = classify_maser_point(toy(0.10))
        assert v.verdict == "exists" and v.criterion == "maser-prop-1"
        assert v.diagnostics["lower_threshold"] == pytest.approx(0.5 - 0.75 * 0.3)

    def test_toy_strip(self):
        v = classify_maser_point(toy(0.40))
        assert v.verdict == "not_exists" and v.criterion == "toy-nonexistence"
        first, second = v.diagnostics["strip_slacks"]
        assert first == pytest.approx(1 / (1 + 0.04 / (4 * 0.24)) - 0.64)
        assert second == pytest.approx(np.sqrt(0.24) / 0.6 - 0.5)

    def test_part_two(self):
        v = classify_maser_point(toy(0.85))
        assert v.verdict == "not_exists"

    @pytest.mark.parametrize("a, b", [(0.6, 0.8), (0.0, 1.0), (0.28, 0.96)])
    def test_thermal(self, a, b):
        assert classify_maser_point(MaserParams.toy(0.3, 0.0, a, b)).verdict == "exists"

    @pytest.mark.parametrize("lam", [0.2, 0.8])
    def test_pure_boundary_unknown(self, lam):
        v = classify_maser_point(toy(lam))
        assert v.verdict == "unknown" and v.diagnostics["on_pure_boundary"]

    def test_beta_zero_unknown(self):
        v = classify_maser_point(MaserParams.toy(0.3, 0.5, 1.0, 0.0))
        assert v.verdict == "unknown" and "liminf" in v.diagnostics["reason"]

    def test_phase_invariance(self):
        for lam in (0.1, 0.3, 0.5, 0.7, 0.9):
            base = classify_maser_point(toy(lam, 0.7))
            for th in (0.3, 1.7, 3.0):
                v = classify_maser_point(toy(lam, 0.7 * np.exp(1j * th)))
                assert (v.verdict, v.criterion) == (base.verdict, base.criterion)

    def test_record(self):
        rec = classify_maser_point(toy(0.1)).record(0.1, 1.0, "toy")
        assert set(rec) == {"lambda", "zeta_re", "zeta_im", "model", "verdict", "criterion", "margin"}


class TestTridiagonal:
    def test_identity(self):
        assert tridiagonal_psd_sufficient(np.ones(5), np.zeros(4)) == POSITIVE

    def test_inconclusive(self):
        assert tridiagonal_psd_sufficient([1.0, 1.0], [1.0]) == INCONCLUSIVE
        assert np.linalg.eigvalsh(np.ones((2, 2))).min() >= -1e-15

    def test_random_sound(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            n = int(rng.integers(2, 40))
            d = rng.uniform(0.1, 2.0, n)
            o = (rng.normal(size=n - 1) + 1j * rng.normal(size=n - 1))
            o *= 0.5 * np.sqrt(d[:-1] * d[1:]) * rng.uniform(0, 0.99, n - 1) / np.abs(o)
            assert tridiagonal_psd_sufficient(d, o) == POSITIVE
            H = np.diag(d).astype(complex) + np.diag(o, 1) + np.diag(o.conj(), -1)
            assert np.linalg.eigvalsh(H).min() >= -1e-10

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            tridiagonal_psd_sufficient([1.0, 1.0], [0.0, 0.0])


class TestLyapunov:
    def test_thermal_formula(self):
        p = MaserParams.toy(0.3, 0.0, 0.0, 1.0)
        r = closed_form_rates(p, 60)
        cert = build_lyapunov_certificate(r, 0.6, 0.2)
        n = np.arange(1, 61)
        np.testing.assert_allclose(cert.x_diag[1:], np.cumsum((0.6 * 7 / 3) ** n / 0.7), rtol=1e-12)
        assert cert.x_diag[0] == 0 and np.all(np.diff(cert.x_diag) >= 0)
        tail = n[n > cert.params["N_head"]]
        np.testing.assert_allclose(cert.y_diag[tail], 0.2 * (0.6 * 7 / 3) ** tail, rtol=1e-12)
        cert = verify_lyapunov(build_maser_channel(p, 62), cert)
        assert cert.verified and cert.min_slack > 0
        assert cert.diagnostics["off_band_residual"] == 0.0

    @pytest.mark.parametrize("t, r", [(0.6, 0.4), (0.6, 0.5), (1.0, 0.1), (0.6, 0.0)])
    def test_range_rejection(self, t, r):
        with pytest.raises(InvalidParamsError):
            build_lyapunov_certificate(TransitionRates.from_birth_death(0.3, 0.7, cutoff=40), t, r)

    def test_t_below_decay(self):
        with pytest.raises(InvalidParamsError):
            build_lyapunov_certificate(TransitionRates.from_birth_death(0.3, 0.7, cutoff=40), 0.3, 0.1)

    def test_toy_grid_search(self):
        p = toy(0.10)
        ch = build_maser_channel(p, 80)
        cert = search_lyapunov_certificate(extract_transition_rates(ch), ch)
        assert cert.verified and cert.min_slack > 0
        assert cert.params["t"] > 1 / 9

    def test_scaled_y_fails(self):
        p = MaserParams.toy(0.3, 0.0, 0.0, 1.0)
        r = closed_form_rates(p, 60)
        t, rr = 0.6, 0.2
        cert = build_lyapunov_certificate(r, t, rr)
        bad = replace(cert, second=cert.y_diag * 10 / (1 - rr - t))
        assert not verify_lyapunov(build_maser_channel(p, 62), bad).verified

    def test_length_mismatch(self):
        cert = build_lyapunov_certificate(TransitionRates.from_birth_death(0.3, 0.7, cutoff=20), 0.6, 0.2)
        with pytest.raises(ValueError):
            verify_lyapunov(build_maser_channel(MaserParams.baby(0.3), 22),
                            replace(cert, second=cert.second[:-1]))

    def test_accessor_kind(self):
        cert = build_lyapunov_certificate(TransitionRates.from_birth_death(0.3, 0.7, cutoff=20), 0.6, 0.2)
        with pytest.raises(AttributeError):
            cert.z_diag


class TestDrift:
    def test_classical(self):
        r = TransitionRates.from_birth_death(0.7, 0.3, cutoff=60)
        cert = build_drift_certificate(r)
        assert cert.params["N"] == 0
        np.testing.assert_allclose(cert.eps_diag[1:], 0.2)
        assert cert.eps_diag[0] == pytest.approx(0.35)  # no death out of the vacuum
        assert verify_drift(certificate_channel(r, 61), cert).verified

    def test_toy(self):
        p = toy(0.85)
        ch = build_maser_channel(p, 80)
        cert = verify_drift(ch, build_drift_certificate(extract_transition_rates(ch)))
        assert cert.verified and cert.min_slack >= 0
        assert np.all(cert.eps_diag >= 0) and np.count_nonzero(cert.eps_diag) > 10

    def test_doubled_eps_fails(self):
        p = toy(0.85)
        ch = build_maser_channel(p, 80)
        cert = build_drift_certificate(extract_transition_rates(ch))
        bad = replace(cert, second=cert.eps_diag * 2 / cert.params["scale"])
        assert not verify_drift(ch, bad).verified

    def test_balanced_rejected(self):
        with pytest.raises(CriterionNotApplicable):
            build_drift_certificate(TransitionRates.from_birth_death(0.5, 0.5, cutoff=40))


class TestConserved:
    def test_strip_point(self):
        obs = toy_conserved_observable(toy(0.40), 1.0, 40, m_values=[5, 10, 20])
        assert obs.residual < 1e-10
        np.testing.assert_allclose(obs.root_moduli, 1.0, atol=1e-12)
        assert obs.y_max < 10

    def test_nu_zero(self):
        with pytest.raises(InvalidParamsError):
            conserved_sequences(toy(0.4, 0.0), 1.0, 10)

    def test_real_roots(self):
        with pytest.raises(InvalidParamsError):
            conserved_sequences(toy(0.05, 0.2), 1.0, 10)

    def test_degenerate_seed(self):
        lam = 0.4
        C = -(1 - 2 * lam) * 0.64
        x, y, _ = conserved_sequences(toy(lam), C, 10)
        assert y[1] == 0

    def test_residual_at_several_windows(self):
        obs = toy_conserved_observable(toy(0.45, 0.9), 0.5, 60, m_values=[5, 15, 30])
        assert all(v < 1e-10 for v in obs.residuals.values())
