import numpy as np
import pytest
import scipy.linalg as sla

from qbdc.channel import (
    MaserParams, build_maser_channel, convex_combination, identity_channel, unvec, vec,
)
from qbdc.criteria import build_lyapunov_certificate, closed_form_rates, verify_lyapunov
from qbdc.errors import NoInvariantState, NonConvergence, SolverError
from qbdc.solver import (
    DensityMatrix, falloff_bound_check, falloff_fit, finalize_state, fit_rates,
    convergence_trace, distance_sequence, residual_norm, solve_invariant_cesaro, solve_invariant_direct,
    thermal_state, trace_norm, truncation_convergence,
)


def toy(lam, zeta):
    return MaserParams.toy(lam, zeta, 0.6, 0.8)


class TestDensityMatrix:
    def test_trace_norm(self):
        assert trace_norm(np.diag([1.0, -2.0, 0.5])) == pytest.approx(3.5)

    def test_constructors(self):
        assert DensityMatrix.vacuum(4).entries[0, 0] == 1
        assert DensityMatrix.maximally_mixed(4).diag == pytest.approx(np.full(4, 0.25))
        psi = np.array([1.0, 1j]) / np.sqrt(2)
        rho = DensityMatrix.from_vector(psi)
        assert rho.entries[0, 1] == pytest.approx(-0.5j)

    def test_embed(self):
        rho = DensityMatrix.from_diag([0.5, 0.5]).embed(5)
        assert rho.dim == 5 and np.trace(rho.entries) == pytest.approx(1.0)

    def test_finalize_clips_roundoff(self):
        rho = finalize_state(np.diag([1.0, -1e-12]))
        assert rho.diag.min() >= 0

    def test_finalize_rejects_negative(self):
        with pytest.raises(SolverError):
            finalize_state(np.diag([1.0, -0.1]))


class TestDirect:
    def test_thermal_baby(self):
        rho = solve_invariant_direct(build_maser_channel(MaserParams.baby(0.3), 80))
        assert trace_norm(rho.entries - thermal_state(0.3, 80).entries) < 1e-8
        assert np.abs(rho.entries - np.diag(rho.diag)).max() < 1e-10

    @pytest.mark.parametrize("params", [MaserParams.baby(0.0), toy(0.0, 0.6),
                                        MaserParams.jc(0.0, 0.3, 1.0, 1.0)])
    def test_vacuum(self, params):
        rho = solve_invariant_direct(build_maser_channel(params, 20))
        np.testing.assert_allclose(rho.entries, DensityMatrix.vacuum(20).entries, atol=1e-10)

    def test_null_space_oracle_small_dim(self):
        # a 10-level truncation leaks noticeably, so the fixed point is only approximate:
        # accept the leading eigenvalue at a loose tolerance and compare eigenvectors
        ch = build_maser_channel(toy(0.3, 0.5), 10)
        rho = solve_invariant_direct(ch, tol=1e-2)
        w = complex(*rho.info["eigenvalue"])
        P = ch.predual_matrix.toarray()
        ns = sla.null_space(P - w * np.eye(100), rcond=1e-10)
        assert ns.shape[1] == 1
        oracle = unvec(ns[:, 0], 10)
        oracle = oracle / np.trace(oracle)
        assert trace_norm(rho.entries - oracle) < 1e-8

    def test_least_squares_oracle_approaches(self):
        dists = []
        for dim in (10, 20, 30):
            ch = build_maser_channel(toy(0.3, 0.5), dim)
            P = ch.predual_matrix.toarray()
            n = dim * dim
            A = np.vstack([P - np.eye(n), vec(np.eye(dim))[None, :]])
            b = np.zeros(n + 1)
            b[-1] = 1.0
            oracle = unvec(np.linalg.lstsq(A, b, rcond=None)[0], dim)
            dists.append(trace_norm(solve_invariant_direct(ch, tol=1e-2).entries - oracle))
        assert dists[0] > dists[1] > dists[2] and dists[2] < 1e-2

    def test_sparse_path(self):
        rho = solve_invariant_direct(build_maser_channel(MaserParams.baby(0.3), 40))
        assert trace_norm(rho.entries - thermal_state(0.3, 40).entries) < 1e-8
        assert rho.info["eigenvalues_within_tol"] == 1

    def test_no_invariant(self):
        with pytest.raises(NoInvariantState) as e:
            solve_invariant_direct(build_maser_channel(toy(0.85, 1.0), 40))
        assert abs(e.value.closest_eigenvalue - 1) > 1e-8

    def test_residual(self):
        ch = build_maser_channel(toy(0.1, 1.0), 40)
        rho = solve_invariant_direct(ch)
        assert residual_norm(ch, rho, interior=38) < 1e-7


class TestCesaro:
    def test_agrees_with_direct(self):
        ch = build_maser_channel(MaserParams.baby(0.3), 40)
        a = solve_invariant_direct(ch)
        b = solve_invariant_cesaro(ch, DensityMatrix.vacuum(40), tol=1e-9)
        assert trace_norm(a.entries - b.entries) < 1e-7

    def test_identity_returns_seed(self):
        seed = DensityMatrix.from_diag([0.2, 0.3, 0.5, 0.0])
        out = solve_invariant_cesaro(identity_channel(4), seed)
        np.testing.assert_allclose(out.entries, seed.entries, atol=1e-14)

    def test_escape(self):
        ch = build_maser_channel(toy(0.85, 1.0), 40)
        try:
            rho = solve_invariant_cesaro(ch, DensityMatrix.vacuum(40), max_iter=4096)
        except NonConvergence:
            return
        assert rho.trace_deficit > 0.5


class TestFalloff:
    def test_geometric(self):
        fit = falloff_fit(DensityMatrix.from_diag((4 / 7) * (3 / 7) ** np.arange(30)))
        assert fit.gamma == pytest.approx(np.log(7 / 3), abs=1e-6)
        assert fit.C == pytest.approx(4 / 7, rel=1e-6)
        assert not fit.flagged

    def test_vacuum_degenerate(self):
        fit = falloff_fit(DensityMatrix.vacuum(10))
        assert fit.flagged and fit.gamma == np.inf

    def test_toy_state(self):
        rho = solve_invariant_direct(build_maser_channel(toy(0.1, 1.0), 60))
        fit = falloff_fit(rho)
        assert fit.gamma > 0 and fit.max_violation < 1e-8

    def test_window_shrinks_on_zeros(self):
        d = np.r_[0.5 ** np.arange(1, 6), np.zeros(5)]
        fit = falloff_fit(DensityMatrix.from_diag(d / d.sum()))
        assert fit.flagged and fit.window[1] == 4


class TestTruncation:
    def test_thermal(self):
        d = truncation_convergence(MaserParams.baby(0.3), (20, 40, 60, 80))
        assert d[0] > d[1] and d[-1] < 1e-10

    def test_vacuum(self):
        assert truncation_convergence(MaserParams.baby(0.0), (10, 15, 20)) == pytest.approx([0, 0], abs=1e-12)

    def test_escape(self):
        with pytest.raises(NoInvariantState):
            truncation_convergence(toy(0.85, 1.0), (20, 40, 60))

    def test_bad_dims(self):
        with pytest.raises(ValueError):
            truncation_convergence(MaserParams.baby(0.3), (20, 10, 30))


class TestConvergence:
    def test_faithful_toy(self):
        ch = build_maser_channel(toy(0.1, 0.5), 40)
        phi = solve_invariant_direct(ch)
        tr = convergence_trace(ch, DensityMatrix.vacuum(40), phi, 200)
        assert tr.distances[200] < 1e-6
        assert tr.max_increase() < 1e-12

    def test_theta_equals_phi(self):
        ch = build_maser_channel(MaserParams.baby(0.3), 40)
        phi = solve_invariant_direct(ch)
        # phi has (negligible) weight on the top level, so bypass the support guard
        assert distance_sequence(ch, phi, phi, 20).max() < 1e-9

    def test_theta_at_top_rejected(self):
        ch = build_maser_channel(MaserParams.baby(0.3), 10)
        with pytest.raises(ValueError):
            convergence_trace(ch, DensityMatrix.basis_state(9, 10), DensityMatrix.vacuum(10), 5)

    def test_fit_rates_geometric(self):
        best, other = fit_rates(0.8 ** np.arange(100))
        assert best.kind == "geometric" and best.rate == pytest.approx(0.8)

    def test_fit_rates_power(self):
        best, _ = fit_rates(np.r_[1.0, np.arange(1, 400) ** -1.5])
        assert best.kind == "power" and best.rate == pytest.approx(1.5)

    def test_convex_combination_structure(self):
        R = build_maser_channel(MaserParams.baby(0.3), 30)
        T = convex_combination([R, identity_channel(30)], [0.5, 0.5])
        phi = solve_invariant_direct(T)
        tr = convergence_trace(T, DensityMatrix.vacuum(30), phi, 100, gamma_params=(1.0, 0.5, 0.8, 0.5, 2.0))
        assert tr.gamma_bound == pytest.approx(0.5 * 0.8 / (2 * np.log(2) * 1.8))
        assert tr.max_increase() < 1e-12


class TestFalloffBound:
    def test_certificate_pairs(self):
        p = MaserParams.toy(0.3, 0.0, 0.0, 1.0)
        cert = verify_lyapunov(build_maser_channel(p, 62),
                               build_lyapunov_certificate(closed_form_rates(p, 60), 0.6, 0.2))
        assert cert.verified
        rho = solve_invariant_direct(build_maser_channel(p, 60))
        b = max(cert.lower_bound, 1e-12)
        rep = falloff_bound_check(rho, cert.y_diag, b, [(0.5, 1.0), (1.0, 10.0), (2.0, 1e6)])
        assert rep["all_ok"]

    def test_empty_projection(self):
        rep = falloff_bound_check(DensityMatrix.vacuum(5), np.arange(5.0), 0.1, [(10.0, 20.0)])
        assert rep["all_ok"] and rep["pairs"][0]["mass"] == 0

    def test_violation(self):
        N = 20
        rep = falloff_bound_check(DensityMatrix.maximally_mixed(N + 1), np.arange(N + 1.0), 0.1,
                                  [(N / 2, N)])
        assert not rep["all_ok"]
        assert rep["pairs"][0]["mass"] == pytest.approx(11 / 21)
