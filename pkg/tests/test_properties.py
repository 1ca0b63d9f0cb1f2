import numpy as np
from hypothesis import HealthCheck, given, settings, strategies as st

from qbdc.channel import (
    MaserParams, TransitionRates, build_maser_channel, closed_form_rates,
    extract_transition_rates, verify_qbdc_structure,
)
from qbdc.criteria import (
    POSITIVE, check_existence, classical_profile, classify_maser_point, estimate_kappa,
    tridiagonal_psd_sufficient,
)
from qbdc.solver import DensityMatrix, solve_invariant_direct, trace_norm

SETTINGS = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])

unit = st.floats(0.0, 1.0, allow_nan=False)
open_unit = st.floats(0.02, 0.98, allow_nan=False)
angle = st.floats(0.0, 2 * np.pi, allow_nan=False)


@st.composite
def zetas(draw):
    return draw(unit) * np.exp(1j * draw(angle))


@st.composite
def maser_params(draw):
    lam, zeta = draw(unit), draw(zetas())
    if draw(st.booleans()):
        th = draw(st.floats(0.05, np.pi / 2 - 0.05))
        return MaserParams.toy(lam, zeta, np.cos(th), np.sin(th))
    return MaserParams.jc(lam, zeta, draw(st.floats(0.2, 2.0)), draw(st.floats(0.2, 2.0)))


def random_state(rng, dim):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


@SETTINGS
@given(maser_params(), st.integers(6, 14))
def test_extracted_rates_match_closed_form(params, dim):
    r = extract_transition_rates(build_maser_channel(params, dim))
    ref = closed_form_rates(params, r.cutoff + 1)
    k = r.cutoff + 1
    np.testing.assert_allclose(r.sigma, ref.sigma[:k], atol=1e-14)
    np.testing.assert_allclose(r.lam, ref.lam[:k], atol=1e-14)
    np.testing.assert_allclose(r.mu, ref.mu[:k], atol=1e-14)
    np.testing.assert_allclose(r.eta, ref.eta[:k], atol=1e-14)


@SETTINGS
@given(maser_params(), st.integers(4, 12))
def test_structure_unital_cp(params, dim):
    rep = verify_qbdc_structure(build_maser_channel(params, dim))
    assert rep.unitality_residual < 1e-13
    assert rep.max_forbidden_rate < 1e-13
    assert rep.cp_min_eigenvalue > -1e-12
    assert rep.sum_rule_residual < 1e-13


@SETTINGS
@given(maser_params(), st.integers(4, 12), st.integers(0, 2 ** 32 - 1))
def test_adjoint_duality(params, dim, seed):
    rng = np.random.default_rng(seed)
    ch = build_maser_channel(params, dim)
    rho = random_state(rng, dim)
    X = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    lhs = np.trace(ch.apply_predual(rho) @ X)
    rhs = np.trace(rho @ ch.apply(X))
    assert abs(lhs - rhs) < 1e-12 * (1 + np.abs(X).sum())


@SETTINGS
@given(maser_params(), st.integers(5, 40))
def test_sum_rule(params, cutoff):
    assert closed_form_rates(params, cutoff).sum_rule_residual() < 1e-14


@SETTINGS
@given(open_unit, st.floats(0.05, 1.0), angle, angle, st.floats(0.05, np.pi / 2 - 0.05))
def test_verdict_phase_invariant(lam, zabs, ph1, ph2, th):
    a, b = np.cos(th), np.sin(th)
    v1 = classify_maser_point(MaserParams.toy(lam, zabs * np.exp(1j * ph1), a, b))
    v2 = classify_maser_point(MaserParams.toy(lam, zabs * np.exp(1j * ph2), a, b))
    assert (v1.verdict, v1.criterion) == (v2.verdict, v2.criterion)


@SETTINGS
@given(st.lists(st.floats(0.1, 0.9), min_size=10, max_size=10),
       st.lists(st.floats(0.1, 0.9), min_size=10, max_size=10),
       st.floats(0.1, 0.9), st.floats(0.1, 0.9))
def test_classical_existence_matches_summability(head_lam, head_mu, lam, mu):
    # constant tail with |ln(lam/mu)| bounded away from 0, arbitrary head
    if abs(np.log(lam / mu)) < 0.2 or lam + mu > 1:
        return
    cutoff = 400
    lam_n = np.full(cutoff + 1, lam)
    mu_n = np.full(cutoff + 1, mu)
    s = np.minimum(np.array(head_lam) + np.array(head_mu), 1.0)
    lam_n[:10] = np.array(head_lam) / np.maximum(s, 1.0)
    mu_n[1:11] = np.array(head_mu) / np.maximum(s, 1.0)
    mu_n[0] = 0.0
    sigma = 1.0 - lam_n - mu_n
    sigma = np.clip(sigma, 0.0, None)
    r = TransitionRates(sigma, mu_n, lam_n, np.zeros(cutoff + 1, dtype=complex), None, "classical")
    exists = check_existence(r, estimate_kappa(r)).verdict == "exists"
    assert exists == bool(classical_profile(r).summable)


@SETTINGS
@given(st.integers(2, 50), st.integers(0, 2 ** 32 - 1))
def test_tridiagonal_soundness(n, seed):
    rng = np.random.default_rng(seed)
    d = rng.uniform(-0.2, 2.0, n)
    o = rng.normal(size=n - 1) + 1j * rng.normal(size=n - 1)
    o *= rng.uniform(0, 0.6) * np.sqrt(np.abs(d[:-1] * d[1:])) / np.maximum(np.abs(o), 1e-300)
    H = np.diag(d).astype(complex) + np.diag(o, 1) + np.diag(o.conj(), -1)
    if tridiagonal_psd_sufficient(d, o) == POSITIVE:
        assert np.linalg.eigvalsh(H).min() >= -1e-10


@settings(max_examples=15, deadline=None)
@given(st.floats(0.05, 0.4), st.integers(0, 2 ** 32 - 1))
def test_predual_contracts_trace_distance(lam, seed):
    rng = np.random.default_rng(seed)
    ch = build_maser_channel(MaserParams.toy(lam, 0.7 * np.exp(1j * rng.uniform(0, 6)), 0.6, 0.8), 16)
    theta = DensityMatrix(random_state(rng, 16))
    phi = DensityMatrix(random_state(rng, 16))
    # the compressed predual is trace non-increasing, so distances between orbits shrink
    other = np.empty(31)
    a, b = theta.entries, phi.entries
    for k in range(31):
        other[k] = trace_norm(a - b)
        a, b = ch.apply_predual(a), ch.apply_predual(b)
    assert np.all(np.diff(other) <= 1e-12)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.05, 0.35), st.floats(0.3, np.pi / 2 - 0.05))
def test_thermal_state_is_classical_stationary(lam, th):
    # a window of 60 levels keeps the weight lost at the top below 1e-15
    p = MaserParams.toy(lam, 0.0, np.cos(th), np.sin(th))
    rho = solve_invariant_direct(build_maser_channel(p, 60))
    prof = classical_profile(closed_form_rates(p, 59))
    assert np.abs(rho.entries - np.diag(rho.diag)).max() < 1e-10
    np.testing.assert_allclose(rho.diag[:40], prof.stationary[:40], atol=1e-10)
