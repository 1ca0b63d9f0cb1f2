"""Existence/non-existence criteria for invariant states and their certificates.

Asymptotic quantities (lim inf, lim sup) are evaluated as min/max over a tail
window, by default the last quarter of the available cutoff.  Every verdict
records which window was used.
"""

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .channel import (
    MaserParams,
    classical_channel,
    closed_form_rates,
    heisenberg_apply_window,
    tail_start,
)
from .errors import CriterionNotApplicable, InvalidParamsError

POSITIVE = "positive"
INCONCLUSIVE = "inconclusive"
DEFAULT_TAIL = 0.25
# strict inequalities must hold by more than this to fire
BOUNDARY_TOL = 1e-12


# ---------------------------------------------------------------------------
# classical birth-death reduction
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ClassicalProfile:
    log_pi: np.ndarray
    summable: Optional[bool]
    stationary: Optional[np.ndarray]
    tail_ratio_max: float
    window: tuple

    @property
    def pi(self):
        return np.exp(self.log_pi)


def log_pi(rates):
    """``ln pi_n`` for ``n = 0..cutoff``; ``-inf`` once a birth rate vanishes."""
    zero_mu = np.flatnonzero(rates.mu[1:] == 0)
    if zero_mu.size:
        n = int(zero_mu[0]) + 1
        raise InvalidParamsError(f"death rate mu_{n} vanishes; pi_n undefined", index=n)
    with np.errstate(divide="ignore"):
        log_lam = np.log(rates.lam[:-1])
        log_mu = np.log(rates.mu[1:])
    out = np.zeros(rates.cutoff + 1)
    out[1:] = np.cumsum(log_lam - log_mu)
    return out


def classical_profile(rates, tail_fraction=DEFAULT_TAIL):
    """Products ``pi_n`` and, when the tail-ratio test settles it, the stationary law."""
    lp = log_pi(rates)
    lo = tail_start(rates.cutoff - 1, tail_fraction)
    hi = rates.cutoff - 1
    ratio = rates.lam[lo:hi + 1] / rates.mu[lo + 1:hi + 2]
    if ratio.max() < 1.0:
        summable = True
    elif ratio.min() >= 1.0:
        summable = False
    else:
        summable = None
    stationary = None
    if summable:
        w = np.exp(lp - lp.max())
        stationary = w / w.sum()
    return ClassicalProfile(lp, summable, stationary, float(ratio.max()), (lo, hi))


@dataclass(frozen=True)
class KappaEstimate:
    kappa: float
    window: tuple
    analytic: Optional[float] = None
    tolerance: float = 1e-8

    @property
    def value(self):
        """Analytic value when known, the tail estimate otherwise."""
        return self.analytic if self.analytic is not None else self.kappa

    @property
    def consistent(self):
        if self.analytic is None:
            return True
        if np.isinf(self.analytic) or np.isinf(self.kappa):
            return self.analytic == self.kappa
        return abs(self.kappa - self.analytic) < self.tolerance


def estimate_kappa(rates, tail_fraction=DEFAULT_TAIL):
    """``min (1/n) ln(1/pi_n)`` over the tail window."""
    lp = log_pi(rates)
    lo = max(tail_start(rates.cutoff, tail_fraction), 1)
    n = np.arange(lo, rates.cutoff + 1)
    kappa = float(np.min(-lp[lo:] / n))
    return KappaEstimate(kappa, (lo, rates.cutoff), rates.analytic_kappa)


# ---------------------------------------------------------------------------
# verdicts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegionVerdict:
    verdict: str
    criterion: Optional[str] = None
    margin: float = float("nan")
    conflict: bool = False
    diagnostics: dict = field(default_factory=dict)

    def record(self, lam, zeta, model):
        return {
            "lambda": lam,
            "zeta_re": complex(zeta).real,
            "zeta_im": complex(zeta).imag,
            "model": model,
            "verdict": self.verdict,
            "criterion": self.criterion,
            "margin": self.margin,
        }


def _unknown(margin=float("nan"), **diagnostics):
    return RegionVerdict("unknown", None, margin, False, diagnostics)


def _coherence_ratio(numerator, eta):
    """``numerator / (4 |eta|^2)`` with ``eta = 0`` read as ``+inf``."""
    den = 4.0 * np.abs(eta) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den > 0, numerator / np.where(den > 0, den, 1.0), np.inf)
    return out


def check_existence(rates, kappa, tail_fraction=DEFAULT_TAIL):
    """Sufficient condition for a normal invariant state of exponential fall-off."""
    k = kappa.value
    lo = tail_start(rates.cutoff - 1, tail_fraction)
    hi = rates.cutoff - 1
    window = (lo, hi)
    if not k > 0:
        return _unknown(window=window, reason="kappa <= 0")
    if np.any(rates.lam[lo:] == 0) or np.any(rates.mu[max(lo, 1):] == 0):
        return _unknown(window=window, reason="vanishing birth or death rate")
    lhs = float(_coherence_ratio(rates.lam[lo:hi + 1] * rates.mu[lo + 1:hi + 2],
                                 rates.eta[lo:hi + 1]).min())
    q = np.exp(-k)
    rhs = q / (1.0 - q) ** 2
    margin = lhs - rhs
    if margin > 0:
        return RegionVerdict("exists", "theorem-1", margin, False,
                             {"window": window, "lhs": lhs, "rhs": rhs, "kappa": k})
    return _unknown(margin, window=window, lhs=lhs, rhs=rhs, kappa=k)


def check_nonexistence(rates, tail_fraction=DEFAULT_TAIL):
    """Sufficient condition for the absence of normal invariant states."""
    lo = tail_start(rates.cutoff - 1, tail_fraction)
    hi = rates.cutoff - 1
    window = (lo, hi)
    if np.any(rates.lam[max(lo, 1):] == 0):
        return _unknown(window=window, reason="vanishing birth rate")
    gap = rates.lam - rates.mu
    if np.any(gap[lo:] <= 0):
        return _unknown(window=window, reason="mu_n >= lambda_n on the tail")
    lhs = float(_coherence_ratio(gap[lo:hi + 1] * gap[lo + 1:hi + 2],
                                 rates.eta[lo:hi + 1]).min())
    margin = lhs - 1.0
    if margin > 0:
        return RegionVerdict("not_exists", "theorem-2", margin, False,
                             {"window": window, "lhs": lhs})
    return _unknown(margin, window=window, lhs=lhs)


def _combine(fired, diagnostics):
    """First firing criterion wins; opposite verdicts together are a conflict."""
    if not fired:
        return _unknown(**diagnostics)
    kinds = {v.verdict for v in fired}
    if len(kinds) > 1:
        diagnostics["fired"] = [v.criterion for v in fired]
        return RegionVerdict("unknown", None, float("nan"), True, diagnostics)
    first = fired[0]
    return RegionVerdict(first.verdict, first.criterion, first.margin, False,
                         {**diagnostics, **first.diagnostics})


def classify_rates(rates, tail_fraction=DEFAULT_TAIL):
    """Apply both parts of the general criterion to a rate table."""
    kappa = estimate_kappa(rates, tail_fraction) if np.all(rates.mu[1:] != 0) else None
    fired = []
    if kappa is not None:
        v = check_existence(rates, kappa, tail_fraction)
        if v.verdict != "unknown":
            fired.append(v)
    v = check_nonexistence(rates, tail_fraction)
    if v.verdict != "unknown":
        fired.append(v)
    diag = {"kappa": None if kappa is None else kappa.value}
    return _combine(fired, diag)


def classify_maser_point(params, tail_fraction=DEFAULT_TAIL):
    """Verdict for one atomic state of a maser model.

    Toy and Jaynes-Cummings generators use exact ``liminf |beta_n|``; explicit
    sequences go through the general criterion on their closed-form rates.
    """
    if params.kind == "explicit":
        rates = closed_form_rates(params, len(params.alpha_list) - 2)
        return classify_rates(rates, tail_fraction)

    lam = params.lambda_excitation
    beta_lo, beta_hi = params.beta_limits(tail_fraction)
    nu_abs = abs(params.nu)
    diagnostics = {"beta_liminf": beta_lo, "beta_limsup": beta_hi, "nu_abs": nu_abs}
    if beta_lo == 0.0:
        diagnostics["reason"] = "liminf |beta_n| = 0; criteria need it positive"
        return _unknown(**diagnostics)

    # lim inf_n beta_n^2 / alpha_n^2 is attained along liminf |beta_n|
    ratio = np.sqrt(1.0 - beta_lo ** 2) / beta_lo
    lower = 0.5 - ratio * nu_abs
    upper = 0.5 + ratio * nu_abs
    diagnostics.update(lower_threshold=lower, upper_threshold=upper)

    fired = []
    if lower - lam > BOUNDARY_TOL:
        fired.append(RegionVerdict("exists", "maser-prop-1", lower - lam))
    if lam - upper > BOUNDARY_TOL:
        fired.append(RegionVerdict("not_exists", "maser-prop-2", lam - upper))
    if params.kind == "toy":
        strip = toy_strip_slacks(params)
        if strip is not None:
            diagnostics["strip_slacks"] = strip
            if min(strip) > BOUNDARY_TOL:
                fired.append(RegionVerdict("not_exists", "toy-nonexistence", min(strip)))
        if abs(abs(params.zeta) - 1.0) < BOUNDARY_TOL:
            a = abs(params.alpha)
            diagnostics["pure_boundaries"] = (0.5 * (1 - a), 0.5 * (1 + a))
            on_edge = min(abs(lam - 0.5 * (1 - a)), abs(lam - 0.5 * (1 + a))) < BOUNDARY_TOL
            diagnostics["on_pure_boundary"] = bool(on_edge)
            if on_edge:
                # only pure invariant states are ruled out there; mixed ones stay open
                diagnostics["reason"] = "pure-state boundary lambda = (1 +- alpha)/2"
                return _unknown(**diagnostics)
    return _combine(fired, diagnostics)


def toy_strip_slacks(params):
    """Slacks of the two toy-model non-existence conditions, or None if inapplicable."""
    lam = params.lambda_excitation
    a, b = float(params.alpha), float(params.beta)
    nu_abs = abs(params.nu)
    if not (0.0 < lam < 1.0 and abs(a) < 1.0 and abs(b) < 1.0 and nu_abs > 0):
        return None
    first = 1.0 / (1.0 + (1.0 - 2.0 * lam) ** 2 / (4.0 * nu_abs ** 2)) - b * b
    second = nu_abs / (1.0 - lam) - (1.0 - a) / abs(b)
    return (float(first), float(second))


# ---------------------------------------------------------------------------
# tridiagonal positivity
# ---------------------------------------------------------------------------

def tridiagonal_slacks(diag, offdiag):
    """``(min d_n, min d_n d_{n+1} - 4|o_n|^2)``."""
    d = np.asarray(diag, dtype=float)
    o = np.asarray(offdiag)
    if o.shape[0] != max(d.shape[0] - 1, 0):
        raise ValueError("offdiag must be one shorter than diag")
    prod = d[:-1] * d[1:] - 4.0 * np.abs(o) ** 2
    return float(d.min()), (float(prod.min()) if prod.size else float("inf"))


def tridiagonal_psd_sufficient(diag, offdiag):
    """Sufficient PSD test for a Hermitian tridiagonal matrix.

    Returns ``"positive"`` if every diagonal entry is positive and
    ``d_n d_{n+1} > 4 |o_n|^2`` for all adjacent pairs.  ``"inconclusive"``
    does not mean the matrix is indefinite: ``[[1, 1], [1, 1]]`` is PSD but
    fails the product test.
    """
    dmin, pmin = tridiagonal_slacks(diag, offdiag)
    return POSITIVE if dmin > 0 and pmin > 0 else INCONCLUSIVE


# ---------------------------------------------------------------------------
# certificates
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Certificate:
    """Diagonal witness pair: ``(X, Y)`` for ``lyapunov``, ``(Z, eps)`` for ``drift``."""

    kind: str
    first: np.ndarray
    second: np.ndarray
    params: dict
    verified: bool = False
    min_slack: float = float("nan")
    diagnostics: dict = field(default_factory=dict)

    def _need(self, kind):
        if self.kind != kind:
            raise AttributeError(f"{self.kind} certificate has no {kind} sequences")

    @property
    def x_diag(self):
        self._need("lyapunov")
        return self.first

    @property
    def y_diag(self):
        self._need("lyapunov")
        return self.second

    @property
    def z_diag(self):
        self._need("drift")
        return self.first

    @property
    def eps_diag(self):
        self._need("drift")
        return self.second

    @property
    def lower_bound(self):
        """``b`` with ``Y >= -b``."""
        self._need("lyapunov")
        return float(max(0.0, -self.second.min()))

    def to_dict(self):
        names = ("x", "y") if self.kind == "lyapunov" else ("z", "eps")
        return {
            "kind": self.kind,
            names[0]: self.first.tolist(),
            names[1]: self.second.tolist(),
            "params": self.params,
            "verified": self.verified,
            "min_slack": self.min_slack,
            "diagnostics": self.diagnostics,
        }


def _kappa_value(rates, tail_fraction):
    return estimate_kappa(rates, tail_fraction).value


def lyapunov_ineq_ratio(rates):
    """``lambda_n mu_{n+1} / (4 |eta_n|^2)`` for ``n = 0..cutoff-1``."""
    return _coherence_ratio(rates.lam[:-1] * rates.mu[1:], rates.eta[:-1])


def build_lyapunov_certificate(rates, t, r, N_head=None, tail_fraction=DEFAULT_TAIL,
                               repair_slack=1.5):
    """Diagonal ``X, Y`` with ``X - T(X) - Y`` passing the tridiagonal test.

    Tail entries follow ``x_n = sum_k t^k/(mu_k pi_k)`` and
    ``y_n = r t^n / pi_n``; head entries ``y_0..y_{N_head}`` are fixed by a
    backward sweep that makes every adjacent product exceed
    ``4|o_n|^2`` by ``repair_slack``.
    """
    if not 0.0 < t < 1.0:
        raise InvalidParamsError(f"t must lie in (0, 1), got {t}")
    if not 0.0 < r < 1.0 - t:
        raise InvalidParamsError(f"r must lie in (0, 1 - t), got r={r}, t={t}")
    if np.any(rates.lam == 0) or np.any(rates.mu[1:] == 0):
        raise CriterionNotApplicable("Lyapunov construction needs nonzero birth and death rates")
    kappa = _kappa_value(rates, tail_fraction)
    if not t > np.exp(-kappa):
        raise InvalidParamsError(f"t = {t} must exceed exp(-kappa) = {np.exp(-kappa)}")

    cutoff = rates.cutoff
    lp = log_pi(rates)
    n = np.arange(cutoff + 1)
    inv_pi_t = np.exp(-lp + n * np.log(t))  # t^n / pi_n
    x = np.zeros(cutoff + 1)
    x[1:] = np.cumsum(inv_pi_t[1:] / rates.mu[1:])

    bound = t / (1.0 - r - t) ** 2
    ok = lyapunov_ineq_ratio(rates) > bound
    failing = np.flatnonzero(~ok)
    tail_lo = tail_start(cutoff - 1, tail_fraction)
    if N_head is None:
        N_head = int(failing.max()) if failing.size else 0
    elif failing.size and failing.max() > N_head:
        raise CriterionNotApplicable(
            f"inequality fails at n = {int(failing.max())} > N_head = {N_head}")
    if N_head >= tail_lo:
        raise CriterionNotApplicable(
            f"inequality lambda_n mu_(n+1)/4|eta_n|^2 > {bound:.6g} fails on the tail window")

    # X - T(X) restricted to rows 0..cutoff-1
    dx = np.diff(x)
    D = np.empty(cutoff)
    D[0] = -rates.lam[0] * dx[0]
    D[1:] = -rates.lam[1:cutoff] * dx[1:] + rates.mu[1:cutoff] * dx[:-1]
    off = rates.eta[:cutoff] * dx  # (X - T(X))_{n,n+1}

    y = r * inv_pi_t
    tail_diag = (1.0 - r - t) * inv_pi_t
    for k in range(N_head, -1, -1):
        nxt = D[k + 1] - y[k + 1]
        need = 4.0 * abs(off[k]) ** 2 / nxt
        d_k = max(tail_diag[k], repair_slack * need)
        y[k] = D[k] - d_k
    params = {"t": float(t), "r": float(r), "N_head": int(N_head), "kappa": float(kappa)}
    return Certificate("lyapunov", x, y, params)


def _window_matrix(channel, first, length):
    M = length - 2
    X = np.diag(first[:M + 2]).astype(complex)
    return M, X, heisenberg_apply_window(channel, X, M)


def _tridiagonal_parts(W):
    d = W.diagonal().real.copy()
    o = np.diagonal(W, 1).copy()
    band = np.abs(np.triu(W, 2)).max() if W.shape[0] > 2 else 0.0
    herm = float(np.abs(W - W.conj().T).max())
    return d, o, float(band), herm


def verify_lyapunov(channel, cert):
    """Check ``X - T(X) - Y >= 0`` on the interior via the tridiagonal test."""
    if cert.kind != "lyapunov":
        raise ValueError("expected a lyapunov certificate")
    if len(cert.first) != len(cert.second) or len(cert.first) < 3:
        raise ValueError("certificate sequences have mismatched or too short lengths")
    length = min(len(cert.first), channel.dim)
    M, X, TX = _window_matrix(channel, cert.first, length)
    W = X[:M + 1, :M + 1] - TX - np.diag(cert.second[:M + 1])
    d, o, band, herm = _tridiagonal_parts(W)
    dmin, pmin = tridiagonal_slacks(d, o)
    scale = np.abs(X).max()
    clean = band <= 1e-12 * scale and herm <= 1e-12 * scale
    verified = clean and tridiagonal_psd_sufficient(d, o) == POSITIVE
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = (d[:-1] * d[1:] - 4 * np.abs(o) ** 2) / np.abs(d[:-1] * d[1:])
    diagnostics = {
        "window": [0, M],
        "min_diagonal": dmin,
        "min_product": pmin,
        "min_relative_product": float(np.nanmin(rel)),
        "off_band_residual": band,
        "lower_bound_b": cert.lower_bound,
    }
    return replace(cert, verified=bool(verified), min_slack=min(dmin, pmin),
                   diagnostics=diagnostics)


def search_lyapunov_certificate(rates, channel, tail_fraction=DEFAULT_TAIL, max_j=20):
    """Geometric grid over ``(t, r)``; the first verified pair wins."""
    kappa = _kappa_value(rates, tail_fraction)
    if not (kappa > 0 and np.isfinite(kappa)):
        raise CriterionNotApplicable(f"kappa = {kappa} leaves no admissible t")
    q = np.exp(-kappa)
    tried = 0
    for jt in range(1, max_j + 1):
        t = q * (1.0 + 2.0 ** -jt)
        if t >= 1.0:
            continue
        for jr in range(1, max_j + 1):
            r = (1.0 - t) * 2.0 ** -jr
            tried += 1
            try:
                cert = build_lyapunov_certificate(rates, t, r, tail_fraction=tail_fraction)
            except CriterionNotApplicable:
                continue
            cert = verify_lyapunov(channel, cert)
            if cert.verified:
                cert.diagnostics["grid"] = {"jt": jt, "jr": jr, "tried": tried}
                return cert
    raise CriterionNotApplicable(f"no verified (t, r) among {tried} grid points")


def build_drift_certificate(rates, tail_fraction=DEFAULT_TAIL, slack=None, min_scale=2.0 ** -12):
    """``Z = diag(max(0, n - N))`` and ``eps_n = c (lambda_n - mu_n)`` for ``n >= N``.

    ``c`` starts at 1/2 and is halved until
    ``(gap_n - eps_n)(gap_{n+1} - eps_{n+1}) > slack * 4|eta_n|^2`` holds on a
    tail reaching into the declared window; ``N`` is the smallest index from
    which it holds throughout.  By default ``slack = min(1.1, sqrt(q))`` where
    ``q`` is the tail minimum of ``gap_n gap_{n+1} / 4|eta_n|^2``, so points
    just past the threshold still admit a certificate.
    """
    if np.any(rates.lam[1:] == 0):
        raise CriterionNotApplicable("drift construction needs nonzero birth rates")
    cutoff = rates.cutoff
    gap = rates.lam - rates.mu
    tail_lo = tail_start(cutoff - 1, tail_fraction)
    if np.any(gap[tail_lo:] <= 0):
        raise CriterionNotApplicable("no tail with mu_n < lambda_n")
    q = float(_coherence_ratio(gap[tail_lo:-1] * gap[tail_lo + 1:], rates.eta[tail_lo:-1]).min())
    if not q > 1.0:
        raise CriterionNotApplicable(f"tail ratio gap^2 / 4|eta|^2 = {q:.6g} does not exceed 1")
    if slack is None:
        slack = min(1.1, float(np.sqrt(q)))
    c = 0.5
    while c >= min_scale:
        rest = (1.0 - c) * gap
        good = (gap[:-1] > 0) & (gap[1:] > 0) & (
            rest[:-1] * rest[1:] > slack * 4.0 * np.abs(rates.eta[:-1]) ** 2)
        bad = np.flatnonzero(~good)
        N = int(bad.max()) + 1 if bad.size else 0
        if N <= tail_lo:
            n = np.arange(cutoff + 1)
            z = np.maximum(0, n - N).astype(float)
            eps = np.where(n >= N, c * gap, 0.0)
            return Certificate("drift", z, eps, {"N": N, "scale": c, "slack": slack})
        c /= 2.0
    raise CriterionNotApplicable("no admissible N within the window")


def verify_drift(channel, cert):
    """Check ``T(Z) - Z - eps >= 0`` on the interior.

    Rows before ``N`` vanish identically; the tridiagonal test runs on the
    block from ``N`` on.
    """
    if cert.kind != "drift":
        raise ValueError("expected a drift certificate")
    if len(cert.first) != len(cert.second) or len(cert.first) < 3:
        raise ValueError("certificate sequences have mismatched or too short lengths")
    length = min(len(cert.first), channel.dim)
    M, Z, TZ = _window_matrix(channel, cert.first, length)
    W = TZ - Z[:M + 1, :M + 1] - np.diag(cert.second[:M + 1])
    N = cert.params["N"]
    if N > M - 1:
        raise ValueError("channel window too small for the certificate head")
    head = float(np.abs(W[:N, :]).max()) if N else 0.0
    active = W[N:, N:]
    d, o, band, herm = _tridiagonal_parts(active)
    dmin, pmin = tridiagonal_slacks(d, o)
    clean = head <= 1e-12 and band <= 1e-12 and herm <= 1e-12
    verified = clean and tridiagonal_psd_sufficient(d, o) == POSITIVE
    diagnostics = {
        "window": [0, M],
        "head_residual": head,
        "min_diagonal": dmin,
        "min_product": pmin,
        "off_band_residual": band,
    }
    return replace(cert, verified=bool(verified), min_slack=min(dmin, pmin),
                   diagnostics=diagnostics)


def certificate_channel(rates, dim):
    """Classical channel realising ``eta = 0`` rate tables for certificate checks."""
    return classical_channel(rates, dim)


# ---------------------------------------------------------------------------
# toy-model conserved observable
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ConservedObservable:
    x_seq: np.ndarray
    y_seq: np.ndarray
    residual: float
    residuals: dict
    root_moduli: tuple
    y_max: float
    x_max: float
    x_bounded_predicted: bool
    offsupport_residual: float
    block_norm: float

    def to_dict(self):
        return {
            "x": [[v.real, v.imag] for v in self.x_seq],
            "y": [[v.real, v.imag] for v in self.y_seq],
            "residual": self.residual,
            "residuals": {str(k): v for k, v in self.residuals.items()},
            "root_moduli": list(self.root_moduli),
            "y_max": self.y_max,
            "x_max": self.x_max,
            "x_bounded_predicted": self.x_bounded_predicted,
            "offsupport_residual": self.offsupport_residual,
            "block_norm": self.block_norm,
        }


def conserved_sequences(params, C, K):
    """Sequences ``x_k, y_k`` (``k = 0..K``) solving ``T(A) - A = C 1``.

    ``y_0 = 1`` is the diagonal of the number operator; ``x_0`` is unused.
    """
    if params.kind != "toy":
        raise InvalidParamsError("conserved observable needs the toy model")
    lam, a, b, nu = params.lambda_excitation, float(params.alpha), float(params.beta), params.nu
    if abs(nu) == 0:
        raise InvalidParamsError("nu = 0: recurrence undefined")
    if a == 0 or b == 0:
        raise InvalidParamsError("alpha and beta must be nonzero")
    if not b * b < 1.0 / (1.0 + (1.0 - 2.0 * lam) ** 2 / (4.0 * abs(nu) ** 2)):
        raise InvalidParamsError("real-roots regime: characteristic roots are not unimodular")
    nub = np.conj(nu)
    y = np.zeros(K + 1, dtype=complex)
    x = np.zeros(K + 1, dtype=complex)
    y[0] = 1.0
    if K >= 1:
        y[1] = -(C + (1.0 - 2.0 * lam) * b * b) / (2.0 * a * b) / nub
        x[1] = (lam * b * b - C) / (2.0 * b * nub)
    lead = (2.0 * lam - 1.0) * b / (a * nub)
    for k in range(1, K):
        y[k + 1] = lead * y[k] - (nu / nub) * y[k - 1]
        x[k + 1] = ((1.0 - lam) * (a - 1.0) * x[k] + lam * b * b * y[k]
                    - a * b * nu * y[k - 1]) / (b * nub)
    roots = np.roots([1.0, -lead, nu / nub])
    return x, y, tuple(float(v) for v in np.abs(roots))


def truncated_observable(x, y, m, size):
    """``A^{^m}`` on ``[0, size-1]``."""
    j = np.arange(size)
    A = np.diag(np.minimum(j, m)).astype(complex)
    for k in range(1, min(2 * m, len(x) - 1, size - 1) + 1):
        level = m - k // 2
        vals = x[k] + y[k] * np.minimum(j[:size - k], level)
        A[j[:size - k], j[:size - k] + k] = vals
        A[j[:size - k] + k, j[:size - k]] = np.conj(vals)
    return A


def toy_conserved_observable(params, C, K, m_values=None):
    """Recurrence-built observable with ``T(A) - A = C`` and its truncation residuals."""
    from .channel import build_maser_channel

    x, y, moduli = conserved_sequences(params, C, K)
    if m_values is None:
        m_values = [K // 2]
    m_values = sorted(set(int(m) for m in m_values))
    if not m_values or min(m_values) < 1 or 2 * max(m_values) > K:
        raise ValueError("need 1 <= m <= K/2")
    block = 2 * max(m_values) + 3
    channel = build_maser_channel(params, block + 2)
    residuals = {}
    offsupport = 0.0
    block_norm = 0.0
    for m in m_values:
        P = 2 * m + 2
        A = truncated_observable(x, y, m, P + 2)
        Z = heisenberg_apply_window(channel, A, P) - A[:P + 1, :P + 1]
        Z[:m, :m] -= C * np.eye(m)
        residuals[m] = float(np.abs(Z[:m, :m]).max())
        jj, kk = np.meshgrid(np.arange(P + 1), np.arange(P + 1), indexing="ij")
        off = ~np.isin(jj + kk, (2 * m, 2 * m + 1))
        offsupport = max(offsupport, float(np.abs(Z[off]).max()))
        block_norm = max(block_norm, float(np.linalg.norm(Z, 2)))
    lam, a, b = params.lambda_excitation, float(params.alpha), float(params.beta)
    x_bounded = (1.0 - a) / abs(b) < abs(params.nu) / (1.0 - lam)
    return ConservedObservable(
        x_seq=x, y_seq=y, residual=max(residuals.values()), residuals=residuals,
        root_moduli=moduli, y_max=float(np.abs(y).max()), x_max=float(np.abs(x).max()),
        x_bounded_predicted=bool(x_bounded), offsupport_residual=offsupport,
        block_norm=block_norm,
    )
