"""Invariant states of truncated channels and the approach to equilibrium.

States are stored as density matrices ``rho`` with ``phi(x) = Tr(rho x)``,
so ``phi(e_{n,m}) = rho[m, n]``.  The truncated predual loses the trace that
flows past the top level; solvers renormalise and report the loss as
``trace_deficit`` instead of hiding it.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .channel import build_maser_channel, unvec
from .errors import NoInvariantState, NonConvergence, SolverError

CLIP_TOL = 1e-10
DENSE_MAX_DIM = 30


def trace_norm(a):
    """Sum of singular values."""
    return float(np.linalg.svd(np.asarray(a), compute_uv=False).sum())


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Normal state on the window ``[0, dim-1]``.

    Attributes
    ----------
    entries : ndarray, shape (dim, dim)
        Hermitian, positive semidefinite, unit trace.
    trace_deficit : float
        Trace lost to the truncation boundary before renormalisation.
    info : dict
        Solver diagnostics (eigenvalue, iterations, ...).
    """

    entries: np.ndarray
    trace_deficit: float = 0.0
    info: dict = field(default_factory=dict)

    @property
    def dim(self):
        return self.entries.shape[0]

    @property
    def diag(self):
        return np.real(np.diag(self.entries)).copy()

    def expectation(self, x):
        return complex(np.trace(self.entries @ np.asarray(x)))

    def embed(self, dim):
        """Zero-pad into a larger window."""
        if dim < self.dim:
            raise ValueError("cannot embed into a smaller window")
        out = np.zeros((dim, dim), dtype=complex)
        out[:self.dim, :self.dim] = self.entries
        return DensityMatrix(out, self.trace_deficit, dict(self.info))

    def validate(self, herm_tol=1e-12, psd_tol=CLIP_TOL):
        e = self.entries
        if np.abs(e - e.conj().T).max() > herm_tol:
            raise SolverError("state is not Hermitian")
        if np.linalg.eigvalsh(e).min() < -psd_tol:
            raise SolverError("state is not positive semidefinite")
        if abs(np.trace(e).real - 1.0) > 1e-10:
            raise SolverError("state is not normalised")
        return self

    @classmethod
    def basis_state(cls, n, dim):
        e = np.zeros((dim, dim), dtype=complex)
        e[n, n] = 1.0
        return cls(e)

    @classmethod
    def vacuum(cls, dim):
        return cls.basis_state(0, dim)

    @classmethod
    def from_diag(cls, d):
        d = np.asarray(d, dtype=float)
        return cls(np.diag(d / d.sum()).astype(complex))

    @classmethod
    def maximally_mixed(cls, dim):
        return cls(np.eye(dim, dtype=complex) / dim)

    @classmethod
    def from_vector(cls, psi):
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))


def finalize_state(mat, trace_deficit=0.0, info=None):
    """Hermitise, normalise, clip roundoff negativity; fail on real negativity."""
    mat = np.asarray(mat, dtype=complex)
    tr = np.trace(mat)
    if abs(tr) < 1e-300:
        raise SolverError("candidate state has zero trace")
    mat = mat / tr
    mat = 0.5 * (mat + mat.conj().T)
    w, v = np.linalg.eigh(mat)
    if w.min() < -CLIP_TOL:
        raise SolverError(f"state has eigenvalue {w.min():.3e} below -{CLIP_TOL}")
    w = np.clip(w, 0.0, None)
    mat = (v * w) @ v.conj().T
    mat = 0.5 * (mat + mat.conj().T)
    mat = mat / np.trace(mat).real
    return DensityMatrix(mat, float(max(0.0, trace_deficit)), info or {})


def _eigs_near_one(channel, k=6):
    n = channel.dim ** 2
    if channel.dim <= DENSE_MAX_DIM:
        w, v = sla.eig(channel.predual_matrix.toarray())
        return w, v
    k = min(k, n - 2)
    # shift slightly off 1 so the factorisation stays regular when 1 is an exact eigenvalue
    w, v = spla.eigs(channel.predual_matrix.tocsc(), k=k, sigma=1.0 + 1e-6, which="LM")
    return w, v


def solve_invariant_direct(channel, tol=1e-8):
    """Fixed point of the predual via the eigenvector with eigenvalue nearest 1.

    Raises
    ------
    NoInvariantState
        If no eigenvalue lies within ``tol`` of 1.
    """
    w, v = _eigs_near_one(channel)
    i = int(np.argmin(np.abs(w - 1.0)))
    lam = complex(w[i])
    if abs(lam - 1.0) > tol:
        raise NoInvariantState(
            f"closest eigenvalue {lam.real:.12g}{lam.imag:+.3g}j is {abs(lam - 1):.3e} from 1",
            closest_eigenvalue=lam)
    near = int(np.sum(np.abs(w - 1.0) <= tol))
    rho = finalize_state(unvec(v[:, i], channel.dim))
    kept = np.trace(channel.apply_predual(rho.entries)).real
    return DensityMatrix(rho.entries, max(0.0, 1.0 - kept),
                         {"method": "direct", "eigenvalue": [lam.real, lam.imag],
                          "eigenvalues_within_tol": near})


def solve_invariant_cesaro(channel, seed, max_iter=100000, tol=1e-8):
    """Fixed point from averaged iterates of the predual.

    Iterates ``rho <- T_*(rho)`` (renormalised each step) and averages them
    over doubling blocks ``[2^j, 2^{j+1})``.  Stops once two consecutive block
    averages are within ``tol`` in trace norm.  The running Cesaro mean
    itself moves by ``O(1/n)`` per step, so comparing block averages is what
    makes a small ``tol`` reachable.
    """
    rho = np.asarray(seed.entries, dtype=complex)
    if max_iter < 3:
        raise ValueError("max_iter must be >= 3")
    kept = 1.0
    prev = None
    dist = np.inf
    it = 0
    j = 0
    while True:
        length = 2 ** j
        if it + length > max_iter:
            raise NonConvergence(
                f"no convergence within {max_iter} iterations", last_distance=dist)
        acc = np.zeros_like(rho)
        for _ in range(length):
            rho = channel.apply_predual(rho)
            tr = np.trace(rho).real
            if tr <= 0:
                raise NonConvergence("all mass left the window", last_distance=dist)
            kept *= tr
            rho = rho / tr
            acc += rho
            it += 1
        avg = acc / length
        if prev is not None:
            dist = trace_norm(avg - prev)
            if dist < tol:
                return finalize_state(avg, 1.0 - kept,
                                      {"method": "cesaro", "iterations": it,
                                       "last_distance": dist})
        prev = avg
        j += 1


@dataclass
class FalloffFit:
    """Exponential envelope ``rho_nn <= C exp(-gamma n)``.

    ``gamma`` is the least-squares slope of ``-ln rho_nn``; ``C`` is the
    smallest prefactor making the envelope an upper bound on the fit window.
    ``max_violation`` is measured over the whole interior, including entries
    excluded from the fit.
    """

    C: float
    gamma: float
    window: tuple
    max_violation: float
    flagged: bool = False
    reason: str = ""

    def to_dict(self):
        return {"C": self.C, "gamma": self.gamma, "window": list(self.window),
                "max_violation": self.max_violation, "flagged": self.flagged,
                "reason": self.reason}


def falloff_fit(rho, window=None, floor=1e-12):
    """Fit ``ln rho_nn`` linearly in ``n``.

    The default window is ``[0, dim-2]`` (the top level is boundary-affected)
    cut at the first entry below ``floor * max(rho_nn)``.
    """
    d = rho.diag if isinstance(rho, DensityMatrix) else np.real(np.diag(rho))
    top = len(d) - 1
    lo, hi = window if window is not None else (0, max(top - 1, 0))
    interior = np.arange(lo, hi + 1)
    cut = floor * d[interior].max()
    small = np.nonzero(d[interior] <= cut)[0]
    flagged, reason = False, ""
    fit_hi = hi
    if small.size:
        fit_hi = int(interior[small[0]]) - 1
        if fit_hi < hi:
            flagged, reason = True, f"window shrunk to [{lo}, {fit_hi}] at relative floor {floor:g}"
    n = np.arange(lo, fit_hi + 1)
    if n.size < 2:
        C = float(d[lo]) if n.size else 0.0
        return FalloffFit(C, np.inf, (lo, fit_hi), float(np.clip(d[interior[1:]], 0, None).max(initial=0.0)),
                          True, "degenerate fit: fewer than two support points")
    slope, _ = np.polyfit(n, np.log(d[n]), 1)
    gamma = float(-slope)
    C = float(np.max(d[n] * np.exp(gamma * n)))
    viol = float(np.max(np.clip(d[interior] - C * np.exp(-gamma * interior), 0.0, None)))
    return FalloffFit(C, gamma, (int(lo), int(fit_hi)), viol, flagged, reason)


def truncation_convergence(params, dims, tol=1e-8):
    """Trace distances between invariant states at consecutive truncations."""
    dims = [int(d) for d in dims]
    if len(dims) < 3 or any(b <= a for a, b in zip(dims, dims[1:])):
        raise ValueError("dims must be increasing with at least three entries")
    states = [solve_invariant_direct(build_maser_channel(params, d), tol) for d in dims]
    big = dims[-1]
    return [trace_norm(b.embed(big).entries - a.embed(big).entries)
            for a, b in zip(states, states[1:])]


# ---------------------------------------------------------------------------
# approach to equilibrium
# ---------------------------------------------------------------------------

def gamma_bound(gamma0, gamma1, gamma2, lam, a):
    """Polynomial rate ``gamma1 gamma2 / (-a ln(lam) (gamma0 + gamma2))``."""
    if not 0 < lam < 1:
        raise ValueError("mixing weight must lie in (0, 1)")
    if a <= 1:
        raise ValueError("a must exceed 1")
    return gamma1 * gamma2 / (-a * np.log(lam) * (gamma0 + gamma2))


@dataclass
class RateFit:
    kind: str          # "power" (d ~ c n^-rate) or "geometric" (d ~ c rate^n)
    rate: float
    coefficient: float
    residual: float


@dataclass
class ConvergenceTrace:
    distances: np.ndarray
    fitted_rate: Optional[RateFit] = None
    alternative: Optional[RateFit] = None
    gamma_bound: Optional[float] = None

    def max_increase(self):
        d = self.distances
        return float(np.max(np.diff(d), initial=0.0))

    def first_below(self, level):
        idx = np.nonzero(self.distances < level)[0]
        return int(idx[0]) if idx.size else None


def fit_rates(distances, start=None, floor=1e-11):
    """Power-law and geometric fits of the tail; the better residual comes first.

    The tail is the last three quarters of the points above ``floor`` (or
    the points from ``start`` on).
    """
    d = np.asarray(distances, dtype=float)
    n = np.arange(d.size)
    idx = np.nonzero((n >= 1) & (d > floor))[0]
    if start is None:
        idx = idx[idx.size // 4:]
    else:
        idx = idx[idx >= start]
    if idx.size < 3:
        return None, None
    x, y = n[idx], np.log(d[idx])
    fits = []
    p = np.polyfit(np.log(x), y, 1)
    r = float(np.sqrt(np.mean((np.polyval(p, np.log(x)) - y) ** 2)))
    fits.append(RateFit("power", float(-p[0]), float(np.exp(p[1])), r))
    q = np.polyfit(x, y, 1)
    r = float(np.sqrt(np.mean((np.polyval(q, x) - y) ** 2)))
    fits.append(RateFit("geometric", float(np.exp(q[0])), float(np.exp(q[1])), r))
    fits.sort(key=lambda f: f.residual)
    return fits[0], fits[1]


def distance_sequence(channel, theta, phi, n_max):
    """``||T_*^n theta - phi||_1`` for ``n = 0..n_max``."""
    rho = np.asarray(theta.entries, dtype=complex)
    target = np.asarray(phi.entries, dtype=complex)
    if rho.shape != target.shape or rho.shape[0] != channel.dim:
        raise ValueError("states must live on the channel's window")
    out = np.empty(n_max + 1)
    out[0] = trace_norm(rho - target)
    for k in range(1, n_max + 1):
        rho = channel.apply_predual(rho)
        out[k] = trace_norm(rho - target)
    return out


def convergence_trace(channel, theta, phi, n_max, gamma_params=None):
    """Distances to ``phi`` along the predual orbit of ``theta``, with rate fits.

    ``gamma_params`` may supply ``(gamma0, gamma1, gamma2, lam, a)`` for a
    declared convex combination ``lam R + (1-lam) S``.
    """
    top = np.nonzero(np.abs(theta.entries).max(axis=0) > 0)[0]
    if top.size and top.max() >= channel.dim - 1:
        raise ValueError("theta must be supported below the top level")
    d = distance_sequence(channel, theta, phi, n_max)
    best, other = fit_rates(d)
    gb = gamma_bound(*gamma_params) if gamma_params is not None else None
    return ConvergenceTrace(d, best, other, gb)


def fit_appendix_constants(r_channel, phi_r, phi_t, m_values, n_max, floor=1e-11):
    """Empirical constants for the convex-combination rate.

    ``gamma1`` is the slowest geometric decay of ``||e_mm R^n - phi_R||``
    over ``m``; ``gamma0`` the smallest value with
    ``||e_mm R^n - phi_R|| <= 2 exp(gamma0 m - gamma1 n)`` on the sampled
    orbits; ``gamma2`` the fall-off rate of the tail sums of ``phi_T``.
    These are fits, not derived bounds.
    """
    dim = r_channel.dim
    seqs = {m: distance_sequence(r_channel, DensityMatrix.basis_state(m, dim), phi_r, n_max)
            for m in m_values}
    slopes = []
    for d in seqs.values():
        n = np.arange(d.size)
        k = (n >= d.size // 2) & (d > floor)
        if k.sum() >= 3:
            slopes.append(-np.polyfit(n[k], np.log(d[k]), 1)[0])
    if not slopes:
        raise SolverError("orbits reached the floor too early to fit gamma1")
    gamma1 = float(min(slopes))
    gamma0 = 0.0
    for m, d in seqs.items():
        n = np.arange(d.size)
        k = d > floor
        excess = np.log(d[k] / 2.0) + gamma1 * n[k]
        if m > 0:
            gamma0 = max(gamma0, float(excess.max()) / m)
    tails = np.cumsum(phi_t.diag[::-1])[::-1]
    k = np.nonzero(tails > floor)[0]
    gamma2 = float(-np.polyfit(k, np.log(tails[k]), 1)[0])
    return gamma0, gamma1, gamma2


def falloff_bound_check(rho, y_diag, b, cd_pairs):
    """Check ``sum_{c <= y_n <= d} rho_nn <= b / c`` for each ``(c, d)``."""
    diag = rho.diag if isinstance(rho, DensityMatrix) else np.real(np.diag(rho))
    y = np.asarray(y_diag, dtype=float)
    n = min(len(y), len(diag))
    y, diag = y[:n], diag[:n]
    rows = []
    for c, d in cd_pairs:
        if c <= 0 or d < c:
            raise ValueError("need 0 < c <= d")
        mass = float(diag[(y >= c) & (y <= d)].sum())
        rows.append({"c": float(c), "d": float(d), "mass": mass, "bound": b / c,
                     "ok": bool(mass <= b / c)})
    return {"pairs": rows, "all_ok": all(r["ok"] for r in rows)}


def thermal_state(lam, dim):
    """Geometric state with ratio ``lam / (1 - lam)`` normalised on the window."""
    q = lam / (1.0 - lam)
    d = (1.0 - q) * q ** np.arange(dim)
    return DensityMatrix(np.diag(d).astype(complex))


def residual_norm(channel, rho, interior=None):
    """``||T_*(rho) - rho||_1`` on the block ``[0, interior]``."""
    diff = channel.apply_predual(rho.entries) - rho.entries
    if interior is not None:
        diff = diff[:interior + 1, :interior + 1]
    return trace_norm(diff)


__all__ = [
    "DensityMatrix", "FalloffFit", "ConvergenceTrace", "RateFit", "trace_norm",
    "finalize_state", "solve_invariant_direct", "solve_invariant_cesaro",
    "falloff_fit", "truncation_convergence", "gamma_bound", "fit_rates",
    "distance_sequence", "convergence_trace", "fit_appendix_constants",
    "falloff_bound_check", "thermal_state", "residual_norm",
]
