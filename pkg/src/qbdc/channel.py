"""Quantum birth-and-death channels on a truncated Fock space.

Operators on ``l^2(N_0)`` are represented on the window ``[0, N]`` with
``dim = N + 1``.  Superoperators act on column-stacked vectorisations,
``vec(x) = x.reshape(-1, order="F")``, so the matrix unit ``e_{k,l}`` sits at
flat index ``k + l * dim`` and ``vec(L x R) = (R^T kron L) vec(x)``.

The maser channel is assembled from the operators ``a``, ``b`` and the right
shift ``s`` compressed to ``[0, N]`` (``s e_N = 0``).  Columns belonging to
inputs supported in ``[0, N-1]`` are then identical to the infinite model;
only flow out of the top level is lost, which shows up as ``leak_estimate``.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import InvalidParamsError

NORM_TOL = 1e-12


def vec(x):
    """Column-stacking vectorisation."""
    return np.asarray(x).reshape(-1, order="F")


def unvec(v, dim):
    return np.asarray(v).reshape((dim, dim), order="F")


def flat_index(k, l, dim):
    """Flat position of the matrix unit ``e_{k,l}`` in ``vec``."""
    return k + l * dim


def matrix_unit(k, l, dim):
    e = np.zeros((dim, dim), dtype=complex)
    e[k, l] = 1.0
    return e


def interval_projection(lo, hi, dim):
    """Coordinate projection ``p_[lo, hi]`` compressed to ``[0, dim-1]``."""
    d = np.zeros(dim)
    d[max(lo, 0):min(hi, dim - 1) + 1] = 1.0
    return np.diag(d).astype(complex)


def _jc_alpha_beta(g_tau, n_max):
    n = np.arange(n_max + 1, dtype=float)
    phase = g_tau * np.sqrt(n)
    return np.cos(phase), -np.sin(phase)


# ---------------------------------------------------------------------------
# model parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MaserParams:
    """Atomic state ``(lambda, zeta)`` plus the coupling sequences.

    ``kind`` selects how ``alpha_n, beta_n`` are generated:

    * ``"toy"``: constant ``alpha, beta`` for ``n >= 1``;
    * ``"jc"``: Jaynes-Cummings ``cos(g tau sqrt n), -sin(g tau sqrt n)``;
    * ``"explicit"``: user supplied lists starting at ``n = 0``.

    ``alpha_0 = 1`` and ``beta_0 = 0`` always.
    """

    lambda_excitation: float
    zeta: complex
    kind: str = "toy"
    alpha: Optional[float] = None
    beta: Optional[float] = None
    g: Optional[float] = None
    tau: Optional[float] = None
    alpha_list: Optional[tuple] = None
    beta_list: Optional[tuple] = None
    nu: complex = field(init=False)

    def __post_init__(self):
        lam = float(self.lambda_excitation)
        if not 0.0 <= lam <= 1.0:
            raise InvalidParamsError(f"lambda must lie in [0, 1], got {lam}")
        z = complex(self.zeta)
        if abs(z) > 1.0 + NORM_TOL:
            raise InvalidParamsError(f"|zeta| must be <= 1, got {abs(z)}")
        object.__setattr__(self, "lambda_excitation", lam)
        object.__setattr__(self, "zeta", z)
        object.__setattr__(self, "nu", nu_of(lam, z))
        if self.kind == "toy":
            if self.alpha is None or self.beta is None:
                raise InvalidParamsError("toy model needs alpha and beta")
            _check_pair(float(self.alpha), float(self.beta), 1)
        elif self.kind == "jc":
            if self.g is None or self.tau is None:
                raise InvalidParamsError("jc model needs g and tau")
            if self.g <= 0 or self.tau <= 0:
                raise InvalidParamsError("jc model needs g, tau > 0")
        elif self.kind == "explicit":
            if self.alpha_list is None or self.beta_list is None:
                raise InvalidParamsError("explicit model needs alpha_list and beta_list")
            al = np.asarray(self.alpha_list, dtype=float)
            be = np.asarray(self.beta_list, dtype=float)
            if al.shape != be.shape or al.ndim != 1 or al.size < 2:
                raise InvalidParamsError("alpha_list and beta_list need equal length >= 2")
            if al[0] != 1.0 or be[0] != 0.0:
                raise InvalidParamsError("alpha_0 must be 1 and beta_0 must be 0", index=0)
            for n in range(1, al.size):
                _check_pair(al[n], be[n], n)
            object.__setattr__(self, "alpha_list", tuple(al))
            object.__setattr__(self, "beta_list", tuple(be))
        else:
            raise InvalidParamsError(f"unknown coupling kind {self.kind!r}")

    @classmethod
    def toy(cls, lam, zeta, alpha, beta):
        return cls(lam, zeta, kind="toy", alpha=alpha, beta=beta)

    @classmethod
    def baby(cls, lam, zeta=0.0):
        return cls(lam, zeta, kind="toy", alpha=0.0, beta=1.0)

    @classmethod
    def jc(cls, lam, zeta, g, tau):
        return cls(lam, zeta, kind="jc", g=g, tau=tau)

    @classmethod
    def explicit(cls, lam, zeta, alpha_list, beta_list):
        return cls(lam, zeta, kind="explicit",
                   alpha_list=tuple(alpha_list), beta_list=tuple(beta_list))

    def sequences(self, n_max):
        """Return ``(alpha_0..alpha_{n_max}, beta_0..beta_{n_max})``."""
        if self.kind == "toy":
            al = np.full(n_max + 1, float(self.alpha))
            be = np.full(n_max + 1, float(self.beta))
            al[0], be[0] = 1.0, 0.0
            return al, be
        if self.kind == "jc":
            return _jc_alpha_beta(self.g * self.tau, n_max)
        if n_max + 1 > len(self.alpha_list):
            raise InvalidParamsError(
                f"explicit sequences have {len(self.alpha_list)} entries, "
                f"need {n_max + 1}", index=len(self.alpha_list))
        return (np.array(self.alpha_list[:n_max + 1]),
                np.array(self.beta_list[:n_max + 1]))

    def beta_limits(self, tail_fraction=0.25):
        """``(liminf |beta_n|, limsup |beta_n|)``; exact for toy and jc."""
        if self.kind == "toy":
            return abs(self.beta), abs(self.beta)
        if self.kind == "jc":
            # g tau sqrt(n) mod pi is dense, so |sin| comes arbitrarily close to 0 and 1
            return 0.0, 1.0
        be = np.abs(np.asarray(self.beta_list))
        lo = tail_start(len(be) - 1, tail_fraction)
        return float(be[lo:].min()), float(be[lo:].max())

    def describe(self):
        d = {"kind": self.kind}
        if self.kind == "toy":
            d.update(alpha=self.alpha, beta=self.beta)
        elif self.kind == "jc":
            d.update(g=self.g, tau=self.tau)
        else:
            d.update(length=len(self.alpha_list))
        return d


def nu_of(lam, zeta):
    return 1j * np.sqrt(lam * (1.0 - lam)) * complex(zeta)


def _check_pair(a, b, n):
    if not (-1.0 - NORM_TOL <= a <= 1.0 + NORM_TOL and -1.0 - NORM_TOL <= b <= 1.0 + NORM_TOL):
        raise InvalidParamsError(f"alpha_{n}, beta_{n} must lie in [-1, 1]", index=n)
    if abs(a * a + b * b - 1.0) > NORM_TOL:
        raise InvalidParamsError(
            f"alpha_{n}^2 + beta_{n}^2 = {a * a + b * b!r} != 1", index=n)


def tail_start(cutoff, tail_fraction):
    """First index of the tail window ``[ceil((1-f) cutoff), cutoff]``."""
    return min(int(np.ceil((1.0 - tail_fraction) * cutoff)), cutoff)


# ---------------------------------------------------------------------------
# channels
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TruncatedChannel:
    """Heisenberg map ``T`` and predual ``T_*`` on the window ``[0, dim-1]``.

    ``predual_matrix`` is the conjugate transpose of ``heisenberg_matrix``,
    i.e. the adjoint for ``<A, B> = Tr(A^* B)``, so that
    ``Tr(rho T(x)) = Tr(T_*(rho) x)`` for Hermitian ``rho``.
    """

    dim: int
    heisenberg_matrix: sp.csr_matrix
    predual_matrix: sp.csr_matrix
    boundary_policy: str = "compress"
    leak_estimate: float = 0.0
    label: str = ""

    def apply(self, x):
        return unvec(self.heisenberg_matrix @ vec(x).astype(complex), self.dim)

    def apply_predual(self, rho):
        return unvec(self.predual_matrix @ vec(rho).astype(complex), self.dim)

    @property
    def top(self):
        return self.dim - 1


def channel_from_heisenberg(matrix, dim, label=""):
    """Wrap a ``dim^2 x dim^2`` Heisenberg-picture matrix as a channel."""
    h = sp.csr_matrix(matrix, dtype=complex)
    if h.shape != (dim * dim, dim * dim):
        raise ValueError(f"expected shape {(dim * dim,) * 2}, got {h.shape}")
    h.eliminate_zeros()
    pre = h.conj().T.tocsr()
    one = unvec(h @ vec(np.eye(dim, dtype=complex)), dim)
    defect = np.eye(dim) - 0.5 * (one + one.conj().T)
    leak = float(max(0.0, np.abs(np.linalg.eigvalsh(defect)).max()))
    return TruncatedChannel(dim, h, pre, "compress", leak, label)


def identity_channel(dim):
    return channel_from_heisenberg(sp.identity(dim * dim, format="csr"), dim, "identity")


def convex_combination(channels, weights, label="mixture"):
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
        raise ValueError("weights must be a probability vector")
    dims = {c.dim for c in channels}
    if len(dims) != 1:
        raise ValueError("channels must share one dimension")
    h = sum(w * c.heisenberg_matrix for w, c in zip(weights, channels))
    return channel_from_heisenberg(h, dims.pop(), label)


# Each term of T(e_{k,l}) is coef * left(k) * right(l) * e_{k+dk, l+dl}.
# Sequence names: "a" -> alpha_k, "ap" -> alpha_{k+1}, "b" -> beta_k, "bp" -> beta_{k+1}.
def maser_terms(lam, nu):
    nub = np.conj(nu)
    return [
        (lam, "ap", "ap", 0, 0),          # lam s*as x s*as
        (lam, "b", "b", -1, -1),          # lam s*b x bs
        (1.0 - lam, "bp", "bp", 1, 1),    # (1-lam) bs x s*b
        (1.0 - lam, "a", "a", 0, 0),      # (1-lam) a x a
        (-nub, "a", "b", 0, -1),          # -conj(nu) a x bs
        (nub, "bp", "ap", 1, 0),          # +conj(nu) bs x s*as
        (nu, "ap", "bp", 0, 1),           # +nu s*as x s*b
        (-nu, "b", "a", -1, 0),           # -nu s*b x a
    ]


def shifted_sequences(alpha, beta):
    """Name -> array over ``k = 0..N`` with index ``N+1`` compressed to 0."""
    al = np.append(np.asarray(alpha, dtype=float), 0.0)
    be = np.append(np.asarray(beta, dtype=float), 0.0)
    return {"a": al[:-1], "ap": al[1:], "b": be[:-1], "bp": be[1:]}


def superop_from_terms(dim, terms):
    """Assemble the sparse Heisenberg matrix from ``(coef, C, dk, dl)`` terms.

    ``C[k, l]`` is the input-dependent weight of the term for ``e_{k,l}``.
    """
    k, l = np.meshgrid(np.arange(dim), np.arange(dim), indexing="ij")
    rows, cols, vals = [], [], []
    for coef, weight, dk, dl in terms:
        if coef == 0:
            continue
        ok, ol = k + dk, l + dl
        mask = (ok >= 0) & (ok < dim) & (ol >= 0) & (ol < dim) & (weight != 0)
        rows.append(flat_index(ok[mask], ol[mask], dim))
        cols.append(flat_index(k[mask], l[mask], dim))
        vals.append(coef * weight[mask])
    if rows:
        rows, cols, vals = (np.concatenate(x) for x in (rows, cols, vals))
    h = sp.coo_matrix((np.asarray(vals, dtype=complex), (rows, cols)),
                      shape=(dim * dim, dim * dim))
    return h.tocsr()


def build_maser_channel(params, dim):
    """Channel ``T_psi`` of a generalised one-atom maser on ``[0, dim-1]``."""
    if dim < 3:
        raise ValueError("dim must be >= 3")
    alpha, beta = params.sequences(dim - 1)
    seqs = shifted_sequences(alpha, beta)
    terms = [(c, np.outer(seqs[left], seqs[right]), dk, dl)
             for c, left, right, dk, dl in maser_terms(params.lambda_excitation, params.nu)]
    h = superop_from_terms(dim, terms)
    return channel_from_heisenberg(h, dim, label=f"maser:{params.kind}")


def heisenberg_apply_window(channel, X, M):
    """``p_[0,M] T(X) p_[0,M]`` for ``X`` given on ``[0, M+1]``.

    Nearest-neighbour locality makes the result independent of anything
    beyond ``M + 1``, so it is exact relative to the infinite model.
    """
    X = np.asarray(X)
    if M + 1 >= channel.dim:
        raise ValueError(f"window [0, {M + 1}] exceeds truncation [0, {channel.dim - 1}]")
    if X.shape != (M + 2, M + 2):
        raise ValueError(f"X must be {(M + 2, M + 2)}, got {X.shape}")
    full = np.zeros((channel.dim, channel.dim), dtype=complex)
    full[:M + 2, :M + 2] = X
    return channel.apply(full)[:M + 1, :M + 1]


# ---------------------------------------------------------------------------
# transition rates
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TransitionRates:
    """Stay, death, birth and coherence rates for ``n = 0..cutoff``.

    ``mu[0]`` is 0 by convention.  ``analytic_kappa`` carries the exact
    decay rate of ``pi_n`` when the producer knows it.
    """

    sigma: np.ndarray
    mu: np.ndarray
    lam: np.ndarray
    eta: np.ndarray
    analytic_kappa: Optional[float] = None
    source: str = ""

    def __post_init__(self):
        arrs = [np.asarray(x) for x in (self.sigma, self.mu, self.lam, self.eta)]
        if len({a.shape for a in arrs}) != 1 or arrs[0].ndim != 1:
            raise ValueError("rate arrays must be one-dimensional with equal length")
        object.__setattr__(self, "sigma", arrs[0].astype(float))
        object.__setattr__(self, "mu", arrs[1].astype(float))
        object.__setattr__(self, "lam", arrs[2].astype(float))
        object.__setattr__(self, "eta", arrs[3].astype(complex))

    @property
    def cutoff(self):
        return len(self.sigma) - 1

    def sum_rule_residual(self):
        return float(np.abs(self.sigma + self.lam + self.mu - 1.0).max())

    @classmethod
    def from_birth_death(cls, lam, mu, eta=None, cutoff=None, analytic_kappa=None):
        """Rates from constant or array-valued birth/death sequences.

        ``mu`` is indexed from ``n = 0`` and its first entry is ignored.
        """
        if cutoff is None:
            cutoff = len(np.atleast_1d(lam)) - 1
        lam_a = np.broadcast_to(np.asarray(lam, dtype=float), (cutoff + 1,)).copy()
        mu_a = np.broadcast_to(np.asarray(mu, dtype=float), (cutoff + 1,)).copy()
        mu_a[0] = 0.0
        eta_a = np.zeros(cutoff + 1, dtype=complex) if eta is None else \
            np.broadcast_to(np.asarray(eta, dtype=complex), (cutoff + 1,)).copy()
        return cls(1.0 - lam_a - mu_a, mu_a, lam_a, eta_a, analytic_kappa, "birth-death")


def maser_kappa(lam):
    """``ln((1 - lambda)/lambda)``: exact for every maser with ``beta_n != 0``."""
    if lam == 0.0:
        return np.inf
    if lam == 1.0:
        return -np.inf
    return float(np.log((1.0 - lam) / lam))


def extract_transition_rates(channel):
    """Read ``sigma, mu, lambda, eta`` off the matrix units, ``cutoff = dim - 2``."""
    dim = channel.dim
    if dim < 3:
        raise ValueError("dim must be >= 3")
    h = channel.heisenberg_matrix
    n = np.arange(dim - 1)

    def entry(out_k, out_l, in_k, in_l):
        return np.asarray(h[flat_index(out_k, out_l, dim), flat_index(in_k, in_l, dim)]).ravel()

    sigma = entry(n, n, n, n).real
    lam = entry(n, n, n + 1, n + 1).real
    mu = np.zeros(dim - 1)
    mu[1:] = entry(n[1:], n[1:], n[1:] - 1, n[1:] - 1).real
    eta = entry(n, n + 1, n, n)
    return TransitionRates(sigma, mu, lam, eta, source=channel.label)


def closed_form_rates(params, cutoff):
    """Analytic maser rates ``lambda beta_{n+1}^2, (1-lambda) beta_n^2, nu alpha_{n+1} beta_{n+1}``."""
    alpha, beta = params.sequences(cutoff + 1)
    lam = params.lambda_excitation
    birth = lam * beta[1:] ** 2
    death = (1.0 - lam) * beta[:-1] ** 2
    eta = params.nu * alpha[1:] * beta[1:]
    sigma = 1.0 - birth - death
    kappa = maser_kappa(lam) if np.all(beta[1:] != 0) else None
    return TransitionRates(sigma, death, birth, eta, kappa, source=f"closed-form:{params.kind}")


def classical_channel(rates, dim):
    """Diagonal birth-death channel with Kraus operators ``sqrt(rate) e_{m,n}``.

    Coherences are killed, so ``eta`` must vanish.
    """
    if np.any(np.abs(rates.eta) > 0):
        raise ValueError("classical channel requires eta == 0")
    if rates.cutoff < dim - 1:
        raise ValueError(f"rates up to {rates.cutoff} cannot fill dim {dim}")
    n = np.arange(dim)
    lam = np.clip(rates.lam[:dim], 0.0, None)
    mu = np.clip(rates.mu[:dim], 0.0, None)
    sig = np.clip(rates.sigma[:dim], 0.0, None)
    # Heisenberg action: T(e_{m,m}) = sig_m e_mm + lam_{m-1} e_{m-1,m-1} + mu_{m+1} e_{m+1,m+1}
    rows = [flat_index(n, n, dim), flat_index(n[1:] - 1, n[1:] - 1, dim),
            flat_index(n[:-1] + 1, n[:-1] + 1, dim)]
    cols = [flat_index(n, n, dim), flat_index(n[1:], n[1:], dim),
            flat_index(n[:-1], n[:-1], dim)]
    vals = [sig, lam[:-1], mu[1:]]
    h = sp.coo_matrix((np.concatenate(vals).astype(complex),
                       (np.concatenate(rows), np.concatenate(cols))),
                      shape=(dim * dim, dim * dim))
    return channel_from_heisenberg(h, dim, label="classical")


# ---------------------------------------------------------------------------
# structural verification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QbdcStructureReport:
    max_forbidden_rate: float
    unitality_residual: float
    sum_rule_residual: float
    eta_consistency_residual: float
    cp_min_eigenvalue: float
    sandwich_residual: float
    boundary_cp_min_eigenvalue: float
    leak_estimate: float
    windows_checked: int

    def ok(self, tol=1e-10):
        return (max(self.max_forbidden_rate, self.unitality_residual, self.sum_rule_residual,
                    self.eta_consistency_residual, self.sandwich_residual) < tol
                and self.cp_min_eigenvalue >= -tol)


def _sandwich_windows(top, budget):
    """All interior windows ``[n, m]`` with ``m <= top``, or a stratified subset."""
    windows = [(n, m) for n in range(top + 1) for m in range(n, top + 1)]
    if budget is None:
        budget = len(windows) if top + 2 <= 32 else 64
    if budget >= len(windows):
        return windows
    picks = np.linspace(0, len(windows) - 1, budget).round().astype(int)
    return [windows[i] for i in np.unique(picks)]


def choi_min_eigenvalue(channel, inputs):
    """Smallest eigenvalue of the Choi matrix restricted to input indices ``inputs``.

    ``J[(i,k),(j,l)] = T(e_{i,j})_{k,l}``; rows outside the support of ``J``
    are identically zero and only add zero eigenvalues, so they are dropped.
    """
    dim = channel.dim
    h = channel.heisenberg_matrix.tocoo()
    out_k, out_l = h.row % dim, h.row // dim
    in_i, in_j = h.col % dim, h.col // dim
    allowed = np.zeros(dim, dtype=bool)
    allowed[list(inputs)] = True
    keep = allowed[in_i] & allowed[in_j]
    r = in_i[keep] * dim + out_k[keep]
    c = in_j[keep] * dim + out_l[keep]
    support = np.union1d(r, c)
    # zero rows contribute zero eigenvalues
    lookup = {v: idx for idx, v in enumerate(support)}
    J = np.zeros((support.size, support.size), dtype=complex)
    np.add.at(J, (np.array([lookup[v] for v in r], dtype=int),
                  np.array([lookup[v] for v in c], dtype=int)), h.data[keep])
    J = 0.5 * (J + J.conj().T)
    ev = np.linalg.eigvalsh(J).min() if support.size else 0.0
    n_total = len(inputs) * dim
    if support.size < n_total:
        ev = min(ev, 0.0)
    return float(ev)


def verify_qbdc_structure(channel, sample_budget=None):
    """Check the nearest-neighbour, unitality and positivity axioms on the interior."""
    dim = channel.dim
    if dim < 4:
        raise ValueError("dim must be >= 4")
    top = dim - 2  # last interior index

    h = channel.heisenberg_matrix.tocoo()
    out_k, out_l = h.row % dim, h.row // dim
    in_i, in_j = h.col % dim, h.col // dim
    far = (np.abs(out_k - in_i) > 1) | (np.abs(out_l - in_j) > 1)
    max_forbidden = float(np.abs(h.data[far]).max()) if far.any() else 0.0

    one = channel.apply(np.eye(dim))
    unitality = float(np.abs(one[:top + 1, :top + 1] - np.eye(top + 1)).max())

    rates = extract_transition_rates(channel)
    sum_rule = rates.sum_rule_residual()
    n = np.arange(top + 1)
    back = np.asarray(channel.heisenberg_matrix[flat_index(n, n + 1, dim),
                                                 flat_index(n + 1, n + 1, dim)]).ravel()
    eta_res = float(np.abs(rates.eta + back).max())

    sandwich = 0.0
    windows = _sandwich_windows(top, sample_budget)
    for lo, hi in windows:
        tp = channel.apply(interval_projection(lo, hi, dim))
        tp = 0.5 * (tp + tp.conj().T)
        lower = tp - interval_projection(lo + 1, hi - 1, dim)
        upper = interval_projection(lo - 1, hi + 1, dim) - tp
        worst = min(np.linalg.eigvalsh(lower).min(), np.linalg.eigvalsh(upper).min())
        sandwich = max(sandwich, -float(worst))

    cp_interior = choi_min_eigenvalue(channel, range(top + 1))
    cp_full = choi_min_eigenvalue(channel, range(dim))
    return QbdcStructureReport(
        max_forbidden_rate=max_forbidden,
        unitality_residual=unitality,
        sum_rule_residual=sum_rule,
        eta_consistency_residual=eta_res,
        cp_min_eigenvalue=cp_interior,
        sandwich_residual=sandwich,
        boundary_cp_min_eigenvalue=cp_full,
        leak_estimate=channel.leak_estimate,
        windows_checked=len(windows),
    )
