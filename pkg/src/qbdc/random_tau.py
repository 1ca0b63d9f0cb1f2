"""Jaynes-Cummings maser with a random interaction time.

The averaged channel ``int T_{psi,tau} d rho(tau)`` is realised by a
composite Gauss-Legendre rule on ``[0, support_cut]``.  Every maser term is
bilinear in the coupling sequences, so averaging replaces the outer product
``left(k) right(l)`` by the moment matrix ``sum_i p_i left_i(k) right_i(l)``;
no per-node channels are built.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats
from scipy.integrate import trapezoid
from scipy.interpolate import PchipInterpolator

from .channel import (
    TransitionRates, _jc_alpha_beta, channel_from_heisenberg, maser_kappa, maser_terms,
    nu_of, shifted_sequences, superop_from_terms,
)
from .errors import InvalidParamsError, QuadratureBudgetError

TAIL_MASS = 1e-12
RATE_BUDGET = 1e-8
ZERO_BETA = 1e-14


# ---------------------------------------------------------------------------
# densities
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TauDensity:
    """Probability density of the interaction time on ``[0, inf)``.

    Attributes
    ----------
    kind : str
        ``"exponential"``, ``"gamma"``, ``"truncated-gaussian"`` or ``"tabulated"``.
    params : dict
        Kind-specific parameters (``rate``; ``shape, rate``; ``mean, sd``;
        ``knots, values``).
    D0 : float
        Density at ``tau = 0``.
    dprime_l1 : float
        ``L1`` norm of the derivative (``inf`` when it is not integrable).
    support_cut : float
        Integration limit leaving tail mass below ``1e-12``.
    smooth : bool
        Whether the density is continuously differentiable on ``[0, inf)``.
    """

    kind: str
    params: dict
    D0: float
    dprime_l1: float
    support_cut: float
    smooth: bool
    breakpoints: tuple = ()
    _pdf: object = field(default=None, repr=False)

    def pdf(self, tau):
        tau = np.asarray(tau, dtype=float)
        return np.where(tau >= 0, self._pdf(np.clip(tau, 0, None)), 0.0)

    def to_dict(self):
        d = {"kind": self.kind}
        d.update({k: (list(v) if isinstance(v, (tuple, np.ndarray)) else v)
                  for k, v in self.params.items()})
        return d

    @classmethod
    def exponential(cls, rate=1.0):
        rate = float(rate)
        if rate <= 0:
            raise InvalidParamsError("exponential rate must be positive")
        cut = np.log(1.0 / TAIL_MASS) / rate
        return cls("exponential", {"rate": rate}, rate, rate, cut, True,
                   _pdf=lambda t: rate * np.exp(-rate * t))

    @classmethod
    def gamma(cls, shape, rate=1.0):
        k, r = float(shape), float(rate)
        if k <= 0 or r <= 0:
            raise InvalidParamsError("gamma shape and rate must be positive")
        dist = stats.gamma(k, scale=1.0 / r)
        if k < 1:
            d0, l1 = np.inf, np.inf
        elif k == 1:
            d0, l1 = r, r
        else:
            d0, l1 = 0.0, 2.0 * float(dist.pdf((k - 1.0) / r))
        # C^1 at 0 needs shape 1 or shape >= 2 (tau^(k-2) blows up for 1 < k < 2)
        smooth = k == 1 or k >= 2
        return cls("gamma", {"shape": k, "rate": r}, d0, l1, float(dist.isf(TAIL_MASS)),
                   smooth, _pdf=dist.pdf)

    @classmethod
    def truncated_gaussian(cls, mean, sd):
        m, s = float(mean), float(sd)
        if s <= 0:
            raise InvalidParamsError("sd must be positive")
        dist = stats.truncnorm(-m / s, np.inf, loc=m, scale=s)
        d0 = float(dist.pdf(0.0))
        l1 = 2.0 * float(dist.pdf(m)) - d0 if m > 0 else d0
        return cls("truncated-gaussian", {"mean": m, "sd": s}, d0, l1,
                   float(dist.isf(TAIL_MASS)), True, _pdf=dist.pdf)

    @classmethod
    def tabulated(cls, knots, values):
        """Shape-preserving cubic interpolant, normalised, zero outside the knots.

        A nonzero value at a finite end knot (other than a start at 0) is a
        jump, so the density is then flagged as not ``C^1``.
        """
        x = np.asarray(knots, dtype=float)
        y = np.asarray(values, dtype=float)
        if x.ndim != 1 or x.shape != y.shape or x.size < 2:
            raise InvalidParamsError("knots and values need equal length >= 2")
        if np.any(np.diff(x) <= 0) or x[0] < 0:
            raise InvalidParamsError("knots must be increasing and nonnegative")
        if np.any(y < 0):
            raise InvalidParamsError("density values must be nonnegative")
        interp = PchipInterpolator(x, y, extrapolate=False)
        total = float(interp.integrate(x[0], x[-1]))
        if total <= 0:
            raise InvalidParamsError("tabulated density has zero mass")
        interp = PchipInterpolator(x, y / total, extrapolate=False)
        deriv = interp.derivative()
        grid = np.linspace(x[0], x[-1], 20001)
        l1 = float(trapezoid(np.abs(deriv(grid)), grid))
        jumps = (x[0] > 0 and y[0] > 0) or y[-1] > 0
        d0 = float(y[0] / total) if x[0] == 0 else 0.0

        def pdf(t):
            v = interp(t)
            return np.nan_to_num(v, nan=0.0)

        return cls("tabulated", {"knots": tuple(x), "values": tuple(y)}, d0,
                   np.inf if jumps else l1, float(x[-1]), not jumps,
                   breakpoints=tuple(x), _pdf=pdf)

    @classmethod
    def from_dict(cls, d):
        kind = d.get("kind")
        try:
            if kind == "exponential":
                return cls.exponential(d.get("rate", 1.0))
            if kind == "gamma":
                return cls.gamma(d["shape"], d.get("rate", 1.0))
            if kind == "truncated-gaussian":
                return cls.truncated_gaussian(d["mean"], d["sd"])
            if kind == "tabulated":
                return cls.tabulated(d["knots"], d["values"])
        except KeyError as e:
            raise InvalidParamsError(f"density field {e.args[0]!r} missing") from None
        raise InvalidParamsError(f"unknown density kind {kind!r}")


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

def jc_frequency(g, cutoff):
    """Highest oscillation frequency ``2 g sqrt(cutoff + 1)`` among the rate integrands."""
    return 2.0 * g * np.sqrt(cutoff + 1.0)


def _composite_gl(breaks, order):
    x, w = np.polynomial.legendre.leggauss(order)
    a, b = breaks[:-1, None], breaks[1:, None]
    nodes = 0.5 * (b - a) * x[None, :] + 0.5 * (a + b)
    weights = 0.5 * (b - a) * w[None, :]
    return nodes.ravel(), weights.ravel()


def _breaks(cut, panels, extra=()):
    b = np.linspace(0.0, cut, panels + 1)
    if extra:
        b = np.union1d(b, [e for e in extra if 0.0 < e < cut])
    return b


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Nodes and probability weights representing the interaction-time law.

    ``weights`` are the raw Gauss-Legendre weights, ``probabilities`` the
    normalised products ``w_i D(tau_i) / mass``.  ``est_error`` bounds the
    error of the most oscillatory integrand, estimated by panel doubling.
    """

    nodes: np.ndarray
    weights: np.ndarray
    probabilities: np.ndarray
    order: int
    panels: int
    est_error: float
    frequency: float
    mass: float = 1.0

    def report(self):
        return {"order": self.order, "panels": self.panels, "nodes": int(self.nodes.size),
                "est_error": self.est_error, "frequency": self.frequency, "mass": self.mass}

    @classmethod
    def point(cls, tau0):
        """Degenerate one-node rule (a fixed interaction time)."""
        one = np.ones(1)
        return cls(np.array([float(tau0)]), one, one, 1, 1, 0.0, np.inf)

    @classmethod
    def build(cls, density, g, cutoff, order=16, panels=None, tol=1e-10, max_panels=1 << 14):
        """Composite Gauss-Legendre rule for ``density`` at frequency ``2 g sqrt(cutoff+1)``.

        With ``panels=None`` the panel count starts at roughly one panel per
        half period and doubles until the doubling difference is below
        ``tol``.  With explicit ``panels`` the rule is used as given and the
        doubling difference is only reported.
        """
        omega = jc_frequency(g, cutoff)
        cut = density.support_cut
        adaptive = panels is None
        if adaptive:
            panels = max(4, int(np.ceil(omega * cut / np.pi)))
        while True:
            rule = cls._make(density, cut, panels, order, omega)
            finer = cls._make(density, cut, 2 * panels, order, omega)
            err = max(abs(_probe(rule, omega, k) - _probe(finer, omega, k)) for k in range(3))
            if not adaptive or err < tol or 2 * panels > max_panels:
                return cls(rule.nodes, rule.weights, rule.probabilities, order, panels,
                           float(err), float(omega), rule.mass)
            panels *= 2

    @classmethod
    def _make(cls, density, cut, panels, order, omega):
        nodes, weights = _composite_gl(_breaks(cut, panels, density.breakpoints), order)
        dens = density.pdf(nodes)
        mass = float(np.sum(weights * dens))
        return cls(nodes, weights, weights * dens / mass, order, panels, np.nan, omega, mass)


def _probe(rule, omega, k):
    # unnormalised integrals so that density-resolution errors count too
    raw = rule.probabilities * rule.mass
    if k == 0:
        return float(np.sum(raw))
    f = np.sin if k == 1 else np.cos
    return float(np.sum(raw * f(omega * rule.nodes)))


# ---------------------------------------------------------------------------
# averaged model
# ---------------------------------------------------------------------------

def jc_sequences(g, tau, cutoff):
    """``alpha_n = cos(g tau sqrt n)``, ``beta_n = -sin(g tau sqrt n)``, ``n = 0..cutoff``."""
    if g <= 0 or tau <= 0:
        raise InvalidParamsError("g and tau must be positive")
    return _jc_alpha_beta(g * tau, cutoff)


def _check_budget(quad, g, cutoff):
    if quad.est_error > RATE_BUDGET:
        raise QuadratureBudgetError(
            f"quadrature error {quad.est_error:.3e} exceeds {RATE_BUDGET:g}; refine quadrature",
            est_error=quad.est_error)
    if quad.frequency < jc_frequency(g, cutoff) * (1 - 1e-12):
        raise QuadratureBudgetError(
            f"rule certified up to frequency {quad.frequency:.6g}, need "
            f"{jc_frequency(g, cutoff):.6g}; refine quadrature", est_error=np.inf)


def _node_sequences(g, quad, n_max):
    gt = g * quad.nodes[:, None] * np.sqrt(np.arange(n_max + 1))[None, :]
    return np.cos(gt), -np.sin(gt)


def averaged_rates(g, lam, zeta, density, quad, cutoff):
    """Transition rates of the averaged channel for ``n = 0..cutoff``.

    Raises
    ------
    QuadratureBudgetError
        If ``quad`` is not certified to ``1e-8`` at the cutoff frequency.
    """
    del density  # the rule already carries the density through its probabilities
    _check_budget(quad, g, cutoff)
    nu = nu_of(lam, zeta)
    al, be = _node_sequences(g, quad, cutoff + 1)
    p = quad.probabilities
    b2 = p @ be ** 2
    ab = p @ (al * be)
    lam_n = lam * b2[1:]
    mu = (1.0 - lam) * b2[:-1]
    eta = nu * ab[1:]
    kappa = maser_kappa(lam) if np.all(b2[1:] > 0) else None
    return TransitionRates(1.0 - lam_n - mu, mu, lam_n, eta.astype(complex), kappa,
                           "random-jc")


def build_averaged_channel(g, lam, zeta, density, quad, dim):
    """Averaged JC maser channel on ``[0, dim-1]``."""
    del density
    if dim < 3:
        raise ValueError("dim must be >= 3")
    _check_budget(quad, g, dim - 2)
    al, be = _node_sequences(g, quad, dim - 1)
    p = quad.probabilities
    per_node = [shifted_sequences(a, b) for a, b in zip(al, be)]
    names = ("a", "ap", "b", "bp")
    stacks = {k: np.array([s[k] for s in per_node]) for k in names}
    terms = []
    for coef, left, right, dk, dl in maser_terms(lam, nu_of(lam, zeta)):
        moment = stacks[left].T @ (p[:, None] * stacks[right])
        terms.append((coef, moment, dk, dl))
    h = superop_from_terms(dim, terms)
    return channel_from_heisenberg(h, dim, label="maser:jc-random")


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def eta_decay_check(g, zeta, lam, density, n_range, quad=None):
    """Compare ``|2 eta_n / nu|`` with ``(D0 + ||D'||_1) / (2 g sqrt(n+1))``.

    Returns a dict with per-``n`` values, bounds and margins, the overall
    verdict and a log-log decay exponent.  Densities that are not ``C^1``
    are reported as not applicable.
    """
    n = np.asarray(list(n_range), dtype=int)
    if not density.smooth or not np.isfinite(density.D0) or not np.isfinite(density.dprime_l1):
        return {"applicable": False, "reason": "density is not C^1 with integrable derivative",
                "n": n.tolist()}
    if quad is None:
        quad = QuadratureRule.build(density, g, int(n.max()))
    nu = nu_of(lam, zeta)
    if abs(nu) == 0:
        zeros = np.zeros(n.size)
        bound = (density.D0 + density.dprime_l1) / (2.0 * g * np.sqrt(n + 1.0))
        return {"applicable": True, "n": n.tolist(), "value": zeros.tolist(),
                "bound": bound.tolist(), "margin": bound.tolist(), "ok": True,
                "decay_exponent": None, "note": "nu = 0, eta vanishes identically"}
    rates = averaged_rates(g, lam, zeta, density, quad, int(n.max()))
    value = np.abs(2.0 * rates.eta[n] / nu)
    bound = (density.D0 + density.dprime_l1) / (2.0 * g * np.sqrt(n + 1.0))
    margin = bound - value
    pos = value > 0
    expo = None
    if pos.sum() >= 2:
        expo = float(-np.polyfit(np.log(n[pos] + 1.0), np.log(value[pos]), 1)[0])
    return {"applicable": True, "n": n.tolist(), "value": value.tolist(),
            "bound": bound.tolist(), "margin": margin.tolist(),
            "ok": bool(np.all(margin >= -quad.est_error)), "decay_exponent": expo}


def subharmonic_projection_check(channel, p, tol=1e-12):
    """Whether the coordinate projection ``p`` satisfies ``p T(1-p) p = 0``.

    ``p`` is a diagonal projection matrix or a 0/1 (boolean) diagonal.
    """
    p = np.asarray(p)
    d = np.real(np.diag(p)) if p.ndim == 2 else p.astype(float)
    if d.shape != (channel.dim,) or not np.all((d == 0) | (d == 1)):
        raise ValueError("p must be a coordinate projection on the channel window")
    perp = np.diag(1.0 - d).astype(complex)
    out = channel.apply(perp)
    block = out[np.ix_(d == 1, d == 1)]
    return bool(block.size == 0 or np.abs(block).max() < tol)


def interval_subharmonic_scan(channel, tol=1e-12):
    """Indices ``m`` for which ``p_[0,m]`` (``m < top``) is subharmonic.

    An empty list means no nontrivial coordinate interval is invariant,
    the finite-window signature of irreducibility.
    """
    hits = []
    for m in range(channel.dim - 1):
        d = np.zeros(channel.dim)
        d[:m + 1] = 1.0
        if subharmonic_projection_check(channel, d, tol):
            hits.append(m)
    return hits


def beta_near_zero_scan(g, tau, n_max):
    """``min_{1<=n<=n_max} |sin(g tau sqrt n)|`` and the first index attaining it.

    Values below ``1e-14`` are treated as exact zeros.
    """
    n = np.arange(1, n_max + 1)
    b = np.abs(np.sin(g * tau * np.sqrt(n)))
    b[b < ZERO_BETA] = 0.0
    i = int(np.argmin(b))
    return float(b[i]), int(n[i])


@dataclass(frozen=True)
class RandomJCModel:
    """Bundle of an averaged JC maser specification."""

    lam: float
    zeta: complex
    g: float
    density: TauDensity
    order: int = 16
    panels: Optional[int] = None

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise InvalidParamsError(f"lambda must lie in [0, 1], got {self.lam}")
        if abs(complex(self.zeta)) > 1.0 + 1e-12:
            raise InvalidParamsError("|zeta| must be <= 1")
        if self.g <= 0:
            raise InvalidParamsError("g must be positive")

    def rule(self, cutoff):
        return QuadratureRule.build(self.density, self.g, cutoff, self.order, self.panels)

    def rates(self, cutoff, quad=None):
        quad = quad or self.rule(cutoff)
        return averaged_rates(self.g, self.lam, self.zeta, self.density, quad, cutoff)

    def channel(self, dim, quad=None):
        quad = quad or self.rule(dim - 2)
        return build_averaged_channel(self.g, self.lam, self.zeta, self.density, quad, dim)
