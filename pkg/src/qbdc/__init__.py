"""Invariant states of quantum birth-and-death channels and maser models."""

from .channel import (
    MaserParams, TransitionRates, TruncatedChannel, build_maser_channel, closed_form_rates,
    extract_transition_rates, heisenberg_apply_window, verify_qbdc_structure,
)
from .criteria import (
    build_drift_certificate, build_lyapunov_certificate, check_existence, check_nonexistence,
    classical_profile, classify_maser_point, classify_rates, estimate_kappa,
    toy_conserved_observable, tridiagonal_psd_sufficient, verify_drift, verify_lyapunov,
)
from .errors import (
    CriterionNotApplicable, InvalidParamsError, NoInvariantState, NonConvergence, QbdcError,
    QuadratureBudgetError, SolverError,
)
from .random_tau import (
    QuadratureRule, TauDensity, averaged_rates, beta_near_zero_scan, build_averaged_channel,
    eta_decay_check, jc_sequences, subharmonic_projection_check,
)
from .solver import (
    DensityMatrix, convergence_trace, falloff_bound_check, falloff_fit, solve_invariant_cesaro,
    solve_invariant_direct, truncation_convergence,
)

__version__ = "0.1.0"
