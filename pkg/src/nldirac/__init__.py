"""Nonlinear Bloch bands and adiabatic phase interferometry around Dirac cones.

A two-band lattice model with a power-law on-site nonlinearity is solved in
momentum space through a scalar reduction in the population imbalance; the
package finds the self-induced Dirac-cone degeneracy, evaluates the Berry
phase, the nonlinearity-induced dynamical phase correction, and their sum for
small loops around the degeneracy, both from closed forms and from split-step
time propagation along the two arms of the loop.
"""

from .model import (
    ModelParams,
    Momentum,
    BlochState,
    XPhi,
    beta,
    gamma,
    hamiltonian,
    state_from_xphi,
    xphi_from_state,
)
from .band import (
    EigenSolution,
    ConeSolution,
    PerturbationResult,
    SpectrumRow,
    RootSearchError,
    residual_f,
    energy_from_x,
    solve_all_x,
    solve_x0,
    perturbative_expansion,
    spectrum_slice,
    eigen_residual,
)
from .phases import (
    PhaseBreakdown,
    reduce_mod_2pi,
    angle_distance,
    big_delta,
    big_delta_prime,
    berry_phase_loop,
    berry_phase_leading,
    dyn_phase_diff_leading,
    dyn_phase_diff_regime,
    ab_phase_leading,
)
from .dynamics import (
    PathSpec,
    EvolutionResult,
    DeviationCheck,
    AdiabaticityError,
    ContinuationError,
    path_momentum,
    split_step,
    default_branch_seed,
    continue_branch,
    evolve,
    ab_phase_numeric,
    ab_phase_adiabatic_limit,
    deviation_check,
    dyn_phase_rate_analytic,
)

__version__ = "0.1.0"
