"""Nonlinear Bloch eigenproblem via its scalar reduction in the imbalance x.

For a candidate eigenstate parameterized by (x, phi), the two component
equations collapse to one algebraic condition on x,

    (1 - x^2) / x^2 * { beta + (g/2) [((1+x)/2)^p - ((1-x)/2)^p] }^2 = |gamma|^2,

and the eigenenergy follows from

    E = ( beta + g [((1+x)/2)^(p+1) - ((1-x)/2)^(p+1)] ) / x.

Writing ``brace(x) = beta + (g/2)[((1+x)/2)^p - ((1-x)/2)^p]``, one finds for
any interior root x of the scalar equation

    E - beta - g ((1+x)/2)^p = (1-x) brace(x) / x,
    E + beta - g ((1-x)/2)^p = (1+x) brace(x) / x,

so both component equations hold with a common sign and the gauge angle is

    phi = -arg(gamma)           if brace(x)/x > 0,
    phi = -arg(gamma) + pi      if brace(x)/x < 0.

Interior roots are therefore never sign-spurious; every accepted solution is
still validated against the unreduced eigen-residual ||H(psi)psi - E psi||.

Degenerate columns need care and are handled explicitly:

* gamma = 0 (e.g. k = 0): the poles x = +/-1 are always solutions, and the
  monotone equation brace(x) = 0 contributes the doubly degenerate vertex
  solution whenever |beta| <= |g|/2.
* beta = 0 with gamma != 0: x = 0 solves the unreduced problem with
  E = g 2^(-p) +/- |gamma| even though the scalar reduction degenerates there.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence, TextIO

import numpy as np
from scipy.optimize import brentq

from .model import (
    BlochState,
    ModelParams,
    Momentum,
    XPhi,
    beta,
    gamma,
    hamiltonian,
    state_from_xphi,
)

__all__ = [
    "EigenSolution",
    "ConeSolution",
    "PerturbationResult",
    "SpectrumRow",
    "RootSearchError",
    "residual_f",
    "energy_from_x",
    "solve_all_x",
    "solve_x0",
    "perturbative_expansion",
    "spectrum_slice",
    "eigen_residual",
    "write_spectrum_csv",
]

SCAN_INTERVALS = 2000          # default bracketing resolution on [-1, 1]
ROOT_XTOL = 1e-13              # absolute refinement tolerance for roots in x
EIG_RESIDUAL_TOL = 1e-10       # acceptance threshold for ||H psi - E psi||
_SMALL_X = 1e-6                # switch to series forms of the 0/0 brackets
_PERT_WINDOW = 0.1 * math.pi   # validity window of the small-k expansion


class RootSearchError(RuntimeError):
    """Raised when the bracketing scan plus endpoint checks find no solution."""


@dataclass(frozen=True)
class EigenSolution:
    """One accepted root: imbalance, gauge angle, energy, eigen-residual."""

    x: float
    phi: float
    energy: float
    residual: float

    def state(self) -> BlochState:
        return state_from_xphi(XPhi(self.x, self.phi))


@dataclass(frozen=True)
class ConeSolution:
    """Degeneracy-point solution at k = 0.

    ``exists`` is True iff |g| >= 2B.  When the cone is absent the boundary
    convention x0 = -1 for g in (0, 2B) and x0 = +1 for g in (-2B, 0) is
    stored (g = 0 uses +1 and sets ``linear_limit``), which keeps phase sweeps
    continuous through the critical coupling.
    """

    exists: bool
    x0: float
    E0: float
    linear_limit: bool = False


@dataclass(frozen=True)
class PerturbationResult:
    """First-order expansion around the cone vertex at small k.

    ``chi`` is the positive-branch first-order shift of x; the two perturbed
    energies are E0 (1 +/- p chi / x0).
    """

    chi: float
    energy_plus: float
    energy_minus: float


def _half_pow(x: float, expo: float) -> float:
    """((1+x)/2)^expo with the base clamped at 0 against rounding."""
    return max(0.0, 0.5 * (1.0 + x)) ** expo


def _brace(x: float, b: float, g: float, p: float) -> float:
    """beta + (g/2)[((1+x)/2)^p - ((1-x)/2)^p]."""
    return b + 0.5 * g * (_half_pow(x, p) - _half_pow(-x, p))


def _bracket_over_x_series(x: float, q: float) -> float:
    """[((1+x)/2)^q - ((1-x)/2)^q] / x as a 3-term series around x = 0."""
    c1 = q
    c3 = q * (q - 1.0) * (q - 2.0) / 6.0
    c5 = q * (q - 1.0) * (q - 2.0) * (q - 3.0) * (q - 4.0) / 120.0
    return 2.0 ** (1.0 - q) * (c1 + c3 * x * x + c5 * x**4)


def _brace_over_x(x: float, b: float, g: float, p: float) -> float:
    """brace(x)/x, with the removable part evaluated by series at small x.

    The beta/x term keeps its genuine pole; at x = 0 exactly it contributes
    signed infinity unless beta = 0.
    """
    if abs(x) >= _SMALL_X:
        return _brace(x, b, g, p) / x
    nonlinear = 0.5 * g * _bracket_over_x_series(x, p)
    if x == 0.0:
        if b == 0.0:
            return nonlinear
        return math.copysign(math.inf, b)
    return b / x + nonlinear


def _beta_eff(k: Momentum, params: ModelParams) -> float:
    """Mass term with sub-rounding values (e.g. cos(pi/2)) snapped to zero."""
    b = beta(k, params)
    return 0.0 if abs(b) <= 1e-12 * params.B else b


def residual_f(x: float, k: Momentum, params: ModelParams) -> float:
    """Scalar eigen-equation residual: (1-x^2) (brace(x)/x)^2 - |gamma|^2.

    Vanishes exactly on candidate solutions.  The removable 0/0 at small x is
    handled by series; the poles at x = 0 with beta != 0 evaluate to +inf.
    """
    b = _beta_eff(k, params)
    g2 = abs(gamma(k, params)) ** 2
    q = _brace_over_x(x, b, params.g, params.p)
    if math.isinf(q):
        return math.inf
    return (1.0 - x * x) * q * q - g2


def _poly_f(x: float, b: float, g2: float, g: float, p: float) -> float:
    """Pole-free form (1-x^2) brace(x)^2 - x^2 |gamma|^2 used for bracketing."""
    br = _brace(x, b, g, p)
    return (1.0 - x * x) * br * br - x * x * g2


def _poly_f_grid(xs: np.ndarray, b: float, g2: float, g: float, p: float) -> np.ndarray:
    up = np.clip(0.5 * (1.0 + xs), 0.0, None) ** p
    vp = np.clip(0.5 * (1.0 - xs), 0.0, None) ** p
    br = b + 0.5 * g * (up - vp)
    return (1.0 - xs * xs) * br * br - xs * xs * g2


def energy_from_x(x: float, k: Momentum, params: ModelParams) -> float:
    """Eigenenergy of the (x, phi) candidate at momentum k.

    For |x| < 1e-6 the nonlinear bracket is evaluated by its odd series
    (leading term (p+1) x / 2^p) to avoid the 0/0; the beta/x part is kept
    exact since its divergence at x -> 0, beta != 0 is genuine.
    """
    b = _beta_eff(k, params)
    g = params.g
    q = params.p + 1.0
    if abs(x) >= _SMALL_X:
        return (b + g * (_half_pow(x, q) - _half_pow(-x, q))) / x
    nonlinear = g * _bracket_over_x_series(x, q)
    if x == 0.0:
        if b == 0.0:
            return nonlinear
        return math.copysign(math.inf, b)
    return b / x + nonlinear


def eigen_residual(k: Momentum, state: BlochState, energy: float, params: ModelParams) -> float:
    """Two-norm of H(psi) psi - E psi for the given candidate pair."""
    h = hamiltonian(k, state, params)
    psi = state.as_array()
    return float(np.linalg.norm(h @ psi - energy * psi))


def _gauge_phi(x: float, b: float, gam: complex, g: float, p: float) -> float:
    """Gauge angle of the root: -arg(gamma), shifted by pi on the brace/x < 0 sheet."""
    phi = -cmath.phase(gam)
    if _brace(x, b, g, p) / x < 0.0:
        phi += math.pi
    return phi


def _try_solution(
    x: float,
    phi: float,
    energy: float,
    k: Momentum,
    params: ModelParams,
    residual_tol: float,
) -> EigenSolution | None:
    if not math.isfinite(energy):
        return None
    state = state_from_xphi(XPhi(x, phi))
    res = eigen_residual(k, state, energy, params)
    if res > residual_tol:
        return None
    return EigenSolution(x=x, phi=phi, energy=energy, residual=res)


def solve_all_x(
    k: Momentum,
    params: ModelParams,
    intervals: int = SCAN_INTERVALS,
    residual_tol: float = EIG_RESIDUAL_TOL,
) -> list[EigenSolution]:
    """All real eigen-solutions at momentum k, sorted by energy.

    Strategy: uniform sign-change scan of the pole-free polynomial form on
    [-1, 1] refined by Brent's method.  The root of the monotone brace
    function is inserted as an extra grid node; the polynomial form is
    strictly negative there, which guarantees that the pair of cone roots is
    bracketed at any nonzero |gamma|, no matter how small.  Degenerate columns
    (gamma = 0, or beta = 0 crossings at x = 0) are handled explicitly from
    the unreduced component equations.
    """
    b = beta(k, params)
    gam = gamma(k, params)
    g2 = abs(gam) ** 2
    g, p = params.g, params.p
    scale = max(params.B, abs(params.J1), abs(params.J2))

    sols: list[EigenSolution] = []

    brace_lo = _brace(-1.0, b, g, p)
    brace_hi = _brace(1.0, b, g, p)
    x_c: float | None = None
    if g != 0.0 and brace_lo * brace_hi <= 0.0:
        if brace_lo == 0.0:
            x_c = -1.0
        elif brace_hi == 0.0:
            x_c = 1.0
        else:
            x_c = brentq(_brace, -1.0, 1.0, args=(b, g, p), xtol=1e-15, rtol=8.9e-16)

    if abs(gam) <= 1e-11 * scale:
        # Decoupled column: the poles are exact solutions ...
        for x_pole, energy in ((1.0, b + g), (-1.0, -b + g)):
            sol = _try_solution(x_pole, 0.0, energy, k, params, residual_tol)
            if sol is not None:
                sols.append(sol)
        # ... plus the doubly degenerate interior solution when brace vanishes.
        if x_c is not None and abs(x_c) < 1.0:
            energy = b + g * _half_pow(x_c, p)
            sol = _try_solution(x_c, 0.0, energy, k, params, residual_tol)
            if sol is not None:
                sols.append(sol)
        if not sols:
            raise RootSearchError(f"no eigen-solutions found at k = {(k.k1, k.k2)}")
        return sorted(sols, key=lambda s: s.energy)

    roots: list[float] = []
    if abs(b) <= 1e-12 * params.B:
        # x = 0 solves the unreduced problem; the scalar reduction is 0/0 there.
        absg = math.sqrt(g2)
        e_base = g * 2.0**-p
        for energy, phi in ((e_base + absg, -cmath.phase(gam)), (e_base - absg, -cmath.phase(gam) + math.pi)):
            state = state_from_xphi(XPhi(0.0, phi))
            res = eigen_residual(k, state, energy, params)
            if res <= residual_tol:
                sols.append(EigenSolution(x=0.0, phi=phi, energy=energy, residual=res))

    grid = np.linspace(-1.0, 1.0, intervals + 1)
    if x_c is not None:
        grid = np.sort(np.append(grid, x_c))
    fv = _poly_f_grid(grid, b, g2, g, p)

    for i in range(len(grid) - 1):
        f0, f1 = fv[i], fv[i + 1]
        if f0 == 0.0:
            roots.append(float(grid[i]))
        elif f0 * f1 < 0.0:
            roots.append(
                brentq(_poly_f, grid[i], grid[i + 1], args=(b, g2, g, p), xtol=ROOT_XTOL, rtol=8.9e-16)
            )
    if fv[-1] == 0.0:
        roots.append(float(grid[-1]))

    roots.sort()
    deduped: list[float] = []
    for r in roots:
        if not deduped or r - deduped[-1] > 1e-10:
            deduped.append(r)

    for x in deduped:
        if abs(x) <= 1e-9 and any(s.x == 0.0 for s in sols):
            continue  # already covered by the beta = 0 special case
        if 1.0 - abs(x) <= 1e-15:
            continue  # poles are genuine only at gamma = 0, handled above
        phi = _gauge_phi(x, b, gam, g, p)
        energy = energy_from_x(x, k, params)
        sol = _try_solution(x, phi, energy, k, params, residual_tol)
        if sol is not None:
            sols.append(sol)

    if not sols:
        raise RootSearchError(
            f"bracketing scan found no sign change and endpoint checks failed at k = {(k.k1, k.k2)}"
        )
    return sorted(sols, key=lambda s: s.energy)


def _cone_equation(x: float, ratio: float, p: float) -> float:
    """((1+x)/2)^p - ((1-x)/2)^p - ratio; strictly increasing in x."""
    return _half_pow(x, p) - _half_pow(-x, p) - ratio


def vertex_energy(x0: float, params: ModelParams) -> float:
    """Degeneracy energy (g/2)[((1+x0)/2)^p + ((1-x0)/2)^p]."""
    p = params.p
    return 0.5 * params.g * (_half_pow(x0, p) + _half_pow(-x0, p))


def solve_x0(params: ModelParams) -> ConeSolution:
    """Imbalance and energy at the k = 0 degeneracy, with existence decision.

    The defining equation ((1+x0)/2)^p - ((1-x0)/2)^p = -2B/g has a monotone
    left-hand side with range [-1, 1], so a solution exists iff |g| >= 2B.
    """
    g = params.g
    if g == 0.0:
        return ConeSolution(exists=False, x0=1.0, E0=0.0, linear_limit=True)
    if abs(g) < 2.0 * params.B:
        x0 = -1.0 if g > 0.0 else 1.0
        return ConeSolution(exists=False, x0=x0, E0=vertex_energy(x0, params))
    ratio = -2.0 * params.B / g
    lo = _cone_equation(-1.0, ratio, params.p)
    hi = _cone_equation(1.0, ratio, params.p)
    if lo == 0.0:
        x0 = -1.0
    elif hi == 0.0:
        x0 = 1.0
    else:
        x0 = brentq(_cone_equation, -1.0, 1.0, args=(ratio, params.p), xtol=1e-15, rtol=8.9e-16)
    return ConeSolution(exists=True, x0=float(x0), E0=vertex_energy(float(x0), params))


def perturbative_expansion(k: Momentum, params: ModelParams, cone: ConeSolution | None = None) -> PerturbationResult:
    """First-order eigenenergies near the cone vertex for small k.

    Requires an existing cone with |x0| < 1 and momentum inside the small-k
    validity window |k1|, |k2| <= 0.1 pi.
    """
    if cone is None:
        cone = solve_x0(params)
    if not cone.exists:
        raise ValueError("no degeneracy point: perturbative expansion undefined")
    x0 = cone.x0
    if 1.0 - abs(x0) <= 1e-12:
        raise ValueError("expansion degenerates at |x0| = 1 (critical coupling)")
    if abs(k.k1) > _PERT_WINDOW or abs(k.k2) > _PERT_WINDOW:
        raise ValueError(f"momentum outside the small-k validity window: {(k.k1, k.k2)}")
    p, g = params.p, params.g
    denom = (1.0 + x0) ** (p - 1.0) + (1.0 - x0) ** (p - 1.0)
    kmag = math.sqrt((params.J1 * k.k1) ** 2 + (params.J2 * k.k2) ** 2)
    chi = (2.0 ** (p + 1.0) / (g * p)) * (x0 / denom) * kmag / math.sqrt(1.0 - x0 * x0)
    return PerturbationResult(
        chi=chi,
        energy_plus=cone.E0 * (1.0 + p * chi / x0),
        energy_minus=cone.E0 * (1.0 - p * chi / x0),
    )


@dataclass(frozen=True)
class SpectrumRow:
    """One (k, branch) record of a spectrum table."""

    k1: float
    k2: float
    branch_id: int
    x: float
    energy: float
    e_pert_plus: float | None = None
    e_pert_minus: float | None = None


def spectrum_slice(
    kpath: Sequence[Momentum],
    params: ModelParams,
    intervals: int = SCAN_INTERVALS,
    match_tol: float = 0.05,
) -> list[SpectrumRow]:
    """Solve every momentum of a path and label branches by x-continuity.

    Each k is solved independently; branch ids are assigned by nearest-x
    matching against the previous momentum (new ids for unmatched roots).
    Perturbative energies are attached inside the small-k window whenever the
    cone exists away from the critical boundary.  Solver failures are re-raised
    with the offending momentum attached.
    """
    cone = solve_x0(params)
    pert_ok = cone.exists and 1.0 - abs(cone.x0) > 1e-12
    rows: list[SpectrumRow] = []
    prev: list[tuple[int, float]] = []
    next_id = 0
    for k in kpath:
        try:
            sols = solve_all_x(k, params, intervals=intervals)
        except RootSearchError:
            raise
        except Exception as exc:  # pragma: no cover - defensive re-wrap
            raise RootSearchError(f"solver failed at k = {(k.k1, k.k2)}: {exc}") from exc
        ep = em = None
        if pert_ok and abs(k.k1) <= _PERT_WINDOW and abs(k.k2) <= _PERT_WINDOW:
            pert = perturbative_expansion(k, params, cone)
            ep, em = pert.energy_plus, pert.energy_minus
        used: set[int] = set()
        assigned: list[tuple[int, EigenSolution]] = []
        for sol in sols:
            best_j, best_d = -1, math.inf
            for j, (_, xp) in enumerate(prev):
                if j in used:
                    continue
                d = abs(sol.x - xp)
                if d < best_d:
                    best_j, best_d = j, d
            if best_j >= 0 and best_d <= match_tol:
                used.add(best_j)
                bid = prev[best_j][0]
            else:
                bid = next_id
                next_id += 1
            assigned.append((bid, sol))
        prev = [(bid, sol.x) for bid, sol in assigned]
        for bid, sol in assigned:
            rows.append(
                SpectrumRow(
                    k1=k.k1, k2=k.k2, branch_id=bid, x=sol.x, energy=sol.energy,
                    e_pert_plus=ep, e_pert_minus=em,
                )
            )
    return rows


def write_spectrum_csv(rows: Iterable[SpectrumRow], fp: TextIO) -> None:
    """Serialize spectrum rows with the fixed header; pert columns may be empty."""
    fp.write("k1,k2,branch_id,x,E,E_pert_plus,E_pert_minus\n")
    for r in rows:
        ep = "" if r.e_pert_plus is None else f"{r.e_pert_plus:.17g}"
        em = "" if r.e_pert_minus is None else f"{r.e_pert_minus:.17g}"
        fp.write(f"{r.k1:.17g},{r.k2:.17g},{r.branch_id},{r.x:.17g},{r.energy:.17g},{ep},{em}\n")
