"""Time-dependent propagation along circular momentum-space paths.

The state obeys i dPsi/dt = H(Psi) Psi while the quasimomentum is dragged at
a slow rate epsilon along one of two symmetric half circles (east through
(r, 0), west through (-r, 0)), both starting at the south point (0, -r) and
recombining at the north point (0, r).  Propagation uses second-order Strang
splitting: the on-site nonlinearity is a pure per-component phase (exact),
and the linear two-level part is applied with its closed-form 2x2 unitary,
momentum evaluated at substep midpoints.

The overall phase theta(t) is extracted as the unwrapped argument of the
overlap with the continued instantaneous eigenstate in the fixed gauge (psi1
real and nonnegative), which is robust when either amplitude gets small.  The
phase difference between the two arms,

    theta_AB = theta_total(east) - theta_total(west),

converges, as epsilon -> 0 and for shrinking radius, to the Berry phase of
the counterclockwise loop plus the nonlinear dynamical correction; this
orientation convention makes the numeric values match the closed forms in
``phases`` with their stated signs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import TextIO

import numpy as np

from . import _kernels as _k
from .band import (
    ConeSolution,
    EigenSolution,
    _brace,
    energy_from_x,
    solve_all_x,
    solve_x0,
)
from .model import BlochState, ModelParams, Momentum, XPhi, beta, gamma, state_from_xphi
from .phases import (
    PhaseBreakdown,
    angle_distance,
    berry_phase_loop,
    big_delta,
    big_delta_prime,
)

__all__ = [
    "PathSpec",
    "EvolutionTrace",
    "EvolutionResult",
    "DeviationCheck",
    "AdiabaticityError",
    "ContinuationError",
    "path_momentum",
    "split_step",
    "default_branch_seed",
    "continue_branch",
    "evolve",
    "ab_phase_numeric",
    "ab_phase_detailed",
    "ab_phase_adiabatic_limit",
    "deviation_check",
    "dyn_phase_rate_analytic",
    "write_trace_csv",
    "write_deviation_csv",
]

MAX_RADIUS = 0.1 * math.pi
_TRACE_ROWS = 4096  # decimation target for recorded samples


class AdiabaticityError(RuntimeError):
    """Final overlap with the instantaneous branch fell below threshold."""

    def __init__(self, message: str, trace: "EvolutionTrace") -> None:
        super().__init__(message)
        self.trace = trace


class ContinuationError(RuntimeError):
    """The instantaneous eigen-branch could not be continued along the path."""


@dataclass(frozen=True)
class PathSpec:
    """Circular adiabatic path segment.

    radius      : k-space circle radius, in (0, 0.1 pi]
    orientation : "east" (through (r, 0)) or "west" (through (-r, 0))
    phi_start   : polar angle of the start point (south: -pi/2)
    phi_end     : polar angle of the end point (north: +pi/2); span is pi
    epsilon     : adiabatic rate (path angle per unit time, hbar = 1)
    dt          : integrator step
    schedule    : "constant" angular velocity, or "smooth" for a ramp with
                  zero endpoint velocity (same total duration pi/epsilon)
    """

    radius: float = 0.02 * math.pi
    orientation: str = "east"
    phi_start: float = -0.5 * math.pi
    phi_end: float = 0.5 * math.pi
    epsilon: float = 1e-3
    dt: float = 1e-3
    schedule: str = "constant"

    def __post_init__(self) -> None:
        if not (0.0 < self.radius <= MAX_RADIUS):
            raise ValueError(f"radius must lie in (0, 0.1 pi], got {self.radius}")
        if self.orientation not in ("east", "west"):
            raise ValueError(f"orientation must be 'east' or 'west', got {self.orientation!r}")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if abs(abs(self.phi_end - self.phi_start) - math.pi) > 1e-12:
            raise ValueError("the path must span exactly half the circle")
        if self.schedule not in ("constant", "smooth"):
            raise ValueError(f"schedule must be 'constant' or 'smooth', got {self.schedule!r}")

    @property
    def duration(self) -> float:
        return abs(self.phi_end - self.phi_start) / self.epsilon

    @property
    def direction(self) -> float:
        return 1.0 if self.orientation == "east" else -1.0

    def polar_angle(self, t: float) -> float:
        """Unreduced polar angle at time t (east increases, west decreases)."""
        T = self.duration
        tau = t / T
        if self.schedule == "smooth":
            s = tau - math.sin(2.0 * math.pi * tau) / (2.0 * math.pi)
        else:
            s = tau
        return self.phi_start + self.direction * math.pi * s


def path_momentum(spec: PathSpec, t: float) -> Momentum:
    """Momentum on the circle at time t in [0, duration]."""
    if t < 0.0 or t > spec.duration * (1.0 + 1e-12):
        raise ValueError(f"t = {t} outside the path duration [0, {spec.duration}]")
    th = spec.polar_angle(min(t, spec.duration))
    return Momentum(spec.radius * math.cos(th), spec.radius * math.sin(th))


def split_step(state: BlochState, k_mid: Momentum, dt: float, params: ModelParams) -> BlochState:
    """One Strang step at fixed momentum (midpoint value of the interval)."""
    psi1, psi2 = _k._strang_step(
        complex(state.psi1),
        complex(state.psi2),
        k_mid.k1,
        k_mid.k2,
        dt,
        params.B,
        params.J1,
        params.J2,
        params.g,
        params.p,
    )
    return BlochState(psi1, psi2)


def default_branch_seed(params: ModelParams, spec: PathSpec) -> EigenSolution:
    """Starting eigen-solution at the path's start point.

    Picks the branch that tends to the degeneracy-point imbalance x0 as
    k -> 0.  With a cone present the two nearest roots are its sheets; the
    lower-energy sheet is taken for g > 0 (the cone grows out of the lower
    band) and the upper one for g < 0.  Callers needing the other sheet pass
    their own seed.
    """
    k_start = path_momentum(spec, 0.0)
    sols = solve_all_x(k_start, params)
    cone = solve_x0(params)
    by_dist = sorted(sols, key=lambda s: abs(s.x - cone.x0))
    if not cone.exists or len(by_dist) == 1:
        return by_dist[0]
    pair = by_dist[:2]
    if params.g >= 0.0:
        return min(pair, key=lambda s: s.energy)
    return max(pair, key=lambda s: s.energy)


def _sheet_sign(seed: EigenSolution, params: ModelParams, k_start: Momentum) -> float:
    """+1 when the seed sits on the phi = -arg(gamma) sheet, else -1."""
    gam = gamma(k_start, params)
    if abs(gam) == 0.0:
        raise ContinuationError("gauge sheet undefined at a gamma = 0 start point")
    base = -math.atan2(gam.imag, gam.real)
    return 1.0 if angle_distance(seed.phi, base) < 0.5 * math.pi else -1.0


def continue_branch(
    params: ModelParams,
    radius: float,
    thetas: np.ndarray,
    seed: EigenSolution,
    sheet_sign: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Continue (x, phi) of the seeded branch over an array of polar angles.

    phi is returned unwrapped (continuous); its first value keeps the seed's
    gauge sheet.  Raises ContinuationError if the root tracking fails.
    """
    thetas = np.ascontiguousarray(thetas, dtype=float)
    k0 = Momentum(radius * math.cos(thetas[0]), radius * math.sin(thetas[0]))
    if sheet_sign is None:
        sheet_sign = _sheet_sign(seed, params, k0)
    x_out = np.empty_like(thetas)
    phi_out = np.empty_like(thetas)
    bad = _k.march_branch(
        thetas, radius, params.B, params.J1, params.J2, params.g, params.p,
        seed.x, sheet_sign, x_out, phi_out,
    )
    if bad >= 0:
        raise ContinuationError(
            f"branch continuation failed at sample {bad} (polar angle {thetas[bad]:.6f})"
        )
    return x_out, phi_out


@dataclass(frozen=True)
class EvolutionTrace:
    """Decimated per-sample records of one propagation."""

    t: np.ndarray
    k1: np.ndarray
    k2: np.ndarray
    x: np.ndarray
    phi: np.ndarray
    theta: np.ndarray
    norm: np.ndarray
    overlap: np.ndarray


@dataclass(frozen=True)
class EvolutionResult:
    """Final state, unwrapped accumulated phase, and diagnostics."""

    final_state: BlochState
    theta_total: float
    trace: EvolutionTrace
    overlap_final: float
    energy_integral: float
    max_norm_deviation: float
    branch_x_final: float
    branch_phi_final: float


def _default_samples(spec: PathSpec, params: ModelParams) -> int:
    """Sample count keeping the per-sample phase increment under pi/4."""
    rate_bound = params.B + (abs(params.J1) + abs(params.J2)) * spec.radius + abs(params.g) + 1.0
    if spec.schedule == "smooth":
        rate_bound *= 2.0  # peak angular velocity doubles
    n = int(math.ceil(spec.duration * rate_bound / (0.25 * math.pi)))
    return max(4096, n)


def evolve(
    spec: PathSpec,
    params: ModelParams,
    branch_seed: EigenSolution | None = None,
    n_samples: int | None = None,
    overlap_threshold: float = 0.99,
    stop_time: float | None = None,
    initial_state: BlochState | None = None,
) -> EvolutionResult:
    """Propagate from the start point of the path, following one eigen-branch.

    The initial state is the seeded instantaneous eigenstate unless an
    explicit ``initial_state`` is given (e.g. the same state with a global
    phase).  Raises AdiabaticityError when the final overlap with the
    continued branch drops below ``overlap_threshold`` and ContinuationError
    when the branch itself cannot be tracked.
    """
    if branch_seed is None:
        branch_seed = default_branch_seed(params, spec)
    k_start = path_momentum(spec, 0.0)
    sheet = _sheet_sign(branch_seed, params, k_start)

    n = n_samples if n_samples is not None else _default_samples(spec, params)
    T = spec.duration
    dt_sample = T / n
    n_stop = n
    if stop_time is not None:
        if not (0.0 < stop_time <= T):
            raise ValueError("stop_time must lie in (0, duration]")
        n_stop = max(1, min(n, round(stop_time / dt_sample)))
    substeps = max(1, int(math.ceil(dt_sample / spec.dt)))
    emax = params.B + abs(params.J1) + abs(params.J2) + abs(params.g)
    if (dt_sample / substeps) * emax >= 0.1:
        raise ValueError("dt too coarse for the instantaneous energy scale")

    stride = max(1, n_stop // _TRACE_ROWS)
    n_rec_cap = n_stop // stride + 2
    rec = np.empty((n_rec_cap, _k.REC_COLS), dtype=float)
    out = np.empty(_k.OUT_SIZE, dtype=float)

    seed_state = initial_state
    if seed_state is None:
        seed_state = state_from_xphi(XPhi(branch_seed.x, branch_seed.phi))
    n_rec = _k.evolve_kernel(
        complex(seed_state.psi1),
        complex(seed_state.psi2),
        spec.radius,
        spec.phi_start,
        spec.direction,
        1 if spec.schedule == "smooth" else 0,
        T,
        n,
        n_stop,
        substeps,
        params.B,
        params.J1,
        params.J2,
        params.g,
        params.p,
        branch_seed.x,
        sheet,
        stride,
        rec,
        out,
    )

    trace = EvolutionTrace(
        t=rec[:n_rec, 0].copy(),
        k1=rec[:n_rec, 1].copy(),
        k2=rec[:n_rec, 2].copy(),
        x=rec[:n_rec, 3].copy(),
        phi=rec[:n_rec, 4].copy(),
        theta=rec[:n_rec, 5].copy(),
        norm=rec[:n_rec, 6].copy(),
        overlap=rec[:n_rec, 7].copy(),
    )

    err = out[_k.OUT_ERR]
    if err == _k.ERR_BRACKET:
        raise ContinuationError(f"root tracking lost the branch at sample {int(out[_k.OUT_ERR_INDEX])}")
    if err == _k.ERR_BOUNDARY:
        raise ContinuationError(
            f"branch hit |x| = 1 at sample {int(out[_k.OUT_ERR_INDEX])}; gauge degenerates"
        )
    if out[_k.OUT_MAX_DTHETA] > 0.5 * math.pi:
        raise RuntimeError(
            "per-sample phase increment exceeded pi/2; increase n_samples for unambiguous unwrapping"
        )

    overlap_final = float(out[_k.OUT_OVERLAP])
    if overlap_final < overlap_threshold:
        raise AdiabaticityError(
            f"adiabaticity lost: final overlap {overlap_final:.6f} < {overlap_threshold}",
            trace,
        )

    return EvolutionResult(
        final_state=BlochState(
            complex(out[_k.OUT_PSI1_RE], out[_k.OUT_PSI1_IM]),
            complex(out[_k.OUT_PSI2_RE], out[_k.OUT_PSI2_IM]),
        ),
        theta_total=float(out[_k.OUT_THETA]),
        trace=trace,
        overlap_final=overlap_final,
        energy_integral=float(out[_k.OUT_EINT]),
        max_norm_deviation=float(out[_k.OUT_MAX_NORM_DEV]),
        branch_x_final=float(out[_k.OUT_X_FINAL]),
        branch_phi_final=float(out[_k.OUT_PHI_FINAL]),
    )


def ab_phase_detailed(
    params: ModelParams,
    base: PathSpec,
    branch_seed: EigenSolution | None = None,
    n_samples: int | None = None,
    overlap_threshold: float = 0.99,
    loop_points: int = 32768,
) -> tuple[PhaseBreakdown, EvolutionResult, EvolutionResult]:
    """Run both path orientations and decompose the numeric phase difference.

    theta_AB = theta_total(east) - theta_total(west); the Berry part is the
    loop quadrature of the continued instantaneous x(phi) around the full
    counterclockwise circle, and the dynamical part is the remainder.
    """
    if branch_seed is None:
        branch_seed = default_branch_seed(params, base)
    east = replace(base, orientation="east")
    west = replace(base, orientation="west")
    res_e = evolve(east, params, branch_seed, n_samples=n_samples, overlap_threshold=overlap_threshold)
    res_w = evolve(west, params, branch_seed, n_samples=n_samples, overlap_threshold=overlap_threshold)
    theta_ab = res_e.theta_total - res_w.theta_total

    thetas = np.linspace(base.phi_start, base.phi_start + 2.0 * math.pi, loop_points + 1)
    x_arr, phi_arr = continue_branch(params, base.radius, thetas, branch_seed)
    theta_b = berry_phase_loop(np.column_stack([phi_arr, x_arr]))

    breakdown = PhaseBreakdown(theta_B=theta_b, delta_theta_D=theta_ab - theta_b)
    return breakdown, res_e, res_w


def ab_phase_numeric(
    params: ModelParams,
    base: PathSpec,
    branch_seed: EigenSolution | None = None,
    n_samples: int | None = None,
    overlap_threshold: float = 0.99,
) -> PhaseBreakdown:
    """Numeric phase breakdown from propagating both interferometer arms."""
    breakdown, _, _ = ab_phase_detailed(
        params, base, branch_seed=branch_seed, n_samples=n_samples,
        overlap_threshold=overlap_threshold,
    )
    return breakdown


def ab_phase_adiabatic_limit(
    params: ModelParams,
    radius: float,
    branch_seed: EigenSolution | None = None,
    loop_points: int = 32768,
    phi_start: float = -0.5 * math.pi,
) -> PhaseBreakdown:
    """Zero-rate limit of the numeric phase difference at a fixed loop radius.

    Integrates the two phase-rate line terms over the continued branch around
    the full counterclockwise loop,

        theta_B       = -oint (1-x)/2 dphi,
        delta_theta_D = oint g p x (1-x^2) [((1+x)/2)^p - ((1-x)/2)^p]
                        / (4 Delta) dphi,

    which is what the propagated difference converges to as epsilon -> 0.  It
    differs from the vertex-evaluated closed forms by the finite-radius shift
    of the branch (of order radius), vanishing as the loop shrinks.
    """
    if branch_seed is None:
        branch_seed = default_branch_seed(
            params, PathSpec(radius=radius, phi_start=phi_start, phi_end=phi_start + math.pi)
        )
    thetas = np.linspace(phi_start, phi_start + 2.0 * math.pi, loop_points + 1)
    x, phi = continue_branch(params, radius, thetas, branch_seed)
    theta_b = berry_phase_loop(np.column_stack([phi, x]))
    p, g = params.p, params.g
    u = (0.5 * (1.0 + x)) ** p
    v = (0.5 * (1.0 - x)) ** p
    k1 = radius * np.cos(thetas)
    k2 = radius * np.sin(thetas)
    bvals = params.B * (-1.0 + np.cos(k1) + np.cos(k2))
    quad = p * x * x
    delta = bvals + 0.5 * g * ((1.0 - p * x + quad) * u - (1.0 + p * x + quad) * v)
    integrand = g * p * x * (1.0 - x * x) * (u - v) / (4.0 * delta)
    dth = float(np.trapezoid(integrand, phi))
    return PhaseBreakdown(theta_B=theta_b, delta_theta_D=dth)


@dataclass(frozen=True)
class DeviationCheck:
    """First-order deviation from the instantaneous branch at one probe time.

    The stored components are the actual deviations (they include the factor
    epsilon).  ``relative_error`` is ||num - ana|| / ||ana|| over the
    two-component vector.
    """

    phi1_num: complex
    phi2_num: complex
    phi1_ana: complex
    phi2_ana: complex
    relative_error: float
    t_probe: float


def deviation_check(
    spec: PathSpec,
    params: ModelParams,
    t_probe: float,
    branch_seed: EigenSolution | None = None,
    n_samples: int | None = None,
) -> DeviationCheck:
    """Compare the numerically extracted first-order deviation with the
    closed-form correction built from Delta, Delta', and the branch rates.

    The probe snaps to the nearest interior sample time.  The numeric
    deviation is e^{-i theta} Psi projected off the instantaneous eigenstate;
    the analytic counterpart is

        eps phi1 = -x(1-x)sqrt(1+x)/(4 sqrt2) * phidot/Delta
                   - i x/(4 sqrt(2(1+x))) * xdot/Delta',
        eps phi2 = e^{i phi} [ x(1+x)sqrt(1-x)/(4 sqrt2) * phidot/Delta
                   + i x/(4 sqrt(2(1-x))) * xdot/Delta' ].
    """
    if branch_seed is None:
        branch_seed = default_branch_seed(params, spec)
    n = n_samples if n_samples is not None else _default_samples(spec, params)
    T = spec.duration
    dt_sample = T / n
    i_probe = int(round(t_probe / dt_sample))
    i_probe = max(1, min(n - 1, i_probe))
    t_actual = i_probe * dt_sample

    res = evolve(spec, params, branch_seed, n_samples=n, stop_time=t_actual)

    idx = np.arange(i_probe - 1, i_probe + 2)
    thetas = np.array([spec.polar_angle(i * dt_sample) for i in range(i_probe + 2)])
    x_arr, phi_arr = continue_branch(params, spec.radius, thetas, branch_seed)
    x_p = x_arr[i_probe]
    phi_p = phi_arr[i_probe]
    if 1.0 - abs(x_p) < 1e-6:
        raise ValueError("probe sits at a gauge-degenerate point (|x| -> 1)")
    xdot = (x_arr[i_probe + 1] - x_arr[i_probe - 1]) / (2.0 * dt_sample)
    phidot = (phi_arr[i_probe + 1] - phi_arr[i_probe - 1]) / (2.0 * dt_sample)
    del idx

    k_p = path_momentum(spec, t_actual)
    dlt = big_delta(x_p, k_p, params)
    dltp = big_delta_prime(x_p, k_p, params)

    sq2 = math.sqrt(2.0)
    ana1 = (
        -x_p * (1.0 - x_p) * math.sqrt(1.0 + x_p) / (4.0 * sq2) * (phidot / dlt)
        - 1j * x_p / (4.0 * math.sqrt(2.0 * (1.0 + x_p))) * (xdot / dltp)
    )
    ana2 = (
        x_p * (1.0 + x_p) * math.sqrt(1.0 - x_p) / (4.0 * sq2) * (phidot / dlt)
        + 1j * x_p / (4.0 * math.sqrt(2.0 * (1.0 - x_p))) * (xdot / dltp)
    ) * complex(math.cos(phi_p), math.sin(phi_p))

    inst = state_from_xphi(XPhi(x_p, phi_p))
    d = np.exp(-1j * res.theta_total) * res.final_state.as_array()
    inst_vec = inst.as_array()
    d_perp = d - inst_vec * np.vdot(inst_vec, d)
    num1, num2 = complex(d_perp[0]), complex(d_perp[1])

    ana_norm = math.hypot(abs(ana1), abs(ana2))
    err_norm = math.hypot(abs(num1 - ana1), abs(num2 - ana2))
    rel = err_norm / ana_norm if ana_norm > 0.0 else math.inf

    return DeviationCheck(
        phi1_num=num1,
        phi2_num=num2,
        phi1_ana=complex(ana1),
        phi2_ana=complex(ana2),
        relative_error=rel,
        t_probe=t_actual,
    )


def dyn_phase_rate_analytic(x: float, k: Momentum, phi_dot: float, params: ModelParams) -> float:
    """Instantaneous overall-phase rate on the branch:
    -E - (1-x)/2 phidot + g p x (1-x^2)[((1+x)/2)^p - ((1-x)/2)^p]/(4 Delta) phidot."""
    dlt = big_delta(x, k, params)
    if dlt == 0.0:
        raise ValueError("phase rate singular: Delta = 0")
    p, g = params.p, params.g
    u = (0.5 * (1.0 + x)) ** p
    v = (0.5 * (1.0 - x)) ** p
    e = energy_from_x(x, k, params)
    return -e - 0.5 * (1.0 - x) * phi_dot + g * p * x * (1.0 - x * x) * (u - v) / (4.0 * dlt) * phi_dot


def write_trace_csv(trace: EvolutionTrace, fp: TextIO) -> None:
    fp.write("t,k1,k2,x,phi,theta,norm,overlap\n")
    for i in range(len(trace.t)):
        fp.write(
            f"{trace.t[i]:.17g},{trace.k1[i]:.17g},{trace.k2[i]:.17g},"
            f"{trace.x[i]:.17g},{trace.phi[i]:.17g},{trace.theta[i]:.17g},"
            f"{trace.norm[i]:.17g},{trace.overlap[i]:.17g}\n"
        )


def write_deviation_csv(dev: DeviationCheck, fp: TextIO) -> None:
    fp.write(
        "t,re_phi1_num,im_phi1_num,re_phi1_ana,im_phi1_ana,"
        "re_phi2_num,im_phi2_num,re_phi2_ana,im_phi2_ana,rel_err\n"
    )
    fp.write(
        f"{dev.t_probe:.17g},"
        f"{dev.phi1_num.real:.17g},{dev.phi1_num.imag:.17g},"
        f"{dev.phi1_ana.real:.17g},{dev.phi1_ana.imag:.17g},"
        f"{dev.phi2_num.real:.17g},{dev.phi2_num.imag:.17g},"
        f"{dev.phi2_ana.real:.17g},{dev.phi2_ana.imag:.17g},"
        f"{dev.relative_error:.17g}\n"
    )
