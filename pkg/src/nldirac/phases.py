"""Closed-form geometric and dynamical phases for loops around the cone.

For a half-circle interferometer recombined at the north point of a small
k-space loop, the phase difference between the two arms splits into the Berry
phase of the enclosed loop and a nonlinearity-induced dynamical correction,

    theta_AB = theta_B + delta_theta_D,
    theta_B  = -oint (1-x)/2 dphi            ~ -pi (1 - x0),
    delta_theta_D ~ pi g p x0 (1 - x0^2) / (2 Delta0)
                    * [((1+x0)/2)^p - ((1-x0)/2)^p],

where Delta0 is the phase-rate denominator Delta evaluated at the vertex.
After eliminating the mass term through the vertex condition, the correction
collapses to the single expression

    delta_theta_D = -pi [(1+x0)^p - (1-x0)^p]
                        / [(1+x0)^(p-1) + (1-x0)^(p-1)],

whose boundary limits at x0 = +/-1 split by power: 0 for p < 1, -x0 pi for
p = 1, and -sign(x0) 2 pi for p > 1.  Below the critical coupling the loop
encloses no degeneracy, the followed band is pinned at a pole, and the
dynamical correction vanishes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

import numpy as np

from .band import ConeSolution, _half_pow, solve_x0
from .model import TAU, ModelParams, Momentum, beta

__all__ = [
    "PhaseBreakdown",
    "reduce_mod_2pi",
    "angle_distance",
    "big_delta",
    "big_delta_prime",
    "delta0_at_vertex",
    "berry_phase_loop",
    "berry_phase_leading",
    "dyn_phase_diff_leading",
    "dyn_phase_diff_regime",
    "ab_phase_leading",
    "write_phase_csv",
]

_BOUNDARY_TOL = 1e-12


def reduce_mod_2pi(angle: float) -> float:
    """Unique representative of the angle in (-pi, pi]; -pi maps to +pi."""
    if not math.isfinite(angle):
        raise ValueError(f"angle must be finite, got {angle}")
    r = math.remainder(angle, TAU)
    if r <= -math.pi:
        r += TAU
    return r


def angle_distance(a: float, b: float) -> float:
    """Circular distance |a - b| mod 2 pi, in [0, pi]."""
    return abs(reduce_mod_2pi(a - b))


@dataclass(frozen=True)
class PhaseBreakdown:
    """Berry phase, dynamical-phase difference, and their sum (all unreduced)."""

    theta_B: float
    delta_theta_D: float

    @property
    def theta_AB(self) -> float:
        return self.theta_B + self.delta_theta_D

    @property
    def theta_AB_mod(self) -> float:
        return reduce_mod_2pi(self.theta_AB)


def big_delta(x: float, k: Momentum, params: ModelParams) -> float:
    """Phase-rate denominator
    Delta = beta + (g/2)[(1-px+px^2)((1+x)/2)^p - (1+px+px^2)((1-x)/2)^p].

    For p < 1 the poles x = +/-1 are rejected: quantities built on top of
    Delta lose their expansions there and callers must switch to the
    boundary-regime forms instead.
    """
    p = params.p
    if p < 1.0 and 1.0 - abs(x) <= 0.0:
        raise ValueError(f"Delta is not usable at |x| = 1 for p = {p} < 1")
    u = _half_pow(x, p)
    v = _half_pow(-x, p)
    quad = p * x * x
    return beta(k, params) + 0.5 * params.g * ((1.0 - p * x + quad) * u - (1.0 + p * x + quad) * v)


def big_delta_prime(x: float, k: Momentum, params: ModelParams) -> float:
    """Companion denominator beta + (g/2)[((1+x)/2)^p - ((1-x)/2)^p].

    Vanishes identically at the degeneracy point, where it reduces to the
    vertex condition on x0.
    """
    p = params.p
    return beta(k, params) + 0.5 * params.g * (_half_pow(x, p) - _half_pow(-x, p))


def delta0_at_vertex(cone: ConeSolution, params: ModelParams) -> float:
    """Delta at the vertex after eliminating beta:
    Delta0 = -(g p x0 / 2) [(1-x0)((1+x0)/2)^p + (1+x0)((1-x0)/2)^p]."""
    x0 = cone.x0
    p = params.p
    u = _half_pow(x0, p)
    v = _half_pow(-x0, p)
    return -0.5 * params.g * p * x0 * ((1.0 - x0) * u + (1.0 + x0) * v)


def berry_phase_loop(samples: Sequence[tuple[float, float]]) -> float:
    """Trapezoidal quadrature of -oint (1-x)/2 dphi over one full loop.

    ``samples`` is an ordered sequence of (phi, x) pairs whose phi values are
    strictly monotone and span 2 pi in total (either orientation).
    """
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 3:
        raise ValueError("need an ordered sequence of at least 3 (phi, x) pairs")
    phi = arr[:, 0]
    x = arr[:, 1]
    dphi = np.diff(phi)
    if not (np.all(dphi > 0.0) or np.all(dphi < 0.0)):
        raise ValueError("phi samples must be strictly monotone around the loop")
    span = phi[-1] - phi[0]
    if abs(abs(span) - TAU) > 1e-6:
        raise ValueError(f"phi span must cover one full loop (2 pi), got {span}")
    return float(np.trapezoid(-0.5 * (1.0 - x), phi))


def berry_phase_leading(cone: ConeSolution) -> float:
    """Leading Berry phase -pi (1 - x0); uses the boundary convention when absent."""
    return -math.pi * (1.0 - cone.x0)


def dyn_phase_diff_regime(cone: ConeSolution, params: ModelParams) -> float:
    """Power-regime closed form of the dynamical-phase difference at x0.

    Evaluates the vertex formula for whatever x0 the cone record carries
    (including the boundary convention), resolving the indeterminate boundary
    limits by regime: 0 for p < 1, -x0 pi for p = 1, -sign(x0) 2 pi for p > 1.
    """
    p = params.p
    x0 = cone.x0
    if 1.0 - abs(x0) <= _BOUNDARY_TOL:
        s = math.copysign(1.0, x0)
        if p > 1.0:
            return -s * TAU
        if p == 1.0:
            return -x0 * math.pi
        return 0.0
    num = (1.0 + x0) ** p - (1.0 - x0) ** p
    den = (1.0 + x0) ** (p - 1.0) + (1.0 - x0) ** (p - 1.0)
    return -math.pi * num / den


def dyn_phase_diff_leading(cone: ConeSolution, params: ModelParams) -> float:
    """Leading dynamical-phase difference between the two interferometer arms.

    Zero when no cone is enclosed (the followed band sits at a pole and the
    correction carries a vanishing 1 - x^2 factor).  At the critical boundary
    |x0| = 1 the raw vertex expression is 0/0 and the regime limit is used.
    """
    if not cone.exists:
        return 0.0
    x0 = cone.x0
    if 1.0 - abs(x0) <= _BOUNDARY_TOL:
        return dyn_phase_diff_regime(cone, params)
    p, g = params.p, params.g
    u = _half_pow(x0, p)
    v = _half_pow(-x0, p)
    d0 = delta0_at_vertex(cone, params)
    return math.pi * g * p * x0 * (1.0 - x0 * x0) * (u - v) / (2.0 * d0)


def ab_phase_leading(cone: ConeSolution, params: ModelParams) -> PhaseBreakdown:
    """Leading-order phase breakdown: Berry term plus dynamical correction."""
    return PhaseBreakdown(
        theta_B=berry_phase_leading(cone),
        delta_theta_D=dyn_phase_diff_leading(cone, params),
    )


def phase_sweep_rows(
    p_list: Iterable[float],
    g_over_B: Iterable[float],
    B: float = 1.0,
) -> list[tuple[float, float, float, PhaseBreakdown]]:
    """Analytic sweep: one (p, g/B, x0, breakdown) record per grid cell."""
    out = []
    for p in p_list:
        for gb in g_over_B:
            params = ModelParams(B=B, g=gb * B, p=p)
            cone = solve_x0(params)
            out.append((p, gb, cone.x0, ab_phase_leading(cone, params)))
    return out


def write_phase_csv(
    rows: Iterable[tuple[float, float, float, PhaseBreakdown]],
    fp: TextIO,
    extra_header: Sequence[str] = (),
    extra_values: Sequence[Sequence[str]] | None = None,
) -> None:
    """Serialize phase rows with the fixed header (angles in radians)."""
    header = "p,g_over_B,x0,theta_B,delta_theta_D,theta_AB,theta_AB_mod"
    if extra_header:
        header += "," + ",".join(extra_header)
    fp.write(header + "\n")
    rows = list(rows)
    extras = extra_values if extra_values is not None else [()] * len(rows)
    for (p, gb, x0, br), extra in zip(rows, extras):
        line = (
            f"{p:.17g},{gb:.17g},{x0:.17g},{br.theta_B:.17g},"
            f"{br.delta_theta_D:.17g},{br.theta_AB:.17g},{br.theta_AB_mod:.17g}"
        )
        if extra_header:
            padded = list(extra) + [""] * (len(extra_header) - len(extra))
            line += "," + ",".join(padded)
        fp.write(line + "\n")
