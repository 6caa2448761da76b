"""Headline acceptance checks, one printed pass/fail line per item.

Run with ``pytest tests/test_acceptance.py -v -s`` to see every line.  Each
check pins its tolerance here; nothing is deferred to later calibration.
"""

import math
from dataclasses import replace

import numpy as np
import pytest

from nldirac.band import perturbative_expansion, solve_all_x, solve_x0
from nldirac.dynamics import (
    PathSpec,
    ab_phase_adiabatic_limit,
    ab_phase_detailed,
    continue_branch,
    default_branch_seed,
    deviation_check,
    evolve,
)
from nldirac.model import ModelParams, Momentum
from nldirac.phases import (
    ab_phase_leading,
    angle_distance,
    berry_phase_leading,
    berry_phase_loop,
    dyn_phase_diff_regime,
)


def _criterion(label: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}")
    assert ok, f"{label}: {detail}"


# -- 1. Kerr quantization plateau --------------------------------------------


def test_kerr_plateau_analytic():
    worst_pi = 0.0
    for g in np.linspace(2.05, 6.0, 80):
        params = ModelParams(B=1.0, g=float(g), p=1.0)
        br = ab_phase_leading(solve_x0(params), params)
        worst_pi = max(worst_pi, angle_distance(br.theta_AB, math.pi))
    worst_zero = 0.0
    for g in np.linspace(-1.95, 1.95, 79):
        params = ModelParams(B=1.0, g=float(g), p=1.0)
        br = ab_phase_leading(solve_x0(params), params)
        worst_zero = max(worst_zero, angle_distance(br.theta_AB, 0.0))
    ok = worst_pi <= 1e-9 and worst_zero <= 1e-9
    _criterion(
        "kerr plateau analytic",
        ok,
        f"max |theta_AB - pi| = {worst_pi:.2e} on [2.05B, 6B], "
        f"max |theta_AB| = {worst_zero:.2e} on |g| <= 1.95B (tol 1e-9)",
    )


def test_kerr_plateau_numeric():
    # Propagated plateau at the pinned loop radius 0.02 pi and rate 1e-3 B.
    # The followed branch sits at x0 + chi with |chi| ~ radius, which shifts
    # the propagated phase away from the vertex value by an O(radius) amount
    # (0.33 / 0.16 / 0.07 rad at g = 2.5 / 3 / 4 B); the shift halves with the
    # radius (see test_dynamics radius-halving checks), so the 0.05 rad match
    # is only reachable on smaller loops than the one pinned here.
    dists = {}
    for g in (2.5, 3.0, 4.0):
        params = ModelParams(B=1.0, g=g, p=1.0)
        spec = PathSpec(radius=0.02 * math.pi, epsilon=1e-3, dt=1e-3)
        br, _, _ = ab_phase_detailed(params, spec)
        dists[g] = angle_distance(br.theta_AB, math.pi)
    ok = all(d <= 0.05 for d in dists.values())
    detail = ", ".join(f"g={g}B: {d:.4f}" for g, d in dists.items())
    _criterion("kerr plateau numeric (radius 0.02pi, eps 1e-3B, tol 0.05 rad)", ok, detail)


# -- 2. non-Kerr continuity ---------------------------------------------------


@pytest.mark.parametrize("p", [0.5, 1.5, 2.0, 2.5, 3.0])
def test_non_kerr_continuity(p):
    diffs = []
    for d in (0.1, 0.05, 0.025):
        vals = []
        for g in (2.0 + d, 2.0 - d):
            params = ModelParams(B=1.0, g=g, p=p)
            vals.append(ab_phase_leading(solve_x0(params), params).theta_AB_mod)
        diffs.append(angle_distance(vals[0], vals[1]))
    ok = diffs[1] < 0.2 and diffs[0] > diffs[1] > diffs[2]
    _criterion(
        f"non-kerr continuity p={p}",
        ok,
        f"|jump| at delta=0.1/0.05/0.025 B: {diffs[0]:.4f}/{diffs[1]:.4f}/{diffs[2]:.4f} "
        "(need < 0.2 at 0.05B and monotone)",
    )


# -- 3. critical dynamical-phase jumps ---------------------------------------


def test_critical_dynamical_phase_jumps():
    expected = {0.5: 0.0, 1.0: math.pi, 1.5: 2 * math.pi, 2.0: 2 * math.pi,
                2.5: 2 * math.pi, 3.0: 2 * math.pi}
    worst = 0.0
    for p, target in expected.items():
        params = ModelParams(B=1.0, g=2.0, p=p)
        cone = solve_x0(params)
        assert cone.exists and cone.x0 == pytest.approx(-1.0, abs=1e-12)
        worst = max(worst, abs(dyn_phase_diff_regime(cone, params) - target))
    _criterion(
        "critical dynamical-phase jumps",
        worst <= 1e-6,
        f"max deviation from 0/pi/2pi limits = {worst:.2e} (tol 1e-6)",
    )


# -- 4. Berry phase below and above criticality --------------------------------


def test_berry_phase_below_criticality():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(50):
        p = rng.uniform(0.3, 3.0)
        g = rng.uniform(-1.99, 1.99)
        params = ModelParams(B=1.0, g=g, p=p)
        tb = berry_phase_leading(solve_x0(params))
        worst = max(worst, angle_distance(tb, 0.0))
    _criterion(
        "berry phase below criticality",
        worst <= 1e-9,
        f"max |theta_B mod 2pi| over 50 random (p, g) = {worst:.2e} (tol 1e-9)",
    )


def test_berry_phase_loop_quadrature_above_criticality():
    # compared where the vertex expansion is meaningful (small branch shift
    # at the 0.02 pi loop radius, i.e. well above the critical coupling)
    r = 0.02 * math.pi
    worst = 0.0
    details = []
    for p, g in ((1.0, 8.0), (2.0, 8.0), (2.5, 10.0)):
        params = ModelParams(B=1.0, g=g, p=p)
        seed = default_branch_seed(params, PathSpec(radius=r))
        thetas = np.linspace(-0.5 * math.pi, 1.5 * math.pi, 16385)
        x, phi = continue_branch(params, r, thetas, seed)
        quad = berry_phase_loop(np.column_stack([phi, x]))
        lead = berry_phase_leading(solve_x0(params))
        d = abs(quad - lead)
        worst = max(worst, d)
        details.append(f"(p={p}, g={g}B): {d:.4f}")
    _criterion(
        "berry phase loop quadrature (radius 0.02pi, tol 0.02 rad)",
        worst <= 0.02,
        ", ".join(details),
    )


# -- 5. perturbative spectra ---------------------------------------------------


def _pert_err(params, k2):
    k = Momentum(0.0, k2)
    pert = perturbative_expansion(k, params)
    sols = solve_all_x(k, params)
    return max(
        min(abs(s.energy - t) / abs(t) for s in sols)
        for t in (pert.energy_plus, pert.energy_minus)
    )


def test_perturbative_spectra():
    params = ModelParams(B=1.0, g=2.5, p=2.0)
    inner = max(_pert_err(params, k2) for k2 in np.linspace(-0.01 * math.pi, 0.01 * math.pi, 21) if k2 != 0.0)
    e_mid = _pert_err(params, 0.05 * math.pi)
    e_edge = _pert_err(params, 0.1 * math.pi)
    ok = inner < 0.01 and inner < e_mid < e_edge
    _criterion(
        "perturbative spectra p=2 g=2.5B",
        ok,
        f"max rel err {inner:.4f} inside |k2| <= 0.01pi (tol 1%), "
        f"degrading smoothly: {e_mid:.3f} @0.05pi, {e_edge:.3f} @0.1pi",
    )


# -- 6. closed-form vertex imbalance for the Kerr case -------------------------


def test_kerr_vertex_closed_form():
    worst = 0.0
    for g in np.linspace(2.0, 10.0, 100):
        x0 = solve_x0(ModelParams(B=1.0, g=float(g), p=1.0)).x0
        worst = max(worst, abs(x0 + 2.0 / g))
    _criterion(
        "kerr vertex closed form x0 = -2B/g",
        worst <= 1e-12,
        f"max |x0 + 2B/g| over 100 couplings = {worst:.2e} (tol 1e-12)",
    )


# -- 7. integrator properties ---------------------------------------------------


def test_norm_conservation_full_path():
    params = ModelParams(B=1.0, g=4.0, p=1.0)
    spec = PathSpec(radius=0.02 * math.pi, epsilon=1e-3, dt=1e-3)
    res = evolve(spec, params)
    _criterion(
        "norm conservation over a full path (dt = 1e-3/B)",
        res.max_norm_deviation < 1e-10,
        f"max |norm - 1| = {res.max_norm_deviation:.2e} (tol 1e-10)",
    )


def test_phase_error_second_order_in_dt():
    params = ModelParams(B=1.0, g=4.0, p=1.0)
    dts = (1e-2, 5e-3, 2.5e-3)
    thetas = []
    for dt in dts + (2.5e-4,):
        spec = PathSpec(radius=0.02 * math.pi, epsilon=1e-2, dt=dt)
        thetas.append(evolve(spec, params, n_samples=4096).theta_total)
    errs = [abs(t - thetas[-1]) for t in thetas[:-1]]
    slope = float(np.polyfit(np.log(dts), np.log(errs), 1)[0])
    _criterion(
        "global phase error order in dt",
        1.8 <= slope <= 2.2,
        f"log-log slope {slope:.3f} over dt = 1e-2, 5e-3, 2.5e-3 (need 2.0 +/- 0.2)",
    )


def test_adiabatic_error_halves_with_rate():
    # The two arms are mirror images, so the smooth first-order term cancels
    # in their difference: what survives against the fixed-radius zero-rate
    # limit is an oscillatory start-up transient whose magnitude is O(eps)
    # but whose phase rotates as 1/eps, and against the vertex closed forms
    # the rate-independent O(radius) branch shift dominates instead.  Neither
    # residual halves cleanly; the halving expected here does not occur (see
    # the overlap-deficit and radius-halving checks in test_dynamics for the
    # scalings that do hold).
    params = ModelParams(B=1.0, g=4.0, p=1.0)
    lead = ab_phase_leading(solve_x0(params), params).theta_AB
    errs = []
    for eps in (2e-3, 1e-3):
        spec = PathSpec(radius=0.02 * math.pi, epsilon=eps, dt=1e-3)
        br, _, _ = ab_phase_detailed(params, spec)
        errs.append(angle_distance(br.theta_AB, lead))
    ratio = errs[0] / errs[1]
    limit = ab_phase_adiabatic_limit(params, 0.02 * math.pi).theta_AB
    geo = angle_distance(limit, lead)
    _criterion(
        "theta_AB error halves when eps halves (ratio 1.6-2.4)",
        1.6 <= ratio <= 2.4,
        f"|err| {errs[0]:.4f} -> {errs[1]:.4f}, ratio {ratio:.3f}; "
        f"rate-independent branch-shift part = {geo:.4f}",
    )


# -- 8. first-order deviation against the closed-form correction ----------------


def test_first_order_deviation():
    params = ModelParams(B=1.0, g=4.0, p=1.0)
    # soft-start schedule: a hard start launches an undamped oscillation of
    # the same order as the tracked deviation and buries the comparison
    spec = PathSpec(radius=0.02 * math.pi, epsilon=1e-3, dt=1e-3, schedule="smooth")
    dev1 = deviation_check(spec, params, 0.5 * spec.duration)
    spec2 = replace(spec, epsilon=0.5e-3)
    dev2 = deviation_check(spec2, params, 0.5 * spec2.duration)
    ok = dev1.relative_error < 0.1 and dev2.relative_error < dev1.relative_error
    _criterion(
        "first-order deviation matches closed form",
        ok,
        f"rel err {dev1.relative_error:.2e} at eps = 1e-3 (tol 0.1), "
        f"{dev2.relative_error:.2e} at eps/2 (must improve)",
    )
