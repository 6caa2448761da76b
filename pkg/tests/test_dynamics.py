import cmath
import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.linalg import expm

from nldirac.band import solve_all_x, solve_x0
from nldirac.dynamics import (
    AdiabaticityError,
    PathSpec,
    ab_phase_adiabatic_limit,
    ab_phase_detailed,
    continue_branch,
    default_branch_seed,
    deviation_check,
    dyn_phase_rate_analytic,
    evolve,
    path_momentum,
    split_step,
)
from nldirac.model import BlochState, ModelParams, Momentum, XPhi, state_from_xphi
from nldirac.phases import ab_phase_leading, angle_distance

KERR4 = ModelParams(B=1.0, g=4.0, p=1.0)


def test_path_spec_validation():
    with pytest.raises(ValueError):
        PathSpec(radius=0.0)
    with pytest.raises(ValueError):
        PathSpec(radius=0.2 * math.pi)
    with pytest.raises(ValueError):
        PathSpec(orientation="north")
    with pytest.raises(ValueError):
        PathSpec(phi_end=0.0)
    with pytest.raises(ValueError):
        PathSpec(epsilon=0.0)


def test_path_momentum_waypoints():
    r = 0.02 * math.pi
    east = PathSpec(radius=r, orientation="east", epsilon=1e-3)
    west = PathSpec(radius=r, orientation="west", epsilon=1e-3)
    T = east.duration
    assert T == pytest.approx(math.pi / 1e-3)
    s = path_momentum(east, 0.0)
    assert (s.k1, s.k2) == (pytest.approx(0.0, abs=1e-15), pytest.approx(-r))
    n_e = path_momentum(east, T)
    n_w = path_momentum(west, T)
    for n in (n_e, n_w):
        assert (n.k1, n.k2) == (pytest.approx(0.0, abs=1e-12), pytest.approx(r))
    e = path_momentum(east, T / 2)
    assert (e.k1, e.k2) == (pytest.approx(r), pytest.approx(0.0, abs=1e-12))
    w = path_momentum(west, T / 2)
    assert (w.k1, w.k2) == (pytest.approx(-r), pytest.approx(0.0, abs=1e-12))
    with pytest.raises(ValueError):
        path_momentum(east, -1.0)
    with pytest.raises(ValueError):
        path_momentum(east, 1.1 * T)


def test_split_step_matches_matrix_exponential_linear():
    params = ModelParams(B=1.0, g=0.0, p=1.0)
    k = Momentum(0.3, -0.7)
    dt = 1e-3
    state = state_from_xphi(XPhi(0.3, 1.1))
    psi = state.as_array()
    from nldirac.model import hamiltonian

    h = hamiltonian(k, state, params)  # state-independent at g = 0
    u = expm(-1j * h * dt)
    for _ in range(1000):
        state = split_step(state, k, dt, params)
        psi = u @ psi
    np.testing.assert_allclose(state.as_array(), psi, atol=1e-12)


def test_split_step_norm_preserving():
    params = ModelParams(B=1.0, g=3.0, p=1.7)
    k = Momentum(0.1, 0.2)
    state = state_from_xphi(XPhi(-0.2, 0.4))
    for _ in range(100):
        state = split_step(state, k, 1e-2, params)
        assert abs(state.norm_sq - 1.0) < 1e-14


def test_split_step_stationary_second_order():
    params = ModelParams(B=1.0, g=2.5, p=2.0)
    k = Momentum(0.0, 0.02 * math.pi)
    sol = solve_all_x(k, params)[0]
    psi0 = sol.state().as_array()
    t_final = 1.0

    def stationary_error(dt):
        n = int(round(t_final / dt))
        state = BlochState(complex(psi0[0]), complex(psi0[1]))
        for _ in range(n):
            state = split_step(state, k, dt, params)
        expected = np.exp(-1j * sol.energy * (n * dt)) * psi0
        return np.linalg.norm(state.as_array() - expected)

    e1 = stationary_error(4e-2)
    e2 = stationary_error(2e-2)
    assert e1 / e2 == pytest.approx(4.0, rel=0.25)  # global second order


def test_kernel_step_agrees_with_python_wrapper():
    # one million kernel substeps vs an explicit python loop on a short window
    params = ModelParams(B=1.0, g=4.0, p=1.0)
    spec = PathSpec(radius=0.02 * math.pi, epsilon=1e-2, dt=1e-3)
    seed = default_branch_seed(params, spec)
    res = evolve(spec, params, seed, n_samples=4096)
    state = state_from_xphi(XPhi(seed.x, seed.phi))
    n_sub = max(1, math.ceil((spec.duration / 4096) / spec.dt))
    dt = (spec.duration / 4096) / n_sub
    for i in range(4096 * n_sub):
        th = spec.polar_angle((i + 0.5) * dt)
        km = Momentum(spec.radius * math.cos(th), spec.radius * math.sin(th))
        state = split_step(state, km, dt, params)
    np.testing.assert_allclose(
        res.final_state.as_array(), state.as_array(), atol=1e-9
    )


def test_linear_limit_dynamical_correction_vanishes():
    params = ModelParams(B=1.0, g=0.0, p=1.0)
    spec = PathSpec(radius=0.02 * math.pi, epsilon=4e-3, dt=1e-3)
    br, res_e, res_w = ab_phase_detailed(params, spec)
    # the arm difference reduces to the loop's Berry phase alone
    assert abs(br.delta_theta_D) < 5e-3
    assert res_e.overlap_final > 0.9999


def test_numeric_matches_leading_at_small_radius_kerr():
    spec = PathSpec(radius=0.004 * math.pi, epsilon=1e-4, dt=1e-3)
    br, _, _ = ab_phase_detailed(KERR4, spec)
    assert angle_distance(br.theta_AB, math.pi) < 0.05


def test_numeric_matches_leading_at_small_radius_p2():
    params = ModelParams(B=1.0, g=4.0, p=2.0)
    lead = ab_phase_leading(solve_x0(params), params)
    assert lead.theta_AB == pytest.approx(-0.5 * math.pi)
    spec = PathSpec(radius=0.004 * math.pi, epsilon=1e-4, dt=1e-3)
    br, _, _ = ab_phase_detailed(params, spec)
    assert angle_distance(br.theta_AB, lead.theta_AB) < 0.1


def test_deviation_from_leading_halves_with_radius():
    devs = []
    for r, eps in ((0.02 * math.pi, 1e-3), (0.01 * math.pi, 2.5e-4)):
        spec = PathSpec(radius=r, epsilon=eps, dt=1e-3)
        br, _, _ = ab_phase_detailed(KERR4, spec)
        devs.append(angle_distance(br.theta_AB, math.pi))
    assert devs[0] / devs[1] == pytest.approx(2.0, abs=0.5)


def test_numeric_converges_to_fixed_radius_limit():
    r = 0.02 * math.pi
    limit = ab_phase_adiabatic_limit(KERR4, r)
    spec = PathSpec(radius=r, epsilon=2e-3, dt=1e-3, schedule="smooth")
    br, _, _ = ab_phase_detailed(KERR4, spec)
    assert abs(br.theta_AB - limit.theta_AB) < 1e-5
    # and the limit itself sits at theta_B + delta of the continued branch
    assert limit.theta_AB == pytest.approx(-3.2090658, abs=1e-6)


def test_energy_integral_cancels_between_arms():
    spec = PathSpec(radius=0.02 * math.pi, epsilon=4e-3, dt=1e-3)
    _, res_e, res_w = ab_phase_detailed(KERR4, spec)
    assert abs(res_e.energy_integral - res_w.energy_integral) < 1e-9


def test_swapping_orientations_negates_theta_ab():
    spec = PathSpec(radius=0.02 * math.pi, epsilon=8e-3, dt=1e-3)
    seed = default_branch_seed(KERR4, spec)
    res_e = evolve(replace(spec, orientation="east"), KERR4, seed)
    res_w = evolve(replace(spec, orientation="west"), KERR4, seed)
    forward = res_e.theta_total - res_w.theta_total
    swapped = res_w.theta_total - res_e.theta_total
    assert angle_distance(forward, -swapped) < 1e-12


def test_theta_ab_gauge_independent():
    spec = PathSpec(radius=0.02 * math.pi, epsilon=8e-3, dt=1e-3)
    seed = default_branch_seed(KERR4, spec)
    st0 = state_from_xphi(XPhi(seed.x, seed.phi))
    rotated = BlochState(st0.psi1 * cmath.exp(0.7j), st0.psi2 * cmath.exp(0.7j))
    diffs = []
    for ini in (None, rotated):
        res_e = evolve(spec, KERR4, seed, initial_state=ini)
        res_w = evolve(replace(spec, orientation="west"), KERR4, seed, initial_state=ini)
        diffs.append(res_e.theta_total - res_w.theta_total)
    assert abs(diffs[0] - diffs[1]) < 1e-10


def test_overlap_deficit_bounded_by_eps_squared():
    spec = PathSpec(radius=0.02 * math.pi, epsilon=4e-3, dt=1e-3)
    seed = default_branch_seed(KERR4, spec)
    deficits = []
    for eps in (4e-3, 2e-3, 1e-3):
        res = evolve(replace(spec, epsilon=eps), KERR4, seed)
        deficits.append(1.0 - res.overlap_final)
        assert deficits[-1] <= eps * eps
    assert deficits[-1] < deficits[0]


def test_adiabaticity_loss_raises_with_trace():
    spec = PathSpec(radius=0.02 * math.pi, epsilon=0.5, dt=1e-3)
    with pytest.raises(AdiabaticityError) as exc:
        evolve(spec, KERR4)
    assert len(exc.value.trace.overlap) > 10
    assert exc.value.trace.overlap.min() < 0.99


def test_rate_examples():
    lin = ModelParams(B=1.0, g=0.0, p=1.0)
    k = Momentum(0.1, 0.2)
    from nldirac.band import energy_from_x
    from nldirac.model import beta, gamma

    b = beta(k, lin)
    s = math.sqrt(b * b + abs(gamma(k, lin)) ** 2)
    x = b / s
    got = dyn_phase_rate_analytic(x, k, 2.0, lin)
    assert got == pytest.approx(-s - 0.5 * (1.0 - x) * 2.0, rel=1e-12)
    params = ModelParams(B=1.0, g=3.0, p=2.0)
    at0 = dyn_phase_rate_analytic(0.0, k, 5.0, params)
    assert at0 == pytest.approx(-energy_from_x(0.0, k, params) - 0.5 * 5.0, rel=1e-12)


def test_rate_integral_matches_propagated_phase():
    spec = PathSpec(radius=0.02 * math.pi, epsilon=2e-3, dt=1e-3)
    seed = default_branch_seed(KERR4, spec)
    res = evolve(spec, KERR4, seed)
    n = 20001
    ts = np.linspace(0.0, spec.duration, n)
    ths = np.array([spec.polar_angle(t) for t in ts])
    x, phi = continue_branch(KERR4, spec.radius, ths, seed)
    phidot = np.gradient(phi, ts)
    rates = [
        dyn_phase_rate_analytic(
            x[i],
            Momentum(spec.radius * math.cos(ths[i]), spec.radius * math.sin(ths[i])),
            phidot[i],
            KERR4,
        )
        for i in range(n)
    ]
    assert float(np.trapezoid(rates, ts)) == pytest.approx(res.theta_total, abs=0.05)


def test_deviation_check_matches_first_order_formulas():
    spec = PathSpec(radius=0.02 * math.pi, epsilon=1e-3, dt=1e-3, schedule="smooth")
    dev = deviation_check(spec, KERR4, 0.5 * spec.duration)
    assert dev.relative_error < 5e-3
    half = replace(spec, epsilon=0.5e-3)
    dev2 = deviation_check(half, KERR4, 0.5 * half.duration)
    assert dev2.relative_error < 5e-3
    # the deviation amplitude itself is first order in the drive rate
    assert abs(dev2.phi1_ana) == pytest.approx(0.5 * abs(dev.phi1_ana), rel=0.05)


def test_deviation_check_linear_limit():
    lin = ModelParams(B=1.0, g=0.0, p=1.0)
    spec = PathSpec(radius=0.02 * math.pi, epsilon=1e-3, dt=1e-3, schedule="smooth")
    dev = deviation_check(spec, lin, 0.5 * spec.duration)
    assert dev.relative_error < 5e-3


def test_default_seed_picks_cone_sheet():
    spec = PathSpec(radius=0.02 * math.pi)
    seed = default_branch_seed(KERR4, spec)
    cone = solve_x0(KERR4)
    assert abs(seed.x - cone.x0) < 0.05
    assert seed.energy < cone.E0  # lower sheet for g > 0
    neg = ModelParams(B=1.0, g=-4.0, p=1.0)
    seed_n = default_branch_seed(neg, spec)
    cone_n = solve_x0(neg)
    assert abs(seed_n.x - cone_n.x0) < 0.05
    assert seed_n.energy > cone_n.E0  # upper sheet for g < 0


def test_smooth_schedule_keeps_endpoints_and_duration():
    spec = PathSpec(radius=0.01 * math.pi, epsilon=1e-3, schedule="smooth")
    assert spec.polar_angle(0.0) == pytest.approx(-0.5 * math.pi)
    assert spec.polar_angle(spec.duration) == pytest.approx(0.5 * math.pi)
    mid = spec.polar_angle(0.5 * spec.duration)
    assert mid == pytest.approx(0.0, abs=1e-12)
