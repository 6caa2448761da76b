"""Compiled inner loops: split-step propagation and eigen-branch continuation.

Kept free of Python objects so numba can compile them once (cached on disk)
and release the GIL; the public wrappers live in ``dynamics``.  Formulas are
duplicated from the pure-Python modules on purpose and cross-checked by the
test suite.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

# error codes reported through the scalar output vector
ERR_OK = 0.0
ERR_BRACKET = 1.0
ERR_BOUNDARY = 2.0

# scalar output layout of evolve_kernel
OUT_THETA = 0
OUT_EINT = 1
OUT_PSI1_RE = 2
OUT_PSI1_IM = 3
OUT_PSI2_RE = 4
OUT_PSI2_IM = 5
OUT_OVERLAP = 6
OUT_ERR = 7
OUT_ERR_INDEX = 8
OUT_MIN_OVERLAP = 9
OUT_MAX_NORM_DEV = 10
OUT_MAX_DTHETA = 11
OUT_X_FINAL = 12
OUT_PHI_FINAL = 13
OUT_SIZE = 14

REC_COLS = 8  # t, k1, k2, x, phi, theta, norm, overlap


@njit(cache=True, nogil=True)
def _brace(x, b, g, p):
    up = 0.5 * (1.0 + x)
    if up < 0.0:
        up = 0.0
    vp = 0.5 * (1.0 - x)
    if vp < 0.0:
        vp = 0.0
    return b + 0.5 * g * (up**p - vp**p)


@njit(cache=True, nogil=True)
def _poly_f(x, b, g2, g, p):
    br = _brace(x, b, g, p)
    return (1.0 - x * x) * br * br - x * x * g2


@njit(cache=True, nogil=True)
def _polish_root(x_prev, b, g2, g, p):
    """Nearest root of the pole-free scalar equation, by safeguarded bisection.

    Expands a bracket around x_prev (clamped to [-1, 1]); the expansion stays
    far below the spacing of neighbouring roots for the step sizes used by the
    continuation, so the nearest root is always the one followed.
    Returns (root, ok).
    """
    w = 1e-6
    lo = x_prev - w
    hi = x_prev + w
    if lo < -1.0:
        lo = -1.0
    if hi > 1.0:
        hi = 1.0
    flo = _poly_f(lo, b, g2, g, p)
    fhi = _poly_f(hi, b, g2, g, p)
    n_expand = 0
    while flo * fhi > 0.0:
        n_expand += 1
        if n_expand > 24:
            return x_prev, False
        w *= 2.0
        lo = x_prev - w
        hi = x_prev + w
        if lo < -1.0:
            lo = -1.0
        if hi > 1.0:
            hi = 1.0
        flo = _poly_f(lo, b, g2, g, p)
        fhi = _poly_f(hi, b, g2, g, p)
    if flo == 0.0:
        return lo, True
    if fhi == 0.0:
        return hi, True
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        fm = _poly_f(mid, b, g2, g, p)
        if fm == 0.0:
            return mid, True
        if flo * fm < 0.0:
            hi = mid
        else:
            lo = mid
            flo = fm
        if hi - lo < 1e-15:
            break
    return 0.5 * (lo + hi), True


@njit(cache=True, nogil=True)
def _path_theta(t, T, theta0, direction, schedule_flag):
    """Polar angle along the half-circle; span pi over duration T."""
    tau = t / T
    if schedule_flag == 1:
        s = tau - math.sin(2.0 * math.pi * tau) / (2.0 * math.pi)
    else:
        s = tau
    return theta0 + direction * math.pi * s


@njit(cache=True, nogil=True)
def _phi_of_sample(k1, k2, J1, J2, sheet_sign, phi_prev, first):
    """Gauge angle -arg(gamma) (+pi on the negative sheet), unwrapped."""
    arg_gamma = math.atan2(-J2 * math.sin(k2), J1 * math.sin(k1))
    phi_raw = -arg_gamma
    if sheet_sign < 0.0:
        phi_raw += math.pi
    if first:
        return phi_raw
    # shift by the multiple of 2 pi that keeps continuity with phi_prev
    d = phi_raw - phi_prev
    d -= 2.0 * math.pi * round(d / (2.0 * math.pi))
    return phi_prev + d


@njit(cache=True, nogil=True)
def _strang_step(psi1, psi2, k1, k2, dt, B, J1, J2, g, p):
    """One symmetric split step: half nonlinear, full linear, half nonlinear."""
    # exact nonlinear half step: pure phases, moduli conserved
    half = 0.5 * dt * g
    m1 = psi1.real * psi1.real + psi1.imag * psi1.imag
    m2 = psi2.real * psi2.real + psi2.imag * psi2.imag
    ph1 = half * m1**p
    ph2 = half * m2**p
    psi1 = psi1 * complex(math.cos(ph1), -math.sin(ph1))
    psi2 = psi2 * complex(math.cos(ph2), -math.sin(ph2))
    # exact linear full step: exp(-i h.sigma dt) in closed form
    h1 = J1 * math.sin(k1)
    h2 = J2 * math.sin(k2)
    h3 = B * (-1.0 + math.cos(k1) + math.cos(k2))
    hn = math.sqrt(h1 * h1 + h2 * h2 + h3 * h3)
    c = math.cos(hn * dt)
    if hn > 1e-300:
        s = math.sin(hn * dt) / hn
    else:
        s = dt
    a1 = c * psi1 - 1j * s * (h3 * psi1 + complex(h1, -h2) * psi2)
    a2 = c * psi2 - 1j * s * (complex(h1, h2) * psi1 - h3 * psi2)
    psi1, psi2 = a1, a2
    # second nonlinear half step
    m1 = psi1.real * psi1.real + psi1.imag * psi1.imag
    m2 = psi2.real * psi2.real + psi2.imag * psi2.imag
    ph1 = half * m1**p
    ph2 = half * m2**p
    psi1 = psi1 * complex(math.cos(ph1), -math.sin(ph1))
    psi2 = psi2 * complex(math.cos(ph2), -math.sin(ph2))
    return psi1, psi2


@njit(cache=True, nogil=True)
def march_branch(thetas, radius, B, J1, J2, g, p, x_seed, sheet_sign, x_out, phi_out):
    """Continue the eigen-branch along polar angles; fills x and unwrapped phi.

    Returns the index of the first failed continuation, or -1 on success.
    """
    x = x_seed
    phi = 0.0
    for i in range(thetas.shape[0]):
        th = thetas[i]
        k1 = radius * math.cos(th)
        k2 = radius * math.sin(th)
        b = B * (-1.0 + math.cos(k1) + math.cos(k2))
        sk1 = J1 * math.sin(k1)
        sk2 = J2 * math.sin(k2)
        g2 = sk1 * sk1 + sk2 * sk2
        x, ok = _polish_root(x, b, g2, g, p)
        if not ok:
            return i
        if 1.0 - abs(x) < 1e-12:
            return i
        phi = _phi_of_sample(k1, k2, J1, J2, sheet_sign, phi, i == 0)
        x_out[i] = x
        phi_out[i] = phi
    return -1


@njit(cache=True, nogil=True)
def evolve_kernel(
    psi1_init,
    psi2_init,
    radius,
    theta0,
    direction,
    schedule_flag,
    T,
    n_samples,
    n_stop,
    substeps,
    B,
    J1,
    J2,
    g,
    p,
    x_seed,
    sheet_sign,
    stride,
    rec,
    out,
):
    """Propagate along the path to sample n_stop, tracking the overall phase.

    The instantaneous eigen-branch is continued on the fly; at every sample
    boundary the phase increment of the overlap with the instantaneous state
    is accumulated (unwrapped).  Every ``stride``-th sample (plus the last) is
    written to ``rec``; scalar results land in ``out``.
    """
    dt_sample = T / n_samples
    dt = dt_sample / substeps
    psi1 = psi1_init
    psi2 = psi2_init

    theta_acc = 0.0
    theta_c = 0.0  # Kahan compensation: totals reach O(1/epsilon) radians
    e_int = 0.0
    e_c = 0.0
    o_prev_re = 0.0
    o_prev_im = 0.0
    e_prev = 0.0
    min_overlap = 2.0
    max_norm_dev = 0.0
    max_dtheta = 0.0
    x = x_seed
    phi = 0.0
    rec_i = 0
    out[OUT_ERR] = ERR_OK
    out[OUT_ERR_INDEX] = -1.0

    for i in range(n_stop + 1):
        t_i = i * dt_sample
        th = _path_theta(t_i, T, theta0, direction, schedule_flag)
        k1 = radius * math.cos(th)
        k2 = radius * math.sin(th)
        b = B * (-1.0 + math.cos(k1) + math.cos(k2))
        sk1 = J1 * math.sin(k1)
        sk2 = J2 * math.sin(k2)
        g2 = sk1 * sk1 + sk2 * sk2

        x, ok = _polish_root(x, b, g2, g, p)
        if not ok:
            out[OUT_ERR] = ERR_BRACKET
            out[OUT_ERR_INDEX] = i
            break
        if 1.0 - abs(x) < 1e-12:
            out[OUT_ERR] = ERR_BOUNDARY
            out[OUT_ERR_INDEX] = i
            break
        phi = _phi_of_sample(k1, k2, J1, J2, sheet_sign, phi, i == 0)

        # instantaneous eigenstate in the fixed gauge
        a = math.sqrt(0.5 * (1.0 + x))
        bb = math.sqrt(0.5 * (1.0 - x))
        inst2_conj = bb * complex(math.cos(phi), -math.sin(phi))
        o = a * psi1 + inst2_conj * psi2
        o_abs2 = o.real * o.real + o.imag * o.imag
        if i == 0:
            dtheta = math.atan2(o.imag, o.real)
        else:
            cross_re = o.real * o_prev_re + o.imag * o_prev_im
            cross_im = o.imag * o_prev_re - o.real * o_prev_im
            dtheta = math.atan2(cross_im, cross_re)
        y = dtheta - theta_c
        t_new = theta_acc + y
        theta_c = (t_new - theta_acc) - y
        theta_acc = t_new
        if abs(dtheta) > max_dtheta:
            max_dtheta = abs(dtheta)
        o_prev_re = o.real
        o_prev_im = o.imag
        if o_abs2 < min_overlap:
            min_overlap = o_abs2

        # instantaneous eigenenergy on the branch (trapezoid accumulation)
        up1 = (0.5 * (1.0 + x)) ** (p + 1.0)
        vp1 = (0.5 * (1.0 - x)) ** (p + 1.0)
        e_inst = (b + g * (up1 - vp1)) / x
        if i > 0:
            y = 0.5 * (e_prev + e_inst) * dt_sample - e_c
            t_new = e_int + y
            e_c = (t_new - e_int) - y
            e_int = t_new
        e_prev = e_inst

        nrm = (
            psi1.real * psi1.real
            + psi1.imag * psi1.imag
            + psi2.real * psi2.real
            + psi2.imag * psi2.imag
        )
        dev = abs(nrm - 1.0)
        if dev > max_norm_dev:
            max_norm_dev = dev

        if i % stride == 0 or i == n_stop:
            m1 = psi1.real * psi1.real + psi1.imag * psi1.imag
            m2 = psi2.real * psi2.real + psi2.imag * psi2.imag
            x_psi = (m1 - m2) / nrm
            cr = psi2.real * psi1.real + psi2.imag * psi1.imag
            ci = psi2.imag * psi1.real - psi2.real * psi1.imag
            phi_psi = math.atan2(ci, cr)
            rec[rec_i, 0] = t_i
            rec[rec_i, 1] = k1
            rec[rec_i, 2] = k2
            rec[rec_i, 3] = x_psi
            rec[rec_i, 4] = phi_psi
            rec[rec_i, 5] = theta_acc
            rec[rec_i, 6] = nrm
            rec[rec_i, 7] = o_abs2
            rec_i += 1

        if i == n_stop:
            out[OUT_OVERLAP] = o_abs2
            break

        # integrate to the next sample boundary, momentum at substep midpoints
        for j in range(substeps):
            t_mid = t_i + (j + 0.5) * dt
            thm = _path_theta(t_mid, T, theta0, direction, schedule_flag)
            km1 = radius * math.cos(thm)
            km2 = radius * math.sin(thm)
            psi1, psi2 = _strang_step(psi1, psi2, km1, km2, dt, B, J1, J2, g, p)

    out[OUT_THETA] = theta_acc
    out[OUT_EINT] = e_int
    out[OUT_PSI1_RE] = psi1.real
    out[OUT_PSI1_IM] = psi1.imag
    out[OUT_PSI2_RE] = psi2.real
    out[OUT_PSI2_IM] = psi2.imag
    out[OUT_MIN_OVERLAP] = min_overlap
    out[OUT_MAX_NORM_DEV] = max_norm_dev
    out[OUT_MAX_DTHETA] = max_dtheta
    out[OUT_X_FINAL] = x
    out[OUT_PHI_FINAL] = phi
    return rec_i
