"""Momentum-space two-band lattice model with a power-law on-site nonlinearity.

The Hamiltonian acting on a normalized two-component Bloch amplitude
``psi = (psi1, psi2)`` is

    H(psi) = J1 sin(k1) s1 + J2 sin(k2) s2 + beta(k1, k2) s3
             + g diag(|psi1|^(2p), |psi2|^(2p)),

with Pauli matrices ``s1, s2, s3``, mass term ``beta = B(-1 + cos k1 + cos k2)``
and off-diagonal coefficient ``gamma = J1 sin k1 - i J2 sin k2``.  Everything
downstream (band solver, phase formulas, time propagation) works in the
``(x, phi)`` chart of the Bloch sphere,

    psi1 = sqrt((1+x)/2),        psi2 = sqrt((1-x)/2) e^{i phi},

with psi1 fixed real and nonnegative.  All functions here are pure.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

TAU = 2.0 * math.pi

__all__ = [
    "TAU",
    "ModelParams",
    "Momentum",
    "BlochState",
    "XPhi",
    "beta",
    "gamma",
    "hamiltonian",
    "state_from_xphi",
    "xphi_from_state",
]


def _wrap_angle(angle: float) -> float:
    """Reduce an angle to the principal interval (-pi, pi], with -pi -> +pi."""
    r = math.remainder(angle, TAU)
    if r <= -math.pi:
        r += TAU
    return r


@dataclass(frozen=True)
class ModelParams:
    """Physical couplings.  B sets the energy unit.

    The default constructor enforces the standard configuration J1 = J2 = B;
    passing J1/J2 explicitly yields the general anisotropic-hopping model.

    B : mass-term energy scale, B > 0
    g : nonlinearity strength (same units as B)
    p : nonlinearity power, p > 0 (p = 1 is the Kerr case)
    """

    B: float = 1.0
    g: float = 0.0
    p: float = 1.0
    J1: float | None = None
    J2: float | None = None

    def __post_init__(self) -> None:
        if not (math.isfinite(self.B) and self.B > 0.0):
            raise ValueError(f"B must be positive and finite, got {self.B}")
        if not (math.isfinite(self.p) and self.p > 0.0):
            raise ValueError(f"p must be positive and finite, got {self.p}")
        if not math.isfinite(self.g):
            raise ValueError(f"g must be finite, got {self.g}")
        if self.J1 is None:
            object.__setattr__(self, "J1", float(self.B))
        if self.J2 is None:
            object.__setattr__(self, "J2", float(self.B))
        if not (math.isfinite(self.J1) and math.isfinite(self.J2)):
            raise ValueError("hopping amplitudes must be finite")


@dataclass(frozen=True)
class Momentum:
    """Quasimomentum (k1, k2), each component reduced to (-pi, pi]."""

    k1: float
    k2: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.k1) and math.isfinite(self.k2)):
            raise ValueError(f"momentum components must be finite, got {(self.k1, self.k2)}")
        object.__setattr__(self, "k1", _wrap_angle(float(self.k1)))
        object.__setattr__(self, "k2", _wrap_angle(float(self.k2)))


@dataclass(frozen=True)
class BlochState:
    """Two complex amplitudes; physical states satisfy |psi1|^2 + |psi2|^2 = 1."""

    psi1: complex
    psi2: complex

    @property
    def norm_sq(self) -> float:
        return abs(self.psi1) ** 2 + abs(self.psi2) ** 2

    def is_normalized(self, tol: float = 1e-12) -> bool:
        return abs(self.norm_sq - 1.0) <= tol

    def as_array(self) -> np.ndarray:
        return np.array([self.psi1, self.psi2], dtype=complex)


@dataclass(frozen=True)
class XPhi:
    """Population imbalance x in [-1, 1] and relative phase phi in (-pi, pi].

    At the poles |x| = 1 the relative phase is meaningless; it is stored as 0
    and ``degenerate`` is set so callers never consume the dummy angle.
    """

    x: float
    phi: float
    degenerate: bool = False

    def __post_init__(self) -> None:
        if not math.isfinite(self.x) or abs(self.x) > 1.0:
            raise ValueError(f"x must lie in [-1, 1], got {self.x}")
        if not math.isfinite(self.phi):
            raise ValueError(f"phi must be finite, got {self.phi}")
        object.__setattr__(self, "phi", _wrap_angle(float(self.phi)))


def beta(k: Momentum, params: ModelParams) -> float:
    """Mass-term coefficient B(-1 + cos k1 + cos k2)."""
    return params.B * (-1.0 + math.cos(k.k1) + math.cos(k.k2))


def gamma(k: Momentum, params: ModelParams) -> complex:
    """Off-diagonal coefficient J1 sin k1 - i J2 sin k2."""
    return complex(params.J1 * math.sin(k.k1), -params.J2 * math.sin(k.k2))


def hamiltonian(k: Momentum, state: BlochState, params: ModelParams) -> np.ndarray:
    """State-dependent 2x2 Hamiltonian matrix (Hermitian by construction).

    The caller is expected to pass a normalized state; no check is performed.
    """
    b = beta(k, params)
    gam = gamma(k, params)
    m1 = abs(state.psi1) ** 2
    m2 = abs(state.psi2) ** 2
    return np.array(
        [
            [b + params.g * m1**params.p, gam],
            [gam.conjugate(), -b + params.g * m2**params.p],
        ],
        dtype=complex,
    )


def state_from_xphi(xp: XPhi) -> BlochState:
    """Build the normalized state with psi1 real and nonnegative."""
    a = math.sqrt(0.5 * (1.0 + xp.x))
    b = math.sqrt(0.5 * (1.0 - xp.x))
    return BlochState(complex(a, 0.0), b * cmath.exp(1j * xp.phi))


def xphi_from_state(state: BlochState, norm_tol: float = 1e-8) -> XPhi:
    """Invert the (x, phi) chart.  Raises on a non-normalized input."""
    nrm = state.norm_sq
    if abs(nrm - 1.0) > norm_tol:
        raise ValueError(f"state is not normalized: |psi|^2 = {nrm}")
    x = abs(state.psi1) ** 2 - abs(state.psi2) ** 2
    x = min(1.0, max(-1.0, x))
    if 1.0 - abs(x) <= 1e-13:
        return XPhi(x=math.copysign(1.0, x), phi=0.0, degenerate=True)
    phi = cmath.phase(state.psi2) - cmath.phase(state.psi1)
    return XPhi(x=x, phi=phi)
