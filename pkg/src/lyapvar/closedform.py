"""Closed-form and asymptotic results: subgroup GLEs, continuum-limit
operator coefficients, white-noise asymptotics, weak-disorder and
concentrated-impurity formulas, the phase-formalism quadratures, and the
single-parameter-scaling diagnostics."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .ensembles import MgfUndefined, ParameterLaw
from .sl2core import (
    JacobianKind,
    RotationVariant,
    Subgroup,
    _GENERATORS,
    g_fun,
    g_prime,
    g_second,
    h_fun,
    h_prime,
)

__all__ = [
    "ZeroDrift",
    "BeyondRadius",
    "NotNormalizable",
    "OutsideAsymptoticRegime",
    "ContinuumSpec",
    "continuum_coefficients",
    "an_gle",
    "ktilde_gle",
    "AnDensity",
    "an_invariant_density",
    "halperin_asymptotic",
    "weak_disorder_fl",
    "concentrated_regime",
    "phase_formalism_estimate",
    "sps_diagnostics",
]

EULER_GAMMA = 0.5772156649015329


class ZeroDrift(ValueError):
    """The AN generalized Lyapunov exponent needs a nonzero drift."""


class BeyondRadius(ValueError):
    """Moment order beyond the convergence radius of the generating function."""


class NotNormalizable(ValueError):
    """The requested stationary density is not normalizable."""


class OutsideAsymptoticRegime(UserWarning):
    """Parameters outside the validity window of an asymptotic formula."""


# ---------------------------------------------------------------------------
# Continuum-limit spectral operator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ContinuumSpec:
    """Means and covariances of (theta, w, u) for matrices near identity."""

    mu: tuple                 # (theta_bar, w_bar, u_bar)
    cov: tuple                # 3x3 covariance, row tuples
    variant: RotationVariant = RotationVariant.COMPACT
    kind: JacobianKind = JacobianKind.N

    def __post_init__(self):
        c = np.asarray(self.cov, dtype=float)
        if c.shape != (3, 3) or not np.allclose(c, c.T):
            raise ValueError("covariance must be symmetric 3x3")
        eigs = np.linalg.eigvalsh(c)
        if np.min(eigs) < -1e-12 * max(np.max(np.abs(eigs)), 1.0):
            raise ValueError("covariance must be positive semi-definite")


def _basis(variant: RotationVariant):
    first = Subgroup.K if variant is RotationVariant.COMPACT else Subgroup.KTILDE
    return (first, Subgroup.A, Subgroup.N)


def continuum_coefficients(spec: ContinuumSpec, q: float, z: float):
    """Coefficients (a2, a1, a0) of the continuum transfer operator at z.

    The operator a2 d^2/dz^2 + a1 d/dz + a0, acting on the right
    eigenvector, has the rescaled cumulant generating function as its
    leading eigenvalue.
    """
    basis = _basis(spec.variant)
    kind = spec.kind
    mu = np.asarray(spec.mu, dtype=float)
    cov = np.asarray(spec.cov, dtype=float)

    g = np.array([g_fun(s, z) for s in basis])
    gp = np.array([g_prime(s, z) for s in basis])
    gpp = np.array([g_second(s, z) for s in basis])
    h = np.array([h_fun(kind, s, z) for s in basis])
    hp = np.array([h_prime(kind, s, z) for s in basis])

    g_s_g = g @ cov @ g
    g_s_gp = g @ cov @ gp
    g_s_h = g @ cov @ h
    h_s_gp = h @ cov @ gp
    h_s_h = h @ cov @ h
    # derivatives of the contracted products, assembled analytically
    d_g_s_gp = gp @ cov @ gp + g @ cov @ gpp
    d_g_s_h = gp @ cov @ h + g @ cov @ hp

    w_sigma = 0.0
    dw_sigma = 0.0
    c_gh = 0.0
    for i in range(3):
        for j in range(i + 1, 3):
            sij = cov[i, j]
            if sij == 0.0:
                continue
            w_sigma += sij * (g[i] * gp[j] - gp[i] * g[j])
            dw_sigma += sij * (g[i] * gpp[j] - gpp[i] * g[j])
            c_gh += sij * (g[i] * hp[j] - hp[i] * g[j])

    a2 = 0.5 * g_s_g
    a1 = 1.5 * g_s_gp + q * g_s_h + 0.5 * w_sigma + mu @ g
    a0 = (0.5 * d_g_s_gp + 0.5 * dw_sigma + mu @ gp
          + 0.5 * q * (d_g_s_h + h_s_gp + c_gh) + q * (mu @ h)
          + 0.5 * q * q * h_s_h)
    return float(a2), float(a1), float(a0)


# ---------------------------------------------------------------------------
# Subgroup generalized Lyapunov exponents
# ---------------------------------------------------------------------------

def an_gle(w_law: ParameterLaw, q: float) -> float:
    """GLE of A(w)N(u) products: ln<exp(+-q w)>, sign that of the drift.

    Independent of the shear randomness; exact beyond the continuum limit.
    """
    wbar = w_law.mean()
    if wbar == 0.0:
        raise ZeroDrift("the AN formula needs a nonzero mean for w")
    sign = 1.0 if wbar > 0 else -1.0
    return math.log(w_law.mgf(sign * q))


def ktilde_gle(k: float, rho: float, q: float) -> float:
    """GLE of the boost subgroup with exponential angles: -ln(1 - q k/rho)."""
    if q >= rho / k:
        raise BeyondRadius(f"moment diverges for q >= rho/k = {rho / k}")
    return -math.log(1.0 - q * k / rho)


# ---------------------------------------------------------------------------
# AN stationary density
# ---------------------------------------------------------------------------

class AnDensity:
    """Stationary density (1+z^2)^(-1/2+2 wbar) exp(2 ubar arctan z) / Z."""

    def __init__(self, wbar: float, ubar: float = 0.0):
        if wbar >= 0.0:
            raise NotNormalizable("normalizable only for wbar < 0")
        self.wbar = wbar
        self.ubar = ubar
        # integrate in the angle variable: dz/(1+z^2) = dtheta
        expo = -1.0 - 4.0 * wbar

        def theta_integrand(t):
            return math.cos(t) ** expo * math.exp(2.0 * ubar * t)

        z_norm, _ = quad(theta_integrand, -0.5 * math.pi, 0.5 * math.pi, limit=200)
        self.norm = 1.0 / z_norm

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        val = self.norm * (1.0 + z * z) ** (-0.5 + 2.0 * self.wbar) * np.exp(
            2.0 * self.ubar * np.arctan(z))
        return float(val) if val.shape == () else val

    def cdf(self, z: float) -> float:
        expo = -1.0 - 4.0 * self.wbar

        def theta_integrand(t):
            return math.cos(t) ** expo * math.exp(2.0 * self.ubar * t)

        val, _ = quad(theta_integrand, -0.5 * math.pi, math.atan(z), limit=200)
        return self.norm * val


def an_invariant_density(wbar: float, ubar: float, z) -> float:
    """Pointwise normalized AN stationary density."""
    return AnDensity(wbar, ubar)(z)


# ---------------------------------------------------------------------------
# Asymptotic regimes of the Schrodinger chains
# ---------------------------------------------------------------------------

def halperin_asymptotic(E: float, sigma: float):
    """(gamma1, gamma2) of the white-noise model for |E| >> sigma^(2/3)."""
    if abs(E) < 3.0 * sigma ** (2.0 / 3.0):
        warnings.warn("asymptotic formulas need |E| >> sigma^(2/3)",
                      OutsideAsymptoticRegime, stacklevel=2)
    if E > 0:
        g = sigma / (8.0 * E)
        return g, g
    return math.sqrt(-E) + sigma / (8.0 * E), sigma / (4.0 * (-E))


def weak_disorder_fl(E: float, rho: float, m2: float):
    """Perturbative regime: gamma1 = gamma2 = rho <v^2> / (8E)."""
    g = rho * m2 / (8.0 * E)
    return g, g


def concentrated_regime(rho: float, vbar: float, k: float):
    """Strong exponential weights, rho << k << vbar."""
    if not (3.0 * rho <= k and 3.0 * k <= vbar):
        warnings.warn("outside the window rho << k << vbar",
                      OutsideAsymptoticRegime, stacklevel=2)
    core = math.log(vbar * math.exp(-EULER_GAMMA) / (2.0 * k))
    return rho * core, rho * (0.25 * math.pi ** 2 + core * core)


# ---------------------------------------------------------------------------
# Phase formalism
# ---------------------------------------------------------------------------

def _weight_nodes(law: ParameterLaw, n: int = 160):
    """Quadrature nodes/weights for averaging over the impurity weight."""
    if law.name == "dirac":
        return np.array([law.params[0]]), np.array([1.0])
    if law.name == "two_point":
        v1, p1, v2 = law.params
        return np.array([v1, v2]), np.array([p1, 1.0 - p1])
    if law.name == "exponential":
        x, w = np.polynomial.laguerre.laggauss(n)
        return law.params[0] * x, w
    if law.name == "gaussian":
        m, var = law.params
        x, w = np.polynomial.hermite.hermgauss(n)
        return m + math.sqrt(2.0 * var) * x, w / math.sqrt(math.pi)
    raise ValueError(law.name)


def phase_formalism_estimate(rho: float, v_law: ParameterLaw, k: float,
                             energy_sign: int = +1):
    """(gamma1, gamma2) from per-impurity log-amplitude increments.

    Positive energy: increments averaged over a uniform phase (valid for
    k >> rho); negative energy: locked-phase expansion.
    """
    if energy_sign < 0:
        m1, m2 = v_law.moment(1), v_law.moment(2)
        return math.sqrt(k * k + rho * m1), rho * m2 / (4.0 * k * k)
    vs, vw = _weight_nodes(v_law)
    theta = (np.arange(16384) + 0.5) * math.pi / 16384
    s2t = np.sin(2.0 * theta)
    st2 = np.sin(theta) ** 2
    vcol = (vs / k)[:, None]
    inc = 0.5 * np.log1p(vcol * s2t[None, :] + vcol * vcol * st2[None, :])
    mean_inc = float(vw @ np.mean(inc, axis=1))
    second_inc = float(vw @ np.mean(inc * inc, axis=1))
    return rho * mean_inc, rho * second_inc


def sps_diagnostics(gamma1: float, gamma2: float, idos: float):
    """(gamma2/gamma1, pi N / gamma1): SPS ratio and the Deych parameter."""
    if gamma1 <= 0:
        raise ValueError("gamma1 must be positive")
    return gamma2 / gamma1, math.pi * idos / gamma1
