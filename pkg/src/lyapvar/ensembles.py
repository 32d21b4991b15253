"""Probability laws for matrix parameters and the associated Levy exponents.

A MatrixEnsemble draws i.i.d. SL(2,R) matrices K(theta)A(w)N(u) (or the
hyperbolic variant); a LevyModel describes the integrated impurity potential
of the corresponding Schrodinger problem.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .sl2core import IwasawaParams, RotationVariant, SlMatrix, compose_iwasawa

__all__ = [
    "UnsupportedLaw",
    "DivergentTransform",
    "MgfUndefined",
    "ParameterLaw",
    "MatrixEnsemble",
    "LevyModel",
    "CompoundPoisson",
    "GaussianWhiteNoise",
    "levy_exponent",
    "weight_laplace",
    "sample_matrix",
    "frisch_lloyd_ensemble",
    "ktilde_subgroup_ensemble",
    "ktilde_a_ensemble",
    "an_subgroup_ensemble",
    "identity_ensemble",
    "law_from_config",
    "ensemble_from_config",
]


class UnsupportedLaw(ValueError):
    """Weight law without the closed-form transform required here."""


class DivergentTransform(ArithmeticError):
    """Laplace/moment transform undefined at the requested argument."""


class MgfUndefined(DivergentTransform):
    """Moment generating function does not exist at the requested point."""


@dataclass(frozen=True)
class ParameterLaw:
    """Scalar law: Dirac, Exponential, Gaussian or TwoPoint."""

    name: str
    params: tuple

    # -- constructors -------------------------------------------------
    @staticmethod
    def dirac(value: float) -> "ParameterLaw":
        return ParameterLaw("dirac", (float(value),))

    @staticmethod
    def exponential(mean: float) -> "ParameterLaw":
        if mean <= 0:
            raise ValueError("exponential law needs mean > 0")
        return ParameterLaw("exponential", (float(mean),))

    @staticmethod
    def gaussian(mean: float, variance: float) -> "ParameterLaw":
        if variance < 0:
            raise ValueError("variance must be >= 0")
        return ParameterLaw("gaussian", (float(mean), float(variance)))

    @staticmethod
    def two_point(v1: float, p1: float, v2: float) -> "ParameterLaw":
        if not 0.0 <= p1 <= 1.0:
            raise ValueError("p1 must lie in [0,1]")
        return ParameterLaw("two_point", (float(v1), float(p1), float(v2)))

    # -- moments ------------------------------------------------------
    def mean(self) -> float:
        return self.moment(1)

    def variance(self) -> float:
        return self.moment(2) - self.moment(1) ** 2

    def moment(self, n: int) -> float:
        """Raw moment <v^n> for n up to 4."""
        if self.name == "dirac":
            return self.params[0] ** n
        if self.name == "exponential":
            return math.factorial(n) * self.params[0] ** n
        if self.name == "gaussian":
            m, var = self.params
            if n == 1:
                return m
            if n == 2:
                return m * m + var
            if n == 3:
                return m ** 3 + 3 * m * var
            if n == 4:
                return m ** 4 + 6 * m * m * var + 3 * var * var
        if self.name == "two_point":
            v1, p1, v2 = self.params
            return p1 * v1 ** n + (1 - p1) * v2 ** n
        raise UnsupportedLaw(self.name)

    # -- transforms ---------------------------------------------------
    def fourier(self, s):
        """<exp(-i s v)>; accepts scalars or arrays."""
        if self.name == "dirac":
            return np.exp(-1j * s * self.params[0])
        if self.name == "exponential":
            return 1.0 / (1.0 + 1j * s * self.params[0])
        if self.name == "gaussian":
            m, var = self.params
            return np.exp(-1j * s * m - 0.5 * var * np.asarray(s) ** 2 + 0j)
        if self.name == "two_point":
            v1, p1, v2 = self.params
            return p1 * np.exp(-1j * s * v1) + (1 - p1) * np.exp(-1j * s * v2)
        raise UnsupportedLaw(self.name)

    def mgf(self, t: float) -> float:
        """<exp(t v)>, raising MgfUndefined outside the existence window."""
        if self.name == "dirac":
            return math.exp(t * self.params[0])
        if self.name == "exponential":
            vbar = self.params[0]
            if t * vbar >= 1.0:
                raise MgfUndefined(f"exponential MGF diverges for t >= 1/mean={1/vbar}")
            return 1.0 / (1.0 - t * vbar)
        if self.name == "gaussian":
            m, var = self.params
            return math.exp(t * m + 0.5 * var * t * t)
        if self.name == "two_point":
            v1, p1, v2 = self.params
            return p1 * math.exp(t * v1) + (1 - p1) * math.exp(t * v2)
        raise UnsupportedLaw(self.name)

    def mgf_window(self) -> tuple:
        """Open interval of t where the MGF exists."""
        if self.name == "exponential":
            return (-math.inf, 1.0 / self.params[0])
        return (-math.inf, math.inf)

    def laplace(self, r: float) -> float:
        """<exp(-r v)> = mgf(-r), with the divergence reported per contract."""
        try:
            return self.mgf(-r)
        except MgfUndefined as exc:
            raise DivergentTransform(str(exc)) from exc

    def laplace_arr(self, r):
        """Vectorized <exp(-r v)> for r >= 0 (no domain checks)."""
        r = np.asarray(r, dtype=float)
        if self.name == "dirac":
            return np.exp(-r * self.params[0])
        if self.name == "exponential":
            return 1.0 / (1.0 + self.params[0] * r)
        if self.name == "gaussian":
            m, var = self.params
            return np.exp(-r * m + 0.5 * var * r * r)
        v1, p1, v2 = self.params
        return p1 * np.exp(-r * v1) + (1 - p1) * np.exp(-r * v2)

    def is_nonnegative(self) -> bool:
        if self.name == "dirac":
            return self.params[0] >= 0.0
        if self.name == "exponential":
            return True
        if self.name == "gaussian":
            return self.params[1] == 0.0 and self.params[0] >= 0.0
        v1, _, v2 = self.params
        return v1 >= 0.0 and v2 >= 0.0

    def has_density(self) -> bool:
        return self.name in ("exponential", "gaussian") and (
            self.name == "exponential" or self.params[1] > 0.0
        )

    def scaled(self, factor: float) -> "ParameterLaw":
        """Law of factor * v."""
        if self.name == "dirac":
            return ParameterLaw.dirac(self.params[0] * factor)
        if self.name == "exponential":
            if factor <= 0:
                raise ValueError("exponential law only scales by positive factors")
            return ParameterLaw.exponential(self.params[0] * factor)
        if self.name == "gaussian":
            m, var = self.params
            return ParameterLaw.gaussian(m * factor, var * factor * factor)
        v1, p1, v2 = self.params
        return ParameterLaw.two_point(v1 * factor, p1, v2 * factor)

    # -- sampling -----------------------------------------------------
    def sample(self, rng: np.random.Generator, size=None):
        if self.name == "dirac":
            v = self.params[0]
            return v if size is None else np.full(size, v)
        if self.name == "exponential":
            return rng.exponential(self.params[0], size)
        if self.name == "gaussian":
            m, var = self.params
            return rng.normal(m, math.sqrt(var), size)
        v1, p1, v2 = self.params
        pick = rng.random(size) < p1
        return np.where(pick, v1, v2)


# ---------------------------------------------------------------------------
# Matrix ensembles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MatrixEnsemble:
    """i.i.d. law over SL(2,R) in Iwasawa coordinates.

    theta_law/w_law/u_law are the laws of the matrix parameters themselves
    (theta_n = k ell_n and u_n = v_n / k are already folded in by the
    factory helpers below); k and rho keep the physical units around.
    """

    theta_law: ParameterLaw
    w_law: ParameterLaw
    u_law: ParameterLaw
    variant: RotationVariant = RotationVariant.COMPACT
    k: float = 1.0
    rho: float = 1.0

    def sample_params(self, rng: np.random.Generator, size=None):
        theta = self.theta_law.sample(rng, size)
        w = self.w_law.sample(rng, size)
        u = self.u_law.sample(rng, size)
        return theta, w, u


def sample_matrix(e: MatrixEnsemble, rng: np.random.Generator):
    """One draw: returns (SlMatrix, IwasawaParams)."""
    theta, w, u = e.sample_params(rng)
    p = IwasawaParams(float(theta), float(w), float(u), e.variant)
    return compose_iwasawa(p), p


def frisch_lloyd_ensemble(k: float, rho: float, weight_law: ParameterLaw,
                          energy_sign: int = +1) -> MatrixEnsemble:
    """Delta impurities with Poisson positions: K(k*ell) N(v/k) matrices.

    energy_sign=+1 is E=+k^2 (rotations), -1 is E=-k^2 (boosts).
    """
    variant = RotationVariant.COMPACT if energy_sign > 0 else RotationVariant.HYPERBOLIC
    return MatrixEnsemble(
        theta_law=ParameterLaw.exponential(k / rho),
        w_law=ParameterLaw.dirac(0.0),
        u_law=weight_law.scaled(1.0 / k),
        variant=variant,
        k=k,
        rho=rho,
    )


def ktilde_subgroup_ensemble(k: float, rho: float) -> MatrixEnsemble:
    """Pure boosts Ktilde(theta) with exponential angles (free E<0 chain)."""
    return frisch_lloyd_ensemble(k, rho, ParameterLaw.dirac(0.0), energy_sign=-1)


def ktilde_a_ensemble(k: float, rho: float, w_law: ParameterLaw) -> MatrixEnsemble:
    """Ktilde(k*ell) A(w) matrices (random-mass / supersymmetric chain)."""
    return MatrixEnsemble(
        theta_law=ParameterLaw.exponential(k / rho),
        w_law=w_law,
        u_law=ParameterLaw.dirac(0.0),
        variant=RotationVariant.HYPERBOLIC,
        k=k,
        rho=rho,
    )


def an_subgroup_ensemble(w_law: ParameterLaw, u_law: ParameterLaw) -> MatrixEnsemble:
    """A(w) N(u) matrices (upper-triangular two parameter subgroup)."""
    return MatrixEnsemble(
        theta_law=ParameterLaw.dirac(0.0),
        w_law=w_law,
        u_law=u_law,
        variant=RotationVariant.COMPACT,
        k=1.0,
        rho=1.0,
    )


def identity_ensemble() -> MatrixEnsemble:
    return MatrixEnsemble(
        theta_law=ParameterLaw.dirac(0.0),
        w_law=ParameterLaw.dirac(0.0),
        u_law=ParameterLaw.dirac(0.0),
    )


# ---------------------------------------------------------------------------
# Levy models
# ---------------------------------------------------------------------------

class LevyModel:
    """Levy exponent L(s) of the integrated potential Y(x)."""

    def exponent(self, s):
        raise NotImplementedError

    def exponent_over_is(self, s):
        """L(s)/(i s), continued through s=0 by its finite limit."""
        raise NotImplementedError

    def laplace_coefficient(self, r):
        """L(-i r)/r, real, continued through r=0."""
        raise NotImplementedError


@dataclass(frozen=True)
class CompoundPoisson(LevyModel):
    """Jumps v ~ weight_law at Poisson rate rho: L(s) = rho (1 - p_hat(s))."""

    rho: float
    weight_law: ParameterLaw

    def exponent(self, s):
        return self.rho * (1.0 - self.weight_law.fourier(s))

    def exponent_over_is(self, s):
        s_in = np.asarray(s, dtype=float)
        s1 = np.atleast_1d(s_in).astype(float)
        out = np.empty(s1.shape, dtype=complex)
        small = np.abs(s1) < 1e-6
        big = ~small
        if np.any(big):
            sb = s1[big]
            out[big] = self.rho * (1.0 - self.weight_law.fourier(sb)) / (1j * sb)
        if np.any(small):
            ss = s1[small]
            m1 = self.weight_law.moment(1)
            m2 = self.weight_law.moment(2)
            m3 = self.weight_law.moment(3)
            out[small] = self.rho * (m1 - 0.5j * ss * m2 - ss * ss * m3 / 6.0)
        if s_in.shape == ():
            return complex(out[0])
        return out

    def laplace_coefficient(self, r):
        r_in = np.asarray(r, dtype=float)
        r1 = np.atleast_1d(r_in).astype(float)
        out = np.empty(r1.shape, dtype=float)
        small = np.abs(r1) < 1e-6
        big = ~small
        if np.any(big):
            rb = r1[big]
            out[big] = self.rho * (1.0 - self.weight_law.laplace_arr(rb)) / rb
        if np.any(small):
            rs = r1[small]
            m1 = self.weight_law.moment(1)
            m2 = self.weight_law.moment(2)
            m3 = self.weight_law.moment(3)
            out[small] = self.rho * (m1 - 0.5 * rs * m2 + rs * rs * m3 / 6.0)
        if r_in.shape == ():
            return float(out[0])
        return out

    def tail_exponent(self) -> float:
        """lim L(s) for s->inf in the mean sense (rho for genuine jumps)."""
        return self.rho


@dataclass(frozen=True)
class GaussianWhiteNoise(LevyModel):
    """White-noise potential <V V'> = sigma delta: L(s) = sigma s^2 / 2."""

    sigma: float

    def exponent(self, s):
        return 0.5 * self.sigma * np.asarray(s) ** 2 + 0j

    def exponent_over_is(self, s):
        out = -0.5j * self.sigma * np.asarray(s, dtype=float) + 0.0
        return complex(out) if out.shape == () else out

    def laplace_coefficient(self, r):
        out = -0.5 * self.sigma * np.asarray(r, dtype=float)
        return float(out) if out.shape == () else out


def levy_exponent(m: LevyModel, s) -> complex:
    """L(s); conjugation-symmetric, L(0)=0."""
    val = m.exponent(s)
    return complex(val) if np.isscalar(s) or np.asarray(s).shape == () else val


def weight_laplace(m: LevyModel, r: float) -> float:
    """<exp(-r v)> of the jump law for r >= 0 (compound Poisson only)."""
    if isinstance(m, CompoundPoisson):
        return m.weight_law.laplace(r)
    raise UnsupportedLaw("weight Laplace transform requires a compound Poisson model")


# ---------------------------------------------------------------------------
# Config parsing (structured text / dict form)
# ---------------------------------------------------------------------------

def law_from_config(cfg) -> ParameterLaw:
    """Law from {"name": ..., parameters...}; see README for the schema."""
    if isinstance(cfg, (int, float)):
        return ParameterLaw.dirac(float(cfg))
    name = cfg["name"].lower()
    if name == "dirac":
        return ParameterLaw.dirac(cfg["value"])
    if name == "exponential":
        return ParameterLaw.exponential(cfg["mean"])
    if name == "gaussian":
        return ParameterLaw.gaussian(cfg["mean"], cfg["variance"])
    if name in ("two_point", "twopoint"):
        return ParameterLaw.two_point(cfg["v1"], cfg["p1"], cfg["v2"])
    raise UnsupportedLaw(name)


def ensemble_from_config(cfg: dict) -> MatrixEnsemble:
    variant = RotationVariant(cfg.get("variant", "compact"))
    return MatrixEnsemble(
        theta_law=law_from_config(cfg["theta_law"]),
        w_law=law_from_config(cfg.get("w_law", {"name": "dirac", "value": 0.0})),
        u_law=law_from_config(cfg.get("u_law", {"name": "dirac", "value": 0.0})),
        variant=variant,
        k=float(cfg.get("k", 1.0)),
        rho=float(cfg.get("rho", 1.0)),
    )
