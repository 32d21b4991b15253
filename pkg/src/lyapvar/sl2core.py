"""Exact SL(2,R) arithmetic on the projective line.

Iwasawa composition, Mobius actions, reference-measure Jacobians, the
additive cocycle and the generator/multiplier function tables used by the
transfer-operator machinery in the rest of the package.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "INFINITY",
    "ProjectiveInfinity",
    "SlMatrix",
    "RotationVariant",
    "IwasawaParams",
    "JacobianKind",
    "Subgroup",
    "PoleAtZ",
    "compose_iwasawa",
    "mobius_apply",
    "jacobian",
    "cocycle",
    "g_fun",
    "g_prime",
    "h_fun",
    "h_from_density",
    "generator_matrix",
    "structure_constants",
    "lie_residual",
    "unit_vector",
    "norm_after",
]


class PoleAtZ(ArithmeticError):
    """Jacobian/cocycle evaluated exactly at a Mobius pole."""


class ProjectiveInfinity:
    """The point at infinity of the projective line (tagged, not a float)."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INFINITY"


INFINITY = ProjectiveInfinity()

ExtendedReal = Union[float, ProjectiveInfinity]


class RotationVariant(enum.Enum):
    COMPACT = "compact"        # K(theta), rotations
    HYPERBOLIC = "hyperbolic"  # Ktilde(theta), boosts


@dataclass(frozen=True)
class SlMatrix:
    """2x2 real matrix with unit determinant."""

    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        det = self.a * self.d - self.b * self.c
        scale = 1.0 + abs(self.a * self.d) + abs(self.b * self.c)
        if not det == det or abs(det - 1.0) > 1e-9 * scale:
            raise ValueError(f"matrix is not unimodular: det={det!r}")

    @property
    def det(self) -> float:
        return self.a * self.d - self.b * self.c

    def as_array(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]], dtype=float)

    @staticmethod
    def from_array(m) -> "SlMatrix":
        m = np.asarray(m, dtype=float)
        return SlMatrix(m[0, 0], m[0, 1], m[1, 0], m[1, 1])

    @staticmethod
    def identity() -> "SlMatrix":
        return SlMatrix(1.0, 0.0, 0.0, 1.0)

    @staticmethod
    def rotation(theta: float) -> "SlMatrix":
        c, s = math.cos(theta), math.sin(theta)
        return SlMatrix(c, -s, s, c)

    @staticmethod
    def boost(theta: float) -> "SlMatrix":
        ch, sh = math.cosh(theta), math.sinh(theta)
        return SlMatrix(ch, sh, sh, ch)

    @staticmethod
    def diagonal(w: float) -> "SlMatrix":
        e = math.exp(w)
        return SlMatrix(e, 0.0, 0.0, 1.0 / e)

    @staticmethod
    def shear(u: float) -> "SlMatrix":
        return SlMatrix(1.0, u, 0.0, 1.0)

    @staticmethod
    def shear_lower(u: float) -> "SlMatrix":
        return SlMatrix(1.0, 0.0, u, 1.0)

    def __matmul__(self, other: "SlMatrix") -> "SlMatrix":
        return SlMatrix(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
        )

    def inv(self) -> "SlMatrix":
        return SlMatrix(self.d, -self.b, -self.c, self.a)


@dataclass(frozen=True)
class IwasawaParams:
    """Parameters (theta, w, u) of M = K(theta) A(w) N(u) (or Ktilde...)."""

    theta: float
    w: float
    u: float
    variant: RotationVariant = RotationVariant.COMPACT


def compose_iwasawa(p: IwasawaParams) -> SlMatrix:
    """Product of the rotation/boost, diagonal and shear factors."""
    if p.variant is RotationVariant.COMPACT:
        rot = SlMatrix.rotation(p.theta)
    else:
        rot = SlMatrix.boost(p.theta)
    return rot @ SlMatrix.diagonal(p.w) @ SlMatrix.shear(p.u)


def mobius_apply(m: SlMatrix, z: ExtendedReal) -> ExtendedReal:
    """(a z + b) / (c z + d) acting on the projective line."""
    if isinstance(z, ProjectiveInfinity):
        if m.c == 0.0:
            return INFINITY
        return m.a / m.c
    num = m.a * z + m.b
    den = m.c * z + m.d
    if den == 0.0:
        return INFINITY
    return num / den


# ---------------------------------------------------------------------------
# Reference measures and Jacobians
# ---------------------------------------------------------------------------

class JacobianKind(enum.Enum):
    N = "N"            # flat measure dz
    A = "A"            # dz / |2z|
    K = "K"            # dz / (1+z^2)
    KTILDE = "Ktilde"  # dz / |z^2-1|
    NMINUS = "Nminus"  # dz / z^2


def density(kind: JacobianKind, z: float) -> float:
    if kind is JacobianKind.N:
        return 1.0
    if kind is JacobianKind.A:
        return 1.0 / abs(2.0 * z)
    if kind is JacobianKind.K:
        return 1.0 / (1.0 + z * z)
    if kind is JacobianKind.KTILDE:
        return 1.0 / abs(z * z - 1.0)
    return 1.0 / (z * z)


def dlog_density(kind: JacobianKind, z: float) -> float:
    """d/dz ln rho(z), analytic."""
    if kind is JacobianKind.N:
        return 0.0
    if kind is JacobianKind.A:
        return -1.0 / z
    if kind is JacobianKind.K:
        return -2.0 * z / (1.0 + z * z)
    if kind is JacobianKind.KTILDE:
        return -2.0 * z / (z * z - 1.0)
    return -2.0 / z


def dlog_density_prime(kind: JacobianKind, z: float) -> float:
    """d^2/dz^2 ln rho(z), analytic."""
    if kind is JacobianKind.N:
        return 0.0
    if kind is JacobianKind.A:
        return 1.0 / (z * z)
    if kind is JacobianKind.K:
        return (2.0 * z * z - 2.0) / (1.0 + z * z) ** 2
    if kind is JacobianKind.KTILDE:
        return (2.0 * z * z + 2.0) / (z * z - 1.0) ** 2
    return 2.0 / (z * z)


def jacobian(kind: JacobianKind, m: SlMatrix, z: float) -> float:
    """Ratio of the reference measure under the Mobius map, J(M, z).

    Kind A uses |z| in the density, so the value is returned as a positive
    magnitude.
    """
    den = m.c * z + m.d
    if den == 0.0:
        raise PoleAtZ(f"Mobius pole at z={z}")
    jn = 1.0 / (den * den)
    if kind is JacobianKind.N:
        return jn
    zp = (m.a * z + m.b) / den
    if kind is JacobianKind.A:
        if m.a * z + m.b == 0.0:
            raise PoleAtZ(f"image of z={z} is a zero of the A-measure")
        return abs(z / ((m.a * z + m.b) * den))
    return density(kind, zp) / density(kind, z) * jn


def cocycle(kind: JacobianKind, m: SlMatrix, z: float) -> float:
    """Additive cocycle ln J(M, z); satisfies the chain rule over products."""
    return math.log(jacobian(kind, m, z))


def unit_vector(z: float) -> np.ndarray:
    """Unit vector (z, 1)/sqrt(1+z^2) with direction z."""
    n = math.sqrt(1.0 + z * z)
    return np.array([z / n, 1.0 / n])


def norm_after(m: SlMatrix, z: float) -> float:
    """||M x|| for the unit vector x of direction z; equals J_K^{-1/2}."""
    x = unit_vector(z)
    return float(np.hypot(m.a * x[0] + m.b * x[1], m.c * x[0] + m.d * x[1]))


# ---------------------------------------------------------------------------
# Infinitesimal generators on the projective line
# ---------------------------------------------------------------------------

class Subgroup(enum.Enum):
    K = "K"
    KTILDE = "Ktilde"
    A = "A"
    N = "N"
    NMINUS = "Nminus"


def g_fun(sub: Subgroup, z):
    """Mobius generator g(z): M_alpha(z) ~ z - alpha g(z)."""
    if sub is Subgroup.K:
        return 1.0 + z * z
    if sub is Subgroup.KTILDE:
        return z * z - 1.0
    if sub is Subgroup.A:
        return -2.0 * z
    if sub is Subgroup.N:
        return -1.0 + 0.0 * z
    return z * z


def g_prime(sub: Subgroup, z):
    if sub in (Subgroup.K, Subgroup.KTILDE):
        return 2.0 * z
    if sub is Subgroup.A:
        return -2.0 + 0.0 * z
    if sub is Subgroup.N:
        return 0.0 * z
    return 2.0 * z


def g_second(sub: Subgroup, z):
    if sub in (Subgroup.K, Subgroup.KTILDE, Subgroup.NMINUS):
        return 2.0 + 0.0 * z
    return 0.0 * z


# Closed-form multiplier functions h_i^{(rho)}(z), one column per measure.
_H_TABLE = {
    JacobianKind.N: {
        Subgroup.KTILDE: lambda z: z,
        Subgroup.K: lambda z: z,
        Subgroup.A: lambda z: -1.0 + 0.0 * z,
        Subgroup.N: lambda z: 0.0 * z,
        Subgroup.NMINUS: lambda z: z,
    },
    JacobianKind.A: {
        Subgroup.KTILDE: lambda z: (z * z + 1.0) / (2.0 * z),
        Subgroup.K: lambda z: (z * z - 1.0) / (2.0 * z),
        Subgroup.A: lambda z: 0.0 * z,
        Subgroup.N: lambda z: 1.0 / (2.0 * z),
        Subgroup.NMINUS: lambda z: z / 2.0,
    },
    JacobianKind.K: {
        Subgroup.KTILDE: lambda z: 2.0 * z / (z * z + 1.0),
        Subgroup.K: lambda z: 0.0 * z,
        Subgroup.A: lambda z: (z * z - 1.0) / (z * z + 1.0),
        Subgroup.N: lambda z: z / (z * z + 1.0),
        Subgroup.NMINUS: lambda z: z / (z * z + 1.0),
    },
    JacobianKind.KTILDE: {
        Subgroup.KTILDE: lambda z: 0.0 * z,
        Subgroup.K: lambda z: 2.0 * z / (1.0 - z * z),
        Subgroup.A: lambda z: (z * z + 1.0) / (z * z - 1.0),
        Subgroup.N: lambda z: z / (z * z - 1.0),
        Subgroup.NMINUS: lambda z: -z / (z * z - 1.0),
    },
    JacobianKind.NMINUS: {
        Subgroup.KTILDE: lambda z: 1.0 / z,
        Subgroup.K: lambda z: -1.0 / z,
        Subgroup.A: lambda z: 1.0 + 0.0 * z,
        Subgroup.N: lambda z: 1.0 / z,
        Subgroup.NMINUS: lambda z: 0.0 * z,
    },
}


def h_fun(kind: JacobianKind, sub: Subgroup, z):
    """Tabulated multiplier h_i^{(rho)}(z)."""
    return _H_TABLE[kind][sub](z)


def h_from_density(kind: JacobianKind, sub: Subgroup, z):
    """h_i^{(rho)} = (g_i rho)' / (2 rho), evaluated from analytic pieces."""
    return 0.5 * (g_prime(sub, z) + g_fun(sub, z) * dlog_density(kind, z))


def h_prime(kind: JacobianKind, sub: Subgroup, z):
    """d/dz h_i^{(rho)}(z), from the analytic pieces of (g rho)'/(2 rho)."""
    return 0.5 * (g_second(sub, z) + g_prime(sub, z) * dlog_density(kind, z)
                  + g_fun(sub, z) * dlog_density_prime(kind, z))


# ---------------------------------------------------------------------------
# Lie algebra
# ---------------------------------------------------------------------------

_GENERATORS = {
    Subgroup.K: np.array([[0.0, -1.0], [1.0, 0.0]]),
    Subgroup.KTILDE: np.array([[0.0, 1.0], [1.0, 0.0]]),
    Subgroup.A: np.array([[1.0, 0.0], [0.0, -1.0]]),
    Subgroup.N: np.array([[0.0, 1.0], [0.0, 0.0]]),
    Subgroup.NMINUS: np.array([[0.0, 0.0], [1.0, 0.0]]),
}


def generator_matrix(sub: Subgroup) -> np.ndarray:
    return _GENERATORS[sub].copy()


def _decompose_kan(m: np.ndarray) -> tuple:
    """Coefficients of a traceless 2x2 matrix in the (K, A, N) basis."""
    # m = alpha*G_K + beta*G_A + gamma*G_N
    alpha = m[1, 0]
    beta = m[0, 0]
    gamma = m[0, 1] + m[1, 0]
    return alpha, beta, gamma


def structure_constants(variant: RotationVariant = RotationVariant.COMPACT) -> dict:
    """Nonzero c_ijk of [G_i, G_j] = sum_k c_ijk G_k for the ordered basis
    (K, A, N) or (Ktilde, A, N)."""
    first = Subgroup.K if variant is RotationVariant.COMPACT else Subgroup.KTILDE
    basis = (first, Subgroup.A, Subgroup.N)
    out = {}
    for i in range(3):
        for j in range(3):
            if i == j:
                continue
            gi, gj = _GENERATORS[basis[i]], _GENERATORS[basis[j]]
            comm = gi @ gj - gj @ gi
            coeffs = _basis_decompose(comm, basis)
            for k, ck in enumerate(coeffs):
                if abs(ck) > 1e-14:
                    out[(basis[i], basis[j], basis[k])] = ck
    return out


def _basis_decompose(m: np.ndarray, basis) -> np.ndarray:
    cols = np.stack([_GENERATORS[s].ravel() for s in basis], axis=1)
    coeffs, *_ = np.linalg.lstsq(cols, m.ravel(), rcond=None)
    return coeffs


def lie_residual(i: Subgroup, j: Subgroup, z: float) -> float:
    """W[g_i, g_j](z) minus the image of [G_i, G_j] under G -> g.

    The commutator is decomposed in the (K, A, N) basis, so the check works
    for any pair of tabulated subgroups. The contract is |residual| ~ 0.
    """
    if i is j:
        raise ValueError("subgroups must differ")
    wr = g_fun(i, z) * g_prime(j, z) - g_prime(i, z) * g_fun(j, z)
    comm = _GENERATORS[i] @ _GENERATORS[j] - _GENERATORS[j] @ _GENERATORS[i]
    alpha, beta, gamma = _decompose_kan(comm)
    image = alpha * g_fun(Subgroup.K, z) + beta * g_fun(Subgroup.A, z) + gamma * g_fun(Subgroup.N, z)
    return float(wr - image)
